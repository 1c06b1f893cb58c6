//! Lattice states, node maps, couplings and the coupled dynamics.

mod branches;
mod coupling;
mod map;
mod metric;
mod observable;
mod state;

pub use branches::{enumerate_inverse_branches, InverseBranches};
pub(crate) use branches::{for_each_branch, preimage_table};
pub use coupling::{
    apply_coupling, apply_t, estimate_coupling_constant, invert_coupling, weighted_inverse_norm, Coupling,
    CouplingEstimate, WindowInverse,
};
pub(crate) use coupling::couple_into;
pub use map::{apply_bar_tau, MapKind, NodeMap};
pub use metric::{metric_d, MetricParams};
pub use observable::{DeclaredNorms, Observable, Potential, TrigTerm};
pub use state::{embed, node_value, project, FiniteState};
