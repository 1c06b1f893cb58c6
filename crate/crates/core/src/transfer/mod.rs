//! Transfer operators: pointwise branch sums, Ulam discretizations,
//! eigen-data, seminorm estimators and inequality checks.

mod cone;
mod conformality;
mod eigen;
mod grid;
mod io;
mod lasota_yorke;
mod pointwise;
mod seminorm;
mod ulam;

pub use cone::{cone_membership, ConeParams, ConeReport};
pub use conformality::{check_conformality, ConformalityReport, CylinderSet};
pub use eigen::{leading_eigenpair, stationary_measure, EigenData, DEFAULT_MAX_ITER, DEFAULT_TOL};
pub use grid::{QuadraturePoints, UlamGrid, DEFAULT_CELL_CAP};
pub use io::{export_eigendata, export_triplets, import_eigendata, import_triplets};
pub use lasota_yorke::{check_lasota_yorke, random_trig_observables, LyConstants, LyReport, LyRow};
pub use pointwise::{check_pk_cauchy, eval_coupled_l, eval_lk, eval_pk, CauchyReport};
pub use seminorm::{estimate_holder_seminorm, grid_holder_quotient, grid_holder_real};
pub use ulam::{
    assemble_coupled, assemble_normalized, assemble_transfer, ulam_matrix, AssemblyReport, BuiltOperator,
    OperatorKind, OperatorProvenance, UlamConfig, UlamOperator,
};
