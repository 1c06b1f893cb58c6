//! Spectra of normalized Ulam operators, operator correlations, twisted
//! operators and the asymptotic variance.

mod correlation;
mod eigs;
mod gap;
mod twisted;
mod variance;

pub use correlation::{operator_correlation, CorrelationSeries};
pub use eigs::{dense_eigenvalues, krylov_eigenvalues, sort_by_modulus, KrylovResult, DENSE_MAX_DIM};
pub use gap::{spectral_gap, EigenMethod, SpectrumReport};
pub use twisted::{
    check_twisted_bound, twisted_leading_eigenvalue, twisted_matrix, TwistedBoundReport, TwistedOperator, TwistedRow,
};
pub use variance::{twisted_curvature, variance_green_kubo, CurvatureEstimate, GreenKubo, CURVATURE_STEP};
