use num_complex::Complex64;
use serde::Serialize;

use super::eigs::{dense_eigenvalues, krylov_eigenvalues, DENSE_MAX_DIM};
use crate::error::{CmlError, Result};
use crate::transfer::{OperatorKind, UlamOperator};

const KRYLOV_TOL: f64 = 1e-9;
const KRYLOV_RESTARTS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EigenMethod {
    Dense,
    Krylov,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub lambda1: f64,
    pub lambda1_imag: f64,
    /// `|lambda_2|`, the discrete spectral-gap rate.
    pub lambda2_modulus: f64,
    /// Top eigenvalues as `[re, im]`, sorted by modulus then argument.
    pub eigenvalues: Vec<[f64; 2]>,
    pub gap: f64,
    pub method: EigenMethod,
    /// Ritz residuals (Krylov path only).
    pub residuals: Vec<f64>,
    pub converged: bool,
}

impl SpectrumReport {
    fn from_values(values: &[Complex64], method: EigenMethod, residuals: Vec<f64>, converged: bool) -> Self {
        let l1 = values.first().copied().unwrap_or_default();
        let l2 = values.get(1).map_or(0.0, |z| z.norm());
        Self {
            lambda1: l1.re,
            lambda1_imag: l1.im,
            lambda2_modulus: l2,
            eigenvalues: values.iter().map(|z| [z.re, z.im]).collect(),
            gap: 1.0 - l2,
            method,
            residuals,
            converged,
        }
    }
}

/// Top `count` eigenvalues of a normalized operator.
///
/// Small matrices (dimension up to [`DENSE_MAX_DIM`]) go through the
/// dense Schur solver; larger ones through restarted Arnoldi. A Krylov
/// run that misses the tolerance still returns its report, with
/// `converged = false` and the residuals attached.
pub fn spectral_gap(op: &UlamOperator, count: usize) -> Result<SpectrumReport> {
    if op.kind() == OperatorKind::Transfer {
        return Err(CmlError::Unsupported("spectral gap needs a normalized operator".into()));
    }
    let count = count.max(2).min(op.dim());
    if op.dim() <= DENSE_MAX_DIM {
        let all = dense_eigenvalues(&op.matrix().to_dense());
        Ok(SpectrumReport::from_values(&all[..count.min(all.len())], EigenMethod::Dense, Vec::new(), true))
    } else {
        let kr = krylov_eigenvalues(op.matrix(), count, KRYLOV_TOL, KRYLOV_RESTARTS, 0x5eed)?;
        Ok(SpectrumReport::from_values(&kr.values, EigenMethod::Krylov, kr.residuals, kr.converged))
    }
}
