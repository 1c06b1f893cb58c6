use serde::Serialize;

use super::correlation::weighted_mean;
use super::twisted::{twisted_leading_eigenvalue, twisted_matrix};
use crate::error::{invalid, CmlError, Result};
use crate::lattice::{Observable, Potential};
use crate::transfer::UlamOperator;

/// Finite-difference step for the twisted-eigenvalue curvature.
pub const CURVATURE_STEP: f64 = 1e-3;
const NEGATIVE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreenKubo {
    pub sigma2: f64,
    pub c0: f64,
    /// Number of lags summed explicitly.
    pub lags: usize,
    /// Geometric estimate of the discarded tail `sum_{n > lags} C_n`.
    pub tail: f64,
    pub correlations: Vec<f64>,
    pub truncated: bool,
}

/// `sigma^2 = C_0 + 2 sum_{n >= 1} C_n`, summing until two consecutive
/// lags fall below `tail_tol |C_0|` (or `n_max` is hit) and adding a
/// geometric tail from the last ratio.
pub fn variance_green_kubo(phi: &[f64], measure: &[f64], op: &UlamOperator, tail_tol: f64, n_max: usize) -> Result<GreenKubo> {
    let n = op.dim();
    if phi.len() != n || measure.len() != n {
        return Err(invalid("observable", format!("cell vectors must have length {n}")));
    }
    if !(tail_tol > 0.0) {
        return Err(invalid("tail_tol", "must be positive"));
    }
    let mean = weighted_mean(phi, measure);
    let mut u: Vec<f64> = phi.iter().map(|v| v - mean).collect();
    let weight: Vec<f64> = u.iter().zip(measure).map(|(a, m)| a * m).collect();
    let mut next = vec![0.0; n];
    let dot = |u: &[f64]| -> f64 { weight.iter().zip(u).map(|(w, x)| w * x).sum() };
    let c0 = dot(&u);
    let mut correlations = vec![c0];
    if c0.abs() <= f64::MIN_POSITIVE {
        return Ok(GreenKubo { sigma2: 0.0, c0, lags: 0, tail: 0.0, correlations, truncated: false });
    }
    let threshold = tail_tol * c0.abs();
    let mut truncated = true;
    for lag in 1..=n_max {
        op.matrix().mul_vec_into(&u, &mut next);
        std::mem::swap(&mut u, &mut next);
        correlations.push(dot(&u));
        if lag >= 2 && correlations[lag].abs() < threshold && correlations[lag - 1].abs() < threshold {
            truncated = false;
            break;
        }
    }
    let lags = correlations.len() - 1;
    let tail = if lags >= 2 {
        let (a, b) = (correlations[lags - 1], correlations[lags]);
        let r = if a != 0.0 { b / a } else { 0.0 };
        if r.abs() < 1.0 { b * r / (1.0 - r) } else { 0.0 }
    } else {
        0.0
    };
    let sigma2 = c0 + 2.0 * (correlations[1..].iter().sum::<f64>() + tail);
    if sigma2 < -NEGATIVE_TOL {
        return Err(CmlError::Degenerate(format!(
            "negative variance {sigma2:e}: discretization too coarse for this observable"
        )));
    }
    Ok(GreenKubo { sigma2: sigma2.max(0.0), c0, lags, tail, correlations, truncated })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvatureEstimate {
    pub step: f64,
    /// `-2 Re ln lambda(h) / h^2`.
    pub sigma2_h: f64,
    /// Same at step `2h`.
    pub sigma2_2h: f64,
    /// `(4 sigma2_h - sigma2_2h) / 3`.
    pub richardson: f64,
}

/// Variance from the curvature of `t -> ln lambda(t)` at zero, by central
/// differences (`lambda(-t)` is the conjugate of `lambda(t)`).
pub fn twisted_curvature(
    op: &UlamOperator,
    observable: &Observable,
    tail: f64,
    measure: &[f64],
    step: f64,
    tol: f64,
    max_iter: usize,
) -> Result<CurvatureEstimate> {
    if !(step > 0.0) {
        return Err(invalid("step", "must be positive"));
    }
    let f = Potential::with_declared(observable.clone(), Default::default());
    let tw0 = twisted_matrix(op, &f, tail, 0.0)?;
    let l0 = twisted_leading_eigenvalue(&tw0, measure, tol, max_iter)?.ln();
    let at = |h: f64| -> Result<f64> {
        let l = twisted_leading_eigenvalue(&tw0.retwist(h), measure, tol, max_iter)?.ln();
        Ok(-2.0 * (l.re - l0.re) / (h * h))
    };
    let sigma2_h = at(step)?;
    let sigma2_2h = at(2.0 * step)?;
    Ok(CurvatureEstimate { step, sigma2_h, sigma2_2h, richardson: (4.0 * sigma2_h - sigma2_2h) / 3.0 })
}
