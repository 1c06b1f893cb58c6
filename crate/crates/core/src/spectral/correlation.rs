use serde::Serialize;

use crate::error::{invalid, Result};
use crate::sparse::CsrMatrix;
use crate::stats::{log_linear_fit, LogLinearFit};

/// Operator correlation sequence `C_n = <phi_1, M^n (phi_2 - <phi_2>)>_m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationSeries {
    pub signed: Vec<f64>,
}

impl CorrelationSeries {
    pub fn len(&self) -> usize {
        self.signed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signed.is_empty()
    }

    pub fn modulus(&self, n: usize) -> f64 {
        self.signed[n].abs()
    }

    pub fn moduli(&self) -> Vec<f64> {
        self.signed.iter().map(|c| c.abs()).collect()
    }

    /// Unweighted log-linear fit of `|C_n|` over `1 <= n <= n_max`,
    /// skipping values below `floor * |C_0|`.
    pub fn decay_fit(&self, n_max: usize, floor: f64) -> Option<LogLinearFit> {
        let c0 = self.signed.first()?.abs();
        let (ns, ys): (Vec<f64>, Vec<f64>) = (1..=n_max.min(self.len().saturating_sub(1)))
            .filter(|&n| self.modulus(n) > floor * c0)
            .map(|n| (n as f64, self.modulus(n)))
            .unzip();
        log_linear_fit(&ns, &ys, &vec![1.0; ns.len()])
    }
}

pub(crate) fn weighted_mean(values: &[f64], measure: &[f64]) -> f64 {
    values.iter().zip(measure).map(|(v, m)| v * m).sum()
}

/// Correlations of cell-valued observables under the probability vector
/// `measure`, with `op` acting on functions.
pub fn operator_correlation(
    phi1: &[f64],
    phi2: &[f64],
    measure: &[f64],
    op: &CsrMatrix,
    n_max: usize,
) -> Result<CorrelationSeries> {
    let n = op.dim();
    if phi1.len() != n || phi2.len() != n || measure.len() != n {
        return Err(invalid("observable", format!("cell vectors must have length {n}")));
    }
    let mean2 = weighted_mean(phi2, measure);
    let mut u: Vec<f64> = phi2.iter().map(|v| v - mean2).collect();
    let mut next = vec![0.0; n];
    let weight: Vec<f64> = phi1.iter().zip(measure).map(|(a, m)| a * m).collect();
    let mut signed = Vec::with_capacity(n_max + 1);
    for step in 0..=n_max {
        signed.push(weight.iter().zip(&u).map(|(w, x)| w * x).sum());
        if step < n_max {
            op.mul_vec_into(&u, &mut next);
            std::mem::swap(&mut u, &mut next);
        }
    }
    Ok(CorrelationSeries { signed })
}
