use std::f64::consts::TAU;

use rand::Rng;
use serde::Serialize;

use super::eigen::EigenData;
use super::seminorm::grid_holder_real;
use super::ulam::UlamOperator;
use crate::error::{CmlError, Result};
use crate::lattice::{MetricParams, Observable, TrigTerm};
use crate::rng::{stream_rng, Purpose};

/// Constants entering the Lasota–Yorke bound of the coupled operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyConstants {
    pub c_e: f64,
    pub eta: f64,
    pub beta: f64,
    /// Measured grid Hölder quotient of `h`.
    pub h_beta: f64,
    /// Declared `|f|_beta`.
    pub f_beta: f64,
    /// `3 |h|_beta + eta^beta / (1 - eta^beta) |f|_beta`.
    pub c1: f64,
    /// `c1 exp(c1)`, used for `C_4 = C_5 = C_6`.
    pub c6: f64,
}

impl LyConstants {
    pub fn new(c_e: f64, eta: f64, beta: f64, h_beta: f64, f_beta: f64) -> Self {
        let eb = eta.powf(beta);
        let c1 = 3.0 * h_beta + eb / (1.0 - eb) * f_beta;
        Self { c_e, eta, beta, h_beta, f_beta, c1, c6: c1 * c1.exp() }
    }

    /// Constants with `|h|_beta` measured on the eigen-data grid.
    pub fn measured(eigen: &EigenData, m: &MetricParams, c_e: f64, eta: f64, f_beta: f64, seed: u64) -> Self {
        let h_beta = grid_holder_real(eigen.grid(), m, None, eigen.h(), seed);
        Self::new(c_e, eta, m.beta(), h_beta, f_beta)
    }

    /// Contraction factor `(C_E eta)^beta`.
    pub fn contraction(&self) -> f64 {
        (self.c_e * self.eta).powf(self.beta)
    }

    /// Right-hand side `|Phi|_beta (C_E eta)^{beta n} + C_6 |Phi|_inf C_E^beta / (1 - (C_E eta)^beta)`.
    pub fn bound(&self, phi_beta: f64, phi_sup: f64, n: usize) -> f64 {
        let r = self.contraction();
        if r >= 1.0 {
            return f64::INFINITY;
        }
        phi_beta * r.powi(n as i32) + self.c6 * phi_sup * self.c_e.powf(self.beta) / (1.0 - r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyRow {
    pub observable: usize,
    pub n: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyReport {
    pub constants: LyConstants,
    pub rows: Vec<LyRow>,
    /// `max lhs / rhs`.
    pub worst_ratio: f64,
    pub tolerance: f64,
    pub violations: usize,
    pub passes: bool,
}

/// Compares measured grid Hölder quotients of `M^n Phi` with the
/// Lasota–Yorke right-hand side built from declared observable norms.
pub fn check_lasota_yorke(
    op: &UlamOperator,
    observables: &[Observable],
    m: &MetricParams,
    n_max: usize,
    constants: &LyConstants,
    tolerance: f64,
    seed: u64,
) -> Result<LyReport> {
    if !op.is_normalized() {
        return Err(CmlError::Unsupported("Lasota–Yorke check needs a normalized operator".into()));
    }
    let grid = op.grid();
    let support = op.support();
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    for (idx, phi) in observables.iter().enumerate() {
        let norms = phi
            .analytic_norms(m, grid.k())
            .ok_or_else(|| CmlError::Unsupported("observables need analytic norms".into()))?;
        let mut u = grid.sample(|x| phi.eval(x, 0.0));
        for n in 0..=n_max {
            if n > 0 {
                u = op.matrix().mul_vec(&u);
            }
            let lhs = grid_holder_real(grid, m, Some(support), &u, seed ^ (idx as u64) << 8 ^ n as u64);
            let rhs = constants.bound(norms.beta, norms.sup, n);
            let ratio = if rhs > 0.0 { lhs / rhs } else if lhs > 0.0 { f64::INFINITY } else { 0.0 };
            worst = worst.max(ratio);
            if ratio > 1.0 + tolerance {
                violations += 1;
            }
            rows.push(LyRow { observable: idx, n, lhs, rhs });
        }
    }
    Ok(LyReport { constants: *constants, rows, worst_ratio: worst, tolerance, violations, passes: violations == 0 })
}

/// Random low-order trigonometric observables on the width-`(2k+1)` window.
pub fn random_trig_observables(count: usize, k: usize, seed: u64) -> Vec<Observable> {
    let mut rng = stream_rng(seed, Purpose::ObservableDraw, 0);
    (0..count)
        .map(|_| {
            let terms = rng.random_range(1..=3);
            Observable::Trig(
                (0..terms)
                    .map(|_| TrigTerm {
                        node: rng.random_range(-(k as i64)..=k as i64),
                        amplitude: rng.random_range(-1.0..1.0),
                        frequency: rng.random_range(1..=2),
                        phase: rng.random_range(0.0..TAU),
                    })
                    .collect(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_reduces_without_potential() {
        let c = LyConstants::new(1.0, 0.5, 1.0, 0.0, 0.0);
        assert_eq!(c.c6, 0.0);
        assert_eq!(c.bound(2.0, 1.0, 3), 2.0 * 0.125);
        let c = LyConstants::new(2.5, 0.5, 1.0, 0.0, 0.0);
        assert!(c.bound(1.0, 1.0, 0).is_infinite());
    }

    #[test]
    fn observables_are_reproducible() {
        let a = random_trig_observables(5, 1, 9);
        let b = random_trig_observables(5, 1, 9);
        let x = [0.1, 0.7, 0.4];
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.eval(&x, 0.0), q.eval(&x, 0.0));
        }
    }
}
