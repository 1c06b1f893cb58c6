use rand::Rng;
use serde::Serialize;

use super::eigen::EigenData;
use crate::lattice::MetricParams;
use crate::rng::{stream_rng, Purpose};

/// The cone envelope `B(z) = exp(|f|_beta eta^beta / (1 - eta^beta) z^beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeParams {
    pub f_beta_norm: f64,
    pub eta: f64,
    pub beta: f64,
}

impl ConeParams {
    pub fn new(f_beta_norm: f64, eta: f64, beta: f64) -> Self {
        Self { f_beta_norm, eta, beta }
    }

    fn rate(&self) -> f64 {
        let eb = self.eta.powf(self.beta);
        self.f_beta_norm * eb / (1.0 - eb)
    }

    pub fn envelope(&self, z: f64) -> f64 {
        (self.rate() * z.powf(self.beta)).exp()
    }

    /// `B(eta z) exp(|f|_beta eta^beta z^beta) / B(z) - 1`; zero up to rounding.
    pub fn identity_defect(&self, z: f64) -> f64 {
        let lhs = self.envelope(self.eta * z) * (self.f_beta_norm * (self.eta * z).powf(self.beta)).exp();
        lhs / self.envelope(z) - 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeReport {
    /// `max h(c) / (B(d) h(c')) - 1` over checked pairs; `<= tol` means membership.
    pub worst_margin: f64,
    pub violations: usize,
    pub pairs: usize,
    pub tol: f64,
    /// `nu(h)`, which should be 1.
    pub nu_of_h: f64,
    pub holds: bool,
}

/// Checks `h(x) <= B(d(x, y)) h(y) (1 + tol)` on neighbour and random
/// pairs of cell representatives.
pub fn cone_membership(
    eigen: &EigenData,
    cone: &ConeParams,
    m: &MetricParams,
    random_pairs: usize,
    tol: f64,
    seed: u64,
) -> ConeReport {
    let grid = eigen.grid();
    let h = eigen.h();
    let n = grid.cells();
    let w = grid.width();
    let mut ra = vec![0.0; w];
    let mut rb = vec![0.0; w];
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    let mut pairs = 0;
    let mut check = |a: usize, b: usize, ra: &mut [f64], rb: &mut [f64]| {
        grid.representative(a, ra);
        grid.representative(b, rb);
        let bz = cone.envelope(m.distance_values(ra, rb));
        for (x, y) in [(a, b), (b, a)] {
            let margin = h[x] / (bz * h[y]) - 1.0;
            worst = worst.max(margin);
            if margin > tol {
                violations += 1;
            }
            pairs += 1;
        }
    };
    let mut bins = vec![0; w];
    for c in 0..n {
        grid.bins_of_cell(c, &mut bins);
        let mut stride = 1;
        for p in (0..w).rev() {
            if bins[p] + 1 < grid.bins() {
                check(c, c + stride, &mut ra, &mut rb);
            }
            stride *= grid.bins();
        }
    }
    let mut rng = stream_rng(seed, Purpose::PairSampling, 3);
    for _ in 0..random_pairs {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            check(a, b, &mut ra, &mut rb);
        }
    }
    let nu_of_h = eigen.nu().iter().zip(h).map(|(a, b)| a * b).sum();
    ConeReport { worst_margin: worst, violations, pairs, tol, nu_of_h, holds: violations == 0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_identity() {
        let c = ConeParams::new(0.63, 0.593, 0.7);
        for i in 1..50 {
            assert!(c.identity_defect(i as f64 / 50.0).abs() < 1e-12);
        }
        assert_eq!(ConeParams::new(0.0, 0.5, 1.0).envelope(0.3), 1.0);
    }
}
