use rand::Rng;

use super::grid::UlamGrid;
use crate::error::{invalid, Result};
use crate::lattice::{MetricParams, Observable};
use crate::rng::{stream_rng, Purpose};

const PROBE_STEPS: [f64; 5] = [1e-4, 1e-3, 1e-2, 0.1, 0.45];

/// Sampled Hölder quotient `max |Phi(x) - Phi(y)| / d(x, y)^beta` over
/// pairs in the width-`(2k+1)` window.
///
/// This is a lower bound on `|Phi|_beta`. Besides uniform pairs it probes
/// single-node differences of several sizes at every node, which is
/// where quotients of node-separable observables peak.
pub fn estimate_holder_seminorm(phi: &Observable, m: &MetricParams, k: usize, samples: usize, seed: u64) -> Result<f64> {
    if samples < 2 {
        return Err(invalid("samples", "need at least two samples"));
    }
    let w = 2 * k + 1;
    let tail = 0.0;
    let mut rng = stream_rng(seed, Purpose::PairSampling, 1);
    let mut best: f64 = 0.0;
    let mut x = vec![0.0; w];
    let mut y = vec![0.0; w];
    let mut consider = |x: &[f64], y: &[f64]| {
        let d = m.distance_values(x, y);
        if d > 0.0 {
            best = best.max((phi.eval(x, tail) - phi.eval(y, tail)).abs() / d.powf(m.beta()));
        }
    };
    for _ in 0..samples {
        for v in x.iter_mut().chain(y.iter_mut()) {
            *v = rng.random::<f64>();
        }
        consider(&x, &y);
    }
    let bases = (samples / (w * PROBE_STEPS.len())).clamp(1, 64);
    for _ in 0..bases {
        for v in x.iter_mut() {
            *v = rng.random::<f64>() * 0.5;
        }
        for node in 0..w {
            for step in PROBE_STEPS {
                y.copy_from_slice(&x);
                y[node] = x[node] + step;
                consider(&x, &y);
            }
        }
    }
    Ok(best)
}

/// Discrete Hölder quotient of a cell function.
///
/// `gap(a, b)` is the difference modulus between cells `a` and `b`.
/// Pairs are all axis-neighbour cells plus `random_pairs` uniform pairs;
/// cells outside `support` are skipped. Distances are between cell
/// representatives.
pub fn grid_holder_quotient(
    grid: &UlamGrid,
    m: &MetricParams,
    support: Option<&[bool]>,
    random_pairs: usize,
    seed: u64,
    gap: impl Fn(usize, usize) -> f64,
) -> f64 {
    let n = grid.cells();
    let w = grid.width();
    let k = grid.k() as i64;
    let inside = |c: usize| support.is_none_or(|s| s[c]);
    let neighbour_d: Vec<f64> =
        (0..w).map(|p| (m.weight(p as i64 - k) * grid.spacing()).powf(m.beta())).collect();
    let mut best: f64 = 0.0;
    let mut bins = vec![0; w];
    let mut stride = vec![1usize; w];
    for p in (0..w.saturating_sub(1)).rev() {
        stride[p] = stride[p + 1] * grid.bins();
    }
    for c in 0..n {
        if !inside(c) {
            continue;
        }
        grid.bins_of_cell(c, &mut bins);
        for p in 0..w {
            if bins[p] + 1 < grid.bins() {
                let c2 = c + stride[p];
                if inside(c2) {
                    best = best.max(gap(c, c2) / neighbour_d[p]);
                }
            }
        }
    }
    if random_pairs > 0 && n > 1 {
        let mut rng = stream_rng(seed, Purpose::PairSampling, 2);
        let mut ra = vec![0.0; w];
        let mut rb = vec![0.0; w];
        for _ in 0..random_pairs {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a == b || !inside(a) || !inside(b) {
                continue;
            }
            grid.representative(a, &mut ra);
            grid.representative(b, &mut rb);
            let d = m.distance_values(&ra, &rb).powf(m.beta());
            best = best.max(gap(a, b) / d);
        }
    }
    best
}

/// Real-valued convenience wrapper around [`grid_holder_quotient`].
pub fn grid_holder_real(grid: &UlamGrid, m: &MetricParams, support: Option<&[bool]>, values: &[f64], seed: u64) -> f64 {
    grid_holder_quotient(grid, m, support, 20_000, seed, |a, b| (values[a] - values[b]).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_cases() {
        let m = MetricParams::default();
        assert_eq!(estimate_holder_seminorm(&Observable::Constant(3.0), &m, 1, 100, 1).unwrap(), 0.0);
        let e0 = estimate_holder_seminorm(&Observable::Coordinate { node: 0 }, &m, 1, 1000, 1).unwrap();
        assert!((0.99..=1.0 + 1e-12).contains(&e0), "{e0}");
        let e1 = estimate_holder_seminorm(&Observable::Coordinate { node: 1 }, &m, 1, 1000, 1).unwrap();
        assert!((1.98..=2.0 + 1e-9).contains(&e1), "{e1}");
        assert!(estimate_holder_seminorm(&Observable::Constant(1.0), &m, 1, 1, 1).is_err());
    }

    #[test]
    fn grid_quotient_of_linear_function() {
        let g = UlamGrid::new(1, 8, 1000).unwrap();
        let m = MetricParams::default();
        let vals = g.sample(|x| x[2]);
        let q = grid_holder_real(&g, &m, None, &vals, 3);
        assert!((q - 2.0).abs() < 1e-12);
    }
}
