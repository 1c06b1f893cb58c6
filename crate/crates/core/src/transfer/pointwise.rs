use serde::Serialize;

use super::eigen::EigenData;
use crate::error::{invalid, CmlError, Result};
use crate::lattice::{
    embed, for_each_branch, invert_coupling, preimage_table, project, Coupling, FiniteState, NodeMap, Observable,
    Potential,
};
use crate::rng::{stream_rng, Purpose};

/// Branch sums switch to max-shifted accumulation above this exponent scale.
const LOG_SAFE_THRESHOLD: f64 = 30.0;

fn at_width(x: &FiniteState, k: usize) -> Result<FiniteState> {
    if x.k() >= k {
        project(x, k)
    } else {
        embed(x, k)
    }
}

/// `(1/b_k) sum_zeta w(zeta) Phi(zeta)` over the lattice preimages of
/// `values`, with `w = exp(log_weight)`.
fn branch_average(
    values: &[f64],
    tail: f64,
    map: &NodeMap,
    log_safe: bool,
    log_weight: impl Fn(&[f64]) -> f64,
    phi: &Observable,
) -> f64 {
    let mut table = Vec::new();
    preimage_table(values, map, &mut table);
    let b = map.b();
    let mut scratch = Vec::new();
    let count = (b as f64).powi(values.len() as i32);
    if !log_safe {
        let mut acc = 0.0;
        for_each_branch(&table, b, &mut scratch, |z| acc += log_weight(z).exp() * phi.eval(z, tail));
        return acc / count;
    }
    let mut shift = f64::NEG_INFINITY;
    for_each_branch(&table, b, &mut scratch, |z| shift = shift.max(log_weight(z)));
    let mut acc = 0.0;
    for_each_branch(&table, b, &mut scratch, |z| acc += (log_weight(z) - shift).exp() * phi.eval(z, tail));
    let mean = acc / count;
    if mean == 0.0 {
        return 0.0;
    }
    mean.signum() * (shift + mean.abs().ln()).exp()
}

/// Pointwise `P_k(Phi)(x)`: the exact average over the `b^(2k+1)`
/// lattice preimages of `pi_k x`, each weighted by `exp f`.
pub fn eval_pk(phi: &Observable, f: &Potential, x: &FiniteState, k: usize, map: &NodeMap) -> Result<f64> {
    let xk = at_width(x, k)?;
    let log_safe = f.sup_norm() > LOG_SAFE_THRESHOLD;
    Ok(branch_average(xk.values(), xk.tail(), map, log_safe, |z| f.eval(z, xk.tail()), phi))
}

/// Pointwise normalized operator `L_k(Phi)(x)` with potential
/// `g = f - log lambda - log h o tau-bar + log h`, `h` piecewise constant on
/// the eigen-data grid.
pub fn eval_lk(phi: &Observable, eigen: &EigenData, f: &Potential, x: &FiniteState, map: &NodeMap) -> Result<f64> {
    let grid = eigen.grid();
    if x.k() != grid.k() {
        return Err(CmlError::WidthMismatch { expected: grid.k(), found: x.k() });
    }
    let h = eigen.h();
    let base = f64::ln(eigen.lambda()) + h[grid.cell_of(x.values())].ln();
    let log_safe = f.sup_norm() > LOG_SAFE_THRESHOLD;
    Ok(branch_average(
        x.values(),
        x.tail(),
        map,
        log_safe,
        |z| f.eval(z, x.tail()) + h[grid.cell_of(z)].ln() - base,
        phi,
    ))
}

/// Pointwise coupled operator `L(Phi)(E^{-1} x)`.
pub fn eval_coupled_l(
    phi: &Observable,
    eigen: &EigenData,
    f: &Potential,
    x: &FiniteState,
    map: &NodeMap,
    e: &Coupling,
) -> Result<f64> {
    let y = invert_coupling(x, e)?;
    eval_lk(phi, eigen, f, &y, map)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CauchyReport {
    /// `(k, max_x |P_{k+1} Phi(x) - P_k Phi(x)|)`.
    pub rows: Vec<(usize, f64)>,
    /// `exp` of the least-squares slope of `log diff` against `k`;
    /// `None` when fewer than two differences are positive.
    pub fitted_ratio: Option<f64>,
    pub samples: usize,
}

/// Measures consecutive differences `P_{k+1} Phi - P_k Phi` on states
/// sampled uniformly at half-width `k_max`.
pub fn check_pk_cauchy(
    phi: &Observable,
    f: &Potential,
    map: &NodeMap,
    k_max: usize,
    samples: usize,
    seed: u64,
) -> Result<CauchyReport> {
    if k_max < 1 {
        return Err(invalid("k_max", "need at least two truncation levels"));
    }
    if samples == 0 {
        return Err(invalid("samples", "must be positive"));
    }
    use rand::Rng;
    let mut rng = stream_rng(seed, Purpose::StateSampling, 0);
    let states: Vec<FiniteState> = (0..samples)
        .map(|_| {
            let v = (0..2 * k_max + 1).map(|_| rng.random::<f64>()).collect();
            FiniteState::new(v, map.p_tau())
        })
        .collect::<Result<_>>()?;
    let mut worst = vec![0.0_f64; k_max];
    for x in &states {
        let mut prev = eval_pk(phi, f, x, 0, map)?;
        for (k, slot) in worst.iter_mut().enumerate() {
            let next = eval_pk(phi, f, x, k + 1, map)?;
            *slot = slot.max((next - prev).abs());
            prev = next;
        }
    }
    let rows: Vec<(usize, f64)> = worst.into_iter().enumerate().collect();
    Ok(CauchyReport { fitted_ratio: geometric_ratio(&rows), rows, samples })
}

/// Least-squares geometric ratio of the positive entries of a sequence.
pub(crate) fn geometric_ratio(rows: &[(usize, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows.iter().filter(|(_, d)| *d > 0.0).map(|(k, d)| (*k as f64, d.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some((sxy / sxx).exp())
}
