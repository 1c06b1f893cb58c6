use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, CmlError, Result};
use crate::lattice::{MetricParams, Potential};
use crate::sparse::Csr;
use crate::transfer::{grid_holder_quotient, grid_holder_real, LyConstants, OperatorKind, UlamOperator};

/// `M_t[c, c'] = M[c, c'] exp(i t f(c'))`.
#[derive(Debug, Clone)]
pub struct TwistedOperator<'a> {
    t: f64,
    base: &'a UlamOperator,
    observable: Potential,
    phases: Vec<f64>,
    matrix: Csr<Complex64>,
}

impl<'a> TwistedOperator<'a> {
    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn base(&self) -> &'a UlamOperator {
        self.base
    }

    pub fn observable(&self) -> &Potential {
        &self.observable
    }

    /// `f` at each cell representative.
    pub fn cell_values(&self) -> &[f64] {
        &self.phases
    }

    pub fn matrix(&self) -> &Csr<Complex64> {
        &self.matrix
    }

    /// Same observable, different twist.
    pub fn retwist(&self, t: f64) -> TwistedOperator<'a> {
        let matrix = build(self.base, &self.phases, t);
        TwistedOperator { t, base: self.base, observable: self.observable.clone(), phases: self.phases.clone(), matrix }
    }
}

fn build(base: &UlamOperator, phases: &[f64], t: f64) -> Csr<Complex64> {
    base.matrix().map_entries(|_, c, v| {
        if t == 0.0 {
            Complex64::new(v, 0.0)
        } else {
            Complex64::from_polar(v, t * phases[c])
        }
    })
}

/// Twists `base` by `observable`, evaluated at cell representatives with
/// off-window nodes fixed at `tail`.
pub fn twisted_matrix<'a>(base: &'a UlamOperator, observable: &Potential, tail: f64, t: f64) -> Result<TwistedOperator<'a>> {
    if base.kind() == OperatorKind::Transfer {
        return Err(CmlError::Unsupported("twisting needs a normalized operator".into()));
    }
    if !t.is_finite() {
        return Err(invalid("t", "must be finite"));
    }
    let grid = base.grid();
    let phases = grid.sample(|x| observable.eval(x, tail));
    let matrix = build(base, &phases, t);
    Ok(TwistedOperator { t, base, observable: observable.clone(), phases, matrix })
}

/// Leading eigenvalue of `M_t` by power iteration, normalized against
/// the stationary vector `measure` of the untwisted operator.
pub fn twisted_leading_eigenvalue(tw: &TwistedOperator<'_>, measure: &[f64], tol: f64, max_iter: usize) -> Result<Complex64> {
    let n = tw.matrix.dim();
    let pair = |v: &[Complex64]| -> Complex64 { v.iter().zip(measure).map(|(z, m)| z * m).sum() };
    let mut v = vec![Complex64::new(1.0, 0.0); n];
    let mut w = vec![Complex64::default(); n];
    let mut lambda = Complex64::new(1.0, 0.0);
    let mut change = f64::INFINITY;
    for _ in 0..max_iter {
        tw.matrix.mul_vec_into(&v, &mut w);
        let next = pair(&w);
        if next.norm() == 0.0 || !next.is_finite() {
            return Err(CmlError::Degenerate("twisted iterate lost its projection".into()));
        }
        change = (next - lambda).norm();
        lambda = next;
        let scale = pair(&w);
        w.iter_mut().for_each(|z| *z /= scale);
        let diff = v.iter().zip(&w).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut w);
        if diff < tol && change < tol {
            return Ok(lambda);
        }
    }
    Err(CmlError::NoConvergence { iterations: max_iter, residual: change })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwistedRow {
    pub t: f64,
    /// `max_n |M_t^n 1|_inf`.
    pub sup_norm_max: f64,
    /// `max_n` of the grid Hölder quotient of `M_t^n Phi`, per probe.
    pub holder_max: Vec<f64>,
    /// C₉ candidate per probe.
    pub c9: Vec<f64>,
    pub sup_ok: bool,
    pub holder_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwistedBoundReport {
    pub rows: Vec<TwistedRow>,
    pub n_max: usize,
    pub sup_tolerance: f64,
    /// `|t| |f|_beta` factor per unit `t`.
    pub f_beta: f64,
    pub passes: bool,
}

/// Iterates `M_t^n` on the constant function and on each probe for every
/// `t` in `t_grid`, and compares against
/// `max{(|Phi|_beta + |t| |f|_beta |Phi|_inf) + C_6, 1}`.
pub fn check_twisted_bound(
    tw: &TwistedOperator<'_>,
    probes: &[Vec<f64>],
    t_grid: &[f64],
    n_max: usize,
    metric: &MetricParams,
    constants: &LyConstants,
    seed: u64,
) -> Result<TwistedBoundReport> {
    const SUP_TOL: f64 = 1e-10;
    let base = tw.base;
    let grid = base.grid();
    let n = base.dim();
    for p in probes {
        if p.len() != n {
            return Err(invalid("probe", format!("cell vectors must have length {n}")));
        }
    }
    let support = base.support();
    let f_beta = tw.observable.beta_norm();
    let mut probe_vals: Vec<Vec<f64>> = vec![vec![1.0; n]];
    probe_vals.extend(probes.iter().cloned());
    let probe_norms: Vec<(f64, f64)> = probe_vals
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let beta = grid_holder_real(grid, metric, Some(support), p, seed.wrapping_add(i as u64));
            let sup = p.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            (beta, sup)
        })
        .collect();
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let op = tw.retwist(t);
        let c2 = t.abs() * f_beta;
        let c9: Vec<f64> = probe_norms
            .iter()
            .map(|(b, s)| {
                // The geometric factor is largest at n = 0.
                let decay = if constants.contraction() < 1.0 { 1.0 } else { f64::INFINITY };
                ((b + c2 * s) * decay + constants.c6).max(1.0)
            })
            .collect();
        let mut holder_max = vec![0.0f64; probe_vals.len()];
        let mut sup_norm_max = 0.0f64;
        for (pi, p) in probe_vals.iter().enumerate() {
            let mut u: Vec<Complex64> = p.iter().map(|v| Complex64::new(*v, 0.0)).collect();
            let mut next = vec![Complex64::default(); n];
            for step in 1..=n_max {
                op.matrix.mul_vec_into(&u, &mut next);
                std::mem::swap(&mut u, &mut next);
                if pi == 0 {
                    let s = u.iter().fold(0.0f64, |a, z| a.max(z.norm()));
                    sup_norm_max = sup_norm_max.max(s);
                }
                // Hölder quotients on a thinned schedule keep the cost linear.
                if step <= 20 || step % 10 == 0 || step == n_max {
                    let q = grid_holder_quotient(grid, metric, Some(support), 2000, seed ^ step as u64, |a, b| {
                        (u[a] - u[b]).norm()
                    });
                    holder_max[pi] = holder_max[pi].max(q);
                }
            }
        }
        let sup_ok = sup_norm_max <= 1.0 + SUP_TOL;
        let holder_ok = holder_max.iter().zip(&c9).all(|(h, c)| h <= c);
        rows.push(TwistedRow { t, sup_norm_max, holder_max, c9, sup_ok, holder_ok });
    }
    let passes = rows.iter().all(|r| r.sup_ok && r.holder_ok);
    Ok(TwistedBoundReport { rows, n_max, sup_tolerance: SUP_TOL, f_beta, passes })
}
