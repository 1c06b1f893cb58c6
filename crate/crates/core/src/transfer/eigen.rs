use serde::{Deserialize, Serialize};

use super::grid::UlamGrid;
use super::ulam::{OperatorKind, UlamOperator};
use crate::error::{CmlError, Result};
use crate::lattice::{NodeMap, Potential};
use crate::sparse::CsrMatrix;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PowerResult {
    pub vector: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub residual: f64,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Power iteration for the dominant nonnegative eigenvector, normalised
/// to unit sup norm. Convergence is declared when successive iterates
/// differ by less than `tol` in sup norm.
pub(crate) fn power_iteration(m: &CsrMatrix, start: Vec<f64>, tol: f64, max_iter: usize) -> Result<PowerResult> {
    let n = m.dim();
    let mut v = start;
    let s0 = sup(&v);
    if s0 == 0.0 {
        return Err(CmlError::Positivity("zero start vector".into()));
    }
    v.iter_mut().for_each(|x| *x /= s0);
    let mut w = vec![0.0; n];
    let mut diff = f64::INFINITY;
    for it in 1..=max_iter {
        m.mul_vec_into(&v, &mut w);
        let value = sup(&w);
        if value == 0.0 || !value.is_finite() {
            return Err(CmlError::Positivity(format!("iterate degenerated at step {it}")));
        }
        if w.iter().any(|x| *x < 0.0) {
            return Err(CmlError::Positivity(format!("sign change at step {it}")));
        }
        diff = 0.0;
        for (a, b) in w.iter_mut().zip(v.iter()) {
            *a /= value;
            diff = diff.max((*a - b).abs());
        }
        std::mem::swap(&mut v, &mut w);
        if diff < tol {
            m.mul_vec_into(&v, &mut w);
            let residual = w.iter().zip(&v).fold(0.0_f64, |r, (a, b)| r.max((a - value * b).abs()));
            return Ok(PowerResult { vector: v, value, iterations: it, residual });
        }
    }
    Err(CmlError::NoConvergence { iterations: max_iter, residual: diff })
}

/// Leading eigen-data of an Ulam discretization of `P_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenData {
    pub(crate) grid: UlamGrid,
    pub(crate) lambda: f64,
    pub(crate) h: Vec<f64>,
    pub(crate) nu: Vec<f64>,
    pub(crate) g: Vec<f64>,
    pub(crate) mu: Vec<f64>,
    pub(crate) residual_right: f64,
    pub(crate) residual_left: f64,
    pub(crate) iterations: usize,
}

impl EigenData {
    pub fn grid(&self) -> &UlamGrid {
        &self.grid
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Eigenfunction, normalised so that `nu(h) = 1`.
    pub fn h(&self) -> &[f64] {
        &self.h
    }

    /// Eigen-measure of the adjoint, a probability vector.
    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    /// Normalized potential on cell representatives.
    pub fn g(&self) -> &[f64] {
        &self.g
    }

    /// `h * nu`, the invariant measure of the uncoupled normalized operator.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// `||P h - lambda h||_inf`.
    pub fn residual_right(&self) -> f64 {
        self.residual_right
    }

    /// `||P^T nu - lambda nu||_1`.
    pub fn residual_left(&self) -> f64 {
        self.residual_left
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Assembles eigen-data from raw vectors, validating shape and sign.
    pub fn from_parts(grid: UlamGrid, lambda: f64, h: Vec<f64>, nu: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        let n = grid.cells();
        if h.len() != n || nu.len() != n || g.len() != n {
            return Err(CmlError::Degenerate(format!("vectors must have {n} entries")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(CmlError::Positivity(format!("lambda = {lambda}")));
        }
        if h.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(CmlError::Positivity("h must be strictly positive".into()));
        }
        if nu.iter().any(|x| !(*x >= 0.0 && x.is_finite())) || g.iter().any(|x| !x.is_finite()) {
            return Err(CmlError::Positivity("nu must be nonnegative and g finite".into()));
        }
        let total: f64 = nu.iter().sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(CmlError::Degenerate(format!("nu has mass {total}")));
        }
        let mut mu: Vec<f64> = h.iter().zip(&nu).map(|(a, b)| a * b).collect();
        let mass: f64 = mu.iter().sum();
        mu.iter_mut().for_each(|x| *x /= mass);
        Ok(Self { grid, lambda, h, nu, g, mu, residual_right: 0.0, residual_left: 0.0, iterations: 0 })
    }
}

/// Power iteration on `P` (for `lambda`, `h`) and on `P^T` (for `nu`),
/// followed by `g` and `mu = h nu`.
pub fn leading_eigenpair(
    op: &UlamOperator,
    map: &NodeMap,
    f: &Potential,
    tol: f64,
    max_iter: usize,
) -> Result<EigenData> {
    if op.kind() != OperatorKind::Transfer {
        return Err(CmlError::Unsupported(format!("leading_eigenpair needs a P_k operator, got {:?}", op.kind())));
    }
    let m = op.matrix();
    let n = m.dim();
    let right = power_iteration(m, vec![1.0; n], tol, max_iter)?;
    let mt = m.transpose();
    let left = power_iteration(&mt, vec![1.0; n], tol, max_iter)?;
    let lambda = right.value;
    if right.vector.iter().any(|x| *x <= 0.0) {
        return Err(CmlError::Positivity("eigenfunction has non-positive cells".into()));
    }
    let mass: f64 = left.vector.iter().sum();
    let nu: Vec<f64> = left.vector.iter().map(|x| x / mass).collect();
    let pairing: f64 = nu.iter().zip(&right.vector).map(|(a, b)| a * b).sum();
    let h: Vec<f64> = right.vector.iter().map(|x| x / pairing).collect();
    let residual_right = right.residual / pairing;
    let pt_nu = mt.mul_vec(&nu);
    let residual_left = pt_nu.iter().zip(&nu).map(|(a, b)| (a - lambda * b).abs()).sum();

    let grid = *op.grid();
    let mut image = vec![0.0; grid.width()];
    let tail = map.p_tau();
    let g = grid.sample(|x| {
        for (o, v) in image.iter_mut().zip(x) {
            *o = map.forward(*v);
        }
        let hc = h[grid.cell_of(x)];
        f.eval(x, tail) - lambda.ln() - h[grid.cell_of(&image)].ln() + hc.ln()
    });
    let mut data = EigenData::from_parts(grid, lambda, h, nu, g)?;
    data.residual_right = residual_right;
    data.residual_left = residual_left;
    data.iterations = right.iterations.max(left.iterations);
    Ok(data)
}

/// Left fixed probability vector of a row-stochastic operator.
pub fn stationary_measure(op: &UlamOperator, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    if op.kind() == OperatorKind::Transfer {
        return Err(CmlError::Unsupported("stationary measure needs a normalized operator".into()));
    }
    let mt = op.matrix().transpose();
    let n = mt.dim();
    let res = power_iteration(&mt, vec![1.0; n], tol, max_iter)?;
    let mass: f64 = res.vector.iter().sum();
    Ok(res.vector.into_iter().map(|x| x / mass).collect())
}
