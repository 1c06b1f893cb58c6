use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use std::cmp::Ordering;

use crate::error::{CmlError, Result};
use crate::rng::{stream_rng, Purpose};
use crate::sparse::CsrMatrix;

/// Matrices up to this dimension use the dense Schur solver.
pub const DENSE_MAX_DIM: usize = 512;

/// Orders by modulus (descending), ties by argument (ascending).
pub fn sort_by_modulus(values: &mut [Complex64]) {
    values.sort_by(|a, b| {
        let (ma, mb) = (a.norm(), b.norm());
        if (ma - mb).abs() > 1e-12 * ma.max(mb).max(1e-300) {
            mb.partial_cmp(&ma).unwrap_or(Ordering::Equal)
        } else {
            a.arg().partial_cmp(&b.arg()).unwrap_or(Ordering::Equal)
        }
    });
}

/// Full spectrum of a small matrix via the real Schur form.
pub fn dense_eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = m.complex_eigenvalues().iter().copied().collect();
    sort_by_modulus(&mut v);
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrylovResult {
    pub values: Vec<Complex64>,
    /// Ritz residual norms `||A x - theta x||` for each returned value.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub restarts: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Two passes of classical Gram–Schmidt; returns the remaining norm.
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) -> f64 {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, v);
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
    }
    norm(v)
}

/// Unit eigenvector of a small real matrix for the eigenvalue
/// `theta`, by shifted inverse iteration.
fn small_eigenvector(g: &DMatrix<f64>, theta: Complex64) -> DMatrix<Complex64> {
    let p = g.nrows();
    let shift = theta + Complex64::new(1e-10 * theta.norm().max(1.0), 1e-11);
    let a = DMatrix::from_fn(p, p, |i, j| {
        Complex64::new(g[(i, j)], 0.0) - if i == j { shift } else { Complex64::new(0.0, 0.0) }
    });
    let lu = a.lu();
    let mut y = DMatrix::from_element(p, 1, Complex64::new(1.0, 0.0));
    for _ in 0..3 {
        if let Some(next) = lu.solve(&y) {
            let n = next.norm();
            if n > 0.0 && n.is_finite() {
                y = next / Complex64::new(n, 0.0);
            }
        }
    }
    y
}

/// Leading `count` eigenvalues of a sparse matrix by thick-restart
/// Arnoldi: each cycle keeps the real and imaginary parts of the wanted
/// Ritz vectors, extends the basis by a Krylov sequence started from the
/// worst residual, and solves the projected eigenproblem.
pub fn krylov_eigenvalues(m: &CsrMatrix, count: usize, tol: f64, max_restarts: usize, seed: u64) -> Result<KrylovResult> {
    let n = m.dim();
    if count == 0 || n == 0 {
        return Err(CmlError::Degenerate("nothing to compute".into()));
    }
    let count = count.min(n);
    let extra = 4.min(n - count);
    let wanted = count + extra;
    let basis_size = (3 * wanted).max(wanted + 20).min(n);
    let mut rng = stream_rng(seed, Purpose::Calibration, 0);
    let mut next: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut keep: Vec<Vec<f64>> = Vec::new();
    let mut last = KrylovResult { values: Vec::new(), residuals: Vec::new(), converged: false, restarts: 0 };
    for restart in 0..=max_restarts {
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(basis_size);
        for mut q in keep.drain(..) {
            let r = orthogonalize(&mut q, &v);
            if r > 1e-10 {
                q.iter_mut().for_each(|x| *x /= r);
                v.push(q);
            }
        }
        let mut w: Vec<Vec<f64>> = v.iter().map(|q| m.mul_vec(q)).collect();
        let r = orthogonalize(&mut next, &v);
        if r > 1e-300 {
            next.iter_mut().for_each(|x| *x /= r);
            w.push(m.mul_vec(&next));
            v.push(std::mem::take(&mut next));
        }
        while v.len() < basis_size {
            let mut cand = w.last().expect("non-empty basis").clone();
            let scale = norm(&cand);
            let r = orthogonalize(&mut cand, &v);
            if !(r > 1e-12 * scale.max(1e-300)) {
                break;
            }
            cand.iter_mut().for_each(|x| *x /= r);
            w.push(m.mul_vec(&cand));
            v.push(cand);
        }
        let p = v.len();
        let g = DMatrix::from_fn(p, p, |i, j| dot(&v[i], &w[j]));
        let mut thetas: Vec<Complex64> = g.complex_eigenvalues().iter().copied().collect();
        sort_by_modulus(&mut thetas);
        let take = wanted.min(p);
        let mut values = Vec::with_capacity(take);
        let mut residuals = Vec::with_capacity(take);
        let mut worst: Option<(f64, Vec<f64>)> = None;
        let mut new_keep = Vec::new();
        for theta in thetas.iter().take(take) {
            let y = small_eigenvector(&g, *theta);
            let mut xr = vec![0.0; n];
            let mut xi = vec![0.0; n];
            let mut rr = vec![0.0; n];
            let mut ri = vec![0.0; n];
            for j in 0..p {
                let c = y[(j, 0)];
                for t in 0..n {
                    xr[t] += c.re * v[j][t];
                    xi[t] += c.im * v[j][t];
                    let wr = c.re * w[j][t];
                    let wi = c.im * w[j][t];
                    rr[t] += wr;
                    ri[t] += wi;
                }
            }
            for t in 0..n {
                // residual = A x - theta x
                let (a, b) = (xr[t], xi[t]);
                rr[t] -= theta.re * a - theta.im * b;
                ri[t] -= theta.re * b + theta.im * a;
            }
            let res = (dot(&rr, &rr) + dot(&ri, &ri)).sqrt();
            values.push(*theta);
            residuals.push(res);
            let idx = values.len() - 1;
            if idx < count && res > tol * theta.norm().max(1e-3) && worst.as_ref().is_none_or(|(r, _)| res > *r) {
                worst = Some((res, rr.clone()));
            }
            new_keep.push(xr);
            if theta.im.abs() > 1e-14 {
                new_keep.push(xi);
            }
        }
        let converged = worst.is_none();
        values.truncate(count);
        residuals.truncate(count);
        last = KrylovResult { values, residuals, converged, restarts: restart };
        if converged || p == n {
            return Ok(last);
        }
        keep = new_keep;
        next = match worst {
            Some((_, r)) => r,
            None => (0..n).map(|_| rng.random::<f64>() - 0.5).collect(),
        };
    }
    Ok(last)
}
