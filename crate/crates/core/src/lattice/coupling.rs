use rand::Rng;
use serde::{Deserialize, Serialize};

use super::map::{apply_bar_tau, NodeMap};
use super::metric::MetricParams;
use super::state::FiniteState;
use crate::error::{invalid, CmlError, Result};
use crate::rng::{stream_rng, Purpose};

/// A translation-invariant banded linear interaction between nodes.
///
/// `(E x)_i = sum_o w_o x_{i+o}` for `|o| <= r`, with nodes outside the
/// window read as the tail value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    stencil: Vec<f64>,
    epsilon: Option<f64>,
}

impl Coupling {
    pub fn identity() -> Self {
        Self { stencil: vec![1.0], epsilon: Some(0.0) }
    }

    /// Nearest-neighbour diffusive coupling of strength `epsilon`.
    pub fn diffusive(epsilon: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&epsilon) {
            return Err(invalid("epsilon", format!("{epsilon} is not in [0, 1/2)")));
        }
        if epsilon == 0.0 {
            return Ok(Self::identity());
        }
        Ok(Self { stencil: vec![epsilon / 2.0, 1.0 - epsilon, epsilon / 2.0], epsilon: Some(epsilon) })
    }

    /// Custom banded stencil `w_{-r}, ..., w_r`; must be strictly diagonally dominant.
    pub fn banded(stencil: Vec<f64>) -> Result<Self> {
        if stencil.len().is_multiple_of(2) || stencil.is_empty() {
            return Err(invalid("stencil", "length must be odd"));
        }
        if stencil.iter().any(|w| !w.is_finite()) {
            return Err(invalid("stencil", "weights must be finite"));
        }
        let r = stencil.len() / 2;
        let off: f64 = stencil.iter().enumerate().filter(|(i, _)| *i != r).map(|(_, w)| w.abs()).sum();
        if stencil[r].abs() <= off {
            return Err(CmlError::NotInvertible(format!(
                "centre weight {} does not dominate off-diagonal mass {off}",
                stencil[r]
            )));
        }
        Ok(Self { stencil, epsilon: None })
    }

    pub fn stencil(&self) -> &[f64] {
        &self.stencil
    }

    pub fn radius(&self) -> usize {
        self.stencil.len() / 2
    }

    /// Diffusive strength, when this is a diffusive coupling.
    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    pub fn is_identity(&self) -> bool {
        self.stencil.len() == 1 && self.stencil[0] == 1.0
    }

    /// Sup-norm bound `1 / (1 - 2 eps)` for diffusive couplings, or the
    /// general `1 / (|w_0| - sum_{o != 0} |w_o|)`.
    pub fn diagonal_dominance_bound(&self) -> f64 {
        let r = self.radius();
        let off: f64 = self.stencil.iter().enumerate().filter(|(i, _)| *i != r).map(|(_, w)| w.abs()).sum();
        1.0 / (self.stencil[r].abs() - off)
    }

    /// Linear map on a width-`n` window, as a dense row-major matrix, and
    /// the tail contribution per row.
    pub fn window_matrix(&self, width: usize, tail: f64) -> (Vec<f64>, Vec<f64>) {
        let r = self.radius() as i64;
        let n = width as i64;
        let mut a = vec![0.0; width * width];
        let mut bnd = vec![0.0; width];
        for i in 0..n {
            for o in -r..=r {
                let w = self.stencil[(o + r) as usize];
                let j = i + o;
                if (0..n).contains(&j) {
                    a[(i * n + j) as usize] += w;
                } else {
                    bnd[i as usize] += w * tail;
                }
            }
        }
        (a, bnd)
    }

    pub fn label(&self) -> String {
        match self.epsilon {
            Some(e) => format!("diffusive(eps={e:e})"),
            None => {
                let w: Vec<String> = self.stencil.iter().map(|w| format!("{w:e}")).collect();
                format!("banded([{}])", w.join(","))
            }
        }
    }
}

/// Applies `E` to a value slice, writing into `out`; no range check.
pub(crate) fn couple_into(c: &Coupling, values: &[f64], tail: f64, out: &mut [f64]) {
    let r = c.radius() as i64;
    let n = values.len() as i64;
    for i in 0..n {
        let mut acc = 0.0;
        for o in -r..=r {
            let j = i + o;
            let v = if (0..n).contains(&j) { values[j as usize] } else { tail };
            acc += c.stencil[(o + r) as usize] * v;
        }
        out[i as usize] = acc;
    }
}

fn check_range(values: &[f64]) -> Result<()> {
    let k = (values.len() / 2) as i64;
    for (p, v) in values.iter().enumerate() {
        if !(0.0..1.0).contains(v) {
            return Err(CmlError::OutOfRange { node: p as i64 - k, value: *v });
        }
    }
    Ok(())
}

pub fn apply_coupling(x: &FiniteState, e: &Coupling) -> Result<FiniteState> {
    if e.is_identity() {
        return Ok(x.clone());
    }
    let mut out = vec![0.0; x.width()];
    couple_into(e, x.values(), x.tail(), &mut out);
    check_range(&out)?;
    Ok(FiniteState::from_parts_unchecked(out, x.tail()))
}

/// Solves `E x = y` on the window by banded elimination.
pub fn invert_coupling(y: &FiniteState, e: &Coupling) -> Result<FiniteState> {
    if e.is_identity() {
        return Ok(y.clone());
    }
    let n = y.width();
    let r = e.radius();
    let (mut a, bnd) = e.window_matrix(n, y.tail());
    let mut rhs: Vec<f64> = y.values().iter().zip(&bnd).map(|(v, b)| v - b).collect();
    // Diagonal dominance makes elimination without pivoting stable.
    for p in 0..n {
        let piv = a[p * n + p];
        if piv.abs() < 1e-300 {
            return Err(CmlError::NotInvertible(format!("zero pivot at row {p}")));
        }
        for i in (p + 1)..n.min(p + r + 1) {
            let f = a[i * n + p] / piv;
            if f == 0.0 {
                continue;
            }
            for j in p..n.min(p + 2 * r + 1) {
                a[i * n + j] -= f * a[p * n + j];
            }
            rhs[i] -= f * rhs[p];
        }
    }
    let mut x = vec![0.0; n];
    for p in (0..n).rev() {
        let mut acc = rhs[p];
        for j in (p + 1)..n.min(p + 2 * r + 1) {
            acc -= a[p * n + j] * x[j];
        }
        x[p] = acc / a[p * n + p];
    }
    for v in x.iter_mut() {
        // Absorb roundoff at the lower edge only; genuine escapes are rejected.
        if *v < 0.0 && *v > -1e-14 {
            *v = 0.0;
        }
    }
    check_range(&x)?;
    Ok(FiniteState::from_parts_unchecked(x, y.tail()))
}

/// The coupled map `T = E o tau-bar`.
pub fn apply_t(x: &FiniteState, map: &NodeMap, e: &Coupling) -> Result<FiniteState> {
    apply_coupling(&apply_bar_tau(x, map), e)
}

/// Precomputed `E^{-1}` on a fixed window, for hot loops.
#[derive(Debug, Clone)]
pub struct WindowInverse {
    width: usize,
    inverse: Vec<f64>,
    offset: Vec<f64>,
    identity: bool,
}

impl WindowInverse {
    pub fn new(e: &Coupling, width: usize, tail: f64) -> Result<Self> {
        if e.is_identity() {
            return Ok(Self { width, inverse: Vec::new(), offset: vec![0.0; width], identity: true });
        }
        let (a, bnd) = e.window_matrix(width, tail);
        let inverse = dense_inverse(&a, width)?;
        let offset = (0..width).map(|i| (0..width).map(|j| inverse[i * width + j] * bnd[j]).sum()).collect();
        Ok(Self { width, inverse, offset, identity: false })
    }

    pub fn matrix(&self) -> Option<&[f64]> {
        (!self.identity).then_some(self.inverse.as_slice())
    }

    /// Writes `E^{-1} y` into `out`; returns false when the result leaves the cube.
    #[inline]
    pub fn apply(&self, y: &[f64], out: &mut [f64]) -> bool {
        if self.identity {
            out.copy_from_slice(y);
            return true;
        }
        let n = self.width;
        let mut inside = true;
        for ((o, row), off) in out.iter_mut().zip(self.inverse.chunks_exact(n)).zip(&self.offset) {
            let mut v: f64 = row.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() - off;
            if v < 0.0 && v > -1e-14 {
                v = 0.0;
            }
            inside &= (0.0..1.0).contains(&v);
            *o = v;
        }
        inside
    }
}

fn dense_inverse(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let m = nalgebra::DMatrix::from_row_slice(n, n, a);
    let inv = m.try_inverse().ok_or_else(|| CmlError::NotInvertible("singular window matrix".into()))?;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = inv[(i, j)];
        }
    }
    Ok(out)
}

/// Induced norm of `E^{-1}` on the width-`(2k+1)` window under the metric
/// weight centred at each node offset, maximised over offsets.
///
/// For a linear coupling this is the exact Lipschitz constant of `E^{-1}`
/// on the truncation, i.e. the smallest admissible `C_E` there.
pub fn weighted_inverse_norm(e: &Coupling, k: usize, m: &MetricParams) -> Result<f64> {
    let w = 2 * k + 1;
    if e.is_identity() {
        return Ok(1.0);
    }
    let inv = WindowInverse::new(e, w, 0.0)?;
    let a = inv.matrix().expect("non-identity");
    let mut best: f64 = 0.0;
    for centre in -(k as i64)..=(k as i64) {
        for i in 0..w {
            let wi = m.weight(i as i64 - k as i64 - centre);
            let row: f64 = (0..w).map(|j| wi / m.weight(j as i64 - k as i64 - centre) * a[i * w + j].abs()).sum();
            best = best.max(row);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingEstimate {
    /// Sampled lower bound on `C_E`.
    pub c_e_hat: f64,
    /// Exact weighted induced norm on the truncation.
    pub weighted_norm: f64,
    /// Sup-norm diagonal-dominance bound `1 / (1 - 2 eps)`.
    pub dominance_bound: f64,
    pub eta: f64,
    /// `c_e_hat * eta < 1`.
    pub contracting: bool,
    pub pairs: usize,
}

/// Samples the metric expansion of `E^{-1}` over pairs and shifts.
///
/// The result is a lower bound on the true constant: it is a maximum over
/// finitely many pairs. Besides uniform pairs, sign-pattern pairs aligned
/// with the weighted-norm extremal directions are included for `k <= 4`.
pub fn estimate_coupling_constant(
    e: &Coupling,
    map: &NodeMap,
    m: &MetricParams,
    k: usize,
    samples: usize,
    seed: u64,
) -> Result<CouplingEstimate> {
    if samples == 0 {
        return Err(invalid("samples", "must be positive"));
    }
    let w = 2 * k + 1;
    let tail = map.p_tau();
    let mut rng = stream_rng(seed, Purpose::PairSampling, 0);
    let mut best: f64 = 0.0;
    let mut xs = vec![0.0; w];
    let mut ys = vec![0.0; w];
    let mut ex = vec![0.0; w];
    let mut ey = vec![0.0; w];
    let mut pairs = 0;
    let score = |xs: &[f64], ys: &[f64], ex: &mut [f64], ey: &mut [f64]| {
        couple_into(e, xs, tail, ex);
        couple_into(e, ys, tail, ey);
        let mut r: f64 = 0.0;
        for c in -(k as i64)..=(k as i64) {
            let num = m.distance_centred(xs, ys, c);
            let den = m.distance_centred(ex, ey, c);
            if den > 0.0 {
                r = r.max(num / den);
            }
        }
        r
    };
    for _ in 0..samples {
        for v in xs.iter_mut().chain(ys.iter_mut()) {
            *v = rng.random::<f64>();
        }
        best = best.max(score(&xs, &ys, &mut ex, &mut ey));
        pairs += 1;
    }
    if k <= 4 && !e.is_identity() {
        let inv = WindowInverse::new(e, w, 0.0)?;
        let a = inv.matrix().expect("non-identity").to_vec();
        for centre in -(k as i64)..=(k as i64) {
            for pattern in 0..(1usize << w) {
                let z: Vec<f64> = (0..w)
                    .map(|j| {
                        let s = if pattern >> j & 1 == 1 { -1.0 } else { 1.0 };
                        s / m.weight(j as i64 - k as i64 - centre)
                    })
                    .collect();
                let dir: Vec<f64> = (0..w).map(|i| (0..w).map(|j| a[i * w + j] * z[j]).sum()).collect();
                let scale = dir.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
                for i in 0..w {
                    xs[i] = 0.5 + 0.4 * dir[i] / scale;
                    ys[i] = 0.5 - 0.4 * dir[i] / scale;
                }
                best = best.max(score(&xs, &ys, &mut ex, &mut ey));
                pairs += 1;
            }
        }
    }
    let weighted_norm = weighted_inverse_norm(e, k, m)?;
    let eta = map.eta();
    Ok(CouplingEstimate {
        c_e_hat: best,
        weighted_norm,
        dominance_bound: e.diagonal_dominance_bound(),
        eta,
        contracting: best * eta < 1.0,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(v: &[f64]) -> FiniteState {
        FiniteState::new(v.to_vec(), 0.0).unwrap()
    }

    #[test]
    fn diffusive_example() {
        let e = Coupling::diffusive(0.1).unwrap();
        let y = apply_coupling(&st(&[0.2, 0.5, 0.9]), &e).unwrap();
        for (a, b) in y.values().iter().zip([0.205, 0.505, 0.835]) {
            assert!((a - b).abs() < 1e-15);
        }
        let x = invert_coupling(&st(&[0.205, 0.505, 0.835]), &e).unwrap();
        for (a, b) in x.values().iter().zip([0.2, 0.5, 0.9]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_state_edges() {
        let e = Coupling::diffusive(0.2).unwrap();
        let y = apply_coupling(&st(&[0.4, 0.4, 0.4, 0.4, 0.4]), &e).unwrap();
        assert!((y.values()[2] - 0.4).abs() < 1e-15);
        assert!((y.values()[0] - 0.9 * 0.4).abs() < 1e-15);
    }

    #[test]
    fn identity_cases() {
        let e = Coupling::diffusive(0.0).unwrap();
        let x = st(&[0.3, 0.6, 0.1]);
        assert_eq!(apply_coupling(&x, &e).unwrap(), x);
        assert_eq!(invert_coupling(&x, &e).unwrap(), x);
        let est = estimate_coupling_constant(&e, &NodeMap::doubling(), &MetricParams::default(), 1, 100, 1).unwrap();
        assert_eq!(est.c_e_hat, 1.0);
    }

    #[test]
    fn rejects_bad_couplings() {
        assert!(Coupling::diffusive(0.5).is_err());
        assert!(Coupling::diffusive(0.6).is_err());
        assert!(Coupling::banded(vec![0.5, 0.5]).is_err());
        assert!(Coupling::banded(vec![0.3, 0.4, 0.3]).is_err());
        assert!(Coupling::banded(vec![0.1, 0.8, 0.1]).is_ok());
        let e = Coupling::banded(vec![-0.2, 0.7, 0.1]).unwrap();
        assert!(matches!(apply_coupling(&st(&[0.9, 0.0, 0.0]), &e), Err(CmlError::OutOfRange { .. })));
    }

    #[test]
    fn range_rejection() {
        let e = Coupling::diffusive(0.1).unwrap();
        // Edge values near 1 are not in the range of E (the boundary pulls toward 0).
        assert!(matches!(invert_coupling(&st(&[0.99, 0.99, 0.99]), &e), Err(CmlError::OutOfRange { .. })));
    }

    #[test]
    fn window_inverse_matches_solver() {
        let e = Coupling::diffusive(0.15).unwrap();
        let inv = WindowInverse::new(&e, 5, 0.0).unwrap();
        let y = st(&[0.1, 0.3, 0.5, 0.7, 0.6]);
        let x = invert_coupling(&y, &e).unwrap();
        let mut out = vec![0.0; 5];
        assert!(inv.apply(y.values(), &mut out));
        for (a, b) in out.iter().zip(x.values()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn weighted_norm_limits() {
        let e = Coupling::diffusive(0.1).unwrap();
        let m = MetricParams::new(0.5, 1.0, 0.5).unwrap();
        let v = weighted_inverse_norm(&e, 1, &m).unwrap();
        assert!(v > 1.25 && v < 1.0 / (1.0 - 0.1 - 0.1 / 0.5));
        let flat = MetricParams::new(0.999_999, 1.0, 0.999_999).unwrap();
        let v = weighted_inverse_norm(&e, 3, &flat).unwrap();
        assert!(v <= 1.25 + 1e-4);
    }
}
