use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::state::FiniteState;
use crate::error::{invalid, Result};

/// Shape of a full-branch expanding circle map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapKind {
    /// `x -> b x mod 1`.
    BAdic { b: usize },
    /// `x -> b x + a sin(2 pi x) mod 1`, expanding when `2 pi |a| < b - 1`.
    Perturbed { b: usize, a: f64 },
}

/// A node map `tau` with `b` full inverse branches and fixed point `p_tau = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeMap {
    kind: MapKind,
}

impl NodeMap {
    pub fn doubling() -> Self {
        Self { kind: MapKind::BAdic { b: 2 } }
    }

    pub fn b_adic(b: usize) -> Result<Self> {
        if b < 2 {
            return Err(invalid("b", format!("{b} branches do not give an expanding map")));
        }
        Ok(Self { kind: MapKind::BAdic { b } })
    }

    pub fn perturbed_doubling(a: f64) -> Result<Self> {
        Self::perturbed(2, a)
    }

    pub fn perturbed(b: usize, a: f64) -> Result<Self> {
        if b < 2 {
            return Err(invalid("b", format!("{b} branches do not give an expanding map")));
        }
        if !a.is_finite() || TAU * a.abs() >= (b - 1) as f64 {
            return Err(invalid("a", format!("|a| = {} must be below (b-1)/(2 pi)", a.abs())));
        }
        if a == 0.0 {
            return Ok(Self { kind: MapKind::BAdic { b } });
        }
        Ok(Self { kind: MapKind::Perturbed { b, a } })
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn b(&self) -> usize {
        match self.kind {
            MapKind::BAdic { b } | MapKind::Perturbed { b, .. } => b,
        }
    }

    fn amplitude(&self) -> f64 {
        match self.kind {
            MapKind::BAdic { .. } => 0.0,
            MapKind::Perturbed { a, .. } => a,
        }
    }

    /// True for the piecewise-linear maps whose forward orbits collapse in
    /// binary floating point.
    pub fn is_b_adic(&self) -> bool {
        matches!(self.kind, MapKind::BAdic { .. })
    }

    /// Contraction factor of the inverse branches, `1 / min tau'`.
    pub fn eta(&self) -> f64 {
        1.0 / (self.b() as f64 - TAU * self.amplitude().abs())
    }

    pub fn p_tau(&self) -> f64 {
        0.0
    }

    /// Lift `F(z) = b z + a sin(2 pi z)` on `[0, 1]`.
    #[inline]
    fn lift(&self, z: f64) -> f64 {
        let a = self.amplitude();
        let base = self.b() as f64 * z;
        if a == 0.0 {
            base
        } else {
            base + a * (TAU * z).sin()
        }
    }

    #[inline]
    pub fn forward(&self, x: f64) -> f64 {
        wrap_unit(self.lift(x))
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        self.b() as f64 + TAU * self.amplitude() * (TAU * x).cos()
    }

    #[inline]
    pub fn second_derivative(&self, x: f64) -> f64 {
        -TAU * TAU * self.amplitude() * (TAU * x).sin()
    }

    /// Bound on `|tau'' / tau'|`.
    pub fn distortion_bound(&self) -> f64 {
        let a = self.amplitude().abs();
        TAU * TAU * a / (self.b() as f64 - TAU * a)
    }

    /// Oscillation of `log tau'`.
    pub fn log_derivative_oscillation(&self) -> f64 {
        let a = self.amplitude().abs();
        let b = self.b() as f64;
        ((b + TAU * a) / (b - TAU * a)).ln()
    }

    /// Preimage of `x` under branch `j`, i.e. the solution of `F(z) = x + j`.
    pub fn inverse(&self, branch: usize, x: f64) -> f64 {
        debug_assert!(branch < self.b());
        let b = self.b() as f64;
        let target = x + branch as f64;
        let a = self.amplitude();
        if a == 0.0 {
            return clamp_below_one(target / b);
        }
        // Safeguarded Newton on the increasing lift.
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        let mut z = target / b;
        for _ in 0..100 {
            let r = self.lift(z) - target;
            if r > 0.0 {
                hi = hi.min(z);
            } else {
                lo = lo.max(z);
            }
            let mut next = z - r / self.derivative(z);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = (next - z).abs();
            z = next;
            if step < 1e-16 {
                break;
            }
        }
        clamp_below_one(z)
    }

    /// Row of all `b` preimages of `x`, in branch order.
    pub fn preimages(&self, x: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.b()).map(|j| self.inverse(j, x)));
    }

    /// Left endpoints of the branch domains, followed by 1.
    pub fn branch_boundaries(&self) -> Vec<f64> {
        let mut v: Vec<f64> = (0..self.b()).map(|j| self.inverse(j, 0.0)).collect();
        v.push(1.0);
        v
    }

    /// Short stable description used in fingerprints.
    pub fn label(&self) -> String {
        match self.kind {
            MapKind::BAdic { b } => format!("b_adic(b={b})"),
            MapKind::Perturbed { b, a } => format!("perturbed(b={b},a={a:e})"),
        }
    }
}

#[inline]
pub(crate) fn wrap_unit(y: f64) -> f64 {
    let r = y - y.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

#[inline]
fn clamp_below_one(z: f64) -> f64 {
    if z >= 1.0 {
        1.0 - f64::EPSILON / 2.0
    } else if z < 0.0 {
        0.0
    } else {
        z
    }
}

/// Applies `tau` at every node.
pub fn apply_bar_tau(x: &FiniteState, map: &NodeMap) -> FiniteState {
    let values = x.values().iter().map(|v| map.forward(*v)).collect();
    FiniteState::from_parts_unchecked(values, map.forward(x.tail()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circ(a: f64, b: f64) -> f64 {
        let d = (a - b).abs();
        d.min(1.0 - d)
    }

    #[test]
    fn doubling_basics() {
        let m = NodeMap::doubling();
        assert_eq!(m.b(), 2);
        assert_eq!(m.eta(), 0.5);
        assert_eq!(m.forward(0.2), 0.4);
        assert_eq!(m.forward(0.5), 0.0);
        assert_eq!(m.forward(0.9), 0.8);
        assert_eq!(m.inverse(0, 0.5), 0.25);
        assert_eq!(m.inverse(1, 0.5), 0.75);
        assert_eq!(m.forward(m.p_tau()), m.p_tau());
    }

    #[test]
    fn perturbed_parameters() {
        let m = NodeMap::perturbed_doubling(0.05).unwrap();
        assert!((m.eta() - 1.0 / (2.0 - TAU * 0.05)).abs() < 1e-15);
        assert!((m.eta() - 0.593).abs() < 1e-3);
        assert!(m.forward(0.0).abs() < 1e-12);
        assert!(NodeMap::perturbed_doubling(0.2).is_err());
        assert!(NodeMap::perturbed_doubling(0.0).unwrap().is_b_adic());
    }

    #[test]
    fn inverse_roundtrip_and_contraction() {
        let m = NodeMap::perturbed_doubling(0.05).unwrap();
        for i in 0..1000 {
            let x = i as f64 / 1000.0;
            for j in 0..2 {
                let z = m.inverse(j, x);
                assert!((0.0..1.0).contains(&z));
                assert!(circ(m.forward(z), x) < 1e-12, "x={x} j={j}");
                let y = (x + 0.37) % 1.0;
                let w = m.inverse(j, y);
                assert!((z - w).abs() <= m.eta() * (x - y).abs() + 1e-12);
            }
        }
    }

    #[test]
    fn branch_boundaries_of_symmetric_map() {
        let m = NodeMap::perturbed_doubling(0.05).unwrap();
        let bd = m.branch_boundaries();
        assert_eq!(bd.len(), 3);
        assert!(bd[0].abs() < 1e-15);
        assert!((bd[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bar_tau_example() {
        let x = FiniteState::new(vec![0.2, 0.5, 0.9], 0.0).unwrap();
        let y = apply_bar_tau(&x, &NodeMap::doubling());
        assert_eq!(y.values(), &[0.4, 0.0, 0.8]);
    }
}
