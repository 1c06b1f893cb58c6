use serde::{Deserialize, Serialize};

use super::state::FiniteState;
use crate::error::{invalid, CmlError, Result};

/// Parameters of the lattice metric and of the seminorms built on it.
///
/// The metric is `d(x, y) = sup_i theta^|i| d_I(x_i, y_i)`, where `d_I` is
/// either `|x - y|` (default) or the circle distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    theta: f64,
    beta: f64,
    alpha: f64,
    circle: bool,
}

impl MetricParams {
    pub fn new(theta: f64, beta: f64, alpha: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(invalid("theta", format!("{theta} is not in (0, 1)")));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(invalid("beta", format!("{beta} is not in (0, 1]")));
        }
        let floor = theta.powf(beta);
        if !(alpha >= floor && alpha < 1.0) {
            return Err(invalid("alpha", format!("{alpha} is not in [theta^beta = {floor}, 1)")));
        }
        Ok(Self { theta, beta, alpha, circle: false })
    }

    /// Switches the node distance to the circle distance `min(|x-y|, 1-|x-y|)`.
    pub fn with_circle_distance(mut self, circle: bool) -> Self {
        self.circle = circle;
        self
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_circle(&self) -> bool {
        self.circle
    }

    /// Node distance `d_I`.
    #[inline]
    pub fn node_distance(&self, x: f64, y: f64) -> f64 {
        let d = (x - y).abs();
        if self.circle {
            d.min(1.0 - d)
        } else {
            d
        }
    }

    /// Weight `theta^|offset|` of a node at the given offset from the metric centre.
    #[inline]
    pub fn weight(&self, offset: i64) -> f64 {
        self.theta.powi(offset.unsigned_abs() as i32)
    }

    /// Distance between equal-width value slices, with the metric weight
    /// centred at `centre` (node index relative to the middle of the slice).
    pub fn distance_centred(&self, x: &[f64], y: &[f64], centre: i64) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        let k = (x.len() / 2) as i64;
        x.iter()
            .zip(y)
            .enumerate()
            .map(|(pos, (a, b))| self.weight(pos as i64 - k - centre) * self.node_distance(*a, *b))
            .fold(0.0, f64::max)
    }

    /// Distance between equal-width value slices, centred at node 0.
    #[inline]
    pub fn distance_values(&self, x: &[f64], y: &[f64]) -> f64 {
        self.distance_centred(x, y, 0)
    }
}

impl Default for MetricParams {
    fn default() -> Self {
        Self { theta: 0.5, beta: 1.0, alpha: 0.5, circle: false }
    }
}

/// Lattice distance between two states.
///
/// States of different width are compared after embedding the narrower
/// one; the tails agree and contribute nothing.
pub fn metric_d(x: &FiniteState, y: &FiniteState, m: &MetricParams) -> Result<f64> {
    if x.tail() != y.tail() {
        return Err(CmlError::TailMismatch { left: x.tail(), right: y.tail() });
    }
    let k = x.k().max(y.k()) as i64;
    let mut d: f64 = 0.0;
    for i in -k..=k {
        d = d.max(m.weight(i) * m.node_distance(x.node(i), y.node(i)));
    }
    Ok(d)
}
