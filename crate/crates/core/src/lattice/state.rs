use serde::{Deserialize, Serialize};

use crate::error::{invalid, CmlError, Result};

/// A point of the truncated lattice: node values on `{-k, ..., k}` with
/// every node outside the window equal to the tail value `p_tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteState {
    values: Vec<f64>,
    tail: f64,
}

impl FiniteState {
    pub fn new(values: Vec<f64>, tail: f64) -> Result<Self> {
        if values.len().is_multiple_of(2) {
            return Err(invalid("values", format!("length {} is not odd", values.len())));
        }
        if !(0.0..1.0).contains(&tail) {
            return Err(invalid("tail", format!("{tail} is not in [0, 1)")));
        }
        let k = (values.len() / 2) as i64;
        for (pos, v) in values.iter().enumerate() {
            if !(0.0..1.0).contains(v) {
                return Err(CmlError::OutOfRange { node: pos as i64 - k, value: *v });
            }
        }
        Ok(Self { values, tail })
    }

    /// The all-tail state of half-width `k`.
    pub fn constant(k: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; 2 * k + 1], value)
    }

    pub(crate) fn from_parts_unchecked(values: Vec<f64>, tail: f64) -> Self {
        Self { values, tail }
    }

    pub fn k(&self) -> usize {
        self.values.len() / 2
    }

    pub fn width(&self) -> usize {
        self.values.len()
    }

    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at lattice node `i` (tail outside the window).
    #[inline]
    pub fn node(&self, i: i64) -> f64 {
        node_value(&self.values, self.tail, i)
    }
}

/// Value at node `i` of a centred slice with the given tail.
#[inline]
pub fn node_value(values: &[f64], tail: f64, i: i64) -> f64 {
    let k = (values.len() / 2) as i64;
    if i.abs() > k {
        tail
    } else {
        values[(i + k) as usize]
    }
}

/// Widens `x` to half-width `k2`, filling the new nodes with the tail value.
pub fn embed(x: &FiniteState, k2: usize) -> Result<FiniteState> {
    if k2 < x.k() {
        return Err(invalid("k2", format!("{k2} is smaller than the state half-width {}", x.k())));
    }
    let pad = k2 - x.k();
    let mut values = Vec::with_capacity(2 * k2 + 1);
    values.extend(std::iter::repeat_n(x.tail, pad));
    values.extend_from_slice(&x.values);
    values.extend(std::iter::repeat_n(x.tail, pad));
    Ok(FiniteState { values, tail: x.tail })
}

/// Keeps the central `2*k1 + 1` values of `x`.
pub fn project(x: &FiniteState, k1: usize) -> Result<FiniteState> {
    if k1 > x.k() {
        return Err(invalid("k1", format!("{k1} exceeds the state half-width {}", x.k())));
    }
    let cut = x.k() - k1;
    Ok(FiniteState { values: x.values[cut..x.values.len() - cut].to_vec(), tail: x.tail })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks() {
        assert!(FiniteState::new(vec![0.1, 0.2], 0.0).is_err());
        assert!(FiniteState::new(vec![1.0], 0.0).is_err());
        assert!(FiniteState::new(vec![-0.1], 0.0).is_err());
        assert!(FiniteState::new(vec![0.1], 1.0).is_err());
        let x = FiniteState::new(vec![0.2, 0.5, 0.9], 0.0).unwrap();
        assert_eq!(x.k(), 1);
        assert_eq!(x.node(-1), 0.2);
        assert_eq!(x.node(1), 0.9);
        assert_eq!(x.node(5), 0.0);
    }

    #[test]
    fn embed_and_project() {
        let x = FiniteState::new(vec![0.2, 0.5, 0.9], 0.0).unwrap();
        let e = embed(&x, 2).unwrap();
        assert_eq!(e.values(), &[0.0, 0.2, 0.5, 0.9, 0.0]);
        assert_eq!(embed(&x, 1).unwrap(), x);
        assert!(embed(&x, 0).is_err());
        assert_eq!(project(&e, 1).unwrap(), x);
        assert_eq!(project(&x, 1).unwrap(), x);
        assert_eq!(project(&x, 0).unwrap().values(), &[0.5]);
        assert!(project(&x, 2).is_err());
    }
}
