use serde::{Deserialize, Serialize};

use crate::error::{CmlError, Result};

/// Default cap on the number of cells of an Ulam grid.
pub const DEFAULT_CELL_CAP: usize = 100_000;

/// Tensor-product partition of `[0,1)^(2k+1)` into `N^(2k+1)` half-open boxes.
///
/// Cell indices are row-major with node `-k` most significant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UlamGrid {
    k: usize,
    bins: usize,
    cells: usize,
}

impl UlamGrid {
    pub fn new(k: usize, bins: usize, cap: usize) -> Result<Self> {
        if bins == 0 {
            return Err(CmlError::InvalidParameter { name: "bins", reason: "must be positive".into() });
        }
        let required = (bins as u128).checked_pow(2 * k as u32 + 1).unwrap_or(u128::MAX);
        if required > cap as u128 || required > u32::MAX as u128 {
            return Err(CmlError::BudgetExceeded { k, bins, required, cap });
        }
        Ok(Self { k, bins, cells: required as usize })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn width(&self) -> usize {
        2 * self.k + 1
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Side length of a cell.
    pub fn spacing(&self) -> f64 {
        1.0 / self.bins as f64
    }

    #[inline]
    pub fn bin_of(&self, v: f64) -> usize {
        ((v * self.bins as f64) as usize).min(self.bins - 1)
    }

    /// Cell containing a point of `[0,1)^(2k+1)`.
    #[inline]
    pub fn cell_of(&self, values: &[f64]) -> usize {
        debug_assert_eq!(values.len(), self.width());
        values.iter().fold(0, |acc, v| acc * self.bins + self.bin_of(*v))
    }

    /// Per-node bin indices of a cell.
    pub fn bins_of_cell(&self, mut cell: usize, out: &mut [usize]) {
        for slot in out.iter_mut().rev() {
            *slot = cell % self.bins;
            cell /= self.bins;
        }
    }

    pub fn cell_from_bins(&self, bins: &[usize]) -> usize {
        bins.iter().fold(0, |acc, b| acc * self.bins + b)
    }

    /// Midpoint of a cell.
    pub fn representative(&self, cell: usize, out: &mut [f64]) {
        let mut idx = vec![0; self.width()];
        self.bins_of_cell(cell, &mut idx);
        for (o, b) in out.iter_mut().zip(&idx) {
            *o = (*b as f64 + 0.5) / self.bins as f64;
        }
    }

    pub fn representative_vec(&self, cell: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.width()];
        self.representative(cell, &mut v);
        v
    }

    /// Evaluates a function at every cell representative.
    pub fn sample(&self, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
        let mut buf = vec![0.0; self.width()];
        (0..self.cells)
            .map(|c| {
                self.representative(c, &mut buf);
                f(&buf)
            })
            .collect()
    }

    /// Quadrature nodes of a cell: `q` midpoint-refined points per axis.
    pub fn quadrature_points(&self, cell: usize, q: usize) -> QuadraturePoints {
        let mut idx = vec![0; self.width()];
        self.bins_of_cell(cell, &mut idx);
        QuadraturePoints { lower: idx, bins: self.bins, q, digits: vec![0; self.width()], done: false }
    }
}

/// Iterator over the `q^(2k+1)` quadrature nodes of one cell.
#[derive(Debug, Clone)]
pub struct QuadraturePoints {
    lower: Vec<usize>,
    bins: usize,
    q: usize,
    digits: Vec<usize>,
    done: bool,
}

impl QuadraturePoints {
    /// Writes the next node into `out`; returns false when exhausted.
    pub fn next_into(&mut self, out: &mut [f64]) -> bool {
        if self.done {
            return false;
        }
        let n = self.bins as f64;
        let q = self.q as f64;
        for ((o, l), d) in out.iter_mut().zip(&self.lower).zip(&self.digits) {
            *o = (*l as f64 + (*d as f64 + 0.5) / q) / n;
        }
        let mut p = self.digits.len();
        loop {
            if p == 0 {
                self.done = true;
                break;
            }
            p -= 1;
            self.digits[p] += 1;
            if self.digits[p] < self.q {
                break;
            }
            self.digits[p] = 0;
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_and_dimension() {
        assert_eq!(UlamGrid::new(1, 16, DEFAULT_CELL_CAP).unwrap().cells(), 4096);
        let err = UlamGrid::new(2, 16, DEFAULT_CELL_CAP).unwrap_err();
        assert!(matches!(err, CmlError::BudgetExceeded { required: 1_048_576, .. }));
    }

    #[test]
    fn indexing_roundtrip() {
        let g = UlamGrid::new(1, 4, 1000).unwrap();
        let c = g.cell_of(&[0.3, 0.99, 0.0]);
        assert_eq!(c, 16 + 3 * 4);
        let mut bins = [0; 3];
        g.bins_of_cell(c, &mut bins);
        assert_eq!(bins, [1, 3, 0]);
        assert_eq!(g.cell_from_bins(&bins), c);
        assert_eq!(g.representative_vec(c), vec![0.375, 0.875, 0.125]);
        // Upper boundaries belong to the next cell.
        assert_eq!(g.bin_of(0.25), 1);
    }

    #[test]
    fn quadrature_nodes() {
        let g = UlamGrid::new(0, 2, 10).unwrap();
        let mut it = g.quadrature_points(1, 4);
        let mut buf = [0.0];
        let mut pts = Vec::new();
        while it.next_into(&mut buf) {
            pts.push(buf[0]);
        }
        assert_eq!(pts, vec![0.5625, 0.6875, 0.8125, 0.9375]);
    }
}
