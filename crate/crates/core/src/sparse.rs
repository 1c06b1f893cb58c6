//! Compressed sparse row matrices with deterministic parallel products.

use std::ops::{Add, Mul};

use rayon::prelude::*;

const PARALLEL_ROWS: usize = 2048;

/// Square CSR matrix. Columns within a row are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr<T> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<T>,
}

pub type CsrMatrix = Csr<f64>;

impl<T> Csr<T>
where
    T: Copy + Default + Add<Output = T> + Mul<Output = T> + Send + Sync,
{
    /// Builds from per-row `(col, value)` lists; entries are sorted and
    /// duplicate columns summed.
    pub fn from_rows(rows: Vec<Vec<(u32, T)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<u32> = None;
            for (c, v) in row {
                if last == Some(c) {
                    let t = vals.last_mut().expect("non-empty");
                    *t = *t + v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[u32], &[T]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn values(&self) -> &[T] {
        &self.vals
    }

    /// `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n).flat_map(move |r| {
            let (c, v) = self.row(r);
            c.iter().zip(v).map(move |(c, v)| (r, *c as usize, *v))
        })
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&(c as u32)) {
            Ok(i) => vals[i],
            Err(_) => T::default(),
        }
    }

    /// Same sparsity pattern with mapped values `f(row, col, value)`.
    pub fn map_entries<U>(&self, f: impl Fn(usize, usize, T) -> U + Sync) -> Csr<U>
    where
        U: Copy + Send,
    {
        let vals = (0..self.n)
            .flat_map(|r| {
                let (c, v) = self.row(r);
                c.iter().zip(v).map(|(c, v)| (r, *c as usize, *v)).collect::<Vec<_>>()
            })
            .map(|(r, c, v)| f(r, c, v))
            .collect();
        Csr { n: self.n, row_ptr: self.row_ptr.clone(), cols: self.cols.clone(), vals }
    }

    #[inline]
    fn row_dot<V>(&self, r: usize, x: &[V]) -> V
    where
        V: Copy + Default + Add<Output = V>,
        T: Mul<V, Output = V>,
    {
        let (c, v) = self.row(r);
        let mut acc = V::default();
        for (c, v) in c.iter().zip(v) {
            acc = acc + *v * x[*c as usize];
        }
        acc
    }

    /// `y = M x`.
    pub fn mul_vec_into<V>(&self, x: &[V], y: &mut [V])
    where
        V: Copy + Default + Add<Output = V> + Send + Sync,
        T: Mul<V, Output = V>,
    {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        if self.n >= PARALLEL_ROWS {
            y.par_iter_mut().enumerate().for_each(|(r, out)| *out = self.row_dot(r, x));
        } else {
            for (r, out) in y.iter_mut().enumerate() {
                *out = self.row_dot(r, x);
            }
        }
    }

    pub fn mul_vec<V>(&self, x: &[V]) -> Vec<V>
    where
        V: Copy + Default + Add<Output = V> + Send + Sync,
        T: Mul<V, Output = V>,
    {
        let mut y = vec![V::default(); self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn transpose(&self) -> Csr<T> {
        let mut counts = vec![0usize; self.n + 1];
        for c in &self.cols {
            counts[*c as usize + 1] += 1;
        }
        for i in 0..self.n {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut cols = vec![0u32; self.nnz()];
        let mut vals = vec![T::default(); self.nnz()];
        for r in 0..self.n {
            let (c, v) = self.row(r);
            for (c, v) in c.iter().zip(v) {
                let slot = next[*c as usize];
                cols[slot] = r as u32;
                vals[slot] = *v;
                next[*c as usize] += 1;
            }
        }
        Csr { n: self.n, row_ptr, cols, vals }
    }
}

impl Csr<f64> {
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.row(r).1.iter().sum()).collect()
    }

    pub fn min_entry(&self) -> f64 {
        self.vals.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_multiply_transpose() {
        let m = CsrMatrix::from_rows(vec![vec![(1, 2.0), (0, 1.0), (1, 1.0)], vec![], vec![(2, 4.0), (0, 0.5)]]);
        assert_eq!(m.nnz(), 4);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.mul_vec(&[1.0, 1.0, 1.0]), vec![4.0, 0.0, 4.5]);
        let t = m.transpose();
        assert_eq!(t.mul_vec(&[1.0, 1.0, 1.0]), vec![1.5, 3.0, 4.0]);
        assert_eq!(t.transpose(), m);
        assert_eq!(m.row_sums(), vec![4.0, 0.0, 4.5]);
    }
}
