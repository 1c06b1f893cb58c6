use super::map::NodeMap;
use super::state::FiniteState;

/// Lazy iterator over the `b^(2k+1)` lattice preimages of a state.
///
/// Order is lexicographic in the tuple of branch indices
/// `(j_{-k}, ..., j_k)`: the rightmost node varies fastest.
#[derive(Debug, Clone)]
pub struct InverseBranches {
    table: Vec<f64>,
    b: usize,
    digits: Vec<usize>,
    tail: f64,
    remaining: usize,
}

impl InverseBranches {
    fn new(x: &FiniteState, map: &NodeMap) -> Self {
        let b = map.b();
        let mut table = Vec::with_capacity(x.width() * b);
        for v in x.values() {
            table.extend((0..b).map(|j| map.inverse(j, *v)));
        }
        let remaining = b.checked_pow(x.width() as u32).unwrap_or(usize::MAX);
        Self { table, b, digits: vec![0; x.width()], tail: x.tail(), remaining }
    }

    /// Branch index tuple of the next item.
    pub fn next_indices(&self) -> Option<&[usize]> {
        (self.remaining > 0).then_some(self.digits.as_slice())
    }
}

impl Iterator for InverseBranches {
    type Item = FiniteState;

    fn next(&mut self) -> Option<FiniteState> {
        if self.remaining == 0 {
            return None;
        }
        let values = self.digits.iter().enumerate().map(|(p, j)| self.table[p * self.b + j]).collect();
        self.remaining -= 1;
        for d in self.digits.iter_mut().rev() {
            *d += 1;
            if *d < self.b {
                break;
            }
            *d = 0;
        }
        Some(FiniteState::from_parts_unchecked(values, self.tail))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl ExactSizeIterator for InverseBranches {}

pub fn enumerate_inverse_branches(x: &FiniteState, map: &NodeMap) -> InverseBranches {
    InverseBranches::new(x, map)
}

/// Allocation-free branch visitor used by the operator kernels.
///
/// `table` must hold the `b` preimages of each node, node-major. The
/// callback sees every branch in the same order as [`InverseBranches`].
pub(crate) fn for_each_branch(table: &[f64], b: usize, scratch: &mut Vec<f64>, mut visit: impl FnMut(&[f64])) {
    let width = table.len() / b;
    scratch.clear();
    scratch.extend((0..width).map(|p| table[p * b]));
    let mut digits = vec![0usize; width];
    loop {
        visit(scratch);
        let mut p = width;
        loop {
            if p == 0 {
                return;
            }
            p -= 1;
            digits[p] += 1;
            if digits[p] < b {
                scratch[p] = table[p * b + digits[p]];
                break;
            }
            digits[p] = 0;
            scratch[p] = table[p * b];
        }
    }
}

pub(crate) fn preimage_table(values: &[f64], map: &NodeMap, table: &mut Vec<f64>) {
    let b = map.b();
    table.clear();
    for v in values {
        table.extend((0..b).map(|j| map.inverse(j, *v)));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubling_k0() {
        let m = NodeMap::doubling();
        let x = FiniteState::new(vec![0.5], 0.0).unwrap();
        let v: Vec<f64> = enumerate_inverse_branches(&x, &m).map(|s| s.values()[0]).collect();
        assert_eq!(v, vec![0.25, 0.75]);
        let x = FiniteState::new(vec![0.0], 0.0).unwrap();
        let v: Vec<f64> = enumerate_inverse_branches(&x, &m).map(|s| s.values()[0]).collect();
        assert_eq!(v, vec![0.0, 0.5]);
    }

    #[test]
    fn count_and_order_k1() {
        let m = NodeMap::doubling();
        let x = FiniteState::new(vec![0.2, 0.4, 0.6], 0.0).unwrap();
        let it = enumerate_inverse_branches(&x, &m);
        assert_eq!(it.len(), 8);
        let all: Vec<FiniteState> = it.collect();
        assert_eq!(all.len(), 8);
        assert_eq!(all[0].values(), &[0.1, 0.2, 0.3]);
        assert_eq!(all[1].values(), &[0.1, 0.2, 0.8]);
        assert_eq!(all[7].values(), &[0.6, 0.7, 0.8]);
    }

    #[test]
    fn visitor_matches_iterator() {
        let m = NodeMap::perturbed_doubling(0.05).unwrap();
        let x = FiniteState::new(vec![0.13, 0.77, 0.5], 0.0).unwrap();
        let mut table = Vec::new();
        preimage_table(x.values(), &m, &mut table);
        let mut seen = Vec::new();
        let mut scratch = Vec::new();
        for_each_branch(&table, 2, &mut scratch, |z| seen.push(z.to_vec()));
        let iter: Vec<Vec<f64>> = enumerate_inverse_branches(&x, &m).map(|s| s.into_values()).collect();
        assert_eq!(seen, iter);
    }
}
