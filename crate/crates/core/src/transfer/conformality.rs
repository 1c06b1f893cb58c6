use rand::Rng;
use serde::Serialize;

use super::grid::UlamGrid;
use crate::error::{invalid, CmlError, Result};
use crate::lattice::{Coupling, NodeMap, WindowInverse};
use crate::rng::{stream_rng, Purpose};

/// A finite union of grid-aligned boxes; each box lists a half-open bin
/// range `[lo, hi)` per node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CylinderSet {
    grid: UlamGrid,
    boxes: Vec<Vec<(usize, usize)>>,
}

impl CylinderSet {
    pub fn new(grid: UlamGrid, boxes: Vec<Vec<(usize, usize)>>) -> Result<Self> {
        for b in &boxes {
            if b.len() != grid.width() {
                return Err(CmlError::WidthMismatch { expected: grid.width(), found: b.len() });
            }
            if b.iter().any(|(lo, hi)| lo >= hi || *hi > grid.bins()) {
                return Err(invalid("boxes", "bin ranges must satisfy lo < hi <= N"));
            }
        }
        Ok(Self { grid, boxes })
    }

    /// The whole cube.
    pub fn full(grid: UlamGrid) -> Self {
        Self { boxes: vec![vec![(0, grid.bins()); grid.width()]], grid }
    }

    pub fn boxes(&self) -> &[Vec<(usize, usize)>] {
        &self.boxes
    }

    #[inline]
    pub fn contains(&self, values: &[f64]) -> bool {
        self.boxes.iter().any(|b| b.iter().zip(values).all(|((lo, hi), v)| (*lo..*hi).contains(&self.grid.bin_of(*v))))
    }

    /// Draws a single box inside one branch domain per node, so that
    /// `tau-bar` (and hence `T`) is injective on it.
    pub fn random_admissible(grid: UlamGrid, map: &NodeMap, seed: u64, index: u32) -> Result<Self> {
        let mut rng = stream_rng(seed, Purpose::CylinderDraw, index);
        let bounds = map.branch_boundaries();
        let n = grid.bins() as f64;
        let mut b = Vec::with_capacity(grid.width());
        for _ in 0..grid.width() {
            let j = rng.random_range(0..map.b());
            let lo = (bounds[j] * n - 1e-9).ceil().max(0.0) as usize;
            let hi = ((bounds[j + 1] * n + 1e-9).floor() as usize).min(grid.bins());
            if hi <= lo {
                return Err(invalid("bins", "grid too coarse to resolve branch domains"));
            }
            let span = hi - lo;
            let min_len = (span / 4).max(1);
            let len = rng.random_range(min_len..=span);
            let start = lo + rng.random_range(0..=span - len);
            b.push((start, start + len));
        }
        Self::new(grid, vec![b])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConformalityReport {
    /// `sum_{c in A} exp(-g_c) nu_c`.
    pub lhs: f64,
    /// Monte Carlo estimate of `nu(T A)`.
    pub rhs: f64,
    pub ratio: f64,
    /// Standard error of `rhs`.
    pub rhs_std_error: f64,
    /// `b^-(2k+1)`, the value the ratio takes for the normalized operator.
    pub branch_factor: f64,
    pub samples: usize,
}

/// Compares `int_A exp(-g) d nu` with `nu(T A)`.
///
/// `nu` is a cell measure, `g` the normalized potential on cells. The
/// right side is estimated by stratified sampling: about `samples / cells`
/// uniform points per cell, each counted when some lattice preimage
/// `zeta(E^{-1} x)` lies in `A`. With `require_injective` a point with two
/// preimages in `A` rejects the set.
#[allow(clippy::too_many_arguments)]
pub fn check_conformality(
    grid: &UlamGrid,
    g: &[f64],
    nu: &[f64],
    set: &CylinderSet,
    map: &NodeMap,
    e: &Coupling,
    samples: usize,
    require_injective: bool,
    seed: u64,
) -> Result<ConformalityReport> {
    if samples == 0 {
        return Err(invalid("samples", "must be positive"));
    }
    if g.len() != grid.cells() || nu.len() != grid.cells() {
        return Err(CmlError::Degenerate("cell vectors do not match the grid".into()));
    }
    let w = grid.width();
    let mut rep = vec![0.0; w];
    let mut lhs = 0.0;
    for c in 0..grid.cells() {
        grid.representative(c, &mut rep);
        if set.contains(&rep) {
            lhs += (-g[c]).exp() * nu[c];
        }
    }
    let inv = WindowInverse::new(e, w, map.p_tau())?;
    let b = map.b();
    let per_cell = samples.div_ceil(grid.cells()).max(1);
    let mut rng = stream_rng(seed, Purpose::MonteCarlo, 0);
    let mut x = vec![0.0; w];
    let mut y = vec![0.0; w];
    let mut z = vec![0.0; w];
    let mut bins = vec![0; w];
    let mut rhs = 0.0;
    let mut variance = 0.0;
    let single = set.boxes.len() == 1;
    // Stratified estimate: every cell gets the same number of uniform
    // points, and cells wholly inside or outside `T A` add no variance.
    for (c, &mass) in nu.iter().enumerate() {
        if mass <= 0.0 {
            continue;
        }
        grid.bins_of_cell(c, &mut bins);
        let mut hits = 0usize;
        for _ in 0..per_cell {
            for (xi, bi) in x.iter_mut().zip(&bins) {
                *xi = (*bi as f64 + rng.random::<f64>()) * grid.spacing();
            }
            if !inv.apply(&x, &mut y) {
                continue;
            }
            let inside = if single {
                preimages_in_box(&set.boxes[0], &y, map, grid)
            } else {
                let mut count = 0;
                for branch in 0..b.pow(w as u32) {
                    let mut code = branch;
                    for p in (0..w).rev() {
                        z[p] = map.inverse(code % b, y[p]);
                        code /= b;
                    }
                    if set.contains(&z) {
                        count += 1;
                        if !require_injective {
                            break;
                        }
                    }
                }
                count
            };
            if inside > 1 && require_injective {
                return Err(CmlError::NotInjective(format!("{inside} preimages of one sample lie in the set")));
            }
            if inside >= 1 {
                hits += 1;
            }
        }
        let p = hits as f64 / per_cell as f64;
        rhs += mass * p;
        variance += mass * mass * p * (1.0 - p) / per_cell as f64;
    }
    let rhs_std_error = variance.sqrt();
    let samples = per_cell * grid.cells();
    Ok(ConformalityReport {
        lhs,
        rhs,
        ratio: lhs / rhs,
        rhs_std_error,
        branch_factor: (b as f64).powi(-(w as i32)),
        samples,
    })
}

/// Number of lattice preimages of `y` inside one box: the product over
/// nodes of the branches whose inverse lands in that node's bin range.
fn preimages_in_box(bx: &[(usize, usize)], y: &[f64], map: &NodeMap, grid: &UlamGrid) -> usize {
    let mut total = 1;
    for ((lo, hi), v) in bx.iter().zip(y) {
        let n = (0..map.b()).filter(|&j| (*lo..*hi).contains(&grid.bin_of(map.inverse(j, *v)))).count();
        if n == 0 {
            return 0;
        }
        total *= n;
    }
    total
}
