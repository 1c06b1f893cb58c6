use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::eigen::{power_iteration, EigenData};
use super::grid::{UlamGrid, DEFAULT_CELL_CAP};
use crate::error::{invalid, CmlError, Result};
use crate::lattice::{for_each_branch, preimage_table, Coupling, NodeMap, Potential, WindowInverse};
use crate::sparse::CsrMatrix;

/// Which operator a matrix discretizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    /// The unnormalized branch-sum operator `P_k`.
    Transfer,
    /// The normalized operator `L_k`.
    Normalized,
    /// The coupled normalized operator `L_k o E^{-1}`.
    Coupled,
}

impl OperatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OperatorKind::Transfer => "transfer",
            OperatorKind::Normalized => "normalized",
            OperatorKind::Coupled => "coupled",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "transfer" => Some(OperatorKind::Transfer),
            "normalized" => Some(OperatorKind::Normalized),
            "coupled" => Some(OperatorKind::Coupled),
            _ => None,
        }
    }
}

/// Grid resolution and quadrature for an Ulam discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UlamConfig {
    pub k: usize,
    pub bins: usize,
    /// Quadrature points per axis inside each cell.
    pub quadrature: usize,
    pub cell_cap: usize,
}

impl UlamConfig {
    pub fn new(k: usize, bins: usize) -> Self {
        Self { k, bins, quadrature: 4, cell_cap: DEFAULT_CELL_CAP }
    }

    pub fn with_quadrature(mut self, q: usize) -> Self {
        self.quadrature = q;
        self
    }

    pub fn grid(&self) -> Result<UlamGrid> {
        if self.quadrature == 0 {
            return Err(invalid("quadrature", "must be positive"));
        }
        UlamGrid::new(self.k, self.bins, self.cell_cap)
    }
}

/// Assembly diagnostics; these are reported, never assumed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssemblyReport {
    pub min_row_sum: f64,
    pub max_row_sum: f64,
    /// `max_c |(P h)_c / (lambda h_c) - 1|` before row normalization.
    pub normalization_defect: Option<f64>,
    /// Leading eigenvalue of the substochastic coupled kernel.
    pub kernel_lambda: Option<f64>,
    /// Fraction of quadrature nodes whose preimage under `E` leaves the cube.
    pub off_range_fraction: Option<f64>,
    pub transient_cells: usize,
}

/// Labels identifying what an operator was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorProvenance {
    pub map: String,
    pub potential: String,
    pub coupling: String,
    pub quadrature: usize,
}

impl OperatorProvenance {
    pub fn map_fingerprint(&self) -> String {
        short_hash(&self.map)
    }

    pub fn potential_fingerprint(&self) -> String {
        short_hash(&self.potential)
    }
}

pub(crate) fn short_hash(s: &str) -> String {
    let digest = Sha256::digest(s.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Sparse Ulam matrix acting on cell functions: `(M u)_c` approximates
/// the operator applied to the piecewise-constant function `u`, evaluated
/// on cell `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct UlamOperator {
    grid: UlamGrid,
    kind: OperatorKind,
    matrix: CsrMatrix,
    provenance: OperatorProvenance,
    support: Vec<bool>,
    report: AssemblyReport,
    conformal: Option<Vec<f64>>,
}

impl UlamOperator {
    pub(crate) fn from_parts(
        grid: UlamGrid,
        kind: OperatorKind,
        matrix: CsrMatrix,
        provenance: OperatorProvenance,
        support: Vec<bool>,
        report: AssemblyReport,
    ) -> Self {
        Self { grid, kind, matrix, provenance, support, report, conformal: None }
    }

    pub fn grid(&self) -> &UlamGrid {
        &self.grid
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn provenance(&self) -> &OperatorProvenance {
        &self.provenance
    }

    /// Cells whose rows carry kernel mass. Transient cells (all quadrature
    /// preimages outside the cube) are excluded from seminorm estimates.
    pub fn support(&self) -> &[bool] {
        &self.support
    }

    pub fn report(&self) -> &AssemblyReport {
        &self.report
    }

    /// Cell measure fixed up to the kernel eigenvalue by the transpose of
    /// the unrenormalized operator: the left Perron vector of the coupled
    /// kernel for the coupled kind, `stationary` otherwise.
    pub fn conformal_measure(&self, stationary: &[f64]) -> Vec<f64> {
        self.conformal.clone().unwrap_or_else(|| stationary.to_vec())
    }

    pub fn is_normalized(&self) -> bool {
        self.kind != OperatorKind::Transfer
    }
}

fn row_extremes(m: &CsrMatrix) -> (f64, f64) {
    m.row_sums().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(*s), hi.max(*s)))
}

struct RowScratch {
    point: Vec<f64>,
    pre: Vec<f64>,
    table: Vec<f64>,
    branch: Vec<f64>,
}

/// Integrates a pointwise kernel over the quadrature nodes of every row.
/// `kernel` pushes `(col, weight)` pairs for one node and returns false if
/// the node was discarded.
fn assemble_rows<K>(grid: &UlamGrid, q: usize, kernel: K) -> (Vec<Vec<(u32, f64)>>, usize)
where
    K: Fn(&[f64], &mut RowScratch, &mut Vec<(u32, f64)>) -> bool + Sync,
{
    let width = grid.width();
    let nodes = q.pow(width as u32);
    let scale = 1.0 / nodes as f64;
    let rows: Vec<(Vec<(u32, f64)>, usize)> = (0..grid.cells())
        .into_par_iter()
        .map_init(
            || RowScratch { point: vec![0.0; width], pre: vec![0.0; width], table: Vec::new(), branch: Vec::new() },
            |s, c| {
                let mut entries = Vec::new();
                let mut pts = grid.quadrature_points(c, q);
                let mut point = std::mem::take(&mut s.point);
                let mut dropped = 0;
                while pts.next_into(&mut point) {
                    if !kernel(&point, s, &mut entries) {
                        dropped += 1;
                    }
                }
                s.point = point;
                entries.iter_mut().for_each(|e| e.1 *= scale);
                (entries, dropped)
            },
        )
        .collect();
    let dropped = rows.iter().map(|r| r.1).sum();
    (rows.into_iter().map(|r| r.0).collect(), dropped)
}

fn check_potential(f: &Potential) -> Result<()> {
    if f.sup_norm() > 700.0 {
        return Err(invalid("potential", format!("declared sup norm {} overflows exp", f.sup_norm())));
    }
    Ok(())
}

/// Ulam matrix of `P_k`:
/// `M[c, c'] = mean_q (1/b_k) sum_zeta exp f(zeta x_q) [zeta x_q in c']`.
pub fn assemble_transfer(cfg: &UlamConfig, map: &NodeMap, f: &Potential) -> Result<UlamOperator> {
    let grid = cfg.grid()?;
    check_potential(f)?;
    let b = map.b();
    let tail = map.p_tau();
    let inv_count = 1.0 / (b as f64).powi(grid.width() as i32);
    let (rows, _) = assemble_rows(&grid, cfg.quadrature, |x, s, out| {
        preimage_table(x, map, &mut s.table);
        for_each_branch(&s.table, b, &mut s.branch, |z| {
            out.push((grid.cell_of(z) as u32, f.eval(z, tail).exp() * inv_count));
        });
        true
    });
    let matrix = CsrMatrix::from_rows(rows);
    let (lo, hi) = row_extremes(&matrix);
    let n = grid.cells();
    Ok(UlamOperator::from_parts(
        grid,
        OperatorKind::Transfer,
        matrix,
        OperatorProvenance {
            map: map.label(),
            potential: f.label(),
            coupling: Coupling::identity().label(),
            quadrature: cfg.quadrature,
        },
        vec![true; n],
        AssemblyReport { min_row_sum: lo, max_row_sum: hi, ..Default::default() },
    ))
}

/// Ulam matrix of `L_k`: `L[c, c'] = P[c, c'] h_{c'} / sum_{c''} P[c, c''] h_{c''}`,
/// the row-normalized form of `P h / (lambda h)`.
pub fn assemble_normalized(p: &UlamOperator, eigen: &EigenData) -> Result<UlamOperator> {
    if p.kind() != OperatorKind::Transfer {
        return Err(CmlError::Unsupported("normalization needs a P_k operator".into()));
    }
    if eigen.grid() != p.grid() {
        return Err(CmlError::Degenerate("eigen-data grid differs from operator grid".into()));
    }
    let h = eigen.h();
    let lambda = eigen.lambda();
    let m = p.matrix();
    let mut defect: f64 = 0.0;
    let rows: Vec<Vec<(u32, f64)>> = (0..m.dim())
        .map(|r| {
            let (cols, vals) = m.row(r);
            let s: f64 = cols.iter().zip(vals).map(|(c, v)| v * h[*c as usize]).sum();
            defect = defect.max((s / (lambda * h[r]) - 1.0).abs());
            cols.iter().zip(vals).map(|(c, v)| (*c, v * h[*c as usize] / s)).collect()
        })
        .collect();
    let matrix = CsrMatrix::from_rows(rows);
    let (lo, hi) = row_extremes(&matrix);
    Ok(UlamOperator::from_parts(
        *p.grid(),
        OperatorKind::Normalized,
        matrix,
        p.provenance().clone(),
        vec![true; p.dim()],
        AssemblyReport {
            min_row_sum: lo,
            max_row_sum: hi,
            normalization_defect: Some(defect),
            ..Default::default()
        },
    ))
}

/// Ulam matrix of the coupled operator `Phi -> L_k(Phi) o E^{-1}`.
///
/// Each quadrature node `x_q` contributes the normalized branch weights at
/// `y = E^{-1} x_q`; nodes whose preimage leaves the cube contribute
/// nothing because `E` is not onto the cube. The resulting substochastic
/// kernel is renormalized by its own leading right eigenvector `v`:
/// `M' = D_v^{-1} M D_v / lambda_M`. Cells with `v = 0` carry no mass and
/// are marked transient.
pub fn assemble_coupled(
    cfg: &UlamConfig,
    map: &NodeMap,
    f: &Potential,
    e: &Coupling,
    eigen: &EigenData,
    tol: f64,
    max_iter: usize,
) -> Result<UlamOperator> {
    let grid = cfg.grid()?;
    if *eigen.grid() != grid {
        return Err(CmlError::Degenerate("eigen-data grid differs from operator grid".into()));
    }
    check_potential(f)?;
    let b = map.b();
    let tail = map.p_tau();
    let inv = WindowInverse::new(e, grid.width(), tail)?;
    let inv_count = 1.0 / (b as f64).powi(grid.width() as i32);
    let h = eigen.h();
    let lambda = eigen.lambda();
    let (rows, dropped) = assemble_rows(&grid, cfg.quadrature, |x, s, out| {
        if !inv.apply(x, &mut s.pre) {
            return false;
        }
        let denom = lambda * h[grid.cell_of(&s.pre)];
        preimage_table(&s.pre, map, &mut s.table);
        for_each_branch(&s.table, b, &mut s.branch, |z| {
            let cz = grid.cell_of(z);
            out.push((cz as u32, f.eval(z, tail).exp() * h[cz] * inv_count / denom));
        });
        true
    });
    let total_nodes = grid.cells() * cfg.quadrature.pow(grid.width() as u32);
    let kernel = CsrMatrix::from_rows(rows);
    let n = kernel.dim();
    let right = power_iteration(&kernel, vec![1.0; n], tol, max_iter)?;
    let v = &right.vector;
    let lam = right.value;
    let anchor = v.iter().enumerate().fold(0, |best, (i, x)| if *x > v[best] { i } else { best });
    let mut support = vec![true; n];
    let mut defect: f64 = 0.0;
    let rows: Vec<Vec<(u32, f64)>> = (0..n)
        .map(|r| {
            let (cols, vals) = kernel.row(r);
            if v[r] <= 0.0 || cols.is_empty() {
                support[r] = false;
                return vec![(anchor as u32, 1.0)];
            }
            let s: f64 = cols.iter().zip(vals).map(|(c, w)| w * v[*c as usize]).sum();
            defect = defect.max((s / (lam * v[r]) - 1.0).abs());
            cols.iter()
                .zip(vals)
                .filter(|(c, _)| v[**c as usize] > 0.0)
                .map(|(c, w)| (*c, w * v[*c as usize] / s))
                .collect()
        })
        .collect();
    let transient = support.iter().filter(|s| !**s).count();
    let matrix = CsrMatrix::from_rows(rows);
    let (lo, hi) = row_extremes(&matrix);
    let left = power_iteration(&kernel.transpose(), vec![1.0; n], tol, max_iter)?;
    let mass: f64 = left.vector.iter().sum();
    let conformal: Vec<f64> = left.vector.iter().map(|x| x / mass).collect();
    let mut op = UlamOperator::from_parts(
        grid,
        OperatorKind::Coupled,
        matrix,
        OperatorProvenance { map: map.label(), potential: f.label(), coupling: e.label(), quadrature: cfg.quadrature },
        support,
        AssemblyReport {
            min_row_sum: lo,
            max_row_sum: hi,
            normalization_defect: Some(defect),
            kernel_lambda: Some(lam),
            off_range_fraction: Some(dropped as f64 / total_nodes as f64),
            transient_cells: transient,
        },
    );
    op.conformal = Some(conformal);
    Ok(op)
}

/// Operator together with the eigen-data it was normalized with.
#[derive(Debug, Clone)]
pub struct BuiltOperator {
    pub operator: UlamOperator,
    pub transfer: UlamOperator,
    pub eigen: EigenData,
}

/// Builds `P_k`, its eigen-data, and the requested operator in one go.
pub fn ulam_matrix(
    kind: OperatorKind,
    cfg: &UlamConfig,
    map: &NodeMap,
    f: &Potential,
    e: &Coupling,
    tol: f64,
    max_iter: usize,
) -> Result<BuiltOperator> {
    let transfer = assemble_transfer(cfg, map, f)?;
    let eigen = super::eigen::leading_eigenpair(&transfer, map, f, tol, max_iter)?;
    let operator = match kind {
        OperatorKind::Transfer => transfer.clone(),
        OperatorKind::Normalized => assemble_normalized(&transfer, &eigen)?,
        OperatorKind::Coupled => assemble_coupled(cfg, map, f, e, &eigen, tol, max_iter)?,
    };
    Ok(BuiltOperator { operator, transfer, eigen })
}
