//! Text interchange formats for operators and eigen-data.
//!
//! Operator triplet format:
//!
//! ```text
//! # cml-lab ulam-operator v1
//! kind = coupled
//! k = 1
//! bins = 16
//! quadrature = 4
//! map = perturbed(b=2,a=5e-2)
//! map_fingerprint = <16 hex digits>
//! potential = ...
//! potential_fingerprint = <16 hex digits>
//! coupling = diffusive(eps=5e-2)
//! nnz = <count>
//! <row> <col> <value>
//! ...
//! ```
//!
//! Values are written in shortest round-trip form, so export followed by
//! import reproduces the matrix bit for bit.

use serde::{Deserialize, Serialize};

use super::eigen::EigenData;
use super::grid::{UlamGrid, DEFAULT_CELL_CAP};
use super::ulam::{short_hash, AssemblyReport, OperatorKind, OperatorProvenance, UlamOperator};
use crate::error::{CmlError, Result};
use crate::sparse::CsrMatrix;

const TRIPLET_MAGIC: &str = "# cml-lab ulam-operator v1";
const EIGEN_FORMAT: &str = "cml-lab eigen-data v1";
const MAX_IMPORT_NNZ: usize = 50_000_000;

pub fn export_triplets(op: &UlamOperator) -> String {
    use std::fmt::Write;
    let p = op.provenance();
    let g = op.grid();
    let mut s = String::new();
    let _ = writeln!(s, "{TRIPLET_MAGIC}");
    let _ = writeln!(s, "kind = {}", op.kind().as_str());
    let _ = writeln!(s, "k = {}", g.k());
    let _ = writeln!(s, "bins = {}", g.bins());
    let _ = writeln!(s, "quadrature = {}", p.quadrature);
    let _ = writeln!(s, "map = {}", p.map);
    let _ = writeln!(s, "map_fingerprint = {}", p.map_fingerprint());
    let _ = writeln!(s, "potential = {}", p.potential);
    let _ = writeln!(s, "potential_fingerprint = {}", p.potential_fingerprint());
    let _ = writeln!(s, "coupling = {}", p.coupling);
    let _ = writeln!(s, "nnz = {}", op.matrix().nnz());
    for (r, c, v) in op.matrix().triplets() {
        let _ = writeln!(s, "{r} {c} {v:e}");
    }
    s
}

fn perr(line: usize, message: impl Into<String>) -> CmlError {
    CmlError::Parse { line, message: message.into() }
}

/// Parses the triplet format. Header fields must appear in order; every
/// entry must be in range, nonnegative and finite, with no duplicates.
pub fn import_triplets(text: &str) -> Result<UlamOperator> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (n, first) = lines.next().ok_or_else(|| perr(1, "empty input"))?;
    if first.trim_end() != TRIPLET_MAGIC {
        return Err(perr(n, "missing format header"));
    }
    let mut field = |key: &str| -> Result<(usize, String)> {
        let (n, line) = lines.next().ok_or_else(|| perr(0, format!("missing `{key}`")))?;
        let (k, v) = line.split_once('=').ok_or_else(|| perr(n, format!("expected `{key} = ...`")))?;
        if k.trim() != key {
            return Err(perr(n, format!("expected `{key}`, found `{}`", k.trim())));
        }
        Ok((n, v.trim().to_string()))
    };
    let number = |(n, v): (usize, String)| -> Result<usize> { v.parse().map_err(|_| perr(n, format!("bad integer `{v}`"))) };
    let (kn, kind) = field("kind")?;
    let kind = OperatorKind::parse(&kind).ok_or_else(|| perr(kn, format!("unknown kind `{kind}`")))?;
    let k = number(field("k")?)?;
    let bins = number(field("bins")?)?;
    let quadrature = number(field("quadrature")?)?;
    let (_, map) = field("map")?;
    let (fnl, map_fp) = field("map_fingerprint")?;
    if short_hash(&map) != map_fp {
        return Err(perr(fnl, "map fingerprint does not match the map label"));
    }
    let (_, potential) = field("potential")?;
    let (fpl, pot_fp) = field("potential_fingerprint")?;
    if short_hash(&potential) != pot_fp {
        return Err(perr(fpl, "potential fingerprint does not match the potential label"));
    }
    let (_, coupling) = field("coupling")?;
    let (nnz_line, nnz_text) = field("nnz")?;
    let nnz: usize = nnz_text.parse().map_err(|_| perr(nnz_line, format!("bad integer `{nnz_text}`")))?;
    if k > 16 {
        return Err(perr(kn, "k out of range"));
    }
    let grid = UlamGrid::new(k, bins, DEFAULT_CELL_CAP).map_err(|e| perr(kn, e.to_string()))?;
    let dim = grid.cells();
    if nnz > MAX_IMPORT_NNZ || nnz > dim.saturating_mul(dim) {
        return Err(perr(nnz_line, "entry count out of range"));
    }
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); dim];
    let mut seen = 0usize;
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (r, c, v) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(r), Some(c), Some(v), None) => (r, c, v),
            _ => return Err(perr(n, "expected `row col value`")),
        };
        let r: usize = r.parse().map_err(|_| perr(n, "bad row index"))?;
        let c: usize = c.parse().map_err(|_| perr(n, "bad column index"))?;
        let v: f64 = v.parse().map_err(|_| perr(n, "bad value"))?;
        if r >= dim || c >= dim {
            return Err(perr(n, format!("index outside dimension {dim}")));
        }
        if !(v.is_finite() && v >= 0.0) {
            return Err(perr(n, "entries must be finite and nonnegative"));
        }
        if rows[r].iter().any(|e| e.0 as usize == c) {
            return Err(perr(n, "duplicate entry"));
        }
        seen += 1;
        if seen > nnz {
            return Err(perr(n, "more entries than declared"));
        }
        rows[r].push((c as u32, v));
    }
    if seen != nnz {
        return Err(perr(nnz_line, format!("declared {nnz} entries, found {seen}")));
    }
    let matrix = CsrMatrix::from_rows(rows);
    let support = (0..dim).map(|r| !matrix.row(r).0.is_empty()).collect();
    let sums = matrix.row_sums();
    let report = AssemblyReport {
        min_row_sum: sums.iter().copied().fold(f64::INFINITY, f64::min),
        max_row_sum: sums.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ..Default::default()
    };
    Ok(UlamOperator::from_parts(
        grid,
        kind,
        matrix,
        OperatorProvenance { map, potential, coupling, quadrature },
        support,
        report,
    ))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EigenDocument {
    format: String,
    k: usize,
    bins: usize,
    lambda: f64,
    h: Vec<f64>,
    nu: Vec<f64>,
    g: Vec<f64>,
    mu: Vec<f64>,
    residual_right: f64,
    residual_left: f64,
    iterations: usize,
}

pub fn export_eigendata(e: &EigenData) -> String {
    let doc = EigenDocument {
        format: EIGEN_FORMAT.into(),
        k: e.grid().k(),
        bins: e.grid().bins(),
        lambda: e.lambda(),
        h: e.h().to_vec(),
        nu: e.nu().to_vec(),
        g: e.g().to_vec(),
        mu: e.mu().to_vec(),
        residual_right: e.residual_right(),
        residual_left: e.residual_left(),
        iterations: e.iterations(),
    };
    serde_json::to_string_pretty(&doc).expect("plain data serializes")
}

/// Parses and validates an eigen-data document.
pub fn import_eigendata(text: &str) -> Result<EigenData> {
    let doc: EigenDocument = serde_json::from_str(text).map_err(|e| perr(e.line(), e.to_string()))?;
    if doc.format != EIGEN_FORMAT {
        return Err(perr(1, format!("unknown format `{}`", doc.format)));
    }
    if doc.k > 16 {
        return Err(perr(1, "k out of range"));
    }
    let grid = UlamGrid::new(doc.k, doc.bins, DEFAULT_CELL_CAP).map_err(|e| perr(1, e.to_string()))?;
    if doc.mu.len() != grid.cells() {
        return Err(perr(1, "mu has the wrong length"));
    }
    let mut data = EigenData::from_parts(grid, doc.lambda, doc.h, doc.nu, doc.g).map_err(|e| perr(1, e.to_string()))?;
    if doc.mu.iter().zip(data.mu()).any(|(a, b)| (a - b).abs() > 1e-9) {
        return Err(perr(1, "mu is not the normalised product h nu"));
    }
    if !(doc.residual_right.is_finite() && doc.residual_left.is_finite()) {
        return Err(perr(1, "residuals must be finite"));
    }
    data.mu = doc.mu;
    data.residual_right = doc.residual_right;
    data.residual_left = doc.residual_left;
    data.iterations = doc.iterations;
    Ok(data)
}
