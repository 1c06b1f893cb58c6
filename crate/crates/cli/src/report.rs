//! Report emission: JSON document, CSV tables and a plain-text summary.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::run::{RunReport, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    All,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "json" => Some(Self::Json),
            "csv" => Some(Self::Csv),
            "all" => Some(Self::All),
            _ => None,
        }
    }
}

/// Creates the output directory and checks that it is writable.
pub fn preflight_output_dir(dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let probe = dir.join(".cml-lab-write-test");
    fs::write(&probe, b"")?;
    fs::remove_file(probe)
}

fn fmt_opt(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "pass",
        Some(false) => "FAIL",
        None => "n/a",
    }
}

pub fn summary_text(report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}", report.format);
    let _ = writeln!(s, "version      {}", report.code_version);
    let _ = writeln!(s, "fingerprint  {}", report.fingerprint);
    let _ = writeln!(s, "seed         {}", report.seed);
    let _ = writeln!(s, "config       {}", report.config);
    if report.sections.is_empty() {
        let _ = writeln!(s, "no experiments requested");
    }
    for sec in &report.sections {
        match sec.status {
            Status::Ok => {
                let _ = writeln!(s, "{:<14} {}", sec.experiment, fmt_opt(sec.passes));
            }
            Status::Failed => {
                let _ = writeln!(s, "{:<14} ERROR {}", sec.experiment, sec.error.as_deref().unwrap_or(""));
            }
        }
    }
    s
}

fn csv_text(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// Writes the report files into `dir` and returns their paths. Wall-times
/// go to `timings.txt`, so all other files are stable across reruns.
pub fn emit_report(report: &RunReport, format: ReportFormat, dir: &Path) -> io::Result<Vec<PathBuf>> {
    preflight_output_dir(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> io::Result<()> {
        let p = dir.join(name);
        fs::write(&p, text)?;
        written.push(p);
        Ok(())
    };
    if matches!(format, ReportFormat::Json | ReportFormat::All) {
        put("report.json", report.to_json())?;
    }
    if matches!(format, ReportFormat::Csv | ReportFormat::All) {
        for c in &report.columns {
            put(&c.name, csv_text(&c.header, &c.rows))?;
        }
    }
    put("summary.txt", summary_text(report))?;
    let mut t = String::new();
    for (name, secs) in &report.timings {
        let _ = writeln!(t, "{name} {secs:.3}");
    }
    put("timings.txt", t)?;
    Ok(written)
}
