//! Experiment orchestration.

use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use cml_lab_core::lattice::{estimate_coupling_constant, weighted_inverse_norm, Coupling, MetricParams, NodeMap, Observable, Potential};
use cml_lab_core::spectral::{
    check_twisted_bound, operator_correlation, spectral_gap, twisted_curvature, twisted_matrix, variance_green_kubo,
    SpectrumReport, CURVATURE_STEP,
};
use cml_lab_core::stats::{
    calibrate_asip, clt_test, grand_mean, partial_sums, pooled_autocorrelation_fit, simulate_ensemble, asip_diagnostic,
    DiagnosticReport, EnsembleConfig,
};
use cml_lab_core::transfer::{
    check_conformality, check_lasota_yorke, check_pk_cauchy, random_trig_observables, stationary_measure, ulam_matrix,
    BuiltOperator, CylinderSet, LyConstants,
};
use cml_lab_core::CmlError;

use crate::config::{Experiment, ExperimentConfig};

pub const REPORT_FORMAT: &str = "cml-lab run-report v1";
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Required relative agreement of the normalized operator rows.
const DEFECT_TOLERANCE: f64 = 1e-8;
const LAMBDA1_TOLERANCE: f64 = 1e-6;
const CORRELATION_R2: f64 = 0.95;
const TWISTED_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectionResult {
    pub experiment: &'static str,
    pub status: Status,
    /// `None` when the section has no pass criterion or failed to run.
    pub passes: Option<bool>,
    pub error: Option<String>,
    pub data: Value,
}

/// Plot-ready table written next to the report.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnFile {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub format: &'static str,
    pub code_version: &'static str,
    /// SHA-256 of the canonical configuration, code version and seed.
    pub fingerprint: String,
    pub seed: u64,
    pub config: Value,
    pub sections: Vec<SectionResult>,
    #[serde(skip)]
    pub columns: Vec<ColumnFile>,
    /// Wall-clock seconds per section; written separately from the report.
    #[serde(skip)]
    pub timings: Vec<(&'static str, f64)>,
}

impl RunReport {
    pub fn section(&self, e: Experiment) -> Option<&SectionResult> {
        self.sections.iter().find(|s| s.experiment == e.name())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn fingerprint(cfg: &ExperimentConfig) -> String {
    let mut h = Sha256::new();
    h.update(cfg.canonical_json().as_bytes());
    h.update(b"\n");
    h.update(CODE_VERSION.as_bytes());
    h.update(b"\n");
    h.update(cfg.seed.to_le_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

type SectionOutcome = Result<(Option<bool>, Value), CmlError>;

struct Lab<'a> {
    cfg: &'a ExperimentConfig,
    map: NodeMap,
    coupling: Coupling,
    metric: MetricParams,
    potential: Potential,
    observable: Observable,
    built: Option<Result<(BuiltOperator, Vec<f64>), String>>,
    spectrum: Option<SpectrumReport>,
    sigma2: Option<f64>,
    constants: Option<LyConstants>,
    columns: Vec<ColumnFile>,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn failed(msg: String) -> CmlError {
    CmlError::Degenerate(msg)
}

impl<'a> Lab<'a> {
    fn tail(&self) -> f64 {
        self.map.p_tau()
    }

    fn build(&self, bins: usize) -> Result<(BuiltOperator, Vec<f64>), CmlError> {
        let op = &self.cfg.operator;
        let built = ulam_matrix(op.kind(), &op.ulam(bins), &self.map, &self.potential, &self.coupling, op.tol, op.max_iter)?;
        let measure = stationary_measure(&built.operator, op.tol, op.max_iter)?;
        Ok((built, measure))
    }

    fn operator(&mut self) -> Result<&(BuiltOperator, Vec<f64>), CmlError> {
        if self.built.is_none() {
            self.built = Some(self.build(self.cfg.operator.bins).map_err(|e| e.to_string()));
        }
        self.built.as_ref().expect("built").as_ref().map_err(|e| failed(e.clone()))
    }

    fn c_e(&self) -> Result<f64, CmlError> {
        Ok(self.coupling.diagonal_dominance_bound().max(weighted_inverse_norm(&self.coupling, self.cfg.operator.k, &self.metric)?))
    }

    fn constants(&mut self) -> Result<LyConstants, CmlError> {
        if let Some(c) = self.constants {
            return Ok(c);
        }
        let c_e = self.c_e()?;
        let (eta, f_beta, seed) = (self.map.eta(), self.potential.beta_norm(), self.cfg.seed);
        let metric = self.metric;
        let (built, _) = self.operator()?;
        let c = LyConstants::measured(&built.eigen, &metric, c_e, eta, f_beta, seed);
        self.constants = Some(c);
        Ok(c)
    }

    fn eigen(&mut self) -> SectionOutcome {
        let tol = self.cfg.operator.tol;
        let (built, _) = self.operator()?;
        let e = &built.eigen;
        let h_min = e.h().iter().copied().fold(f64::INFINITY, f64::min);
        let h_max = e.h().iter().copied().fold(0.0, f64::max);
        let nu_min = e.nu().iter().copied().fold(f64::INFINITY, f64::min);
        let nu_max = e.nu().iter().copied().fold(0.0, f64::max);
        let report = built.operator.report();
        let defect = report.normalization_defect.unwrap_or(0.0);
        let passes = defect <= DEFECT_TOLERANCE;
        Ok((
            Some(passes),
            json!({
                "lambda": e.lambda(),
                "residual_right": e.residual_right(),
                "residual_left": e.residual_left(),
                "iterations": e.iterations(),
                "tolerance": tol,
                "h_min": h_min,
                "h_max": h_max,
                "nu_min": nu_min,
                "nu_max": nu_max,
                "cells": built.operator.dim(),
                "nnz": built.operator.matrix().nnz(),
                "assembly": to_value(report),
                "normalization_defect_tolerance": DEFECT_TOLERANCE,
            }),
        ))
    }

    fn coupling_check(&mut self) -> SectionOutcome {
        let k = self.cfg.operator.k;
        let est = estimate_coupling_constant(&self.coupling, &self.map, &self.metric, k, self.cfg.coupling_check.samples, self.cfg.seed)?;
        let c_e = self.c_e()?;
        let product = c_e * self.map.eta();
        Ok((
            Some(product < 1.0 && est.c_e_hat <= est.weighted_norm * (1.0 + 1e-9)),
            json!({
                "estimate": to_value(&est),
                "c_e": c_e,
                "c_e_eta": product,
                "bound": 1.0,
            }),
        ))
    }

    fn cauchy(&mut self) -> SectionOutcome {
        let c = &self.cfg.cauchy;
        let f = c.potential.potential(&self.map, &self.metric, c.k_max)?;
        let r = check_pk_cauchy(&Observable::Constant(1.0), &f, &self.map, c.k_max, c.samples, self.cfg.seed)?;
        Ok((r.fitted_ratio.map(|q| q <= c.max_ratio), json!({ "report": to_value(&r), "max_ratio": c.max_ratio })))
    }

    fn lasota_yorke(&mut self) -> SectionOutcome {
        let constants = self.constants()?;
        let c = self.cfg.lasota_yorke.clone();
        let (seed, k, metric) = (self.cfg.seed, self.cfg.operator.k, self.metric);
        let (built, _) = self.operator()?;
        let obs = random_trig_observables(c.observables, k, seed);
        let r = check_lasota_yorke(&built.operator, &obs, &metric, c.n_max, &constants, c.tolerance, seed)?;
        Ok((Some(r.passes), to_value(&r)))
    }

    fn conformality(&mut self) -> SectionOutcome {
        let c = self.cfg.conformality.clone();
        let seed = self.cfg.seed;
        let (map, coupling) = (self.map, self.coupling.clone());
        let (built, measure) = self.operator()?;
        let grid = *built.operator.grid();
        let nu = built.operator.conformal_measure(measure);
        let mut ratios = Vec::with_capacity(c.sets);
        let mut rows = Vec::with_capacity(c.sets);
        for s in 0..c.sets {
            let set = CylinderSet::random_admissible(grid, &map, seed, s as u32)?;
            let r = check_conformality(&grid, built.eigen.g(), &nu, &set, &map, &coupling, c.samples, true, seed.wrapping_add(s as u64))?;
            ratios.push(r.ratio);
            rows.push(r);
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let spread = ratios.iter().map(|r| (r / mean - 1.0).abs()).fold(0.0, f64::max);
        let branch_factor = rows.first().map_or(f64::NAN, |r| r.branch_factor);
        Ok((
            Some(spread <= c.tolerance),
            json!({
                "mean_ratio": mean,
                "max_relative_deviation": spread,
                "tolerance": c.tolerance,
                "branch_factor": branch_factor,
                "kernel_lambda": built.operator.report().kernel_lambda,
                "expected_ratio": branch_factor / built.operator.report().kernel_lambda.unwrap_or(1.0),
                "mean_ratio_over_branch_factor": mean / branch_factor,
                "sets": to_value(&rows),
            }),
        ))
    }

    fn spectral(&mut self) -> SectionOutcome {
        let count = self.cfg.spectral.eigenvalues;
        let (built, _) = self.operator()?;
        let r = spectral_gap(&built.operator, count)?;
        let passes = (r.lambda1 - 1.0).abs() <= LAMBDA1_TOLERANCE && r.lambda2_modulus < 1.0;
        self.columns.push(ColumnFile {
            name: "spectrum.csv".into(),
            header: vec!["index", "re", "im", "modulus"],
            rows: r.eigenvalues.iter().enumerate().map(|(i, z)| vec![i as f64, z[0], z[1], z[0].hypot(z[1])]).collect(),
        });
        let value = json!({ "report": to_value(&r), "lambda1_tolerance": LAMBDA1_TOLERANCE });
        self.spectrum = Some(r);
        Ok((Some(passes), value))
    }

    fn correlation(&mut self) -> SectionOutcome {
        let n_max = self.cfg.correlation.n_max;
        let tail = self.tail();
        let phi_obs = self.observable.clone();
        let (built, measure) = self.operator()?;
        let phi = built.operator.grid().sample(|x| phi_obs.eval(x, tail));
        let series = operator_correlation(&phi, &phi, measure, built.operator.matrix(), n_max)?;
        let fit = series.decay_fit(n_max, 1e-12);
        self.columns.push(ColumnFile {
            name: "correlations.csv".into(),
            header: vec!["n", "c_n", "abs_c_n"],
            rows: series.signed.iter().enumerate().map(|(n, c)| vec![n as f64, *c, c.abs()]).collect(),
        });
        Ok((
            fit.map(|f| f.r_squared >= CORRELATION_R2),
            json!({
                "correlations": series.signed,
                "fit": to_value(&fit),
                "r_squared_tolerance": CORRELATION_R2,
            }),
        ))
    }

    fn variance(&mut self) -> SectionOutcome {
        let v = self.cfg.variance.clone();
        let max_iter = self.cfg.operator.max_iter;
        let tail = self.tail();
        let obs = self.observable.clone();
        let own;
        let (built, measure) = if v.bins == self.cfg.operator.bins {
            self.operator()?
        } else {
            own = self.build(v.bins)?;
            &own
        };
        let op = &built.operator;
        let phi = op.grid().sample(|x| obs.eval(x, tail));
        let gk = variance_green_kubo(&phi, measure, op, v.tail_tol, v.n_max)?;
        let curvature = if gk.sigma2 > 0.0 {
            Some(twisted_curvature(op, &obs, tail, measure, CURVATURE_STEP, TWISTED_TOL, max_iter.max(10_000))?)
        } else {
            None
        };
        let rel = curvature.map(|c| (c.richardson - gk.sigma2).abs() / gk.sigma2);
        let sigma2 = gk.sigma2;
        self.sigma2 = Some(sigma2);
        Ok((
            rel.map(|r| r <= v.tolerance),
            json!({
                "sigma2": sigma2,
                "bins": v.bins,
                "c0": gk.c0,
                "lags": gk.lags,
                "tail": gk.tail,
                "truncated": gk.truncated,
                "curvature": to_value(&curvature),
                "relative_difference": rel,
                "tolerance": v.tolerance,
            }),
        ))
    }

    fn twisted(&mut self) -> SectionOutcome {
        let t = self.cfg.twisted.clone();
        let constants = self.constants()?;
        let (seed, k, metric, tail) = (self.cfg.seed, self.cfg.operator.k, self.metric, self.tail());
        let twist = Potential::new(self.observable.clone(), &metric, k)?;
        let (built, _) = self.operator()?;
        let grid = built.operator.grid();
        let probes: Vec<Vec<f64>> = random_trig_observables(t.probes, k, seed ^ 0x7715)
            .iter()
            .map(|o| grid.sample(|x| o.eval(x, tail)))
            .collect();
        let tw = twisted_matrix(&built.operator, &twist, tail, 0.0)?;
        let r = check_twisted_bound(&tw, &probes, &t.t, t.n_max, &metric, &constants, seed)?;
        Ok((Some(r.passes), to_value(&r)))
    }

    fn ensemble(&mut self) -> SectionOutcome {
        let s = self.cfg.ensemble.clone();
        let ec = EnsembleConfig {
            k_sim: s.k_sim,
            n_steps: s.n_steps,
            n_replicas: s.n_replicas,
            burn_in: s.burn_in,
            seed: self.cfg.seed,
            map: self.map,
            coupling: self.coupling.clone(),
            observable: self.observable.clone(),
            sampling: s.sampling(),
        };
        let mut run = simulate_ensemble(&ec)?;
        let len = s.n_steps - s.burn_in;
        let fit = pooled_autocorrelation_fit(&run.series, s.fit_lags.min(len / 10).max(1))?;
        let reference = self.spectrum.as_ref().map(|r| r.lambda2_modulus);
        let mean = grand_mean(&run.series);
        if let Some(first) = run.series.first() {
            self.columns.push(ColumnFile {
                name: "timeseries.csv".into(),
                header: vec!["step", "value"],
                rows: first.iter().take(10_000).enumerate().map(|(i, v)| vec![(i + s.burn_in) as f64, *v]).collect(),
            });
        }
        let mut value = json!({
            "mean": mean,
            "clamped": run.clamped,
            "node_steps": run.node_steps,
            "autocorrelation": to_value(&fit),
            "reference_rate": reference,
            "rate_tolerance": s.rate_tolerance,
        });
        let Some(sigma2) = self.sigma2 else {
            value["clt"] = Value::String("skipped: needs the variance experiment".into());
            let passes = reference.zip(fit.rate()).map(|(r, f)| (f - r).abs() <= s.rate_tolerance);
            return Ok((passes, value));
        };
        let sums = partial_sums(&run.series, len, mean);
        let clt = clt_test(&sums, len, sigma2)?;
        for r in run.series.iter_mut() {
            r.iter_mut().for_each(|x| *x -= mean);
        }
        let (envelope, calibration) = calibrate_asip(s.n_replicas.max(2), len, self.cfg.seed)?;
        let asip = asip_diagnostic(&run.series, sigma2, Some(envelope))?;
        let diag = DiagnosticReport::assemble(&fit, reference, s.rate_tolerance, &clt, &asip);
        let passes = diag.clt_passes && diag.variance_passes && diag.decay_passes.unwrap_or(true) && diag.asip_passes.unwrap_or(true);
        value["clt"] = to_value(&clt);
        value["asip"] = to_value(&asip);
        value["asip_calibration"] = to_value(&calibration);
        value["diagnostics"] = to_value(&diag);
        Ok((Some(passes), value))
    }
}

/// Runs the requested experiments in dependency order. A failing section
/// is recorded and the run continues.
pub fn run_experiment(cfg: &ExperimentConfig) -> RunReport {
    let mut lab = Lab {
        cfg,
        map: cfg.build_map(),
        coupling: cfg.build_coupling(),
        metric: cfg.build_metric(),
        potential: Potential::zero(),
        observable: Observable::zero(),
        built: None,
        spectrum: None,
        sigma2: None,
        constants: None,
        columns: Vec::new(),
    };
    let mut sections = Vec::new();
    let mut timings = Vec::new();
    match (
        cfg.potential.potential(&lab.map, &lab.metric, cfg.operator.k),
        cfg.observable.build(&lab.map),
    ) {
        (Ok(p), o) => {
            lab.potential = p;
            lab.observable = o;
        }
        (Err(e), _) => {
            for x in &cfg.experiments {
                sections.push(SectionResult { experiment: x.name(), status: Status::Failed, passes: None, error: Some(e.to_string()), data: Value::Null });
            }
            return finish(cfg, sections, Vec::new(), timings);
        }
    }
    // `Experiment` is ordered by dependency, and the list is sorted.
    for &x in &cfg.experiments {
        let start = Instant::now();
        let outcome = match x {
            Experiment::Eigen => lab.eigen(),
            Experiment::Coupling => lab.coupling_check(),
            Experiment::Cauchy => lab.cauchy(),
            Experiment::LasotaYorke => lab.lasota_yorke(),
            Experiment::Conformality => lab.conformality(),
            Experiment::Spectral => lab.spectral(),
            Experiment::Correlation => lab.correlation(),
            Experiment::Variance => lab.variance(),
            Experiment::Twisted => lab.twisted(),
            Experiment::Ensemble => lab.ensemble(),
        };
        timings.push((x.name(), start.elapsed().as_secs_f64()));
        sections.push(match outcome {
            Ok((passes, data)) => SectionResult { experiment: x.name(), status: Status::Ok, passes, error: None, data },
            Err(e) => SectionResult { experiment: x.name(), status: Status::Failed, passes: None, error: Some(e.to_string()), data: Value::Null },
        });
    }
    let columns = std::mem::take(&mut lab.columns);
    finish(cfg, sections, columns, timings)
}

fn finish(cfg: &ExperimentConfig, sections: Vec<SectionResult>, columns: Vec<ColumnFile>, timings: Vec<(&'static str, f64)>) -> RunReport {
    RunReport {
        format: REPORT_FORMAT,
        code_version: CODE_VERSION,
        fingerprint: fingerprint(cfg),
        seed: cfg.seed,
        config: serde_json::from_str(&cfg.canonical_json()).expect("round trip"),
        sections,
        columns,
        timings,
    }
}
