//! Experiment configuration: TOML text checked against a strict schema.
//!
//! Every violation found in one pass is reported (unknown keys, wrong
//! types, out-of-range values), each with its dotted key path.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use toml::{Table, Value};

use cml_lab_core::lattice::{weighted_inverse_norm, Coupling, MetricParams, NodeMap, Observable, Potential, TrigTerm};
use cml_lab_core::stats::Sampling;
use cml_lab_core::transfer::{OperatorKind, UlamConfig, UlamGrid, DEFAULT_CELL_CAP, DEFAULT_MAX_ITER, DEFAULT_TOL};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{} configuration error(s):\n{}", .0.len(), .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<ConfigIssue>),
}

impl ConfigError {
    pub fn issues(&self) -> &[ConfigIssue] {
        match self {
            ConfigError::Invalid(v) => v,
            ConfigError::Io { .. } => &[],
        }
    }
}

/// Checks that can be requested in the `experiments` list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Eigen,
    Coupling,
    Cauchy,
    LasotaYorke,
    Conformality,
    Spectral,
    Correlation,
    Variance,
    Twisted,
    Ensemble,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::Eigen,
        Experiment::Coupling,
        Experiment::Cauchy,
        Experiment::LasotaYorke,
        Experiment::Conformality,
        Experiment::Spectral,
        Experiment::Correlation,
        Experiment::Variance,
        Experiment::Twisted,
        Experiment::Ensemble,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Eigen => "eigen",
            Experiment::Coupling => "coupling",
            Experiment::Cauchy => "cauchy",
            Experiment::LasotaYorke => "lasota-yorke",
            Experiment::Conformality => "conformality",
            Experiment::Spectral => "spectral",
            Experiment::Correlation => "correlation",
            Experiment::Variance => "variance",
            Experiment::Twisted => "twisted",
            Experiment::Ensemble => "ensemble",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MapSpec {
    Doubling,
    BAdic { b: usize },
    PerturbedDoubling { a: f64 },
    Perturbed { b: usize, a: f64 },
}

impl MapSpec {
    pub fn build(&self) -> cml_lab_core::Result<NodeMap> {
        match *self {
            MapSpec::Doubling => Ok(NodeMap::doubling()),
            MapSpec::BAdic { b } => NodeMap::b_adic(b),
            MapSpec::PerturbedDoubling { a } => NodeMap::perturbed_doubling(a),
            MapSpec::Perturbed { b, a } => NodeMap::perturbed(b, a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CouplingSpec {
    Identity,
    Diffusive { epsilon: f64 },
    Banded { stencil: Vec<f64> },
}

impl CouplingSpec {
    pub fn build(&self) -> cml_lab_core::Result<Coupling> {
        match self {
            CouplingSpec::Identity => Ok(Coupling::identity()),
            CouplingSpec::Diffusive { epsilon } => Coupling::diffusive(*epsilon),
            CouplingSpec::Banded { stencil } => Coupling::banded(stencil.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSpec {
    pub theta: f64,
    pub beta: f64,
    pub alpha: f64,
    pub circle: bool,
}

impl MetricSpec {
    pub fn build(&self) -> cml_lab_core::Result<MetricParams> {
        Ok(MetricParams::new(self.theta, self.beta, self.alpha)?.with_circle_distance(self.circle))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrigSpec {
    pub node: i64,
    pub amplitude: f64,
    pub frequency: u32,
    pub phase: f64,
}

/// Named real functions on lattice states, used for potentials and
/// observables.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FunctionSpec {
    Zero,
    Constant { value: f64 },
    Coordinate { node: i64, offset: f64 },
    Sine { node: i64, amplitude: f64 },
    DecayingSine { amplitude: f64, base: f64 },
    Trig { terms: Vec<TrigSpec>, offset: f64 },
    /// `-sum log(tau' / tau'(p_tau))`; zero for linear maps.
    Geometric,
}

impl FunctionSpec {
    pub fn build(&self, map: &NodeMap) -> Observable {
        match self {
            FunctionSpec::Zero => Observable::zero(),
            FunctionSpec::Constant { value } => Observable::Constant(*value),
            FunctionSpec::Coordinate { node, offset } => {
                let o = Observable::Coordinate { node: *node };
                if *offset == 0.0 {
                    o
                } else {
                    o.centred(*offset)
                }
            }
            FunctionSpec::Sine { node, amplitude } => Observable::sine(*node, *amplitude),
            FunctionSpec::DecayingSine { amplitude, base } => {
                Observable::DecayingSine { amplitude: *amplitude, base: *base }
            }
            FunctionSpec::Trig { terms, offset } => {
                let o = Observable::Trig(
                    terms
                        .iter()
                        .map(|t| TrigTerm { node: t.node, amplitude: t.amplitude, frequency: t.frequency, phase: t.phase })
                        .collect(),
                );
                if *offset == 0.0 {
                    o
                } else {
                    o.centred(*offset)
                }
            }
            FunctionSpec::Geometric => {
                if map.is_b_adic() {
                    Observable::zero()
                } else {
                    Observable::Geometric { map: *map }
                }
            }
        }
    }

    pub fn potential(&self, map: &NodeMap, metric: &MetricParams, k: usize) -> cml_lab_core::Result<Potential> {
        Potential::new(self.build(map), metric, k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorSpec {
    pub kind: String,
    pub k: usize,
    pub bins: usize,
    pub quadrature: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub cell_cap: usize,
}

impl OperatorSpec {
    pub fn kind(&self) -> OperatorKind {
        OperatorKind::parse(&self.kind).unwrap_or(OperatorKind::Coupled)
    }

    pub fn ulam(&self, bins: usize) -> UlamConfig {
        let mut c = UlamConfig::new(self.k, bins).with_quadrature(self.quadrature);
        c.cell_cap = self.cell_cap;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CauchySpec {
    /// Potential for the truncation sequence; it must have summable
    /// dependence on distant nodes for the check to be meaningful.
    pub potential: FunctionSpec,
    pub k_max: usize,
    pub samples: usize,
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingCheckSpec {
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LasotaYorkeSpec {
    pub observables: usize,
    pub n_max: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConformalitySpec {
    pub sets: usize,
    pub samples: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralSpec {
    pub eigenvalues: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationSpec {
    pub n_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceSpec {
    /// Grid resolution of the operator used for the variance; may be finer
    /// than the main operator.
    pub bins: usize,
    pub tail_tol: f64,
    pub n_max: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwistedSpec {
    pub t: Vec<f64>,
    pub n_max: usize,
    pub probes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSpec {
    pub k_sim: usize,
    pub n_steps: usize,
    pub n_replicas: usize,
    pub burn_in: usize,
    pub sampling: String,
    pub fit_lags: usize,
    pub rate_tolerance: f64,
}

impl EnsembleSpec {
    pub fn sampling(&self) -> Sampling {
        if self.sampling == "pull-back" {
            Sampling::PullBack
        } else {
            Sampling::Forward
        }
    }
}

/// Fully validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Not part of the echoed configuration: it does not affect results.
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub experiments: Vec<Experiment>,
    pub map: MapSpec,
    pub coupling: CouplingSpec,
    pub metric: MetricSpec,
    pub potential: FunctionSpec,
    pub observable: FunctionSpec,
    pub operator: OperatorSpec,
    pub coupling_check: CouplingCheckSpec,
    pub cauchy: CauchySpec,
    pub lasota_yorke: LasotaYorkeSpec,
    pub conformality: ConformalitySpec,
    pub spectral: SpectralSpec,
    pub correlation: CorrelationSpec,
    pub variance: VarianceSpec,
    pub twisted: TwistedSpec,
    pub ensemble: EnsembleSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        parse_config_str("").expect("defaults are valid")
    }
}

impl ExperimentConfig {
    /// Canonical JSON of everything that influences results.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn build_map(&self) -> NodeMap {
        self.map.build().expect("validated")
    }

    pub fn build_coupling(&self) -> Coupling {
        self.coupling.build().expect("validated")
    }

    pub fn build_metric(&self) -> MetricParams {
        self.metric.build().expect("validated")
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config_str(&text)
}

struct Issues(Vec<ConfigIssue>);

impl Issues {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(ConfigIssue { path: path.into(), message: message.into() });
    }
}

/// Typed reads from one table; remembers which keys were consumed so
/// that leftovers can be reported as unknown.
struct Section<'a> {
    path: String,
    table: Option<&'a Table>,
    used: BTreeSet<&'static str>,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "string",
        Value::Integer(_) => "integer",
        Value::Float(_) => "float",
        Value::Boolean(_) => "boolean",
        Value::Datetime(_) => "datetime",
        Value::Array(_) => "array",
        Value::Table(_) => "table",
    }
}

impl<'a> Section<'a> {
    fn root(table: &'a Table) -> Self {
        Section { path: String::new(), table: Some(table), used: BTreeSet::new() }
    }

    fn child(&mut self, key: &'static str, issues: &mut Issues) -> Section<'a> {
        self.used.insert(key);
        let path = join(&self.path, key);
        let table = match self.table.and_then(|t| t.get(key)) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(v) => {
                issues.push(path.clone(), format!("expected a table, found {}", type_name(v)));
                None
            }
        };
        Section { path, table, used: BTreeSet::new() }
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a Value> {
        self.used.insert(key);
        self.table.and_then(|t| t.get(key))
    }

    fn float(&mut self, key: &'static str, default: f64, issues: &mut Issues) -> f64 {
        match self.raw(key) {
            None => default,
            Some(Value::Float(x)) if x.is_finite() => *x,
            Some(Value::Integer(i)) => *i as f64,
            Some(Value::Float(_)) => {
                issues.push(join(&self.path, key), "must be finite");
                default
            }
            Some(v) => {
                issues.push(join(&self.path, key), format!("expected a number, found {}", type_name(v)));
                default
            }
        }
    }

    fn int(&mut self, key: &'static str, default: i64, issues: &mut Issues) -> i64 {
        match self.raw(key) {
            None => default,
            Some(Value::Integer(i)) => *i,
            Some(v) => {
                issues.push(join(&self.path, key), format!("expected an integer, found {}", type_name(v)));
                default
            }
        }
    }

    fn count(&mut self, key: &'static str, default: usize, min: usize, issues: &mut Issues) -> usize {
        let v = self.int(key, default as i64, issues);
        if v < min as i64 {
            issues.push(join(&self.path, key), format!("must be at least {min}"));
            return default.max(min);
        }
        usize::try_from(v).unwrap_or(default)
    }

    fn string(&mut self, key: &'static str, default: &str, issues: &mut Issues) -> String {
        match self.raw(key) {
            None => default.to_string(),
            Some(Value::String(s)) => s.clone(),
            Some(v) => {
                issues.push(join(&self.path, key), format!("expected a string, found {}", type_name(v)));
                default.to_string()
            }
        }
    }

    fn boolean(&mut self, key: &'static str, default: bool, issues: &mut Issues) -> bool {
        match self.raw(key) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(v) => {
                issues.push(join(&self.path, key), format!("expected a boolean, found {}", type_name(v)));
                default
            }
        }
    }

    fn float_list(&mut self, key: &'static str, default: &[f64], issues: &mut Issues) -> Vec<f64> {
        match self.raw(key) {
            None => default.to_vec(),
            Some(Value::Array(items)) => {
                let mut out = Vec::with_capacity(items.len());
                for (i, v) in items.iter().enumerate() {
                    match v {
                        Value::Float(x) if x.is_finite() => out.push(*x),
                        Value::Integer(n) => out.push(*n as f64),
                        other => issues.push(
                            format!("{}[{i}]", join(&self.path, key)),
                            format!("expected a finite number, found {}", type_name(other)),
                        ),
                    }
                }
                out
            }
            Some(v) => {
                issues.push(join(&self.path, key), format!("expected an array, found {}", type_name(v)));
                default.to_vec()
            }
        }
    }

    fn choice(&mut self, key: &'static str, default: &'static str, allowed: &[&'static str], issues: &mut Issues) -> String {
        let s = self.string(key, default, issues);
        if !allowed.contains(&s.as_str()) {
            issues.push(join(&self.path, key), format!("unknown value `{s}` (expected one of: {})", allowed.join(", ")));
            return default.to_string();
        }
        s
    }

    /// Reports keys that no reader consumed.
    fn finish(self, issues: &mut Issues) {
        if let Some(t) = self.table {
            for key in t.keys() {
                if !self.used.contains(key.as_str()) {
                    issues.push(join(&self.path, key), "unknown key");
                }
            }
        }
    }
}

fn positive(issues: &mut Issues, path: &str, v: f64) {
    if !(v > 0.0) {
        issues.push(path, "must be positive");
    }
}

fn read_function(sec: &mut Section<'_>, default: FunctionSpec, issues: &mut Issues) -> FunctionSpec {
    const KINDS: [&str; 7] = ["zero", "constant", "coordinate", "sine", "decaying-sine", "trig", "geometric"];
    if sec.table.is_none() {
        return default;
    }
    let default_kind = match &default {
        FunctionSpec::Zero => "zero",
        FunctionSpec::Constant { .. } => "constant",
        FunctionSpec::Coordinate { .. } => "coordinate",
        FunctionSpec::Sine { .. } => "sine",
        FunctionSpec::DecayingSine { .. } => "decaying-sine",
        FunctionSpec::Trig { .. } => "trig",
        FunctionSpec::Geometric => "geometric",
    };
    let kind = sec.choice("kind", default_kind, &KINDS, issues);
    match kind.as_str() {
        "zero" => FunctionSpec::Zero,
        "constant" => FunctionSpec::Constant { value: sec.float("value", 0.0, issues) },
        "coordinate" => FunctionSpec::Coordinate {
            node: sec.int("node", 0, issues),
            offset: sec.float("offset", 0.0, issues),
        },
        "sine" => FunctionSpec::Sine { node: sec.int("node", 0, issues), amplitude: sec.float("amplitude", 0.1, issues) },
        "decaying-sine" => {
            let amplitude = sec.float("amplitude", 0.1, issues);
            let base = sec.float("base", 4.0, issues);
            if !(base > 1.0) {
                issues.push(join(&sec.path, "base"), "must exceed 1");
            }
            FunctionSpec::DecayingSine { amplitude, base }
        }
        "trig" => {
            let path = join(&sec.path, "terms");
            let mut terms = Vec::new();
            match sec.raw("terms") {
                Some(Value::Array(items)) => {
                    for (i, item) in items.iter().enumerate() {
                        let p = format!("{path}[{i}]");
                        match item {
                            Value::Table(t) => {
                                let mut s = Section { path: p.clone(), table: Some(t), used: BTreeSet::new() };
                                let node = s.int("node", 0, issues);
                                let amplitude = s.float("amplitude", 0.0, issues);
                                let frequency = s.count("frequency", 1, 1, issues);
                                let phase = s.float("phase", 0.0, issues);
                                s.finish(issues);
                                terms.push(TrigSpec {
                                    node,
                                    amplitude,
                                    frequency: u32::try_from(frequency).unwrap_or(1),
                                    phase,
                                });
                            }
                            other => issues.push(p, format!("expected a table, found {}", type_name(other))),
                        }
                    }
                }
                None => issues.push(path, "trig needs `terms`"),
                Some(v) => issues.push(path, format!("expected an array of tables, found {}", type_name(v))),
            }
            FunctionSpec::Trig { terms, offset: sec.float("offset", 0.0, issues) }
        }
        _ => FunctionSpec::Geometric,
    }
}

/// Parses and validates configuration text. Missing keys take the
/// reference defaults; unknown keys and constraint violations are errors.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut issues = Issues(Vec::new());
    let table: Table = match text.parse::<Table>() {
        Ok(t) => t,
        Err(e) => {
            let msg = e.message().to_string();
            let path = e
                .span()
                .map(|s| format!("line {}", text[..s.start.min(text.len())].matches('\n').count() + 1))
                .unwrap_or_default();
            return Err(ConfigError::Invalid(vec![ConfigIssue { path, message: msg }]));
        }
    };
    let mut root = Section::root(&table);

    let seed = root.int("seed", 42, &mut issues);
    if seed < 0 {
        issues.push("seed", "must be nonnegative");
    }
    let output_dir = PathBuf::from(root.string("output_dir", "cml-lab-output", &mut issues));
    let experiments = match root.raw("experiments") {
        None => Experiment::ALL.to_vec(),
        Some(Value::Array(items)) => {
            let mut out = BTreeSet::new();
            for (i, v) in items.iter().enumerate() {
                match v {
                    Value::String(s) => match Experiment::parse(s) {
                        Some(e) => {
                            out.insert(e);
                        }
                        None => issues.push(format!("experiments[{i}]"), format!("unknown experiment `{s}`")),
                    },
                    other => issues.push(format!("experiments[{i}]"), format!("expected a string, found {}", type_name(other))),
                }
            }
            out.into_iter().collect()
        }
        Some(v) => {
            issues.push("experiments", format!("expected an array, found {}", type_name(v)));
            Vec::new()
        }
    };

    let mut s = root.child("map", &mut issues);
    let kind = s.choice("kind", "perturbed-doubling", &["doubling", "b-adic", "perturbed-doubling", "perturbed"], &mut issues);
    let map = match kind.as_str() {
        "doubling" => MapSpec::Doubling,
        "b-adic" => MapSpec::BAdic { b: s.count("b", 2, 2, &mut issues) },
        "perturbed" => MapSpec::Perturbed { b: s.count("b", 2, 2, &mut issues), a: s.float("a", 0.05, &mut issues) },
        _ => MapSpec::PerturbedDoubling { a: s.float("a", 0.05, &mut issues) },
    };
    s.finish(&mut issues);
    let built_map = map.build().map_err(|e| issues.push("map", e.to_string())).ok();

    let mut s = root.child("coupling", &mut issues);
    let kind = s.choice("kind", "diffusive", &["identity", "diffusive", "banded"], &mut issues);
    let coupling = match kind.as_str() {
        "identity" => CouplingSpec::Identity,
        "banded" => {
            let stencil = s.float_list("stencil", &[], &mut issues);
            CouplingSpec::Banded { stencil }
        }
        _ => CouplingSpec::Diffusive { epsilon: s.float("epsilon", 0.05, &mut issues) },
    };
    s.finish(&mut issues);
    let built_coupling = coupling.build().map_err(|e| issues.push("coupling", e.to_string())).ok();

    let mut s = root.child("metric", &mut issues);
    let metric = MetricSpec {
        theta: s.float("theta", 0.5, &mut issues),
        beta: s.float("beta", 1.0, &mut issues),
        alpha: s.float("alpha", 0.5, &mut issues),
        circle: s.boolean("circle", false, &mut issues),
    };
    s.finish(&mut issues);
    let built_metric = metric.build().map_err(|e| issues.push("metric", e.to_string())).ok();

    let mut s = root.child("potential", &mut issues);
    let potential = read_function(&mut s, FunctionSpec::Geometric, &mut issues);
    s.finish(&mut issues);

    let mut s = root.child("observable", &mut issues);
    let observable = read_function(&mut s, FunctionSpec::Coordinate { node: 0, offset: 0.0 }, &mut issues);
    s.finish(&mut issues);

    let mut s = root.child("operator", &mut issues);
    let operator = OperatorSpec {
        kind: s.choice("kind", "coupled", &["normalized", "coupled"], &mut issues),
        k: s.count("k", 1, 0, &mut issues),
        bins: s.count("bins", 16, 1, &mut issues),
        quadrature: s.count("quadrature", 4, 1, &mut issues),
        tol: s.float("tol", DEFAULT_TOL, &mut issues),
        max_iter: s.count("max_iter", DEFAULT_MAX_ITER, 1, &mut issues),
        cell_cap: s.count("cell_cap", DEFAULT_CELL_CAP, 1, &mut issues),
    };
    positive(&mut issues, "operator.tol", operator.tol);
    s.finish(&mut issues);

    let mut s = root.child("coupling_check", &mut issues);
    let coupling_check = CouplingCheckSpec { samples: s.count("samples", 20_000, 1, &mut issues) };
    s.finish(&mut issues);

    let mut s = root.child("cauchy", &mut issues);
    let mut ps = s.child("potential", &mut issues);
    let cauchy_potential = read_function(&mut ps, FunctionSpec::DecayingSine { amplitude: 0.1, base: 4.0 }, &mut issues);
    ps.finish(&mut issues);
    let cauchy = CauchySpec {
        potential: cauchy_potential,
        k_max: s.count("k_max", 3, 1, &mut issues),
        samples: s.count("samples", 100, 1, &mut issues),
        max_ratio: s.float("max_ratio", 0.35, &mut issues),
    };
    if cauchy.k_max > 6 {
        issues.push("cauchy.k_max", "at most 6 (branch enumeration grows as b^(2k+1))");
    }
    s.finish(&mut issues);

    let mut s = root.child("lasota_yorke", &mut issues);
    let lasota_yorke = LasotaYorkeSpec {
        observables: s.count("observables", 50, 1, &mut issues),
        n_max: s.count("n_max", 10, 0, &mut issues),
        tolerance: s.float("tolerance", 0.05, &mut issues),
    };
    s.finish(&mut issues);

    let mut s = root.child("conformality", &mut issues);
    let conformality = ConformalitySpec {
        sets: s.count("sets", 20, 1, &mut issues),
        samples: s.count("samples", 200_000, 1, &mut issues),
        tolerance: s.float("tolerance", 0.02, &mut issues),
    };
    s.finish(&mut issues);

    let mut s = root.child("spectral", &mut issues);
    let spectral = SpectralSpec { eigenvalues: s.count("eigenvalues", 8, 2, &mut issues) };
    s.finish(&mut issues);

    let mut s = root.child("correlation", &mut issues);
    let correlation = CorrelationSpec { n_max: s.count("n_max", 30, 1, &mut issues) };
    s.finish(&mut issues);

    let mut s = root.child("variance", &mut issues);
    let variance = VarianceSpec {
        bins: s.count("bins", 32, 1, &mut issues),
        tail_tol: s.float("tail_tol", 1e-12, &mut issues),
        n_max: s.count("n_max", 10_000, 1, &mut issues),
        tolerance: s.float("tolerance", 0.05, &mut issues),
    };
    positive(&mut issues, "variance.tail_tol", variance.tail_tol);
    s.finish(&mut issues);

    let mut s = root.child("twisted", &mut issues);
    let twisted = TwistedSpec {
        t: s.float_list("t", &[-0.1, -0.05, -0.01, 0.01, 0.05, 0.1], &mut issues),
        n_max: s.count("n_max", 200, 1, &mut issues),
        probes: s.count("probes", 3, 0, &mut issues),
    };
    for (i, t) in twisted.t.iter().enumerate() {
        if t.abs() > 0.2 {
            issues.push(format!("twisted.t[{i}]"), "twist parameters must satisfy |t| <= 0.2");
        }
    }
    s.finish(&mut issues);

    let mut s = root.child("ensemble", &mut issues);
    let ensemble = EnsembleSpec {
        k_sim: s.count("k_sim", 1, 0, &mut issues),
        n_steps: s.count("n_steps", 5100, 2, &mut issues),
        n_replicas: s.count("n_replicas", 2000, 1, &mut issues),
        burn_in: s.count("burn_in", 100, 0, &mut issues),
        sampling: s.choice("sampling", "forward", &["forward", "pull-back"], &mut issues),
        fit_lags: s.count("fit_lags", 20, 1, &mut issues),
        rate_tolerance: s.float("rate_tolerance", 0.1, &mut issues),
    };
    if ensemble.burn_in >= ensemble.n_steps {
        issues.push("ensemble.burn_in", "must be smaller than ensemble.n_steps");
    }
    let ensemble_present = s.table.is_some();
    s.finish(&mut issues);
    root.finish(&mut issues);

    if let (Some(m), Some(e)) = (&built_map, &built_coupling) {
        if ensemble.sampling() == Sampling::Forward && m.is_b_adic() && experiments.contains(&Experiment::Ensemble) {
            let path = if ensemble_present { "ensemble.sampling" } else { "experiments" };
            issues.push(path, format!("forward simulation of {} is not trajectory-safe; use sampling = \"pull-back\"", m.label()));
        }
        if ensemble.sampling() == Sampling::PullBack && !e.is_identity() {
            issues.push("ensemble.sampling", "pull-back sampling needs the identity coupling");
        }
        if let Some(metric) = &built_metric {
            // Pre-flight on the contraction C_E eta < 1.
            let analytic = e.diagonal_dominance_bound();
            let weighted = weighted_inverse_norm(e, operator.k, metric).unwrap_or(f64::INFINITY);
            let c_e = analytic.max(weighted);
            if !(c_e * m.eta() < 1.0) {
                issues.push(
                    "coupling",
                    format!("C_E eta = {:.4} is not below 1 (C_E = {c_e:.4}, eta = {:.4})", c_e * m.eta(), m.eta()),
                );
            }
        }
    }
    if issues.0.is_empty() {
        let k = operator.k;
        let grid_checks = [("operator.bins", operator.bins), ("variance.bins", variance.bins)];
        for (path, bins) in grid_checks {
            if let Err(e) = UlamGrid::new(k, bins, operator.cell_cap) {
                issues.push(path, e.to_string());
            }
        }
        if experiments.contains(&Experiment::Conformality) && built_map.as_ref().is_some_and(|m| operator.bins < m.b()) {
            issues.push("operator.bins", "conformality sets need at least b bins per node");
        }
        if let (Some(m), Some(metric)) = (&built_map, &built_metric) {
            for (path, f) in [("potential", &potential), ("observable", &observable), ("cauchy.potential", &cauchy.potential)] {
                if let Err(e) = f.potential(m, metric, k) {
                    issues.push(path, e.to_string());
                }
            }
        }
    }
    if !issues.0.is_empty() {
        return Err(ConfigError::Invalid(issues.0));
    }
    Ok(ExperimentConfig {
        seed: seed as u64,
        output_dir,
        experiments,
        map,
        coupling,
        metric,
        potential,
        observable,
        operator,
        coupling_check,
        cauchy,
        lasota_yorke,
        conformality,
        spectral,
        correlation,
        variance,
        twisted,
        ensemble,
    })
}
