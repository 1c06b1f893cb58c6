use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use super::map::NodeMap;
use super::metric::MetricParams;
use super::state::{node_value, FiniteState};
use crate::error::{invalid, Result};

/// One term `amplitude * sin(2 pi frequency x_node + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrigTerm {
    pub node: i64,
    pub amplitude: f64,
    pub frequency: u32,
    pub phase: f64,
}

type CustomFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// A real function on lattice states, evaluated on a centred value slice
/// plus tail.
#[derive(Clone)]
pub enum Observable {
    Constant(f64),
    /// `x_node`.
    Coordinate { node: i64 },
    Trig(Vec<TrigTerm>),
    /// `amplitude * sum_{j in Z} base^{-|j|} sin(2 pi x_j)`, tail included analytically.
    DecayingSine { amplitude: f64, base: f64 },
    /// `-sum_j log(tau'(x_j) / tau'(p_tau))` over the evaluated window.
    Geometric { map: NodeMap },
    /// `inner - offset`.
    Shifted { inner: Box<Observable>, offset: f64 },
    Custom { name: String, eval: CustomFn },
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::Custom { name, .. } => write!(f, "Custom({name})"),
            other => f.write_str(&other.label()),
        }
    }
}

impl Observable {
    pub fn zero() -> Self {
        Observable::Constant(0.0)
    }

    pub fn custom(name: impl Into<String>, eval: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        Observable::Custom { name: name.into(), eval: Arc::new(eval) }
    }

    pub fn sine(node: i64, amplitude: f64) -> Self {
        Observable::Trig(vec![TrigTerm { node, amplitude, frequency: 1, phase: 0.0 }])
    }

    pub fn centred(self, offset: f64) -> Self {
        Observable::Shifted { inner: Box::new(self), offset }
    }

    #[inline]
    pub fn eval(&self, values: &[f64], tail: f64) -> f64 {
        match self {
            Observable::Constant(c) => *c,
            Observable::Coordinate { node } => node_value(values, tail, *node),
            Observable::Trig(terms) => terms
                .iter()
                .map(|t| t.amplitude * (TAU * t.frequency as f64 * node_value(values, tail, t.node) + t.phase).sin())
                .sum(),
            Observable::DecayingSine { amplitude, base } => {
                let k = (values.len() / 2) as i64;
                let mut acc = 0.0;
                for (p, v) in values.iter().enumerate() {
                    acc += base.powi(-((p as i64 - k).abs() as i32)) * (TAU * v).sin();
                }
                let s = (TAU * tail).sin();
                if s != 0.0 {
                    acc += s * 2.0 * base.powi(-(k as i32 + 1)) / (1.0 - 1.0 / base);
                }
                amplitude * acc
            }
            Observable::Geometric { map } => {
                let reference = map.derivative(map.p_tau()).ln();
                if map.is_b_adic() {
                    return 0.0;
                }
                -values.iter().map(|v| map.derivative(*v).ln() - reference).sum::<f64>()
            }
            Observable::Shifted { inner, offset } => inner.eval(values, tail) - offset,
            Observable::Custom { eval, .. } => eval(values, tail),
        }
    }

    pub fn eval_state(&self, x: &FiniteState) -> f64 {
        self.eval(x.values(), x.tail())
    }

    /// True when the value does not depend on the state.
    pub fn is_constant(&self) -> bool {
        match self {
            Observable::Constant(_) => true,
            Observable::Trig(terms) => terms.iter().all(|t| t.amplitude == 0.0),
            Observable::DecayingSine { amplitude, .. } => *amplitude == 0.0,
            Observable::Geometric { map } => map.is_b_adic(),
            Observable::Shifted { inner, .. } => inner.is_constant(),
            _ => false,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Observable::Constant(c) => format!("constant({c:e})"),
            Observable::Coordinate { node } => format!("coordinate({node})"),
            Observable::Trig(terms) => {
                let t: Vec<String> = terms
                    .iter()
                    .map(|t| format!("{:e}*sin(2pi*{}*x[{}]+{:e})", t.amplitude, t.frequency, t.node, t.phase))
                    .collect();
                format!("trig({})", t.join("+"))
            }
            Observable::DecayingSine { amplitude, base } => format!("decaying_sine(amp={amplitude:e},base={base:e})"),
            Observable::Geometric { map } => format!("geometric({})", map.label()),
            Observable::Shifted { inner, offset } => format!("{}-{offset:e}", inner.label()),
            Observable::Custom { name, .. } => format!("custom({name})"),
        }
    }

    /// Analytic upper bounds on `|.|_inf`, `|.|_beta` and `V_alpha` for
    /// evaluation on windows of half-width up to `k`.
    ///
    /// Returns `None` for custom observables, whose norms must be declared.
    pub fn analytic_norms(&self, m: &MetricParams, k: usize) -> Option<DeclaredNorms> {
        let beta = m.beta();
        let hold = |osc: f64, lip: f64, node: i64| -> f64 {
            if lip == 0.0 {
                return 0.0;
            }
            osc.powf(1.0 - beta) * lip.powf(beta) * m.theta().powf(-beta * node.unsigned_abs() as f64)
        };
        let varpow = |osc: f64, node: i64| -> f64 {
            let n = node.unsigned_abs();
            if n == 0 || osc == 0.0 {
                0.0
            } else {
                osc / m.alpha().powi(n as i32 - 1)
            }
        };
        let n = match self {
            Observable::Constant(c) => DeclaredNorms { sup: c.abs(), beta: 0.0, valpha: 0.0 },
            Observable::Coordinate { node } => DeclaredNorms {
                sup: 1.0,
                beta: if m.is_circle() { f64::INFINITY } else { hold(1.0, 1.0, *node) },
                valpha: varpow(1.0, *node),
            },
            Observable::Trig(terms) => {
                let mut out = DeclaredNorms::default();
                for t in terms {
                    let a = t.amplitude.abs();
                    out.sup += a;
                    out.beta += hold(2.0 * a, TAU * t.frequency as f64 * a, t.node);
                    out.valpha += varpow(2.0 * a, t.node);
                }
                out
            }
            Observable::DecayingSine { amplitude, base } => {
                let a = amplitude.abs();
                let r = 1.0 / (base * m.theta().powf(beta));
                let series = if r < 1.0 { 1.0 + 2.0 * r / (1.0 - r) } else { f64::INFINITY };
                let valpha = if base * m.alpha() >= 1.0 { 4.0 * a / (base - 1.0) } else { f64::INFINITY };
                DeclaredNorms {
                    sup: a * (1.0 + 2.0 / (base - 1.0)),
                    beta: (2.0 * a).powf(1.0 - beta) * (TAU * a).powf(beta) * series,
                    valpha: valpha.max(0.0),
                }
            }
            Observable::Geometric { map } => {
                let osc = map.log_derivative_oscillation();
                let lip = map.distortion_bound();
                let kk = k as i64;
                let beta_norm = (-kk..=kk).map(|j| hold(osc, lip, j)).sum();
                let mut valpha: f64 = 0.0;
                for cut in 0..k {
                    let var = 2.0 * (k - cut) as f64 * osc;
                    valpha = valpha.max(var / m.alpha().powi(cut as i32));
                }
                DeclaredNorms { sup: (2 * k + 1) as f64 * osc, beta: beta_norm, valpha }
            }
            Observable::Shifted { inner, offset } => {
                let n = inner.analytic_norms(m, k)?;
                DeclaredNorms { sup: n.sup + offset.abs(), ..n }
            }
            Observable::Custom { .. } => return None,
        };
        Some(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct DeclaredNorms {
    pub sup: f64,
    pub beta: f64,
    pub valpha: f64,
}

/// An observable used as a potential, together with declared a priori norms.
#[derive(Debug, Clone)]
pub struct Potential {
    form: Observable,
    norms: DeclaredNorms,
}

impl Potential {
    /// Potential with analytic norms for windows up to half-width `k`.
    pub fn new(form: Observable, m: &MetricParams, k: usize) -> Result<Self> {
        let norms = form
            .analytic_norms(m, k)
            .ok_or_else(|| invalid("potential", "custom forms need declared norms"))?;
        Ok(Self { form, norms })
    }

    pub fn with_declared(form: Observable, norms: DeclaredNorms) -> Self {
        Self { form, norms }
    }

    pub fn zero() -> Self {
        Self { form: Observable::zero(), norms: DeclaredNorms::default() }
    }

    pub fn constant(c: f64) -> Self {
        Self { form: Observable::Constant(c), norms: DeclaredNorms { sup: c.abs(), beta: 0.0, valpha: 0.0 } }
    }

    pub fn form(&self) -> &Observable {
        &self.form
    }

    pub fn norms(&self) -> DeclaredNorms {
        self.norms
    }

    pub fn sup_norm(&self) -> f64 {
        self.norms.sup
    }

    pub fn beta_norm(&self) -> f64 {
        self.norms.beta
    }

    pub fn valpha(&self) -> f64 {
        self.norms.valpha
    }

    #[inline]
    pub fn eval(&self, values: &[f64], tail: f64) -> f64 {
        self.form.eval(values, tail)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.form, Observable::Constant(c) if c == 0.0) || (self.form.is_constant() && self.form.eval(&[0.5], 0.0) == 0.0)
    }

    pub fn label(&self) -> String {
        self.form.label()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluations() {
        let x = [0.25, 0.5, 0.75];
        assert_eq!(Observable::Coordinate { node: -1 }.eval(&x, 0.0), 0.25);
        assert_eq!(Observable::Coordinate { node: 3 }.eval(&x, 0.0), 0.0);
        let s = Observable::sine(1, 0.1).eval(&x, 0.0);
        assert!((s + 0.1).abs() < 1e-15);
        let d = Observable::DecayingSine { amplitude: 0.1, base: 4.0 }.eval(&x, 0.0);
        assert!((d - 0.1 * (0.25 - 0.25)).abs() < 1e-15);
        let g = Observable::Geometric { map: NodeMap::doubling() };
        assert_eq!(g.eval(&x, 0.0), 0.0);
        assert!(g.is_constant());
    }

    #[test]
    fn decaying_sine_tail_matches_wide_window() {
        let f = Observable::DecayingSine { amplitude: 0.1, base: 4.0 };
        let narrow = f.eval(&[0.3], 0.2);
        let mut wide = vec![0.2; 61];
        wide[30] = 0.3;
        assert!((narrow - f.eval(&wide, 0.2)).abs() < 1e-14);
    }

    #[test]
    fn declared_norms() {
        let m = MetricParams::default();
        let n = Observable::Coordinate { node: 1 }.analytic_norms(&m, 1).unwrap();
        assert_eq!(n.beta, 2.0);
        let n = Observable::sine(0, 0.1).analytic_norms(&m, 0).unwrap();
        assert!((n.beta - 0.1 * TAU).abs() < 1e-15);
        let n = Observable::DecayingSine { amplitude: 0.1, base: 4.0 }.analytic_norms(&m, 3).unwrap();
        assert!((n.beta - 0.1 * TAU * 3.0).abs() < 1e-12);
        assert!(Potential::new(Observable::custom("c", |_, _| 0.0), &m, 0).is_err());
    }
}
