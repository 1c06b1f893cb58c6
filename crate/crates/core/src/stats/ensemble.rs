use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, CmlError, Result};
use crate::lattice::{couple_into, Coupling, NodeMap, Observable};
use crate::rng::{stream_rng, Purpose};

/// How trajectories are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// Iterate `T` forward from a uniform initial state.
    Forward,
    /// Draw a backward chain of uniformly chosen inverse branches and
    /// read it in reverse. Needs `E = id`; samples the `f = 0`
    /// equilibrium state, which for linear b-adic maps is Lebesgue.
    PullBack,
}

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub k_sim: usize,
    pub n_steps: usize,
    pub n_replicas: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub map: NodeMap,
    pub coupling: Coupling,
    pub observable: Observable,
    pub sampling: Sampling,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_replicas == 0 {
            return Err(invalid("n_replicas", "must be at least 1"));
        }
        if self.burn_in >= self.n_steps {
            return Err(invalid("burn_in", "must be smaller than n_steps"));
        }
        match self.sampling {
            Sampling::Forward if self.map.is_b_adic() => Err(CmlError::Unsupported(format!(
                "{} collapses under binary floating point; use pull-back sampling",
                self.map.label()
            ))),
            Sampling::PullBack if !self.coupling.is_identity() => {
                Err(CmlError::Unsupported("pull-back sampling needs the identity coupling".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSeries {
    /// `phi(x_n)` for `burn_in <= n < n_steps`, one row per replica.
    pub series: Vec<Vec<f64>>,
    /// Node values that left `[0, 1)` by roundoff and were clamped.
    pub clamped: u64,
    pub node_steps: u64,
}

/// Fraction of clamped node updates above which a run is rejected.
pub const MAX_CLAMP_FRACTION: f64 = 1e-4;

fn clamp_unit(v: &mut f64) -> bool {
    if *v < 0.0 {
        *v = 0.0;
        true
    } else if *v >= 1.0 {
        *v = 1.0 - f64::EPSILON / 2.0;
        true
    } else {
        false
    }
}

fn forward_replica(cfg: &EnsembleConfig, index: u32) -> (Vec<f64>, u64) {
    let width = 2 * cfg.k_sim + 1;
    let tail = cfg.map.p_tau();
    let mut rng = stream_rng(cfg.seed, Purpose::Ensemble, index);
    let mut x: Vec<f64> = (0..width).map(|_| rng.random::<f64>()).collect();
    let mut tmp = vec![0.0; width];
    let mut out = Vec::with_capacity(cfg.n_steps - cfg.burn_in);
    let mut clamped = 0;
    for step in 0..cfg.n_steps {
        if step >= cfg.burn_in {
            out.push(cfg.observable.eval(&x, tail));
        }
        for (t, v) in tmp.iter_mut().zip(&x) {
            *t = cfg.map.forward(*v);
        }
        couple_into(&cfg.coupling, &tmp, tail, &mut x);
        clamped += x.iter_mut().map(|v| clamp_unit(v) as u64).sum::<u64>();
    }
    (out, clamped)
}

fn pullback_replica(cfg: &EnsembleConfig, index: u32) -> (Vec<f64>, u64) {
    let width = 2 * cfg.k_sim + 1;
    let tail = cfg.map.p_tau();
    let b = cfg.map.b();
    let mut rng = stream_rng(cfg.seed, Purpose::Ensemble, index);
    let mut x: Vec<f64> = (0..width).map(|_| rng.random::<f64>()).collect();
    let mut back = Vec::with_capacity(cfg.n_steps);
    for _ in 0..cfg.n_steps {
        back.push(cfg.observable.eval(&x, tail));
        for v in x.iter_mut() {
            *v = cfg.map.inverse(rng.random_range(0..b), *v);
        }
    }
    back.reverse();
    (back.split_off(cfg.burn_in), 0)
}

/// Simulates `n_replicas` independent trajectories in parallel; results
/// are collected in replica order, so output does not depend on the
/// thread count.
pub fn simulate_ensemble(cfg: &EnsembleConfig) -> Result<EnsembleSeries> {
    cfg.validate()?;
    if cfg.n_replicas > u32::MAX as usize {
        return Err(invalid("n_replicas", "too many replicas"));
    }
    let runs: Vec<(Vec<f64>, u64)> = (0..cfg.n_replicas as u32)
        .into_par_iter()
        .map(|i| match cfg.sampling {
            Sampling::Forward => forward_replica(cfg, i),
            Sampling::PullBack => pullback_replica(cfg, i),
        })
        .collect();
    let clamped: u64 = runs.iter().map(|r| r.1).sum();
    let node_steps = (cfg.n_replicas * cfg.n_steps * (2 * cfg.k_sim + 1)) as u64;
    if clamped as f64 > MAX_CLAMP_FRACTION * node_steps as f64 {
        return Err(CmlError::Degenerate(format!(
            "{clamped} of {node_steps} node updates left [0, 1)"
        )));
    }
    Ok(EnsembleSeries { series: runs.into_iter().map(|r| r.0).collect(), clamped, node_steps })
}

/// Mean over all replicas and steps.
pub fn grand_mean(series: &[Vec<f64>]) -> f64 {
    let (s, n) = series.iter().fold((0.0, 0usize), |(s, n), r| (s + r.iter().sum::<f64>(), n + r.len()));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Per-replica sums `S_n = sum_j (x_j - centre)` over the first `n` entries.
pub fn partial_sums(series: &[Vec<f64>], n: usize, centre: f64) -> Vec<f64> {
    series.iter().map(|r| r.iter().take(n).map(|v| v - centre).sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> EnsembleConfig {
        EnsembleConfig {
            k_sim: 2,
            n_steps: 200,
            n_replicas: 8,
            burn_in: 10,
            seed: 7,
            map: NodeMap::perturbed_doubling(0.05).unwrap(),
            coupling: Coupling::diffusive(0.1).unwrap(),
            observable: Observable::Coordinate { node: 0 },
            sampling: Sampling::Forward,
        }
    }

    #[test]
    fn deterministic_and_shaped() {
        let a = simulate_ensemble(&base()).unwrap();
        let b = simulate_ensemble(&base()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.series.len(), 8);
        assert!(a.series.iter().all(|r| r.len() == 190));
    }

    #[test]
    fn refusals() {
        let mut c = base();
        c.map = NodeMap::doubling();
        assert!(simulate_ensemble(&c).is_err());
        c.sampling = Sampling::PullBack;
        assert!(simulate_ensemble(&c).is_err());
        c.coupling = Coupling::identity();
        assert!(simulate_ensemble(&c).is_ok());
        c.burn_in = c.n_steps;
        assert!(simulate_ensemble(&c).is_err());
    }

    #[test]
    fn pullback_is_a_forward_orbit() {
        let mut c = base();
        c.map = NodeMap::doubling();
        c.coupling = Coupling::identity();
        c.sampling = Sampling::PullBack;
        c.k_sim = 0;
        let s = simulate_ensemble(&c).unwrap();
        for r in &s.series {
            for w in r.windows(2) {
                let d = (c.map.forward(w[0]) - w[1]).abs();
                assert!(d.min(1.0 - d) < 1e-9);
            }
        }
    }
}
