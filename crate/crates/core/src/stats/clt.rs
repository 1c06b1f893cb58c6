use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::fit::linear_fit;
use super::ks::{ks_critical_1pct, ks_normal};
use crate::error::{invalid, CmlError, Result};
use crate::rng::{stream_rng, Purpose};

pub const MIN_CLT_REPLICAS: usize = 500;
/// Allowed relative deviation of `Var(S_n / sqrt n)` from `sigma^2`.
pub const VARIANCE_TOLERANCE: f64 = 0.10;

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(CmlError::Degenerate(format!("variance {sigma2} is not positive: degenerate observable")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltReport {
    pub n: usize,
    pub replicas: usize,
    pub sigma2: f64,
    pub ks_distance: f64,
    pub ks_critical: f64,
    pub ks_passes: bool,
    /// Sample variance of `S_n / sqrt n`.
    pub empirical_variance: f64,
    pub variance_relative_error: f64,
    pub variance_tolerance: f64,
    pub variance_passes: bool,
}

/// Normality of `S_n / sqrt(n sigma^2)` across replicas. `sums` holds
/// one centred `S_n` per replica.
pub fn clt_test(sums: &[f64], n: usize, sigma2: f64) -> Result<CltReport> {
    check_sigma2(sigma2)?;
    if sums.len() < MIN_CLT_REPLICAS {
        return Err(invalid("replicas", format!("need at least {MIN_CLT_REPLICAS}, got {}", sums.len())));
    }
    if n == 0 {
        return Err(invalid("n", "must be positive"));
    }
    let scale = (n as f64 * sigma2).sqrt();
    let z: Vec<f64> = sums.iter().map(|s| s / scale).collect();
    let ks = ks_normal(&z);
    let crit = ks_critical_1pct(sums.len());
    let scaled: Vec<f64> = sums.iter().map(|s| s / (n as f64).sqrt()).collect();
    let var = sample_variance(&scaled);
    let rel = (var - sigma2).abs() / sigma2;
    Ok(CltReport {
        n,
        replicas: sums.len(),
        sigma2,
        ks_distance: ks,
        ks_critical: crit,
        ks_passes: ks < crit,
        empirical_variance: var,
        variance_relative_error: rel,
        variance_tolerance: VARIANCE_TOLERANCE,
        variance_passes: rel <= VARIANCE_TOLERANCE,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsipEnvelope {
    pub slope_tolerance: f64,
    pub lil_bound: f64,
    pub ks_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsipReport {
    /// Always true: these are proxies, not a construction of the coupling.
    pub proxy: bool,
    /// Slope of `Var(S_n) / sigma^2` against dyadic `n`.
    pub variance_slope: f64,
    pub variance_r_squared: f64,
    /// Median over replicas of `max_n |S_n| / sqrt(2 sigma^2 n ln ln n)`.
    pub lil_statistic: f64,
    pub lil_max: f64,
    /// `(n, KS distance)` at dyadic scales.
    pub ks_by_scale: Vec<(usize, f64)>,
    pub envelope: Option<AsipEnvelope>,
    pub slope_passes: Option<bool>,
    pub lil_passes: Option<bool>,
    pub ks_passes: Option<bool>,
}

/// Smallest `n` entering the LIL statistic.
pub const LIL_START: usize = 1000;
const SMALLEST_SCALE: usize = 16;

/// Partial-sum diagnostics on centred increment paths (one per replica).
pub fn asip_diagnostic(paths: &[Vec<f64>], sigma2: f64, envelope: Option<AsipEnvelope>) -> Result<AsipReport> {
    check_sigma2(sigma2)?;
    if paths.len() < 2 {
        return Err(invalid("paths", "need at least two replicas"));
    }
    let len = paths.iter().map(Vec::len).min().unwrap_or(0);
    if len < 2 * SMALLEST_SCALE {
        return Err(invalid("paths", format!("paths must have at least {} steps", 2 * SMALLEST_SCALE)));
    }
    let mut scales = Vec::new();
    let mut s = SMALLEST_SCALE;
    while s <= len {
        scales.push(s);
        s *= 2;
    }
    let mut sums_at: Vec<Vec<f64>> = vec![Vec::with_capacity(paths.len()); scales.len()];
    let mut lil = Vec::with_capacity(paths.len());
    for p in paths {
        let mut acc = 0.0;
        let mut best: f64 = 0.0;
        let mut next = 0;
        for (i, x) in p.iter().take(len).enumerate() {
            acc += x;
            let n = i + 1;
            if n >= LIL_START {
                let nf = n as f64;
                best = best.max(acc.abs() / (2.0 * sigma2 * nf * nf.ln().ln()).sqrt());
            }
            if next < scales.len() && n == scales[next] {
                sums_at[next].push(acc);
                next += 1;
            }
        }
        lil.push(best);
    }
    let xs: Vec<f64> = scales.iter().map(|n| *n as f64).collect();
    let vs: Vec<f64> = sums_at.iter().map(|v| sample_variance(v) / sigma2).collect();
    let (slope, _, r2) = linear_fit(&xs, &vs).ok_or_else(|| CmlError::Degenerate("too few scales".into()))?;
    let ks_by_scale: Vec<(usize, f64)> = scales
        .iter()
        .zip(&sums_at)
        .map(|(n, v)| {
            let scale = (*n as f64 * sigma2).sqrt();
            (*n, ks_normal(&v.iter().map(|s| s / scale).collect::<Vec<_>>()))
        })
        .collect();
    let (lil_statistic, lil_max) = if len >= LIL_START {
        let mut sorted = lil.clone();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len();
        let median = if m % 2 == 1 { sorted[m / 2] } else { 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]) };
        (median, sorted[m - 1])
    } else {
        (f64::NAN, f64::NAN)
    };
    let ks_worst = ks_by_scale.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(AsipReport {
        proxy: true,
        variance_slope: slope,
        variance_r_squared: r2,
        lil_statistic,
        lil_max,
        slope_passes: envelope.map(|e| (slope - 1.0).abs() <= e.slope_tolerance),
        lil_passes: envelope.map(|e| lil_statistic <= e.lil_bound),
        ks_passes: envelope.map(|e| ks_worst <= e.ks_bound),
        ks_by_scale,
        envelope,
    })
}

/// Envelope calibrated on iid standard normal paths of the same shape:
/// slope within `max(0.05, 2 |s_iid - 1|)` of 1, LIL statistic below
/// `max(1.2, 1.1 lil_iid)`, KS below `max(1.63/sqrt(R), 1.1 ks_iid)`.
pub fn calibrate_asip(replicas: usize, len: usize, seed: u64) -> Result<(AsipEnvelope, AsipReport)> {
    let paths: Vec<Vec<f64>> = (0..replicas)
        .map(|r| {
            let mut rng = stream_rng(seed, Purpose::Calibration, r as u32);
            (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
        })
        .collect();
    let report = asip_diagnostic(&paths, 1.0, None)?;
    let ks_worst = report.ks_by_scale.iter().map(|p| p.1).fold(0.0, f64::max);
    let lil = if report.lil_statistic.is_nan() { 1.2 } else { report.lil_statistic };
    let envelope = AsipEnvelope {
        slope_tolerance: (2.0 * (report.variance_slope - 1.0).abs()).max(0.05),
        lil_bound: (1.1 * lil).max(1.2),
        ks_bound: (1.1 * ks_worst).max(ks_critical_1pct(replicas)),
    };
    Ok((envelope, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normals(count: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, Purpose::MonteCarlo, 11);
        (0..count).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn iid_normal_passes() {
        let r = clt_test(&normals(2000, 1), 1, 1.0).unwrap();
        assert!(r.ks_passes && r.variance_passes, "{r:?}");
    }

    #[test]
    fn degenerate_rejected() {
        assert!(clt_test(&vec![0.0; 600], 10, 0.0).is_err());
        assert!(clt_test(&normals(10, 1), 1, 1.0).is_err());
        assert!(asip_diagnostic(&[vec![0.0; 100], vec![0.0; 100]], 0.0, None).is_err());
    }

    #[test]
    fn iid_calibration() {
        let (env, rep) = calibrate_asip(200, 20_000, 3).unwrap();
        assert!((rep.variance_slope - 1.0).abs() < 0.05 * 3.0, "{rep:?}");
        assert!(rep.lil_statistic <= 1.2, "{rep:?}");
        assert!(env.lil_bound >= 1.2);
    }
}
