use serde::Serialize;

use super::fit::{log_linear_fit, LogLinearFit};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AutocorrelationFit {
    /// Empirical autocovariances `C_0 ..= C_{n_max}`.
    pub autocovariance: Vec<f64>,
    /// Bartlett standard errors of `C_n` (zero at lag 0).
    pub std_errors: Vec<f64>,
    /// Lags `1..=last` that entered the fit, when a fit exists.
    pub fit_range: Option<(usize, usize)>,
    pub fit: Option<LogLinearFit>,
}

impl AutocorrelationFit {
    pub fn rate(&self) -> Option<f64> {
        self.fit.map(|f| f.rate)
    }

    pub fn r_squared(&self) -> Option<f64> {
        self.fit.map(|f| f.r_squared)
    }
}

fn autocovariances(series: &[Vec<f64>], n_max: usize, mean: f64) -> (Vec<f64>, usize) {
    let mut acc = vec![0.0; n_max + 1];
    let mut total = 0usize;
    for r in series {
        let len = r.len();
        total += len;
        for (lag, a) in acc.iter_mut().enumerate() {
            if lag >= len {
                break;
            }
            *a += (0..len - lag).map(|i| (r[i] - mean) * (r[i + lag] - mean)).sum::<f64>();
        }
    }
    (acc.into_iter().map(|a| a / total as f64).collect(), total)
}

/// Autocovariance decay fit for one series.
pub fn autocorrelation_fit(series: &[f64], n_max: usize) -> Result<AutocorrelationFit> {
    pooled_autocorrelation_fit(std::slice::from_ref(&series.to_vec()), n_max)
}

/// Autocovariances pooled over replicas (centred by the grand mean) and a
/// log-linear fit of `|C_n|` over the initial lag range where
/// `|C_n| > 3 SE_n`, weighted by `(|C_n| / SE_n)^2`.
///
/// Each replica must have at least `10 n_max` entries. A range shorter
/// than two lags yields `fit = None`.
pub fn pooled_autocorrelation_fit(series: &[Vec<f64>], n_max: usize) -> Result<AutocorrelationFit> {
    if n_max == 0 {
        return Err(invalid("n_max", "must be positive"));
    }
    if series.is_empty() || series.iter().any(|r| r.len() < 10 * n_max) {
        return Err(invalid("series", format!("every series needs at least {} entries", 10 * n_max)));
    }
    let mean = super::ensemble::grand_mean(series);
    let (c, total) = autocovariances(series, n_max, mean);
    let c0 = c[0];
    let mut std_errors = vec![0.0; n_max + 1];
    let mut last = 0;
    if c0 > 0.0 {
        let mut rho_sq = 0.0;
        for lag in 1..=n_max {
            std_errors[lag] = c0 * ((1.0 + 2.0 * rho_sq) / total as f64).sqrt();
            let rho = c[lag] / c0;
            rho_sq += rho * rho;
        }
        while last < n_max && c[last + 1].abs() > 3.0 * std_errors[last + 1] {
            last += 1;
        }
    }
    let (fit_range, fit) = if last >= 2 {
        let ns: Vec<f64> = (1..=last).map(|n| n as f64).collect();
        let ys: Vec<f64> = (1..=last).map(|n| c[n].abs()).collect();
        let ws: Vec<f64> = (1..=last).map(|n| (c[n].abs() / std_errors[n]).powi(2)).collect();
        (Some((1, last)), log_linear_fit(&ns, &ys, &ws))
    } else {
        (None, None)
    };
    Ok(AutocorrelationFit { autocovariance: c, std_errors, fit_range, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Purpose};
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn ar1_rate() {
        let mut rng = stream_rng(3, Purpose::MonteCarlo, 0);
        let mut x = 0.0;
        let s: Vec<f64> = (0..200_000)
            .map(|_| {
                x = 0.8 * x + rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect();
        let f = autocorrelation_fit(&s, 40).unwrap();
        let rate = f.rate().unwrap();
        assert!((rate - 0.8).abs() < 0.02, "{rate}");
    }

    #[test]
    fn white_noise_has_no_fit() {
        let mut rng = stream_rng(4, Purpose::MonteCarlo, 0);
        let s: Vec<f64> = (0..50_000).map(|_| rng.random::<f64>()).collect();
        let f = autocorrelation_fit(&s, 20).unwrap();
        assert!(f.fit.is_none());
    }

    #[test]
    fn lag_zero_is_variance() {
        let s: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64).collect();
        let f = autocorrelation_fit(&s, 5).unwrap();
        let m = s.iter().sum::<f64>() / 100.0;
        let v = s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 100.0;
        assert!((f.autocovariance[0] - v).abs() < 1e-12);
        assert!(autocorrelation_fit(&s, 11).is_err());
    }
}
