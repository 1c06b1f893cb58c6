//! Trajectory statistics: ensembles, autocorrelation fits, normality and
//! partial-sum diagnostics.

mod autocorr;
mod clt;
mod ensemble;
mod fit;
mod ks;

pub use autocorr::{autocorrelation_fit, pooled_autocorrelation_fit, AutocorrelationFit};
pub use clt::{
    asip_diagnostic, calibrate_asip, clt_test, AsipEnvelope, AsipReport, CltReport, LIL_START, MIN_CLT_REPLICAS,
    VARIANCE_TOLERANCE,
};
pub use ensemble::{
    grand_mean, partial_sums, simulate_ensemble, EnsembleConfig, EnsembleSeries, Sampling, MAX_CLAMP_FRACTION,
};
pub use fit::{linear_fit, log_linear_fit, LogLinearFit};
pub use ks::{ks_critical_1pct, ks_distance, ks_normal, ks_two_sample, normal_cdf};

use serde::Serialize;

/// Summary of the trajectory-level checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticReport {
    pub fitted_decay_rate: Option<f64>,
    pub fit_r_squared: Option<f64>,
    pub ks_distance: f64,
    pub variance_slope: f64,
    pub lil_statistic: f64,
    pub decay_passes: Option<bool>,
    pub clt_passes: bool,
    pub variance_passes: bool,
    pub asip_passes: Option<bool>,
}

impl DiagnosticReport {
    pub fn assemble(
        decay: &AutocorrelationFit,
        reference_rate: Option<f64>,
        decay_tolerance: f64,
        clt: &CltReport,
        asip: &AsipReport,
    ) -> Self {
        let asip_passes = match (asip.slope_passes, asip.lil_passes, asip.ks_passes) {
            (Some(a), Some(b), Some(c)) => Some(a && b && c),
            _ => None,
        };
        Self {
            fitted_decay_rate: decay.rate(),
            fit_r_squared: decay.r_squared(),
            ks_distance: clt.ks_distance,
            variance_slope: asip.variance_slope,
            lil_statistic: asip.lil_statistic,
            decay_passes: reference_rate.zip(decay.rate()).map(|(r, f)| (f - r).abs() <= decay_tolerance),
            clt_passes: clt.ks_passes,
            variance_passes: clt.variance_passes,
            asip_passes,
        }
    }
}
