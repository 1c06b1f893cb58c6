use serde::Serialize;

/// Weighted least-squares line through `(n, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLinearFit {
    /// `exp(slope)`.
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Fits `ln y_i ~ a + b n_i` with weights `w_i`; entries with `y <= 0`
/// are skipped. Needs at least two distinct abscissae.
pub fn log_linear_fit(ns: &[f64], ys: &[f64], weights: &[f64]) -> Option<LogLinearFit> {
    let pts: Vec<(f64, f64, f64)> = ns
        .iter()
        .zip(ys)
        .zip(weights)
        .filter(|((_, y), w)| **y > 0.0 && y.is_finite() && **w > 0.0)
        .map(|((n, y), w)| (*n, y.ln(), *w))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| p.2 * (p.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { (sxy * sxy / (sxx * syy)).min(1.0) } else { 1.0 };
    Some(LogLinearFit { rate: slope.exp(), intercept: my - slope * mx, r_squared, points: pts.len() })
}

/// Ordinary least-squares slope and R² of `y` against `x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (xs[i] - mx, ys[i] - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some((slope, my - slope * mx, r2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_geometric() {
        let ns: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = ns.iter().map(|n| 3.0 * 0.7f64.powf(*n)).collect();
        let fit = log_linear_fit(&ns, &ys, &[1.0; 10]).unwrap();
        assert!((fit.rate - 0.7).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear() {
        let (s, i, r2) = linear_fit(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!((s - 2.0).abs() < 1e-12 && i.abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0], &[1.0]).is_none());
    }
}
