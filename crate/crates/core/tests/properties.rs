use cml_lab_core::lattice::{apply_bar_tau, apply_coupling, embed, invert_coupling, metric_d, project};
use cml_lab_core::lattice::{Coupling, FiniteState, MetricParams, NodeMap};
use cml_lab_core::spectral::sort_by_modulus;
use cml_lab_core::stats::{autocorrelation_fit, ks_distance, ks_normal, ks_two_sample, linear_fit, normal_cdf};
use num_complex::Complex64;
use proptest::prelude::*;

fn state(k: usize) -> impl Strategy<Value = FiniteState> {
    prop::collection::vec(0.0..1.0f64, 2 * k + 1).prop_map(|v| FiniteState::new(v, 0.0).unwrap())
}

fn metric() -> impl Strategy<Value = MetricParams> {
    (0.2..0.95f64, 0.1..1.0f64, 0.0..1.0f64, any::<bool>()).prop_map(|(theta, beta, s, circle)| {
        let lo = theta.powf(beta);
        MetricParams::new(theta, beta, lo + s * (1.0 - lo) * 0.999).unwrap().with_circle_distance(circle)
    })
}

proptest! {
    #[test]
    fn metric_is_symmetric_and_vanishes_on_diagonal(x in state(2), y in state(2), m in metric()) {
        let d = metric_d(&x, &y, &m).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d, metric_d(&y, &x, &m).unwrap());
        prop_assert_eq!(metric_d(&x, &x, &m).unwrap(), 0.0);
    }

    #[test]
    fn metric_satisfies_triangle_inequality(x in state(2), y in state(2), z in state(2), m in metric()) {
        let (xy, yz, xz) = (metric_d(&x, &y, &m).unwrap(), metric_d(&y, &z, &m).unwrap(), metric_d(&x, &z, &m).unwrap());
        prop_assert!(xz <= xy + yz + 1e-12);
    }

    #[test]
    fn embedding_preserves_distances(x in state(1), y in state(1), m in metric()) {
        let (ex, ey) = (embed(&x, 3).unwrap(), embed(&y, 3).unwrap());
        prop_assert_eq!(metric_d(&ex, &ey, &m).unwrap(), metric_d(&x, &y, &m).unwrap());
        prop_assert_eq!(project(&ex, 1).unwrap(), x);
    }

    #[test]
    fn coupling_inverse_round_trips(x in prop::collection::vec(0.2..0.8f64, 5), eps in 0.0..0.2f64) {
        let e = Coupling::diffusive(eps).unwrap();
        let x = FiniteState::new(x, 0.5).unwrap();
        let y = apply_coupling(&x, &e).unwrap();
        let back = invert_coupling(&y, &e).unwrap();
        for (a, b) in back.values().iter().zip(x.values()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn local_map_stays_in_unit_interval(x in state(2), a in -0.15..0.15f64) {
        let map = NodeMap::perturbed_doubling(a).unwrap();
        let y = apply_bar_tau(&x, &map);
        prop_assert!(y.values().iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn sorting_orders_by_descending_modulus(parts in prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 1..30)) {
        let mut v: Vec<Complex64> = parts.iter().map(|&(r, i)| Complex64::new(r, i)).collect();
        sort_by_modulus(&mut v);
        for w in v.windows(2) {
            prop_assert!(w[0].norm() >= w[1].norm() - 1e-12 * w[0].norm().max(1e-300));
        }
    }

    #[test]
    fn ks_distance_is_bounded_and_location_invariant(
        sample in prop::collection::vec(-4.0..4.0f64, 1..200),
        shift in -10.0..10.0f64,
    ) {
        let d = ks_normal(&sample);
        prop_assert!((0.0..=1.0).contains(&d));
        let shifted: Vec<f64> = sample.iter().map(|x| x + shift).collect();
        let d2 = ks_distance(&shifted, |x| normal_cdf(x - shift));
        prop_assert!((d - d2).abs() < 1e-9);
    }

    #[test]
    fn two_sample_ks_of_identical_samples_is_zero(sample in prop::collection::vec(-4.0..4.0f64, 1..100)) {
        prop_assert_eq!(ks_two_sample(&sample, &sample), 0.0);
    }

    #[test]
    fn lag_zero_autocovariance_is_the_variance(series in prop::collection::vec(-3.0..3.0f64, 50..300)) {
        let fit = autocorrelation_fit(&series, 4).unwrap();
        let n = series.len() as f64;
        let mean = series.iter().sum::<f64>() / n;
        let var = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        prop_assert!((fit.autocovariance[0] - var).abs() < 1e-10 * (1.0 + var));
    }

    #[test]
    fn linear_fit_recovers_exact_lines(slope in -5.0..5.0f64, intercept in -5.0..5.0f64, n in 3usize..40) {
        let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| slope * x + intercept).collect();
        let (s, c, _) = linear_fit(&xs, &ys).unwrap();
        prop_assert!((s - slope).abs() < 1e-9 && (c - intercept).abs() < 1e-8);
    }
}
