//! Acceptance gate: one line per criterion, nonzero exit if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use cml_lab::{emit_report, parse_config_str, run_experiment, ReportFormat};
use cml_lab_core::lattice::{weighted_inverse_norm, Coupling, MetricParams, NodeMap, Observable, Potential};
use cml_lab_core::spectral::{check_twisted_bound, operator_correlation, spectral_gap, twisted_matrix, variance_green_kubo};
use cml_lab_core::stats::{
    clt_test, grand_mean, partial_sums, pooled_autocorrelation_fit, simulate_ensemble, EnsembleConfig, Sampling,
};
use cml_lab_core::transfer::{
    check_conformality, check_lasota_yorke, check_pk_cauchy, random_trig_observables, stationary_measure, ulam_matrix,
    BuiltOperator, CylinderSet, LyConstants, OperatorKind, UlamConfig, DEFAULT_MAX_ITER, DEFAULT_TOL,
};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn reference_map() -> NodeMap {
    NodeMap::perturbed_doubling(0.05).unwrap()
}

fn geometric(map: &NodeMap, m: &MetricParams, k: usize) -> Potential {
    Potential::new(Observable::Geometric { map: *map }, m, k).unwrap()
}

fn build(kind: OperatorKind, k: usize, bins: usize, map: &NodeMap, f: &Potential, e: &Coupling) -> BuiltOperator {
    ulam_matrix(kind, &UlamConfig::new(k, bins), map, f, e, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap()
}

fn coupled_reference(bins: usize) -> (BuiltOperator, Vec<f64>, NodeMap, MetricParams) {
    let map = reference_map();
    let m = MetricParams::default();
    let f = geometric(&map, &m, 1);
    let b = build(OperatorKind::Coupled, 1, bins, &map, &f, &Coupling::diffusive(0.05).unwrap());
    let nu = stationary_measure(&b.operator, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    (b, nu, map, m)
}

fn criterion_1() -> Verdict {
    let b = build(OperatorKind::Normalized, 0, 1024, &NodeMap::doubling(), &Potential::zero(), &Coupling::identity());
    let e = &b.eigen;
    let mean_h = e.h().iter().sum::<f64>() / e.h().len() as f64;
    let h_dev = e.h().iter().map(|h| (h / mean_h - 1.0).abs()).fold(0.0, f64::max);
    let nu_dev = e.nu().iter().map(|v| (v * 1024.0 - 1.0).abs()).fold(0.0, f64::max);
    let lam = (e.lambda() - 1.0).abs();
    verdict(
        lam <= 1e-10 && h_dev <= 1e-10 && nu_dev <= 1e-3,
        format!("|lambda-1|={lam:.2e} h_dev={h_dev:.2e} nu_dev={nu_dev:.2e}"),
    )
}

fn criterion_2() -> Verdict {
    let f = Potential::new(Observable::DecayingSine { amplitude: 0.1, base: 4.0 }, &MetricParams::default(), 3).unwrap();
    let r = check_pk_cauchy(&Observable::Constant(1.0), &f, &reference_map(), 3, 100, 42).unwrap();
    let ratio = r.fitted_ratio.unwrap_or(f64::INFINITY);
    let diffs: Vec<String> = r.rows.iter().map(|(_, d)| format!("{d:.3e}")).collect();
    verdict(ratio <= 0.35, format!("fitted ratio {ratio:.4} (bound 0.35), diffs [{}]", diffs.join(", ")))
}

fn criterion_3() -> Verdict {
    let map = reference_map();
    let m = MetricParams::default();
    let e = Coupling::diffusive(0.05).unwrap();
    let f = Potential::new(Observable::sine(0, 0.1), &m, 1).unwrap();
    let b = build(OperatorKind::Coupled, 1, 16, &map, &f, &e);
    let c_e = e.diagonal_dominance_bound().max(weighted_inverse_norm(&e, 1, &m).unwrap());
    let constants = LyConstants::measured(&b.eigen, &m, c_e, map.eta(), f.beta_norm(), 42);
    let obs = random_trig_observables(50, 1, 42);
    let r = check_lasota_yorke(&b.operator, &obs, &m, 10, &constants, 0.05, 42).unwrap();
    verdict(r.passes, format!("worst lhs/rhs {:.3e} over {} rows, C_E={c_e:.4}", r.worst_ratio, r.rows.len()))
}

fn criterion_4() -> Verdict {
    let (b, _, map, _) = coupled_reference(16);
    let s = spectral_gap(&b.operator, 6).unwrap();
    let run = simulate_ensemble(&EnsembleConfig {
        k_sim: 1,
        n_steps: 20_100,
        n_replicas: 200,
        burn_in: 100,
        seed: 42,
        map,
        coupling: Coupling::diffusive(0.05).unwrap(),
        observable: Observable::Coordinate { node: 0 },
        sampling: Sampling::Forward,
    })
    .unwrap();
    let fit = pooled_autocorrelation_fit(&run.series, 20).unwrap();
    let rate = fit.rate();
    let ok = s.lambda2_modulus < 1.0 && rate.is_some_and(|r| (r - s.lambda2_modulus).abs() <= 0.1);
    verdict(
        ok,
        format!(
            "|lambda_2|={:.4}, trajectory rate {} (R^2 {}), tolerance 0.1",
            s.lambda2_modulus,
            rate.map_or("none".into(), |r| format!("{r:.4}")),
            fit.r_squared().map_or("-".into(), |r| format!("{r:.3}")),
        ),
    )
}

/// `int_0^1 (x - 1/2)(2^n x mod 1 - 1/2) dx` by Simpson's rule on each
/// dyadic piece, where the integrand is a quadratic polynomial.
fn doubling_autocovariance(n: u32) -> f64 {
    let pieces = 1u64 << n;
    let width = 1.0 / pieces as f64;
    let g = |x: f64, j: u64| (x - 0.5) * ((pieces as f64) * x - j as f64 - 0.5);
    (0..pieces)
        .map(|j| {
            let (a, b) = (j as f64 * width, (j + 1) as f64 * width);
            (b - a) / 6.0 * (g(a, j) + 4.0 * g(0.5 * (a + b), j) + g(b, j))
        })
        .sum()
}

fn criterion_5() -> Verdict {
    let b = build(OperatorKind::Normalized, 0, 1024, &NodeMap::doubling(), &Potential::zero(), &Coupling::identity());
    let nu = stationary_measure(&b.operator, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let phi = b.operator.grid().sample(|x| x[0] - 0.5);
    let c = operator_correlation(&phi, &phi, &nu, b.operator.matrix(), 10).unwrap();
    let worst = (0..=10).map(|n| (c.signed[n] - doubling_autocovariance(n as u32)).abs()).fold(0.0, f64::max);
    let gk = variance_green_kubo(&phi, &nu, &b.operator, 1e-12, 10_000).unwrap();
    let dv = (gk.sigma2 - 0.25).abs();
    verdict(worst <= 1e-3 && dv <= 1e-3, format!("max |C_n - oracle| {worst:.2e}, sigma^2={:.6} (|d|={dv:.2e})", gk.sigma2))
}

fn criterion_6() -> Verdict {
    let (b, nu, map, _) = coupled_reference(32);
    let x0 = Observable::Coordinate { node: 0 };
    let phi = b.operator.grid().sample(|x| x0.eval(x, map.p_tau()));
    let gk = variance_green_kubo(&phi, &nu, &b.operator, 1e-12, 10_000).unwrap();
    let run = simulate_ensemble(&EnsembleConfig {
        k_sim: 1,
        n_steps: 5100,
        n_replicas: 2000,
        burn_in: 100,
        seed: 42,
        map,
        coupling: Coupling::diffusive(0.05).unwrap(),
        observable: Observable::Coordinate { node: 0 },
        sampling: Sampling::Forward,
    })
    .unwrap();
    let sums = partial_sums(&run.series, 5000, grand_mean(&run.series));
    let r = clt_test(&sums, 5000, gk.sigma2).unwrap();
    verdict(
        r.ks_passes && r.variance_passes,
        format!(
            "KS {:.4} (critical {:.4}), Var(S_n/sqrt n)={:.4} vs sigma^2={:.4} (rel {:.3}, tolerance 0.10)",
            r.ks_distance, r.ks_critical, r.empirical_variance, gk.sigma2, r.variance_relative_error
        ),
    )
}

fn criterion_7() -> Verdict {
    let (b, _, map, m) = coupled_reference(16);
    let f = geometric(&map, &m, 1);
    let e = Coupling::diffusive(0.05).unwrap();
    let c_e = e.diagonal_dominance_bound().max(weighted_inverse_norm(&e, 1, &m).unwrap());
    let constants = LyConstants::measured(&b.eigen, &m, c_e, map.eta(), f.beta_norm(), 42);
    let twist = Potential::new(Observable::Coordinate { node: 0 }, &m, 1).unwrap();
    let grid = b.operator.grid();
    let probes: Vec<Vec<f64>> =
        random_trig_observables(3, 1, 7).iter().map(|o| grid.sample(|x| o.eval(x, 0.0))).collect();
    let tw = twisted_matrix(&b.operator, &twist, map.p_tau(), 0.0).unwrap();
    let r = check_twisted_bound(&tw, &probes, &[-0.1, -0.05, -0.01, 0.01, 0.05, 0.1], 200, &m, &constants, 42).unwrap();
    let sup = r.rows.iter().map(|x| x.sup_norm_max).fold(0.0, f64::max);
    let holder = r.rows.iter().flat_map(|x| x.holder_max.iter().copied()).fold(0.0, f64::max);
    let c9 = r.rows.iter().flat_map(|x| x.c9.iter().copied()).fold(f64::INFINITY, f64::min);
    verdict(r.passes, format!("max |M_t^n 1|_inf={sup:.12}, max quotient {holder:.3} vs smallest C9 {c9:.3e}"))
}

fn criterion_8() -> Verdict {
    let (b, nu, map, _) = coupled_reference(32);
    let e = Coupling::diffusive(0.05).unwrap();
    let grid = *b.operator.grid();
    let conformal = b.operator.conformal_measure(&nu);
    let reports: Vec<_> = (0..20)
        .map(|s| {
            let set = CylinderSet::random_admissible(grid, &map, 42, s).unwrap();
            check_conformality(&grid, b.eigen.g(), &conformal, &set, &map, &e, 200_000, true, 100 + s as u64).unwrap()
        })
        .collect();
    let ratios: Vec<f64> = reports.iter().map(|r| r.ratio).collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let spread = ratios.iter().map(|r| (r / mean - 1.0).abs()).fold(0.0, f64::max);

    let b0 = build(OperatorKind::Normalized, 0, 256, &NodeMap::doubling(), &Potential::zero(), &Coupling::identity());
    let nu0 = stationary_measure(&b0.operator, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let g0 = *b0.operator.grid();
    let set0 = CylinderSet::random_admissible(g0, &NodeMap::doubling(), 42, 0).unwrap();
    let r0 = check_conformality(&g0, b0.eigen.g(), &nu0, &set0, &NodeMap::doubling(), &Coupling::identity(), 200_000, true, 9)
        .unwrap();
    let d0 = (r0.ratio - 0.5).abs() / 0.5;
    verdict(
        spread <= 0.02 && d0 <= 0.01,
        format!(
            "k=1 coupled: 20 sets, mean ratio {mean:.5}, max deviation {:.2}% (b_k^-1 / lambda_kernel = {:.5}); \
             k=0 doubling: ratio {:.5} vs 1/b_k = 0.5 (deviation {:.2}%)",
            100.0 * spread,
            reports[0].branch_factor / b.operator.report().kernel_lambda.unwrap_or(1.0),
            r0.ratio,
            100.0 * d0
        ),
    )
}

const DETERMINISM_CONFIG: &str = r#"
seed = 7
[operator]
bins = 8
[variance]
bins = 8
[lasota_yorke]
observables = 5
[conformality]
sets = 3
samples = 20000
[twisted]
n_max = 20
[ensemble]
n_steps = 1100
n_replicas = 500
"#;

fn criterion_9() -> Verdict {
    let cfg = parse_config_str(DETERMINISM_CONFIG).unwrap();
    let a = run_experiment(&cfg);
    let b = run_experiment(&cfg);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    emit_report(&a, ReportFormat::All, dirs[0].path()).unwrap();
    emit_report(&b, ReportFormat::All, dirs[1].path()).unwrap();
    let mut names: Vec<String> = std::fs::read_dir(dirs[0].path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "timings.txt")
        .collect();
    names.sort();
    let identical = names.iter().all(|n| {
        std::fs::read(dirs[0].path().join(n)).ok() == std::fs::read(dirs[1].path().join(n)).ok()
    });
    verdict(
        identical && a.fingerprint == b.fingerprint,
        format!("{} files compared ({}), fingerprint {}", names.len(), names.join(" "), &a.fingerprint[..16]),
    )
}

type Criterion = (&'static str, fn() -> Verdict, Duration);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("uncoupled baseline", criterion_1, Duration::from_secs(5)),
        ("P_k Cauchy convergence", criterion_2, Duration::from_secs(60)),
        ("Lasota-Yorke margins", criterion_3, Duration::from_secs(120)),
        ("spectral gap vs trajectory decay", criterion_4, Duration::from_secs(120)),
        ("analytic autocovariance", criterion_5, Duration::MAX),
        ("central limit theorem", criterion_6, Duration::from_secs(300)),
        ("twisted boundedness", criterion_7, Duration::from_secs(60)),
        ("conformality", criterion_8, Duration::MAX),
        ("determinism", criterion_9, Duration::MAX),
    ];
    let mut failures = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *limit;
        let ok = v.passed && in_time;
        if !ok {
            failures += 1;
        }
        let budget = if *limit == Duration::MAX { String::new() } else { format!(", limit {}s", limit.as_secs()) };
        println!(
            "criterion {}: {} {name}: {} [{:.1}s{budget}]",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
