use cml_lab_core::lattice::{Coupling, MetricParams, NodeMap, Observable, Potential};
use cml_lab_core::spectral::{
    dense_eigenvalues, krylov_eigenvalues, operator_correlation, spectral_gap, twisted_matrix, variance_green_kubo,
};
use cml_lab_core::transfer::{
    check_conformality, cone_membership, export_eigendata, export_triplets, import_eigendata, import_triplets,
    stationary_measure, ulam_matrix, BuiltOperator, ConeParams, CylinderSet, OperatorKind, UlamConfig,
    DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use num_complex::Complex64;

fn build(kind: OperatorKind, k: usize, bins: usize, map: &NodeMap, f: &Potential, e: &Coupling) -> BuiltOperator {
    ulam_matrix(kind, &UlamConfig::new(k, bins), map, f, e, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap()
}

fn perturbed_uncoupled(bins: usize) -> BuiltOperator {
    let map = NodeMap::perturbed_doubling(0.05).unwrap();
    let f = Potential::new(Observable::sine(0, 0.1), &MetricParams::default(), 0).unwrap();
    build(OperatorKind::Normalized, 0, bins, &map, &f, &Coupling::identity())
}

fn coupled(bins: usize) -> BuiltOperator {
    let map = NodeMap::perturbed_doubling(0.05).unwrap();
    let m = MetricParams::default();
    let f = Potential::new(Observable::Geometric { map }, &m, 1).unwrap();
    build(OperatorKind::Coupled, 1, bins, &map, &f, &Coupling::diffusive(0.05).unwrap())
}

#[test]
fn doubling_baseline_is_exact() {
    let b = build(OperatorKind::Normalized, 0, 1024, &NodeMap::doubling(), &Potential::zero(), &Coupling::identity());
    assert!((b.eigen.lambda() - 1.0).abs() < 1e-10);
    assert!(b.eigen.h().iter().all(|h| (h - 1.0).abs() < 1e-10));
    assert!(b.eigen.nu().iter().all(|v| (v * 1024.0 - 1.0).abs() < 1e-3));
}

#[test]
fn normalized_operator_is_markov() {
    let b = perturbed_uncoupled(64);
    for s in b.operator.matrix().row_sums() {
        assert!((s - 1.0).abs() < 1e-12);
    }
    assert!(b.operator.matrix().min_entry() >= 0.0);
    let nu = stationary_measure(&b.operator, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert!((nu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn coupled_operator_is_markov() {
    let b = coupled(8);
    for s in b.operator.matrix().row_sums() {
        assert!((s - 1.0).abs() < 1e-10);
    }
}

#[test]
fn leading_density_lies_in_cone() {
    let b = perturbed_uncoupled(128);
    let m = MetricParams::default();
    let f = Potential::new(Observable::sine(0, 0.1), &m, 0).unwrap();
    let map = NodeMap::perturbed_doubling(0.05).unwrap();
    let cone = ConeParams::new(f.beta_norm(), map.eta(), m.beta());
    let r = cone_membership(&b.eigen, &cone, &m, 2000, 1e-6, 3);
    assert!(r.holds, "{r:?}");
    assert!((r.nu_of_h - 1.0).abs() < 1e-9);
}

#[test]
fn krylov_agrees_with_dense_oracle() {
    let small = perturbed_uncoupled(256);
    let dense = dense_eigenvalues(&small.operator.matrix().to_dense());
    let large = perturbed_uncoupled(1024);
    let kry = krylov_eigenvalues(large.operator.matrix(), 2, 1e-9, 300, 1).unwrap();
    assert!(kry.converged, "{:?} {:?}", kry.values, kry.residuals);
    assert!((kry.values[0].norm() - 1.0).abs() < 1e-8);
    assert!((kry.values[1].norm() - dense[1].norm()).abs() < 0.02, "{} vs {}", kry.values[1], dense[1]);
}

#[test]
fn spectral_gap_is_positive_for_coupled_system() {
    let s = spectral_gap(&coupled(8).operator, 4).unwrap();
    assert!((s.lambda1 - 1.0).abs() < 1e-8);
    assert!(s.lambda2_modulus < 1.0);
    assert!(s.gap > 0.0);
}

#[test]
fn triplet_round_trip_is_bit_exact() {
    let b = coupled(4);
    let text = export_triplets(&b.operator);
    let back = import_triplets(&text).unwrap();
    assert_eq!(back.matrix(), b.operator.matrix());
    assert_eq!(export_triplets(&back), text);
}

#[test]
fn eigendata_round_trip_is_bit_exact() {
    let b = perturbed_uncoupled(32);
    let text = export_eigendata(&b.eigen);
    let back = import_eigendata(&text).unwrap();
    assert_eq!(back, b.eigen);
}

#[test]
fn corrupted_triplets_are_rejected() {
    let text = export_triplets(&perturbed_uncoupled(8).operator);
    assert!(import_triplets(&text.replacen("nnz = ", "nnz = 9", 1)).is_err());
    assert!(import_triplets(&text.replace("kind = normalized", "kind = sideways")).is_err());
    assert!(import_triplets("").is_err());
}

#[test]
fn doubling_conformality_ratio_is_one_half() {
    let map = NodeMap::doubling();
    let b = build(OperatorKind::Normalized, 0, 64, &map, &Potential::zero(), &Coupling::identity());
    let nu = stationary_measure(&b.operator, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let grid = *b.operator.grid();
    for s in 0..5 {
        let set = CylinderSet::random_admissible(grid, &map, 11, s).unwrap();
        let r = check_conformality(&grid, b.eigen.g(), &nu, &set, &map, &Coupling::identity(), 20_000, true, 5).unwrap();
        assert!((r.ratio - 0.5).abs() < 0.005, "{r:?}");
    }
}

#[test]
fn untwisted_matrix_equals_base() {
    let b = coupled(4);
    let obs = Potential::new(Observable::Coordinate { node: 0 }, &MetricParams::default(), 1).unwrap();
    let tw = twisted_matrix(&b.operator, &obs, 0.0, 0.0).unwrap();
    for ((r, c, z), (r2, c2, x)) in tw.matrix().triplets().zip(b.operator.matrix().triplets()) {
        assert_eq!((r, c), (r2, c2));
        assert_eq!(z, Complex64::new(x, 0.0));
    }
}

#[test]
fn twist_preserves_moduli_and_conjugates_under_sign_flip() {
    let b = coupled(4);
    let obs = Potential::new(Observable::Coordinate { node: 0 }, &MetricParams::default(), 1).unwrap();
    let plus = twisted_matrix(&b.operator, &obs, 0.0, 0.07).unwrap();
    let minus = plus.retwist(-0.07);
    for (((_, _, p), (_, _, q)), (_, _, x)) in
        plus.matrix().triplets().zip(minus.matrix().triplets()).zip(b.operator.matrix().triplets())
    {
        assert!((p.norm() - x).abs() < 1e-15);
        assert!((p.conj() - q).norm() < 1e-15);
    }
}

#[test]
fn constant_observable_has_no_fluctuations() {
    let b = perturbed_uncoupled(64);
    let nu = stationary_measure(&b.operator, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let phi = vec![3.0; b.operator.dim()];
    let c = operator_correlation(&phi, &phi, &nu, b.operator.matrix(), 5).unwrap();
    assert!(c.signed.iter().all(|v| v.abs() < 1e-12));
    let gk = variance_green_kubo(&phi, &nu, &b.operator, 1e-12, 100).unwrap();
    assert!(gk.sigma2.abs() < 1e-10);
}

#[test]
fn doubling_coordinate_variance_is_one_quarter() {
    let b = build(OperatorKind::Normalized, 0, 512, &NodeMap::doubling(), &Potential::zero(), &Coupling::identity());
    let nu = stationary_measure(&b.operator, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let phi = b.operator.grid().sample(|x| x[0]);
    let gk = variance_green_kubo(&phi, &nu, &b.operator, 1e-14, 1000).unwrap();
    assert!((gk.sigma2 - 0.25).abs() < 2e-3, "{}", gk.sigma2);
}
