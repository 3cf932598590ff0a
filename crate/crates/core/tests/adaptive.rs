use nalgebra::DMatrix;
use num_traits::Zero;
use rayon::prelude::*;
use singwald_core::adaptive::{
    adaptive_analyze, adaptive_bound, estimate_k, estimated_limit_law, gram_det, jacobian_at, threshold_coefficients,
    AdaptiveConfig, Branch,
};
use singwald_core::cldr::{analyze, centered_restrictions};
use singwald_core::fixtures::{self, Fixture};
use singwald_core::polymatrix::{jacobian_of, PolyMatrix};
use singwald_core::rng::{draw_stream, std_normal};
use singwald_core::{Matrix, Order, Polynomial, Rational, RestrictionSystem, Scalar};

fn theta_bar(sys: &RestrictionSystem) -> Vec<f64> {
    sys.theta_bar().unwrap().iter().map(Scalar::to_f64).collect()
}

fn oracle_branch(sys: &RestrictionSystem) -> Branch {
    let a = analyze(sys).unwrap();
    if !a.is_cldr() {
        Branch::Divergent
    } else if a.alpha_bar == Order::Finite(0) {
        Branch::Standard
    } else {
        Branch::EstimatedLimit
    }
}

/// Exact lowest order of det(G G') at the null point.
fn oracle_k_det(sys: &RestrictionSystem) -> Order {
    let jac = jacobian_of(&centered_restrictions(sys).unwrap()).unwrap();
    let q = jac.rows();
    let rows = (0..q)
        .map(|i| {
            (0..q)
                .map(|j| {
                    jac.row(i).iter().zip(jac.row(j)).fold(Polynomial::zero(jac.nvars()), |acc, (a, b)| &acc + &(a * b))
                })
                .collect()
        })
        .collect();
    singwald_core::polymatrix::poly_det(&PolyMatrix::from_rows(jac.nvars(), rows).unwrap()).unwrap().lowest_order()
}

fn oracle_k_entries(sys: &RestrictionSystem) -> Vec<Vec<Order>> {
    let jac = jacobian_of(&centered_restrictions(sys).unwrap()).unwrap();
    (0..jac.rows()).map(|i| jac.row(i).iter().map(Polynomial::lowest_order).collect()).collect()
}

fn estimate(tb: &[f64], lambda: f64, seed: u64, i: u64) -> Vec<f64> {
    let mut rng = draw_stream(seed, i);
    tb.iter().map(|b| b + std_normal(&mut rng) / lambda).collect()
}

struct Rates {
    branch: f64,
    k_det: f64,
    k_entries: f64,
}

fn rates(f: &Fixture, lambda: f64, reps: u64) -> Rates {
    let sys = f.system().unwrap();
    let tb = theta_bar(&sys);
    let v = DMatrix::identity(sys.p(), sys.p());
    let cfg = AdaptiveConfig::new(1.0, 0.4, lambda).unwrap();
    let (want_branch, want_k, want_entries) = (oracle_branch(&sys), oracle_k_det(&sys), oracle_k_entries(&sys));
    let hits: Vec<(bool, bool, bool)> = (0..reps)
        .into_par_iter()
        .map(|i| match adaptive_analyze(&sys, &estimate(&tb, lambda, 2024, i), &v, &cfg) {
            Ok(v) => (v.branch == want_branch, v.k_hat_det == want_k, v.k_hat_entries == want_entries),
            Err(_) => (false, false, false),
        })
        .collect();
    let freq = |k: fn(&(bool, bool, bool)) -> bool| hits.iter().filter(|h| k(h)).count() as f64 / reps as f64;
    Rates { branch: freq(|h| h.0), k_det: freq(|h| h.1), k_entries: freq(|h| h.2) }
}

#[test]
fn thresholding_is_consistent_on_every_fixture() {
    for f in fixtures::ALL {
        let low = rates(&f, 1e2, 1000);
        let high = rates(&f, 1e3, 1000);
        assert!(low.k_entries >= 0.95, "{}: k at 1e2 {}", f.name, low.k_entries);
        assert!(high.k_entries >= 0.99, "{}: k at 1e3 {}", f.name, high.k_entries);
        assert!(high.k_det >= 0.99, "{}: k_det at 1e3 {}", f.name, high.k_det);
        assert!(high.branch >= 0.99, "{}: branch at 1e3 {}", f.name, high.branch);
    }
}

#[test]
fn zero_coefficients_are_detected() {
    // d/dt1 of t1 t2 at the origin is t2: constant coefficient zero
    let sys = fixtures::PRODUCT_ORIGIN.system().unwrap();
    let cfg = AdaptiveConfig::new(1.0, 0.4, 1e3).unwrap();
    let zeroed = (0..1000u64)
        .filter(|&i| {
            let jac = jacobian_at(&sys, &estimate(&[0.0, 0.0], 1e3, 7, i)).unwrap();
            threshold_coefficients(jac.get(0, 0), &cfg).constant_term() == 0.0
        })
        .count();
    assert!(zeroed >= 990, "{zeroed}");
}

#[test]
fn product_entry_order_at_large_sample() {
    // theta_hat = Z / sqrt(T) with T = 1e6
    let sys = fixtures::PRODUCT_ORIGIN.system().unwrap();
    let cfg = AdaptiveConfig::for_sample_size(1e6).unwrap();
    let hits = (0..1000u64)
        .filter(|&i| {
            let jac = jacobian_at(&sys, &estimate(&[0.0, 0.0], 1e3, 8, i)).unwrap();
            estimate_k(&threshold_coefficients(jac.get(0, 0), &cfg)) == Order::Finite(1)
        })
        .count();
    assert!(hits >= 990, "{hits}");
}

#[test]
fn orders_do_not_depend_on_a_substitution() {
    // y -> A y with A nonsingular leaves every lowest order unchanged
    let sys = fixtures::CUBIC_PAIRS.system().unwrap();
    let a = int_matrix(&[[1, 1, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 1, 1]]);
    let zero = vec![Rational::zero(); 4];
    let g: Vec<Polynomial> = sys.g().iter().map(|gi| gi.affine_substitute(&a, &zero).unwrap()).collect();
    let substituted = RestrictionSystem::new(4, g, Some(zero.clone()), None).unwrap();
    let cfg = AdaptiveConfig::new(1.0, 0.4, 1e3).unwrap();
    let (want_plain, want_sub) = (oracle_k_det(&sys), oracle_k_det(&substituted));
    assert_eq!(want_plain, want_sub);
    let mut compared = 0;
    for i in 0..200u64 {
        let th = estimate(&[0.0; 4], 1e3, 9, i);
        // theta = A y, so the estimate of y is A^{-1} theta
        let a_inv = a.inverse().unwrap().map(|r| Scalar::to_f64(r));
        let y: Vec<f64> = (0..4).map(|r| (0..4).map(|c| a_inv.get(r, c) * th[c]).sum()).collect();
        let k_plain = estimate_k(&gram_det(&thresholded(&sys, &th, &cfg)).unwrap().threshold(cfg.threshold()));
        let k_sub = estimate_k(&gram_det(&thresholded(&substituted, &y, &cfg)).unwrap().threshold(cfg.threshold()));
        if k_plain == want_plain && k_sub == want_sub {
            compared += 1;
            assert_eq!(k_plain, k_sub);
        }
    }
    assert!(compared > 150, "{compared}");
}

fn int_matrix(rows: &[[i64; 4]]) -> Matrix<Rational> {
    Matrix::from_rows(rows.iter().map(|r| r.iter().map(|&x| Rational::from_int(x)).collect()).collect()).unwrap()
}

fn thresholded(sys: &RestrictionSystem, th: &[f64], cfg: &AdaptiveConfig) -> PolyMatrix<f64> {
    jacobian_at(sys, th).unwrap().map(|e| threshold_coefficients(e, cfg))
}

#[test]
fn standard_branch_off_the_singular_axis() {
    let sys = fixtures::PRODUCT_AXIS.system().unwrap();
    let cfg = AdaptiveConfig::for_sample_size(1e6).unwrap();
    let v = DMatrix::identity(2, 2);
    for i in 0..100 {
        let verdict = adaptive_analyze(&sys, &estimate(&[1.0, 0.0], 1e3, 10, i), &v, &cfg).unwrap();
        assert_eq!(verdict.branch, Branch::Standard);
        let bound = adaptive_bound(&verdict, 0.05).unwrap();
        assert_eq!((bound.scale, bound.p), (1.0, 1));
    }
}

#[test]
fn square_gives_quarter_bound() {
    let sys = fixtures::SQUARE.system().unwrap();
    let cfg = AdaptiveConfig::for_sample_size(1e6).unwrap();
    let verdict = adaptive_analyze(&sys, &estimate(&[0.0], 1e3, 11, 0), &DMatrix::identity(1, 1), &cfg).unwrap();
    assert_eq!(verdict.branch, Branch::EstimatedLimit);
    assert_eq!(verdict.alpha_hat(), Some(1));
    let bound = adaptive_bound(&verdict, 0.05).unwrap();
    assert_eq!((bound.scale, bound.p), (0.25, 1));
}

#[test]
fn estimated_stacked_law_matches_the_known_limit() {
    let sys = fixtures::STACKED_ORIGIN.system().unwrap();
    let cfg = AdaptiveConfig::for_sample_size(1e6).unwrap();
    let v = DMatrix::identity(2, 2);
    let verdict = adaptive_analyze(&sys, &estimate(&[0.0, 0.0], 1e3, 12, 0), &v, &cfg).unwrap();
    assert_eq!(verdict.branch, Branch::EstimatedLimit);
    assert_eq!(verdict.estimate.as_ref().unwrap().alpha, vec![1, 2]);
    assert_eq!(adaptive_bound(&verdict, 0.05).unwrap().scale, 0.25);
    let law = estimated_limit_law(&verdict, 50_000, 3).unwrap().law().unwrap();
    // direct draws of Z1^2/4 + Z2^2/16
    let mut direct: Vec<f64> = (0..50_000u64)
        .map(|i| {
            let mut rng = draw_stream(77, i);
            let (z1, z2) = (std_normal(&mut rng), std_normal(&mut rng));
            z1 * z1 / 4.0 + z2 * z2 / 16.0
        })
        .collect();
    direct.sort_by(f64::total_cmp);
    let d = singwald_core::law::ks_two_sample(law.values(), &direct);
    assert!(d < 0.02, "{d}");
}
