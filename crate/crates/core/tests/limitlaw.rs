use nalgebra::DMatrix;
use singwald_core::chisq::{chisq_cdf, chisq_quantile};
use singwald_core::cldr::{analyze, reduce};
use singwald_core::fixtures;
use singwald_core::law::{EmpiricalLaw, LawMeta};
use singwald_core::limitlaw::{
    finite_t_reference, sample_kernel, sample_limit_law, LimitKernel, LimitLawConfig, LimitOutcome, ZLaw,
};
use singwald_core::linalg::sym_inv_sqrt;
use singwald_core::polymatrix::jacobian_of;
use singwald_core::rng::{draw_stream, std_normal};
use singwald_core::{Matrix, Polynomial, Scalar};

fn limit(f: &fixtures::Fixture, draws: usize, seed: u64) -> EmpiricalLaw {
    let sys = f.system().unwrap();
    let a = analyze(&sys).unwrap();
    let cfg = LimitLawConfig::standard(draws, seed, sys.p()).unwrap();
    sample_limit_law(&a, &cfg).unwrap().law().unwrap()
}

fn theta_bar(f: &fixtures::Fixture) -> Vec<f64> {
    f.system().unwrap().theta_bar().unwrap().iter().map(Scalar::to_f64).collect()
}

/// Half-width of a 3-sigma band around the `gamma` quantile of `law`.
fn quantile_band(law: &EmpiricalLaw, gamma: f64) -> f64 {
    let s = (gamma * (1.0 - gamma) / law.len() as f64).sqrt();
    let (lo, hi) = (law.quantile(gamma - s).unwrap(), law.quantile(gamma + s).unwrap());
    3.0 * (hi - lo) / 2.0
}

#[test]
fn quarter_chi_square_quantile() {
    let law = limit(&fixtures::SQUARE, 200_000, 4);
    let q = law.quantile(0.95).unwrap();
    assert!((q - 3.841458820694124 / 4.0).abs() < 0.02, "{q}");
    assert!(law.ks_distance_cdf(|x| chisq_cdf(x, 1).unwrap()) > 0.2);
}

#[test]
fn sum_of_squares_is_quarter_chi_square() {
    let law = limit(&fixtures::SUM_OF_SQUARES_3, 200_000, 5);
    let d = law.ks_distance_cdf(|x| chisq_cdf(4.0 * x, 3).unwrap());
    assert!(d < 0.006, "{d}");
}

#[test]
fn pathwise_and_projection_bounds() {
    for f in fixtures::ALL.iter().filter(|f| f.expect_cldr) {
        let sys = f.system().unwrap();
        let a = analyze(&sys).unwrap();
        let kernel = LimitKernel::from_analysis(&a).unwrap();
        let cfg = LimitLawConfig::standard(20_000, 6, sys.p()).unwrap();
        let (draws, _) = sample_kernel(&kernel, &cfg).unwrap();
        let scale = f64::from((1 + a.min_alpha()).pow(2));
        for d in &draws {
            assert!(d.value <= d.z_norm_sq / scale * (1.0 + 1e-9) + 1e-12, "{}: {d:?}", f.name);
            assert!(d.projection <= d.z_norm_sq * (1.0 + 1e-9) + 1e-12, "{}: {d:?}", f.name);
        }
    }
}

#[test]
fn square_systems_stay_below_the_scaled_reference() {
    for f in [fixtures::SQUARE, fixtures::STACKED_ORIGIN] {
        let sys = f.system().unwrap();
        let a = analyze(&sys).unwrap();
        let law = limit(&f, 200_000, 17);
        let scale = f64::from((1 + a.min_alpha()).pow(2));
        for gamma in [0.9, 0.95, 0.99] {
            let bound = chisq_quantile(gamma, sys.q() as u32).unwrap() / scale;
            assert!(law.quantile(gamma).unwrap() <= bound + quantile_band(&law, gamma), "{} at {gamma}", f.name);
        }
    }
}

#[test]
fn finite_sample_square_matches_its_limit() {
    let sys = fixtures::SQUARE.system().unwrap();
    let law = finite_t_reference(&sys, &[0.0], &DMatrix::identity(1, 1), 1e6, 100_000, 8).unwrap();
    let d = law.ks_distance_cdf(|x| chisq_cdf(4.0 * x, 1).unwrap());
    assert!(d < 0.01, "{d}");
}

#[test]
fn finite_sample_off_origin_product_is_chi_square() {
    let f = fixtures::PRODUCT_AXIS;
    let law = finite_t_reference(&f.system().unwrap(), &theta_bar(&f), &DMatrix::identity(2, 2), 1e6, 100_000, 9).unwrap();
    let d = law.ks_distance_cdf(|x| chisq_cdf(x, 1).unwrap());
    assert!(d < 0.01, "{d}");
}

#[test]
fn deficient_rank_diverges() {
    let f = fixtures::STACKED_AXIS;
    let sys = f.system().unwrap();
    let a = analyze(&sys).unwrap();
    let cfg = LimitLawConfig::standard(1000, 1, 2).unwrap();
    assert_eq!(sample_limit_law(&a, &cfg).unwrap(), LimitOutcome::Diverges);
    let medians: Vec<f64> = [1e2, 1e4, 1e6]
        .iter()
        .map(|&t| finite_t_reference(&sys, &theta_bar(&f), &DMatrix::identity(2, 2), t, 5_000, 10).unwrap().median())
        .collect();
    assert!(medians.windows(2).all(|w| w[1] > w[0]), "{medians:?}");
}

#[test]
fn spherical_product_law_scales_with_the_radius() {
    // Z1^2 Z2^2 / (Z1^2 + Z2^2) is R^2 times a function of the direction only
    let sys = fixtures::PRODUCT_ORIGIN.system().unwrap();
    let a = analyze(&sys).unwrap();
    let kernel = LimitKernel::from_analysis(&a).unwrap();
    let at = |r: f64| {
        let cfg = LimitLawConfig::new(2000, 3, ZLaw::Spherical { radius_quantiles: vec![r, r] }, DMatrix::identity(2, 2)).unwrap();
        sample_kernel(&kernel, &cfg).unwrap().0
    };
    for (small, big) in at(1.0).iter().zip(&at(3.0)) {
        assert!((big.value - 9.0 * small.value).abs() < 1e-9 * big.value.max(1.0));
    }
}

/// Quantiles of the same limit reached by first transforming the
/// parameter to `y = V^{-1/2} theta`, where the covariance is the identity,
/// and running the float recursion there.
#[test]
fn limit_law_does_not_depend_on_the_parametrization() {
    let v = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
    let f = fixtures::STACKED_ORIGIN;
    let sys = f.system().unwrap();
    let a = analyze(&sys).unwrap();
    let direct = sample_limit_law(&a, &LimitLawConfig::new(100_000, 21, ZLaw::StandardNormal, v.clone()).unwrap())
        .unwrap()
        .law()
        .unwrap();

    // theta = V^{1/2} y
    let inv_root = sym_inv_sqrt(&v).unwrap();
    let a_inv = Matrix::from_rows((0..2).map(|i| (0..2).map(|j| inv_root[(i, j)]).collect()).collect()).unwrap();
    let g: Vec<Polynomial<f64>> =
        sys.g().iter().map(|gi| gi.to_f64().affine_substitute(&a_inv, &[0.0, 0.0]).unwrap()).collect();
    let red = reduce(&jacobian_of(&g).unwrap(), Some(1e-9)).unwrap();
    let gbar: Vec<Polynomial<f64>> = red
        .gbar
        .mul_variables()
        .unwrap()
        .iter()
        .zip(&red.alpha)
        .map(|(row, &k)| row.scale(&(1.0 / f64::from(k + 1))))
        .collect();
    let kernel = LimitKernel::new(&gbar, &red.gbar).unwrap();
    let cfg = LimitLawConfig::standard(100_000, 22, 2).unwrap();
    let (draws, _) = sample_kernel(&kernel, &cfg).unwrap();
    let other = EmpiricalLaw::new(draws.iter().map(|d| d.value).collect(), 22, 0, LawMeta::default()).unwrap();

    for gamma in [0.9, 0.95, 0.99] {
        let (x, y) = (direct.quantile(gamma).unwrap(), other.quantile(gamma).unwrap());
        let band = std::f64::consts::SQRT_2 * quantile_band(&direct, gamma);
        assert!((x - y).abs() <= band, "{gamma}: {x} vs {y} (band {band})");
    }
}

#[test]
fn direct_draws_agree_with_the_product_limit() {
    let law = limit(&fixtures::PRODUCT_ORIGIN, 50_000, 12);
    let mut direct: Vec<f64> = (0..50_000u64)
        .map(|i| {
            let mut rng = draw_stream(13, i);
            let (a, b) = (std_normal(&mut rng).powi(2), std_normal(&mut rng).powi(2));
            a * b / (a + b)
        })
        .collect();
    direct.sort_by(f64::total_cmp);
    let d = singwald_core::law::ks_two_sample(law.values(), &direct);
    assert!(d < 0.015, "{d}");
}
