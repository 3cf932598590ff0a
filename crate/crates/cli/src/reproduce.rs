//! The textbook checks behind `wald reproduce`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use singwald_core::bounds::conservative_max_p;
use singwald_core::chisq::chisq_cdf;
use singwald_core::cldr::{analyze, cldr_construct};
use singwald_core::fixtures::{self, Fixture};
use singwald_core::law::{ks_two_sample, EmpiricalLaw};
use singwald_core::limitlaw::{sample_limit_law, LimitLawConfig, LimitOutcome};
use singwald_core::polymatrix::{jacobian, poly_det};
use singwald_core::rng::{draw_stream, std_normal};
use singwald_core::waldstat::{wald_statistic, WaldInput};
use singwald_core::Result;

/// KS tolerance at the reference size of 200000 draws.
const KS_TOL_REF: f64 = 0.006;
const KS_REF_DRAWS: f64 = 200_000.0;
/// Direct-draw oracles use this many times the sampler's draws.
const ORACLE_FACTOR: usize = 10;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub expected: String,
    pub observed: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub passed: usize,
    pub failed: usize,
    pub table: Vec<Check>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }
}

fn check(name: &str, expected: impl ToString, observed: impl ToString, pass: bool) -> Check {
    Check { name: name.into(), expected: expected.to_string(), observed: observed.to_string(), pass }
}

fn exact(name: &str, expected: impl ToString, observed: impl ToString) -> Check {
    let (e, o) = (expected.to_string(), observed.to_string());
    let pass = e == o;
    Check { name: name.into(), expected: e, observed: o, pass }
}

/// KS tolerance scaled to `draws` from the reference size.
pub fn ks_tolerance(draws: usize) -> f64 {
    KS_TOL_REF * (KS_REF_DRAWS / draws as f64).sqrt()
}

fn limit_law(f: &Fixture, draws: usize, seed: u64) -> Result<LimitOutcome> {
    let sys = f.system()?;
    let a = analyze(&sys)?;
    sample_limit_law(&a, &LimitLawConfig::standard(draws, seed, sys.p())?)
}

fn direct_draws(draws: usize, seed: u64, f: impl Fn(f64, f64) -> f64 + Sync) -> Vec<f64> {
    let mut v: Vec<f64> = (0..draws as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = draw_stream(seed, i);
            let (a, b) = (std_normal(&mut rng), std_normal(&mut rng));
            f(a, b)
        })
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

fn ks_check(name: &str, law: Result<LimitOutcome>, tol: f64, distance: impl FnOnce(&EmpiricalLaw) -> f64) -> Check {
    match law {
        Ok(LimitOutcome::Law(l)) => {
            let d = distance(&l);
            check(name, format!("KS < {tol:.6}"), format!("{d:.6}"), d < tol)
        }
        Ok(LimitOutcome::Diverges) => check(name, format!("KS < {tol:.6}"), "diverges", false),
        Err(e) => check(name, format!("KS < {tol:.6}"), format!("error: {e}"), false),
    }
}

fn max_p_checks(out: &mut Vec<Check>) -> Result<()> {
    for (q, alpha, level, want) in [(1, 1, 0.05, 6), (1, 1, 0.01, 10), (2, 1, 0.05, 11), (3, 1, 0.05, 17)] {
        let got = conservative_max_p(q, alpha, level)?;
        out.push(exact(&format!("max p (q={q}, alpha={alpha}, level={level})"), want, got));
    }
    Ok(())
}

fn structure_checks(out: &mut Vec<Check>) -> Result<()> {
    let sys = fixtures::CUBIC_PAIRS.system()?;
    let a = analyze(&sys)?;
    out.push(exact("cubic pairs: classification", "CLDR", a.classification));
    out.push(exact("cubic pairs: alpha", "[1, 1, 2]", format!("{:?}", a.alpha)));
    out.push(exact("cubic pairs: alpha_bar", "4", a.alpha_bar));
    let jac = jacobian(&sys);
    out.push(exact("cubic pairs: minor on columns 1,2,3", "-12*t1*t2*t3^2", poly_det(&jac.select_columns(&[0, 1, 2]))?));
    out.push(exact("cubic pairs: minor on columns 1,3,4", "18*t1*t3^2*t4^2", poly_det(&jac.select_columns(&[0, 2, 3]))?));

    let a = cldr_construct(&fixtures::unshareable_matrix())?;
    out.push(exact("unshareable matrix: classification", "DeficientRank", a.classification));
    out.push(check("unshareable matrix: order sum below alpha_bar = 2", "sum < 2", a.alpha_sum(), a.alpha_sum() < 2 && a.alpha_bar.to_string() == "2"));

    let a = analyze(&fixtures::STACKED_ORIGIN.system()?)?;
    out.push(exact("stacked at origin: classification", "CLDR", a.classification));
    out.push(exact("stacked at origin: alpha", "[1, 2]", format!("{:?}", a.alpha)));
    let a = analyze(&fixtures::STACKED_AXIS.system()?)?;
    out.push(exact("stacked at (0, 1): classification", "DeficientRank", a.classification));
    Ok(())
}

type ClosedForm = fn(&[f64], f64) -> f64;

fn closed_form_checks(out: &mut Vec<Check>) -> Result<()> {
    let forms: [(&Fixture, ClosedForm); 5] = [
        (&fixtures::SQUARE, |t, n| n * t[0] * t[0] / 4.0),
        (&fixtures::PRODUCT_ORIGIN, |t, n| n * t[0] * t[0] * t[1] * t[1] / (t[0] * t[0] + t[1] * t[1])),
        (&fixtures::SUM_OF_SQUARES_2, |t, n| n * t.iter().map(|x| x * x).sum::<f64>() / 4.0),
        (&fixtures::SUM_OF_SQUARES_3, |t, n| n * t.iter().map(|x| x * x).sum::<f64>() / 4.0),
        (&fixtures::STACKED_ORIGIN, |t, n| n * (4.0 * t[0] * t[0] + t[1] * t[1]) / 16.0),
    ];
    let point = [0.3, -0.7, 1.1];
    for (f, form) in forms {
        let sys = f.system()?;
        let p = sys.p();
        let theta = point[..p].to_vec();
        let w = wald_statistic(&sys, &WaldInput::with_sample_size(theta.clone(), DMatrix::identity(p, p), 100.0)?)?.w;
        let want = form(&theta, 100.0);
        let rel = (w - want).abs() / want.abs();
        out.push(check(&format!("{}: closed-form Wald", f.name), format!("{want:.12}"), format!("{w:.12}"), rel < 1e-10));
    }
    Ok(())
}

fn limit_checks(out: &mut Vec<Check>, draws: usize, seed: u64) {
    let tol = ks_tolerance(draws);
    let oracle = draws * ORACLE_FACTOR;
    out.push(ks_check("square: limit vs chi2_1 / 4", limit_law(&fixtures::SQUARE, draws, seed), tol, |l| {
        l.ks_distance_cdf(|x| chisq_cdf(4.0 * x, 1).unwrap_or(f64::NAN))
    }));
    let product = direct_draws(oracle, seed.wrapping_add(1), |a, b| a * a * b * b / (a * a + b * b));
    out.push(ks_check("product at origin: limit vs direct draws", limit_law(&fixtures::PRODUCT_ORIGIN, draws, seed), tol, |l| {
        ks_two_sample(l.values(), &product)
    }));
    out.push(ks_check("sum of squares p=3: limit vs chi2_3 / 4", limit_law(&fixtures::SUM_OF_SQUARES_3, draws, seed), tol, |l| {
        l.ks_distance_cdf(|x| chisq_cdf(4.0 * x, 3).unwrap_or(f64::NAN))
    }));
    let stacked = direct_draws(oracle, seed.wrapping_add(2), |a, b| a * a / 4.0 + b * b / 16.0);
    out.push(ks_check("stacked at origin: limit vs direct draws", limit_law(&fixtures::STACKED_ORIGIN, draws, seed), tol, |l| {
        ks_two_sample(l.values(), &stacked)
    }));
    let diverges = matches!(limit_law(&fixtures::STACKED_AXIS, draws.min(1000).max(1000), seed), Ok(LimitOutcome::Diverges));
    out.push(check("stacked at (0, 1): limit", "diverges", if diverges { "diverges" } else { "finite" }, diverges));
}

pub fn reproduce(draws: usize, seed: u64) -> Result<Report> {
    let mut table = Vec::new();
    max_p_checks(&mut table)?;
    structure_checks(&mut table)?;
    closed_form_checks(&mut table)?;
    limit_checks(&mut table, draws, seed);
    let passed = table.iter().filter(|c| c.pass).count();
    Ok(Report { passed, failed: table.len() - passed, table })
}
