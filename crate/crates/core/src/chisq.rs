//! Chi-square distribution functions.

use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};

const QUANTILE_TOL: f64 = 1e-12;

fn check_dof(k: u32) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain("degrees of freedom must be at least 1".into()));
    }
    Ok(f64::from(k))
}

fn check_x(x: f64) -> Result<()> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("chi-square argument must be >= 0, got {x}")));
    }
    Ok(())
}

/// `P(chi2_k <= x)`, the regularized lower incomplete gamma `P(k/2, x/2)`.
pub fn chisq_cdf(x: f64, k: u32) -> Result<f64> {
    let k = check_dof(k)?;
    check_x(x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    Ok(gamma_lr(k / 2.0, x / 2.0))
}

pub fn chisq_ln_pdf(x: f64, k: u32) -> Result<f64> {
    let kf = check_dof(k)?;
    check_x(x)?;
    if x == 0.0 {
        return Ok(match k {
            1 => f64::INFINITY,
            2 => -std::f64::consts::LN_2,
            _ => f64::NEG_INFINITY,
        });
    }
    let h = kf / 2.0;
    Ok((h - 1.0) * x.ln() - x / 2.0 - h * std::f64::consts::LN_2 - ln_gamma(h))
}

pub fn chisq_pdf(x: f64, k: u32) -> Result<f64> {
    chisq_ln_pdf(x, k).map(f64::exp)
}

/// Inverse of [`chisq_cdf`] by bisection on a doubling bracket.
pub fn chisq_quantile(gamma: f64, k: u32) -> Result<f64> {
    check_dof(k)?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("level must lie in (0, 1), got {gamma}")));
    }
    let mut lo = 0.0;
    let mut hi = f64::from(k).max(1.0);
    while chisq_cdf(hi, k)? < gamma {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > QUANTILE_TOL * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if chisq_cdf(mid, k)? < gamma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Log density of `chi2_k / a` at `y`, i.e. `ln a + ln f_k(a y)`.
pub fn scaled_ln_pdf(y: f64, k: u32, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::Domain(format!("scale must be positive, got {a}")));
    }
    Ok(a.ln() + chisq_ln_pdf(a * y, k)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Independent reference: P(chi2_k <= x) = c_k * int_0^sqrt(x) u^(k-1) e^(-u^2/2) du
    // by composite Simpson, with c_k from the recursive Gamma(k/2).
    fn half_gamma(k: u32) -> f64 {
        // Gamma(k/2) from Gamma(1/2) = sqrt(pi) and Gamma(1) = 1
        let mut g = if k % 2 == 1 { std::f64::consts::PI.sqrt() } else { 1.0 };
        let mut h = if k % 2 == 1 { 0.5 } else { 1.0 };
        while h < f64::from(k) / 2.0 {
            g *= h;
            h += 1.0;
        }
        g
    }

    fn oracle_cdf(x: f64, k: u32) -> f64 {
        let n = 20_000;
        let b = x.sqrt();
        let h = b / n as f64;
        let f = |u: f64| u.powi(k as i32 - 1) * (-u * u / 2.0).exp();
        let mut s = f(0.0) + f(b);
        for i in 1..n {
            s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let integral = s * h / 3.0;
        2.0 * integral / (2f64.powf(f64::from(k) / 2.0) * half_gamma(k))
    }

    fn oracle_quantile(gamma: f64, k: u32) -> f64 {
        let (mut lo, mut hi) = (0.0, 100.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if oracle_cdf(mid, k) < gamma {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn oracle_critical_values() {
        let q95 = oracle_quantile(0.95, 1);
        let q99 = oracle_quantile(0.99, 1);
        assert!((q95 - 3.84146).abs() < 1e-4, "{q95}");
        assert!((q99 - 6.63490).abs() < 1e-4, "{q99}");
        assert!((chisq_quantile(0.95, 1).unwrap() - q95).abs() < 1e-8);
        assert!((chisq_quantile(0.99, 1).unwrap() - q99).abs() < 1e-8);
    }

    #[test]
    fn cdf_matches_integration_oracle() {
        for k in [1, 2, 3, 5, 10, 17] {
            for x in [0.01, 0.5, 1.0, 3.84, 7.5, 20.0, 40.0] {
                let diff = (chisq_cdf(x, k).unwrap() - oracle_cdf(x, k)).abs();
                assert!(diff < 1e-12, "k={k} x={x} diff={diff:e}");
            }
        }
    }

    #[test]
    fn edges_and_domain() {
        assert_eq!(chisq_cdf(0.0, 3).unwrap(), 0.0);
        assert_eq!(chisq_cdf(f64::INFINITY, 3).unwrap(), 1.0);
        assert!(chisq_cdf(-1.0, 1).is_err());
        assert!(chisq_cdf(1.0, 0).is_err());
        assert!(chisq_quantile(1.0, 1).is_err());
        assert!(chisq_quantile(0.0, 1).is_err());
        assert!((chisq_pdf(0.0, 2).unwrap() - 0.5).abs() < 1e-15);
        // chi2_2 is exponential with mean 2
        assert!((chisq_pdf(3.0, 2).unwrap() - 0.5 * (-1.5f64).exp()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn quantile_inverts_cdf(gamma in 1e-4f64..(1.0 - 1e-4), k in 1u32..=50) {
            let x = chisq_quantile(gamma, k).unwrap();
            prop_assert!((chisq_cdf(x, k).unwrap() - gamma).abs() < 1e-8);
        }
    }
}
