//! Conservative chi-square bounds for the singular Wald limit.
//!
//! Under CLDR with smallest order share `alpha`, the limit law is dominated
//! by `chi2_p / (1 + alpha)^2`. Whether the standard `chi2_q` critical value
//! stays conservative is decided by comparing the two densities at that
//! critical value; the tail ordering beyond the crossover point does the rest.

use serde::Serialize;

use crate::chisq::{chisq_ln_pdf, chisq_quantile, scaled_ln_pdf};
use crate::cldr::CldrAnalysis;
use crate::error::{Error, Result};

/// Search limit for [`conservative_max_p`].
const MAX_DOF: u32 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSpec {
    /// Smallest order share used for the scale.
    pub alpha: u32,
    /// `1 / (1 + alpha)^2`.
    pub scale: f64,
    pub p: u32,
    pub q: u32,
    pub level: f64,
    /// `scale * chi2_p` quantile at `1 - level`.
    pub critical_value: f64,
    /// `chi2_q` quantile at `1 - level`.
    pub reference_critical_value: f64,
    /// Whether the `chi2_q` critical value is conservative for the bound.
    pub conservative: bool,
    /// `ln f_q(y) - ln f_bound(y)` at the reference critical value.
    pub density_gap: f64,
    /// Point beyond which the bound's density stays below the reference.
    pub crossover: Option<f64>,
}

impl BoundSpec {
    pub fn new(alpha: u32, p: u32, q: u32, level: f64) -> Result<Self> {
        if q == 0 || p < q {
            return Err(Error::Domain(format!("need p >= q >= 1, got p={p}, q={q}")));
        }
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Domain(format!("level must lie in (0, 1), got {level}")));
        }
        let a = f64::from((1 + alpha) * (1 + alpha));
        let scale = 1.0 / a;
        let reference = chisq_quantile(1.0 - level, q)?;
        let gap = chisq_ln_pdf(reference, q)? - scaled_ln_pdf(reference, p, a)?;
        // Identical laws: the reference is exact, not merely conservative.
        let identical = alpha == 0 && p == q;
        let crossover = if p > q && alpha > 0 { Some(tail_crossover(q, 1.0, p, a)?) } else { None };
        Ok(Self {
            alpha,
            scale,
            p,
            q,
            level,
            critical_value: scale * chisq_quantile(1.0 - level, p)?,
            reference_critical_value: reference,
            conservative: identical || gap > 0.0,
            density_gap: gap,
            crossover,
        })
    }
}

/// `1 / (1 + min alpha_i)^2`; no bound exists for deficient-rank systems.
pub fn bound_factor(a: &CldrAnalysis) -> Result<f64> {
    if !a.is_cldr() {
        return Err(Error::Divergent);
    }
    let m = f64::from(1 + a.min_alpha());
    Ok(1.0 / (m * m))
}

pub fn bound_spec(a: &CldrAnalysis, p: u32, level: f64) -> Result<BoundSpec> {
    if !a.is_cldr() {
        return Err(Error::Divergent);
    }
    BoundSpec::new(a.min_alpha(), p, a.q() as u32, level)
}

/// Largest root of `f_{p1,a1}(y) = f_{p2,a2}(y)` where `f_{p,a}` is the
/// density of `chi2_p / a`. Beyond it the `(p2, a2)` density is strictly
/// smaller. Returns 0 when that holds for every `y > 0`.
pub fn tail_crossover(p1: u32, a1: f64, p2: u32, a2: f64) -> Result<f64> {
    if !(p2 > p1 && a2 > a1 && a1 > 0.0) {
        return Err(Error::Domain(format!(
            "need p2 > p1 and a2 > a1 > 0, got ({p1}, {a1}) vs ({p2}, {a2})"
        )));
    }
    let log_ratio = |y: f64| -> Result<f64> { Ok(scaled_ln_pdf(y, p1, a1)? - scaled_ln_pdf(y, p2, a2)?) };
    // The log ratio is (p1 - p2)/2 ln y + (a2 - a1) y / 2 + const: convex,
    // minimal at y*, increasing to +inf beyond it.
    let y_star = f64::from(p2 - p1) / (a2 - a1);
    if log_ratio(y_star)? >= 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (y_star, 2.0 * y_star.max(1.0));
    while log_ratio(hi)? < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if log_ratio(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Largest `p` for which `chi2_p / (1 + alpha)^2` has a strictly smaller
/// density than `chi2_q` at the `chi2_q` critical value of level `level`.
pub fn conservative_max_p(q: u32, alpha: u32, level: f64) -> Result<u32> {
    if alpha == 0 {
        return Err(Error::Domain("alpha must be at least 1".into()));
    }
    if q == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("invalid q={q} or level={level}")));
    }
    let a = f64::from((1 + alpha) * (1 + alpha));
    let y = chisq_quantile(1.0 - level, q)?;
    let reference = chisq_ln_pdf(y, q)?;
    let mut last = None;
    for p in q..=MAX_DOF {
        if scaled_ln_pdf(y, p, a)? < reference {
            last = Some(p);
        } else {
            break;
        }
    }
    last.ok_or_else(|| Error::Domain(format!("no conservative p for q={q}, alpha={alpha}, level={level}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chisq::chisq_pdf;
    use crate::cldr::analyze;
    use crate::parser::parse_system;
    use proptest::prelude::*;

    #[test]
    fn max_p_table() {
        assert_eq!(conservative_max_p(1, 1, 0.05).unwrap(), 6);
        assert_eq!(conservative_max_p(1, 1, 0.01).unwrap(), 10);
        assert_eq!(conservative_max_p(2, 1, 0.05).unwrap(), 11);
        assert_eq!(conservative_max_p(3, 1, 0.05).unwrap(), 17);
        assert!(conservative_max_p(1, 0, 0.05).is_err());
    }

    #[test]
    fn crossover_brackets_the_critical_value() {
        let y = 3.841458820694124;
        let pdf = |p: u32, a: f64| a * chisq_pdf(a * y, p).unwrap();
        assert!(pdf(1, 1.0) > pdf(6, 4.0));
        assert!(pdf(7, 4.0) > pdf(1, 1.0));
        assert!(tail_crossover(1, 1.0, 6, 4.0).unwrap() < y);
        assert!(tail_crossover(1, 1.0, 7, 4.0).unwrap() > y);
        assert!(tail_crossover(6, 4.0, 1, 1.0).is_err());
    }

    #[test]
    fn ratio_diverges_beyond_crossover() {
        let y0 = tail_crossover(2, 1.0, 9, 4.0).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for y in [y0 * 1.01, y0 * 2.0, y0 * 10.0, y0 * 100.0] {
            let r = scaled_ln_pdf(y, 2, 1.0).unwrap() - scaled_ln_pdf(y, 9, 4.0).unwrap();
            assert!(r > prev && r > 0.0);
            prev = r;
        }
    }

    #[test]
    fn bound_factors() {
        let a = analyze(&parse_system("p=2 q=2\nt1^2\nt1*t2^2").unwrap()).unwrap();
        assert_eq!(bound_factor(&a).unwrap(), 0.25);
        let a = analyze(&parse_system("p=2 q=1\nt1*t2\ntheta_bar= 1 0").unwrap()).unwrap();
        assert_eq!(bound_factor(&a).unwrap(), 1.0);
        let a = analyze(&parse_system("p=2 q=2\nt1^2\nt1*t2^2\ntheta_bar= 0 1").unwrap()).unwrap();
        assert!(matches!(bound_factor(&a), Err(Error::Divergent)));
    }

    #[test]
    fn standard_case_coincides_with_reference() {
        let b = BoundSpec::new(0, 3, 3, 0.05).unwrap();
        assert_eq!(b.scale, 1.0);
        assert!((b.critical_value - b.reference_critical_value).abs() < 1e-12);
        assert!(b.conservative);
        assert!(!BoundSpec::new(0, 4, 3, 0.05).unwrap().conservative);
        assert!(BoundSpec::new(1, 6, 1, 0.05).unwrap().conservative);
        assert!(!BoundSpec::new(1, 7, 1, 0.05).unwrap().conservative);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn max_p_monotone(q in 1u32..=4, alpha in 1u32..=3, level in 0.005f64..0.2) {
            let base = conservative_max_p(q, alpha, level).unwrap();
            prop_assert!(conservative_max_p(q, alpha + 1, level).unwrap() >= base);
            prop_assert!(conservative_max_p(q, alpha, level * 1.5).unwrap() <= base);
        }

        #[test]
        fn verdict_agrees_with_max_p(q in 1u32..=3, alpha in 1u32..=2, extra in 0u32..30) {
            let p = q + extra;
            let spec = BoundSpec::new(alpha, p, q, 0.05).unwrap();
            prop_assert_eq!(spec.conservative, p <= conservative_max_p(q, alpha, 0.05).unwrap());
        }
    }
}
