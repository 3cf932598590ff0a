//! Data-driven analysis from an estimate `(theta_hat, V_hat)` alone.
//!
//! Coefficients of the Jacobian expanded around `theta_hat` are estimates of
//! the expansion at the unknown null point. Hard thresholding at
//! `c / lambda_T^delta` recovers the zero pattern, from which the lowest
//! orders, the branch and, when a finite limit exists, an estimate of the
//! limit law follow.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::bounds::BoundSpec;
use crate::cldr::{reduce, Stage};
use crate::error::{Error, Result};
use crate::law::{EmpiricalLaw, LawMeta};
use crate::limitlaw::{sample_kernel, LimitKernel, LimitLawConfig, LimitOutcome, ZLaw};
use crate::linalg::{check_symmetric, sym_sqrt, Matrix};
use crate::poly::{Order, Polynomial};
use crate::polymatrix::{combinations, jacobian, poly_det, PolyMatrix};
use crate::scalar::rational_from_f64;
use crate::system::RestrictionSystem;

pub const DEFAULT_C: f64 = 1.0;
pub const DEFAULT_DELTA: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdaptiveConfig {
    pub c: f64,
    pub delta: f64,
    pub lambda_t: f64,
}

impl AdaptiveConfig {
    pub fn new(c: f64, delta: f64, lambda_t: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Domain(format!("threshold constant must be positive, got {c}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Domain(format!("delta must lie in (0, 1), got {delta}")));
        }
        if !(lambda_t > 0.0 && lambda_t.is_finite()) {
            return Err(Error::Domain(format!("rate must be positive, got {lambda_t}")));
        }
        Ok(Self { c, delta, lambda_t })
    }

    /// Default constants at rate `sqrt(T)`.
    pub fn for_sample_size(t: f64) -> Result<Self> {
        Self::new(DEFAULT_C, DEFAULT_DELTA, t.sqrt())
    }

    pub fn threshold(&self) -> f64 {
        self.c / self.lambda_t.powf(self.delta)
    }
}

pub fn threshold_coefficients(p: &Polynomial<f64>, cfg: &AdaptiveConfig) -> Polynomial<f64> {
    p.threshold(cfg.threshold())
}

/// Lowest order of an already thresholded polynomial.
pub fn estimate_k(p: &Polynomial<f64>) -> Order {
    p.lowest_order()
}

/// Jacobian expanded around `theta_hat`; the translation is done exactly on
/// the binary64 value of `theta_hat` before rounding the coefficients.
pub fn jacobian_at(sys: &RestrictionSystem, theta_hat: &[f64]) -> Result<PolyMatrix<f64>> {
    if theta_hat.len() != sys.p() {
        return Err(Error::DimensionMismatch { expected: sys.p(), found: theta_hat.len() });
    }
    let shift = theta_hat
        .iter()
        .map(|&x| rational_from_f64(x).ok_or_else(|| Error::Domain(format!("non-finite estimate {x}"))))
        .collect::<Result<Vec<_>>>()?;
    let jac = jacobian(sys);
    let rows = (0..jac.rows())
        .map(|i| jac.row(i).iter().map(|e| Ok(e.translate(&shift)?.to_f64())).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    PolyMatrix::from_rows(sys.p(), rows)
}

/// `det(G G')` as a polynomial.
pub fn gram_det(g: &PolyMatrix<f64>) -> Result<Polynomial<f64>> {
    let q = g.rows();
    let mut rows = vec![vec![Polynomial::zero(g.nvars()); q]; q];
    for i in 0..q {
        for j in i..q {
            let e = g.row(i).iter().zip(g.row(j)).fold(Polynomial::zero(g.nvars()), |acc, (a, b)| &acc + &(a * b));
            rows[j][i] = e.clone();
            rows[i][j] = e;
        }
    }
    poly_det(&PolyMatrix::from_rows(g.nvars(), rows)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    /// Regular point: the statistic is asymptotically `chi2_q`.
    Standard,
    /// Deficient rank: the statistic diverges.
    Divergent,
    /// Singular CLDR point: the limit law is estimated.
    EstimatedLimit,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Branch::Standard => "Standard",
            Branch::Divergent => "Divergent",
            Branch::EstimatedLimit => "EstimatedLimit",
        })
    }
}

/// The recursion run on the thresholded Jacobian.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    #[serde(skip)]
    pub s: Matrix<f64>,
    pub alpha: Vec<u32>,
    #[serde(rename = "Gbar")]
    pub gbar_matrix: PolyMatrix<f64>,
    #[serde(serialize_with = "serialize_polys")]
    pub gbar: Vec<Polynomial<f64>>,
    pub stages: Vec<Stage>,
}

fn serialize_polys<S: serde::Serializer>(g: &[Polynomial<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    g.iter().map(ToString::to_string).collect::<Vec<_>>().serialize(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptiveVerdict {
    pub branch: Branch,
    pub p: usize,
    pub q: usize,
    pub threshold: f64,
    pub k_hat_det: Order,
    /// Lowest order of each thresholded Jacobian entry, row-major.
    pub k_hat_entries: Vec<Vec<Order>>,
    pub estimate: Option<Estimate>,
    #[serde(skip)]
    pub v_hat: DMatrix<f64>,
}

impl AdaptiveVerdict {
    /// Smallest estimated order share; zero on the standard branch.
    pub fn alpha_hat(&self) -> Option<u32> {
        match self.branch {
            Branch::Standard => Some(0),
            Branch::Divergent => None,
            Branch::EstimatedLimit => self.estimate.as_ref().and_then(|e| e.alpha.iter().copied().min()),
        }
    }
}

fn has_large_minor(gbar: &PolyMatrix<f64>, tau: f64) -> Result<bool> {
    let q = gbar.rows();
    for cols in combinations(gbar.cols(), q) {
        let det = poly_det(&gbar.select_columns(&cols))?;
        if det.terms().any(|(_, c)| c.abs() >= tau) {
            return Ok(true);
        }
    }
    Ok(false)
}

pub fn adaptive_analyze(
    sys: &RestrictionSystem,
    theta_hat: &[f64],
    v_hat: &DMatrix<f64>,
    cfg: &AdaptiveConfig,
) -> Result<AdaptiveVerdict> {
    let (p, q) = (sys.p(), sys.q());
    if v_hat.nrows() != p || v_hat.ncols() != p {
        return Err(Error::DimensionMismatch { expected: p, found: v_hat.nrows() });
    }
    check_symmetric(v_hat, 1e-10)?;
    sym_sqrt(v_hat)?;
    let tau = cfg.threshold();
    let jac = jacobian_at(sys, theta_hat)?.map(|e| threshold_coefficients(e, cfg));
    if let Some(row) = (0..q).find(|&i| jac.row(i).iter().all(Polynomial::is_zero)) {
        return Err(Error::AnnihilatedRow { row });
    }
    let k_hat_entries = (0..q).map(|i| jac.row(i).iter().map(estimate_k).collect()).collect();
    let k_hat_det = estimate_k(&gram_det(&jac)?.threshold(tau));
    let mut verdict = AdaptiveVerdict {
        branch: Branch::Standard,
        p,
        q,
        threshold: tau,
        k_hat_det,
        k_hat_entries,
        estimate: None,
        v_hat: v_hat.clone(),
    };
    if k_hat_det == Order::Finite(0) {
        return Ok(verdict);
    }
    let red = reduce(&jac, Some(tau))?;
    let gy = red.gbar.mul_variables()?;
    let gbar = gy.iter().zip(&red.alpha).map(|(row, &a)| row.scale(&(1.0 / f64::from(a + 1)))).collect();
    verdict.branch = if has_large_minor(&red.gbar, tau)? { Branch::EstimatedLimit } else { Branch::Divergent };
    verdict.estimate = Some(Estimate { s: red.s, alpha: red.alpha, gbar_matrix: red.gbar, gbar, stages: red.stages });
    Ok(verdict)
}

/// Bound `chi2_p / (1 + alpha_hat)^2`; on the standard branch the reference
/// `chi2_q` itself.
pub fn adaptive_bound(v: &AdaptiveVerdict, level: f64) -> Result<BoundSpec> {
    match v.branch {
        Branch::Divergent => Err(Error::Divergent),
        Branch::Standard => BoundSpec::new(0, v.q as u32, v.q as u32, level),
        Branch::EstimatedLimit => {
            let alpha = v.alpha_hat().expect("estimated branch has orders");
            BoundSpec::new(alpha, v.p as u32, v.q as u32, level)
        }
    }
}

/// Monte Carlo law of the estimated limit, with `X = V_hat^{1/2} Z`.
pub fn estimated_limit_law(v: &AdaptiveVerdict, draws: usize, seed: u64) -> Result<LimitOutcome> {
    let est = match (v.branch, &v.estimate) {
        (Branch::Divergent, _) => return Ok(LimitOutcome::Diverges),
        (Branch::EstimatedLimit, Some(est)) => est,
        _ => return Err(Error::Domain("the standard branch has a chi-square law; nothing to estimate".into())),
    };
    let cfg = LimitLawConfig::new(draws, seed, ZLaw::StandardNormal, v.v_hat.clone())?;
    let kernel = LimitKernel::new(&est.gbar, &est.gbar_matrix)?;
    let (samples, redraws) = sample_kernel(&kernel, &cfg)?;
    let meta = LawMeta {
        source: "adaptive".into(),
        alpha: Some(est.alpha.clone()),
        classification: Some(v.branch.to_string()),
        ..LawMeta::default()
    };
    let law = EmpiricalLaw::new(samples.iter().map(|d| d.value).collect(), seed, redraws, meta)?;
    Ok(LimitOutcome::Law(law))
}
