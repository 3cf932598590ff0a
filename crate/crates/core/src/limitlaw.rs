//! Monte Carlo sampling of the Wald limit under the null and of the exact
//! finite-sample statistic.
//!
//! The limit of `W_T` at a CLDR point is the law of
//! `gbar(X)' [Gbar(X) V Gbar(X)']^{-1} gbar(X)` with `X = V^{1/2} Z`.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cldr::CldrAnalysis;
use crate::error::{Error, Result};
use crate::law::{EmpiricalLaw, LawMeta};
use crate::linalg::{check_symmetric, spd_solve, sym_sqrt};
use crate::poly::{CompiledPoly, Polynomial};
use crate::polymatrix::PolyMatrix;
use crate::rng::{draw_stream, std_normal, uniform_open};
use crate::scalar::{format_rational, Scalar};
use crate::system::RestrictionSystem;
use crate::waldstat::{WaldEvaluator, RCOND_MIN};

pub const MIN_DRAWS: usize = 1000;
pub const DEFAULT_DRAWS: usize = 200_000;
/// Largest tolerated fraction of redrawn singular draws.
pub const MAX_REDRAW_RATE: f64 = 1e-3;
const MAX_ATTEMPTS_PER_DRAW: u64 = 1000;

/// Law of the standardized estimation error `Z`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ZLaw {
    StandardNormal,
    /// Uniform direction with radius quantiles tabulated at equally spaced
    /// probabilities `0, 1/(n-1), ..., 1` and interpolated linearly.
    Spherical { radius_quantiles: Vec<f64> },
    /// Resampling of the given `p`-vectors with replacement.
    Table { rows: Vec<Vec<f64>> },
}

impl ZLaw {
    fn validate(&self, p: usize) -> Result<()> {
        match self {
            ZLaw::StandardNormal => Ok(()),
            ZLaw::Spherical { radius_quantiles: r } => {
                if r.len() < 2 || r[0] < 0.0 || r.windows(2).any(|w| !(w[0] <= w[1])) || r.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Domain("radius quantiles must be finite, non-negative and non-decreasing".into()));
                }
                Ok(())
            }
            ZLaw::Table { rows } => {
                if rows.is_empty() {
                    return Err(Error::Domain("empty Z table".into()));
                }
                if let Some(r) = rows.iter().find(|r| r.len() != p) {
                    return Err(Error::DimensionMismatch { expected: p, found: r.len() });
                }
                Ok(())
            }
        }
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng, z: &mut [f64]) {
        match self {
            ZLaw::StandardNormal => z.iter_mut().for_each(|x| *x = std_normal(rng)),
            ZLaw::Spherical { radius_quantiles: r } => {
                let mut norm2 = 0.0;
                while norm2 == 0.0 {
                    z.iter_mut().for_each(|x| *x = std_normal(rng));
                    norm2 = z.iter().map(|x| x * x).sum::<f64>();
                }
                let h = uniform_open(rng) * (r.len() - 1) as f64;
                let lo = (h.floor() as usize).min(r.len() - 2);
                let radius = r[lo] + (h - lo as f64) * (r[lo + 1] - r[lo]);
                let f = radius / norm2.sqrt();
                z.iter_mut().for_each(|x| *x *= f);
            }
            ZLaw::Table { rows } => {
                let k = (rng.next_u64() % rows.len() as u64) as usize;
                z.copy_from_slice(&rows[k]);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitLawConfig {
    pub draws: usize,
    pub seed: u64,
    pub z_law: ZLaw,
    #[serde(serialize_with = "serialize_matrix")]
    pub v: DMatrix<f64>,
}

fn serialize_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    rows.serialize(s)
}

impl LimitLawConfig {
    pub fn new(draws: usize, seed: u64, z_law: ZLaw, v: DMatrix<f64>) -> Result<Self> {
        if draws < MIN_DRAWS {
            return Err(Error::Domain(format!("at least {MIN_DRAWS} draws are required, got {draws}")));
        }
        if !v.is_square() {
            return Err(Error::NotSquare { rows: v.nrows(), cols: v.ncols() });
        }
        check_symmetric(&v, 1e-10)?;
        z_law.validate(v.nrows())?;
        sym_sqrt(&v)?;
        Ok(Self { draws, seed, z_law, v })
    }

    pub fn standard(draws: usize, seed: u64, p: usize) -> Result<Self> {
        Self::new(draws, seed, ZLaw::StandardNormal, DMatrix::identity(p, p))
    }
}

/// Compiled `gbar` and `Gbar` for per-draw evaluation.
#[derive(Debug, Clone)]
pub struct LimitKernel {
    p: usize,
    gbar: Vec<CompiledPoly>,
    jac: Vec<Vec<CompiledPoly>>,
}

/// One accepted draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitDraw {
    pub value: f64,
    /// The same quadratic form with `Lambda` replaced by the identity.
    pub projection: f64,
    pub z_norm_sq: f64,
}

impl LimitKernel {
    pub fn new<F: Scalar>(gbar: &[Polynomial<F>], gbar_matrix: &PolyMatrix<F>) -> Result<Self> {
        if gbar.len() != gbar_matrix.rows() {
            return Err(Error::DimensionMismatch { expected: gbar_matrix.rows(), found: gbar.len() });
        }
        let p = gbar_matrix.cols();
        Ok(Self {
            p,
            gbar: gbar.iter().map(Polynomial::compile).collect(),
            jac: (0..gbar_matrix.rows()).map(|i| gbar_matrix.row(i).iter().map(Polynomial::compile).collect()).collect(),
        })
    }

    pub fn from_analysis(a: &CldrAnalysis) -> Result<Self> {
        let gbar = a.gbar.as_ref().ok_or_else(|| Error::MismatchedAnalysis("gbar has not been built".into()))?;
        Self::new(gbar, &a.gbar_matrix)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// `None` when `Gbar(x) V Gbar(x)'` is numerically singular.
    pub fn eval(&self, x: &[f64], v: &DMatrix<f64>) -> Option<(f64, f64)> {
        let q = self.gbar.len();
        let g = DVector::from_iterator(q, self.gbar.iter().map(|c| c.eval(x)));
        let jac = DMatrix::from_fn(q, self.p, |i, j| self.jac[i][j].eval(x));
        let m = &jac * v * jac.transpose();
        let (sol, rcond) = spd_solve(&m, &g);
        if !(rcond >= RCOND_MIN) {
            return None;
        }
        let sol = sol?;
        let gx = &jac * DVector::from_column_slice(x);
        let proj = m.clone().cholesky()?.solve(&gx);
        Some((g.dot(&sol).max(0.0), gx.dot(&proj).max(0.0)))
    }
}

/// Draws from the limit law in draw order, with the total redraw count.
pub fn sample_kernel(kernel: &LimitKernel, cfg: &LimitLawConfig) -> Result<(Vec<LimitDraw>, u64)> {
    let p = kernel.p();
    if cfg.v.nrows() != p {
        return Err(Error::DimensionMismatch { expected: p, found: cfg.v.nrows() });
    }
    let root = sym_sqrt(&cfg.v)?;
    let results: Vec<Result<(LimitDraw, u64)>> = (0..cfg.draws as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = draw_stream(cfg.seed, i);
            let mut z = vec![0.0; p];
            for attempt in 0..MAX_ATTEMPTS_PER_DRAW {
                cfg.z_law.draw(&mut rng, &mut z);
                let x = &root * DVector::from_column_slice(&z);
                if let Some((value, projection)) = kernel.eval(x.as_slice(), &cfg.v) {
                    let z_norm_sq = z.iter().map(|t| t * t).sum();
                    return Ok((LimitDraw { value, projection, z_norm_sq }, attempt));
                }
            }
            Err(Error::ExcessiveRedraws { redraws: MAX_ATTEMPTS_PER_DRAW, draws: 1 })
        })
        .collect();
    let mut draws = Vec::with_capacity(cfg.draws);
    let mut redraws = 0u64;
    for r in results {
        let (d, extra) = r.map_err(|_| Error::ExcessiveRedraws { redraws: MAX_ATTEMPTS_PER_DRAW, draws: cfg.draws })?;
        draws.push(d);
        redraws += extra;
    }
    if redraws as f64 > MAX_REDRAW_RATE * cfg.draws as f64 {
        return Err(Error::ExcessiveRedraws { redraws, draws: cfg.draws });
    }
    Ok((draws, redraws))
}

#[derive(Debug, Clone, PartialEq)]
pub enum LimitOutcome {
    Law(EmpiricalLaw),
    Diverges,
}

impl LimitOutcome {
    pub fn law(self) -> Option<EmpiricalLaw> {
        match self {
            LimitOutcome::Law(l) => Some(l),
            LimitOutcome::Diverges => None,
        }
    }
}

fn analysis_meta(sys: Option<&RestrictionSystem>, a: &CldrAnalysis) -> LawMeta {
    LawMeta {
        source: "limit".into(),
        theta_bar: sys.and_then(|s| s.theta_bar()).map(|tb| tb.iter().map(format_rational).collect()),
        alpha: Some(a.alpha.clone()),
        classification: Some(a.classification.to_string()),
        ..LawMeta::default()
    }
}

/// Limit law at the analysed null point, or `Diverges` for deficient rank.
pub fn sample_limit_law(a: &CldrAnalysis, cfg: &LimitLawConfig) -> Result<LimitOutcome> {
    sample_limit_law_for(None, a, cfg)
}

/// As [`sample_limit_law`], recording the null point of `sys` in the metadata.
pub fn sample_limit_law_for(
    sys: Option<&RestrictionSystem>,
    a: &CldrAnalysis,
    cfg: &LimitLawConfig,
) -> Result<LimitOutcome> {
    if !a.is_cldr() {
        return Ok(LimitOutcome::Diverges);
    }
    let kernel = LimitKernel::from_analysis(a)?;
    let (draws, redraws) = sample_kernel(&kernel, cfg)?;
    let law = EmpiricalLaw::new(draws.iter().map(|d| d.value).collect(), cfg.seed, redraws, analysis_meta(sys, a))?;
    Ok(LimitOutcome::Law(law))
}

/// Exact statistic at `theta_hat = theta_bar + V^{1/2} Z / sqrt(T)` with
/// `V_hat = V`; singular estimates are redrawn and counted.
pub fn finite_t_reference(
    sys: &RestrictionSystem,
    theta_bar: &[f64],
    v: &DMatrix<f64>,
    t: f64,
    draws: usize,
    seed: u64,
) -> Result<EmpiricalLaw> {
    let p = sys.p();
    if theta_bar.len() != p || v.nrows() != p {
        return Err(Error::DimensionMismatch { expected: p, found: theta_bar.len() });
    }
    if !(t >= 1.0) {
        return Err(Error::Domain(format!("sample size must be at least 1, got {t}")));
    }
    if draws == 0 {
        return Err(Error::Domain("at least one draw is required".into()));
    }
    let evaluator = WaldEvaluator::new(sys.g())?;
    let root = sym_sqrt(v)?;
    let lambda = t.sqrt();
    let results: Vec<Result<(f64, u64)>> = (0..draws as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = draw_stream(seed, i);
            let mut z = vec![0.0; p];
            for attempt in 0..MAX_ATTEMPTS_PER_DRAW {
                ZLaw::StandardNormal.draw(&mut rng, &mut z);
                let step = &root * DVector::from_column_slice(&z);
                let theta: Vec<f64> = theta_bar.iter().zip(step.iter()).map(|(b, s)| b + s / lambda).collect();
                match evaluator.eval(&theta, v, lambda) {
                    Ok(w) => return Ok((w.w.max(0.0), attempt)),
                    Err(Error::SingularAtPoint { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::ExcessiveRedraws { redraws: MAX_ATTEMPTS_PER_DRAW, draws: 1 })
        })
        .collect();
    let mut values = Vec::with_capacity(draws);
    let mut redraws = 0;
    for r in results {
        let (w, extra) = r?;
        values.push(w);
        redraws += extra;
    }
    let meta = LawMeta {
        source: "finite-T".into(),
        theta_bar: Some(theta_bar.iter().map(|x| x.to_string()).collect()),
        sample_size: Some(t),
        ..LawMeta::default()
    };
    EmpiricalLaw::new(values, seed, redraws, meta)
}
