//! Finite-sample Wald statistic and equivalent rewritings of a system.

use nalgebra::{DMatrix, DVector};
use num_traits::Zero;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{check_symmetric, spd_solve, Matrix};
use crate::poly::{CompiledPoly, Polynomial};
use crate::polymatrix::jacobian_of;
use crate::scalar::Rational;
use crate::system::RestrictionSystem;

/// Below this reciprocal condition number `G V G'` is treated as singular.
pub const RCOND_MIN: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct WaldInput {
    pub theta_hat: Vec<f64>,
    pub v_hat: DMatrix<f64>,
    pub lambda_t: f64,
}

impl WaldInput {
    pub fn new(theta_hat: Vec<f64>, v_hat: DMatrix<f64>, lambda_t: f64) -> Result<Self> {
        let p = theta_hat.len();
        if v_hat.nrows() != p || v_hat.ncols() != p {
            return Err(Error::DimensionMismatch { expected: p, found: v_hat.nrows() });
        }
        if !(lambda_t > 0.0 && lambda_t.is_finite()) {
            return Err(Error::Domain(format!("rate must be positive and finite, got {lambda_t}")));
        }
        if theta_hat.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("theta_hat has non-finite entries".into()));
        }
        check_symmetric(&v_hat, SYMMETRY_TOL)?;
        if v_hat.clone().cholesky().is_none() {
            return Err(Error::Domain("V_hat is not positive definite".into()));
        }
        Ok(Self { theta_hat, v_hat, lambda_t })
    }

    /// Standard rate `lambda_T = sqrt(T)`.
    pub fn with_sample_size(theta_hat: Vec<f64>, v_hat: DMatrix<f64>, t: f64) -> Result<Self> {
        Self::new(theta_hat, v_hat, t.sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaldValue {
    #[serde(rename = "W")]
    pub w: f64,
    pub rcond: f64,
}

/// Restrictions and Jacobian compiled for repeated binary64 evaluation.
#[derive(Debug, Clone)]
pub struct WaldEvaluator {
    p: usize,
    g: Vec<CompiledPoly>,
    jac: Vec<Vec<CompiledPoly>>,
}

impl WaldEvaluator {
    pub fn new(g: &[Polynomial]) -> Result<Self> {
        let p = g.first().map_or(0, Polynomial::nvars);
        let jac = jacobian_of(g)?;
        Ok(Self {
            p,
            g: g.iter().map(Polynomial::compile).collect(),
            jac: (0..jac.rows()).map(|i| jac.row(i).iter().map(Polynomial::compile).collect()).collect(),
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.g.len()
    }

    /// `lambda^2 g' [G V G']^{-1} g` at `theta`.
    pub fn eval(&self, theta: &[f64], v: &DMatrix<f64>, lambda: f64) -> Result<WaldValue> {
        if theta.len() != self.p {
            return Err(Error::DimensionMismatch { expected: self.p, found: theta.len() });
        }
        let q = self.q();
        let gv = DVector::from_iterator(q, self.g.iter().map(|gi| gi.eval(theta)));
        let jac = DMatrix::from_fn(q, self.p, |i, j| self.jac[i][j].eval(theta));
        let m = &jac * v * jac.transpose();
        let (sol, rcond) = spd_solve(&m, &gv);
        match sol {
            Some(x) if rcond > RCOND_MIN => Ok(WaldValue { w: lambda * lambda * gv.dot(&x), rcond }),
            _ => Err(Error::SingularAtPoint { rcond }),
        }
    }
}

pub fn wald_statistic(sys: &RestrictionSystem, input: &WaldInput) -> Result<WaldValue> {
    if input.theta_hat.len() != sys.p() {
        return Err(Error::DimensionMismatch { expected: sys.p(), found: input.theta_hat.len() });
    }
    WaldEvaluator::new(sys.g())?.eval(&input.theta_hat, &input.v_hat, input.lambda_t)
}

/// Replaces `g` by `M g` for a nonsingular `q x q` matrix `M`.
pub fn transform_restrictions(sys: &RestrictionSystem, m: &Matrix<Rational>) -> Result<RestrictionSystem> {
    let q = sys.q();
    if m.rows() != q || m.cols() != q {
        return Err(Error::DimensionMismatch { expected: q, found: m.rows() });
    }
    if m.det()?.is_zero() {
        return Err(Error::SingularMatrix);
    }
    let g = (0..q)
        .map(|i| {
            (0..q).fold(Polynomial::zero(sys.p()), |acc, k| &acc + &sys.g()[k].scale(m.get(i, k)))
        })
        .collect();
    RestrictionSystem::new(sys.p(), g, sys.theta_bar().map(<[Rational]>::to_vec), sys.v().cloned())
}

/// The single restriction `sum_i g_i^2 = 0`.
pub fn collapse_to_single(sys: &RestrictionSystem) -> Result<RestrictionSystem> {
    let g = sys.g().iter().fold(Polynomial::zero(sys.p()), |acc, gi| &acc + &(gi * gi));
    RestrictionSystem::new(sys.p(), vec![g], sys.theta_bar().map(<[Rational]>::to_vec), sys.v().cloned())
}
