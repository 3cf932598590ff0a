use num_traits::Zero;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::poly::{Degree, Polynomial};
use crate::scalar::Rational;

/// `q` polynomial restrictions `g(theta) = 0` on a `p`-dimensional
/// parameter, optionally with the null point `theta_bar` and the
/// asymptotic covariance `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictionSystem {
    p: usize,
    g: Vec<Polynomial>,
    theta_bar: Option<Vec<Rational>>,
    v: Option<Matrix<Rational>>,
}

impl RestrictionSystem {
    /// Validates `1 <= q <= p`, arities, the root condition at `theta_bar`
    /// and positive definiteness of `V`.
    pub fn new(
        p: usize,
        g: Vec<Polynomial>,
        theta_bar: Option<Vec<Rational>>,
        v: Option<Matrix<Rational>>,
    ) -> Result<Self> {
        if g.is_empty() {
            return Err(Error::InvalidSystem("at least one restriction is required".into()));
        }
        if g.len() > p {
            return Err(Error::InvalidSystem(format!("q={} exceeds p={p}", g.len())));
        }
        if let Some(bad) = g.iter().find(|gi| gi.nvars() != p) {
            return Err(Error::DimensionMismatch { expected: p, found: bad.nvars() });
        }
        if let Some(tb) = &theta_bar {
            if tb.len() != p {
                return Err(Error::DimensionMismatch { expected: p, found: tb.len() });
            }
            for (i, gi) in g.iter().enumerate() {
                if !gi.evaluate(tb)?.is_zero() {
                    return Err(Error::InvalidSystem(format!(
                        "theta_bar is not a root of restriction {}",
                        i + 1
                    )));
                }
            }
        }
        if let Some(v) = &v {
            if v.rows() != p || v.cols() != p {
                return Err(Error::DimensionMismatch { expected: p, found: v.rows() });
            }
            if !v.is_positive_definite() {
                return Err(Error::InvalidSystem("V is not symmetric positive definite".into()));
            }
        }
        Ok(Self { p, g, theta_bar, v })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.g.len()
    }

    pub fn g(&self) -> &[Polynomial] {
        &self.g
    }

    pub fn theta_bar(&self) -> Option<&[Rational]> {
        self.theta_bar.as_deref()
    }

    pub fn v(&self) -> Option<&Matrix<Rational>> {
        self.v.as_ref()
    }

    /// Maximal polynomial order among the restrictions.
    pub fn m(&self) -> u32 {
        self.g
            .iter()
            .map(|gi| match gi.degree() {
                Degree::Finite(d) => d,
                Degree::NegInfinity => 0,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn with_theta_bar(&self, theta_bar: Option<Vec<Rational>>) -> Result<Self> {
        Self::new(self.p, self.g.clone(), theta_bar, self.v.clone())
    }

    pub fn with_v(&self, v: Option<Matrix<Rational>>) -> Result<Self> {
        Self::new(self.p, self.g.clone(), self.theta_bar.clone(), v)
    }

    /// The same restrictions expressed in `y = theta - point`, so that the
    /// null point moves to the origin. `theta_bar` becomes the origin when
    /// it equals `point`, and is dropped otherwise.
    pub fn centered_at(&self, point: &[Rational]) -> Result<Self> {
        let g = self.g.iter().map(|gi| gi.translate(point)).collect::<Result<Vec<_>>>()?;
        let theta_bar = match &self.theta_bar {
            Some(tb) if tb.as_slice() == point => Some(vec![Rational::zero(); self.p]),
            _ => None,
        };
        Self::new(self.p, g, theta_bar, self.v.clone())
    }
}
