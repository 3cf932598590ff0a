//! Sparse multivariate polynomials over a [`Scalar`] field.
//!
//! Terms are kept in a map keyed by exponent vector under graded
//! lexicographic order, so iteration and printing are deterministic.
//! Variables are indexed from 0 in the API and printed as `t1..tp`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{Rational, Scalar};

/// Exponent vector of a monomial `t1^e1 ... tp^ep`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Self(exponents)
    }

    pub fn one(nvars: usize) -> Self {
        Self(vec![0; nvars])
    }

    pub fn var(nvars: usize, index: usize) -> Self {
        let mut e = vec![0; nvars];
        e[index] = 1;
        Self(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    fn times(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

/// Graded lexicographic: total degree first, then exponents left to right.
impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, &e) in self.0.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                f.write_str("*")?;
            }
            first = false;
            if e == 1 {
                write!(f, "t{}", i + 1)?;
            } else {
                write!(f, "t{}^{}", i + 1, e)?;
            }
        }
        if first {
            f.write_str("1")?;
        }
        Ok(())
    }
}

/// Total degree; the zero polynomial has degree `NegInfinity`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Degree {
    NegInfinity,
    Finite(u32),
}

/// Lowest order of a nonzero homogeneous component; the zero polynomial
/// has order `Infinity`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Order {
    Finite(u32),
    Infinity,
}

impl Order {
    pub fn finite(self) -> Option<u32> {
        match self {
            Order::Finite(k) => Some(k),
            Order::Infinity => None,
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Order::Finite(k) => write!(f, "{k}"),
            Order::Infinity => f.write_str("inf"),
        }
    }
}

impl Serialize for Order {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Order::Finite(k) => s.serialize_u32(*k),
            Order::Infinity => s.serialize_str("inf"),
        }
    }
}

/// Sparse polynomial in `nvars` variables. Immutable once built: every
/// operation returns a new canonical value with no zero coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial<F = Rational> {
    nvars: usize,
    terms: BTreeMap<Monomial, F>,
}

impl<F: Scalar> Polynomial<F> {
    pub fn zero(nvars: usize) -> Self {
        Self { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: F) -> Self {
        Self::from_terms(nvars, [(Monomial::one(nvars), c)]).expect("constant has matching arity")
    }

    pub fn var(nvars: usize, index: usize) -> Result<Self> {
        if index >= nvars {
            return Err(Error::VariableOutOfRange { index, nvars });
        }
        Self::from_terms(nvars, [(Monomial::var(nvars, index), F::one())])
    }

    /// Builds a polynomial, summing repeated monomials and dropping zeros.
    pub fn from_terms(
        nvars: usize,
        terms: impl IntoIterator<Item = (Monomial, F)>,
    ) -> Result<Self> {
        let mut map: BTreeMap<Monomial, F> = BTreeMap::new();
        for (m, c) in terms {
            if m.nvars() != nvars {
                return Err(Error::DimensionMismatch { expected: nvars, found: m.nvars() });
            }
            let slot = map.entry(m).or_insert_with(F::zero);
            *slot = slot.clone() + c;
        }
        F::prune(&mut map);
        Ok(Self { nvars, terms: map })
    }

    fn from_map(nvars: usize, mut terms: BTreeMap<Monomial, F>) -> Self {
        F::prune(&mut terms);
        Self { nvars, terms }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Terms in ascending graded-lex order.
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, &F)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &Monomial) -> F {
        self.terms.get(m).cloned().unwrap_or_else(F::zero)
    }

    pub fn constant_term(&self) -> F {
        self.coeff(&Monomial::one(self.nvars))
    }

    pub fn degree(&self) -> Degree {
        self.terms.keys().next_back().map_or(Degree::NegInfinity, |m| Degree::Finite(m.degree()))
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.nvars != other.nvars {
            return Err(Error::DimensionMismatch { expected: self.nvars, found: other.nvars });
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut map = self.terms.clone();
        for (m, c) in &other.terms {
            let slot = map.entry(m.clone()).or_insert_with(F::zero);
            *slot = slot.clone() + c.clone();
        }
        Ok(Self::from_map(self.nvars, map))
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        self.checked_add(&other.scale(&-F::one()))
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut map: BTreeMap<Monomial, F> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let slot = map.entry(ma.times(mb)).or_insert_with(F::zero);
                *slot = slot.clone() + ca.clone() * cb.clone();
            }
        }
        Ok(Self::from_map(self.nvars, map))
    }

    pub fn scale(&self, c: &F) -> Self {
        let map = self.terms.iter().map(|(m, x)| (m.clone(), x.clone() * c.clone())).collect();
        Self::from_map(self.nvars, map)
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut out = Self::constant(self.nvars, F::one());
        for _ in 0..e {
            out = &out * self;
        }
        out
    }

    /// Partial derivative with respect to variable `var` (0-based).
    pub fn differentiate(&self, var: usize) -> Result<Self> {
        if var >= self.nvars {
            return Err(Error::VariableOutOfRange { index: var, nvars: self.nvars });
        }
        let map = self
            .terms
            .iter()
            .filter(|(m, _)| m.0[var] > 0)
            .map(|(m, c)| {
                let e = m.0[var];
                let mut exps = m.0.clone();
                exps[var] -= 1;
                (Monomial(exps), c.clone() * F::from_int(e as i64))
            })
            .collect();
        Ok(Self::from_map(self.nvars, map))
    }

    /// Term-by-term evaluation in the coefficient field.
    pub fn evaluate(&self, point: &[F]) -> Result<F> {
        if point.len() != self.nvars {
            return Err(Error::DimensionMismatch { expected: self.nvars, found: point.len() });
        }
        let mut acc = F::zero();
        for (m, c) in &self.terms {
            let mut term = c.clone();
            for (x, &e) in point.iter().zip(&m.0) {
                for _ in 0..e {
                    term = term * x.clone();
                }
            }
            acc = acc + term;
        }
        Ok(acc)
    }

    pub fn evaluate_f64(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.nvars {
            return Err(Error::DimensionMismatch { expected: self.nvars, found: point.len() });
        }
        Ok(self
            .terms
            .iter()
            .map(|(m, c)| {
                m.0.iter().zip(point).fold(c.to_f64(), |acc, (&e, &x)| acc * x.powi(e as i32))
            })
            .sum())
    }

    /// The degree-`k` homogeneous part.
    pub fn homogeneous_component(&self, k: u32) -> Self {
        let map = self
            .terms
            .iter()
            .filter(|(m, _)| m.degree() == k)
            .map(|(m, c)| (m.clone(), c.clone()))
            .collect();
        Self { nvars: self.nvars, terms: map }
    }

    /// Drops every homogeneous component of degree `<= k`.
    pub fn strip_orders_through(&self, k: u32) -> Self {
        let map = self
            .terms
            .iter()
            .filter(|(m, _)| m.degree() > k)
            .map(|(m, c)| (m.clone(), c.clone()))
            .collect();
        Self { nvars: self.nvars, terms: map }
    }

    pub fn is_homogeneous(&self) -> bool {
        let mut degrees = self.terms.keys().map(Monomial::degree);
        match degrees.next() {
            Some(d) => degrees.all(|x| x == d),
            None => true,
        }
    }

    pub fn lowest_order(&self) -> Order {
        // The first key in graded order has the smallest total degree.
        self.terms.keys().next().map_or(Order::Infinity, |m| Order::Finite(m.degree()))
    }

    /// The lowest-order homogeneous component, i.e. the limit of
    /// `lambda^k * P(y / lambda)` as `lambda` grows.
    pub fn leading_form(&self) -> Result<Self> {
        match self.lowest_order() {
            Order::Finite(k) => Ok(self.homogeneous_component(k)),
            Order::Infinity => Err(Error::ZeroPolynomial),
        }
    }

    /// Returns `Q(y) = P(A^{-1} y + shift)`, expanded.
    pub fn affine_substitute(&self, a: &Matrix<F>, shift: &[F]) -> Result<Self> {
        let n = self.nvars;
        if a.rows() != n || a.cols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: a.rows().max(a.cols()) });
        }
        if shift.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: shift.len() });
        }
        let inv = a.inverse()?;
        let linear: Vec<Self> = (0..n)
            .map(|j| {
                let terms = (0..n)
                    .map(|k| (Monomial::var(n, k), inv.get(j, k).clone()))
                    .chain(std::iter::once((Monomial::one(n), shift[j].clone())));
                Self::from_terms(n, terms).expect("arity checked")
            })
            .collect();
        self.compose(&linear)
    }

    /// Translation `P(y + shift)`.
    pub fn translate(&self, shift: &[F]) -> Result<Self> {
        self.affine_substitute(&Matrix::identity(self.nvars), shift)
    }

    /// Substitutes polynomial `subs[j]` for variable `j`.
    pub fn compose(&self, subs: &[Self]) -> Result<Self> {
        if subs.len() != self.nvars {
            return Err(Error::DimensionMismatch { expected: self.nvars, found: subs.len() });
        }
        let target = subs.first().map_or(self.nvars, Polynomial::nvars);
        if subs.iter().any(|s| s.nvars != target) {
            return Err(Error::DimensionMismatch { expected: target, found: self.nvars });
        }
        let mut powers: Vec<Vec<Self>> =
            subs.iter().map(|s| vec![Self::constant(target, F::one()), s.clone()]).collect();
        let mut out = Self::zero(target);
        for (m, c) in &self.terms {
            let mut term = Self::constant(target, c.clone());
            for (j, &e) in m.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                while powers[j].len() <= e as usize {
                    let next = &powers[j][powers[j].len() - 1] * &subs[j];
                    powers[j].push(next);
                }
                term = &term * &powers[j][e as usize];
            }
            out = &out + &term;
        }
        Ok(out)
    }

    pub fn map_coeffs<G: Scalar>(&self, f: impl Fn(&F) -> G) -> Polynomial<G> {
        let map = self.terms.iter().map(|(m, c)| (m.clone(), f(c))).collect();
        Polynomial::from_map(self.nvars, map)
    }

    pub fn to_f64(&self) -> Polynomial<f64> {
        self.map_coeffs(Scalar::to_f64)
    }

    /// Zeroes every coefficient whose magnitude is below `tau`.
    pub fn threshold(&self, tau: f64) -> Self {
        let map = self
            .terms
            .iter()
            .filter(|(_, c)| c.magnitude() >= tau)
            .map(|(m, c)| (m.clone(), c.clone()))
            .collect();
        Self { nvars: self.nvars, terms: map }
    }

    pub fn compile(&self) -> CompiledPoly {
        CompiledPoly::new(self)
    }
}

macro_rules! binop {
    ($tr:ident, $method:ident, $checked:ident) => {
        impl<F: Scalar> $tr<&Polynomial<F>> for &Polynomial<F> {
            type Output = Polynomial<F>;

            /// Panics on arity mismatch; use the `checked_` form for fallible input.
            fn $method(self, rhs: &Polynomial<F>) -> Polynomial<F> {
                self.$checked(rhs).expect("polynomial arity mismatch")
            }
        }
    };
}

binop!(Add, add, checked_add);
binop!(Sub, sub, checked_sub);
binop!(Mul, mul, checked_mul);

impl<F: Scalar> Neg for &Polynomial<F> {
    type Output = Polynomial<F>;

    fn neg(self) -> Polynomial<F> {
        self.scale(&-F::one())
    }
}

/// Canonical text: terms in descending graded-lex order, e.g.
/// `3*t1^2*t2 - 1/2*t3`. The zero polynomial prints as `0`.
impl<F: Scalar> fmt::Display for Polynomial<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (m, c)) in self.terms.iter().rev().enumerate() {
            let negative = c.is_negative();
            match (i, negative) {
                (0, true) => f.write_str("-")?,
                (0, false) => {}
                (_, true) => f.write_str(" - ")?,
                (_, false) => f.write_str(" + ")?,
            }
            let abs = c.format_abs();
            if m.is_constant() {
                f.write_str(&abs)?;
            } else if abs == "1" {
                write!(f, "{m}")?;
            } else {
                write!(f, "{abs}*{m}")?;
            }
        }
        Ok(())
    }
}

impl<F: Scalar> Serialize for Polynomial<F> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Binary64 evaluator with precomputed sparse exponent lists, for hot
/// Monte Carlo loops.
#[derive(Debug, Clone)]
pub struct CompiledPoly {
    nvars: usize,
    terms: Vec<(f64, Vec<(usize, i32)>)>,
}

impl CompiledPoly {
    pub fn new<F: Scalar>(p: &Polynomial<F>) -> Self {
        let terms = p
            .terms()
            .map(|(m, c)| {
                let factors = m
                    .exponents()
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(j, &e)| (j, e as i32))
                    .collect();
                (c.to_f64(), factors)
            })
            .collect();
        Self { nvars: p.nvars(), terms }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// `x` must have length `nvars`; not checked in release builds.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.nvars);
        self.terms
            .iter()
            .map(|(c, factors)| factors.iter().fold(*c, |acc, &(j, e)| acc * x[j].powi(e)))
            .sum()
    }
}
