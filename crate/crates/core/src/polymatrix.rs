//! Matrices of polynomials: Jacobians, determinants, generic rank and the
//! minimal determinant order over column selections.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::poly::{Order, Polynomial};
use crate::scalar::{Rational, Scalar};
use crate::system::RestrictionSystem;

/// Default refusal threshold for the number of column selections examined
/// by [`alpha_bar`].
pub const SELECTION_CAP: u128 = 1_000_000;

const RANK_PROBES: u64 = 3;
const RANK_PROBE_SEED: u64 = 0x5eed_0f_9a2c;
const PROBE_MAX: i64 = 1_000_000_000;

/// Row-major matrix of polynomials sharing one ambient dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMatrix<F = Rational> {
    rows: usize,
    cols: usize,
    nvars: usize,
    entries: Vec<Polynomial<F>>,
}

impl<F: Scalar> PolyMatrix<F> {
    pub fn zeros(rows: usize, cols: usize, nvars: usize) -> Self {
        Self { rows, cols, nvars, entries: vec![Polynomial::zero(nvars); rows * cols] }
    }

    pub fn from_rows(nvars: usize, rows: Vec<Vec<Polynomial<F>>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let nrows = rows.len();
        let mut entries = Vec::with_capacity(nrows * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, found: row.len() });
            }
            for e in row {
                if e.nvars() != nvars {
                    return Err(Error::DimensionMismatch { expected: nvars, found: e.nvars() });
                }
                entries.push(e);
            }
        }
        Ok(Self { rows: nrows, cols, nvars, entries })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn get(&self, i: usize, j: usize) -> &Polynomial<F> {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, p: Polynomial<F>) {
        assert_eq!(p.nvars(), self.nvars, "polynomial arity mismatch");
        self.entries[i * self.cols + j] = p;
    }

    pub fn row(&self, i: usize) -> &[Polynomial<F>] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<Polynomial<F>>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Polynomial::is_zero)
    }

    pub fn map(&self, f: impl Fn(&Polynomial<F>) -> Polynomial<F>) -> Self {
        Self { entries: self.entries.iter().map(f).collect(), ..self.clone() }
    }

    /// `S * self` for a constant matrix `S`.
    pub fn left_mul(&self, s: &Matrix<F>) -> Result<Self> {
        if s.cols() != self.rows {
            return Err(Error::DimensionMismatch { expected: self.rows, found: s.cols() });
        }
        let mut out = Self::zeros(s.rows(), self.cols, self.nvars);
        for i in 0..s.rows() {
            for j in 0..self.cols {
                let mut acc = Polynomial::zero(self.nvars);
                for k in 0..self.rows {
                    let c = s.get(i, k);
                    if !c.is_zero() {
                        acc = &acc + &self.get(k, j).scale(c);
                    }
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        if (self.rows, self.cols, self.nvars) != (other.rows, other.cols, other.nvars) {
            return Err(Error::DimensionMismatch { expected: self.rows, found: other.rows });
        }
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| a - b).collect();
        Ok(Self { entries, ..self.clone() })
    }

    /// `self * v` for a vector of polynomials.
    pub fn mul_poly_vec(&self, v: &[Polynomial<F>]) -> Result<Vec<Polynomial<F>>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, found: v.len() });
        }
        (0..self.rows)
            .map(|i| {
                self.row(i).iter().zip(v).try_fold(Polynomial::zero(self.nvars), |acc, (a, b)| {
                    acc.checked_add(&a.checked_mul(b)?)
                })
            })
            .collect()
    }

    /// `self * y` where `y = (t1, ..., tp)`.
    pub fn mul_variables(&self) -> Result<Vec<Polynomial<F>>> {
        let y = (0..self.nvars).map(|j| Polynomial::var(self.nvars, j)).collect::<Result<Vec<_>>>()?;
        self.mul_poly_vec(&y)
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let rows = (0..self.rows).map(|i| cols.iter().map(|&j| self.get(i, j).clone()).collect()).collect();
        Self::from_rows(self.nvars, rows).expect("selection keeps arity")
    }

    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let rows = rows.iter().map(|&i| cols.iter().map(|&j| self.get(i, j).clone()).collect()).collect();
        Self::from_rows(self.nvars, rows).expect("selection keeps arity")
    }

    pub fn evaluate(&self, point: &[F]) -> Result<Matrix<F>> {
        let rows = (0..self.rows)
            .map(|i| self.row(i).iter().map(|e| e.evaluate(point)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Matrix::from_rows(rows)
    }

    /// Smallest lowest order over all entries.
    pub fn lowest_order(&self) -> Order {
        self.entries.iter().map(Polynomial::lowest_order).min().unwrap_or(Order::Infinity)
    }

    pub fn row_lowest_order(&self, i: usize) -> Order {
        self.row(i).iter().map(Polynomial::lowest_order).min().unwrap_or(Order::Infinity)
    }

    pub fn homogeneous_component(&self, k: u32) -> Self {
        self.map(|e| e.homogeneous_component(k))
    }

    pub fn to_f64(&self) -> PolyMatrix<f64> {
        PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            nvars: self.nvars,
            entries: self.entries.iter().map(Polynomial::to_f64).collect(),
        }
    }
}

impl<F: Scalar> fmt::Display for PolyMatrix<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "[")?;
            for (j, e) in self.row(i).iter().enumerate() {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{e}")?;
            }
            write!(f, "]")?;
        }
        write!(f, "]")
    }
}

impl<F: Scalar> Serialize for PolyMatrix<F> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<String>> =
            (0..self.rows).map(|i| self.row(i).iter().map(ToString::to_string).collect()).collect();
        rows.serialize(s)
    }
}

/// Jacobian of a list of polynomials: entry `(i, j)` is `d g_i / d t_j`.
pub fn jacobian_of<F: Scalar>(g: &[Polynomial<F>]) -> Result<PolyMatrix<F>> {
    let nvars = g.first().map_or(0, Polynomial::nvars);
    let rows = g
        .iter()
        .map(|gi| (0..nvars).map(|j| gi.differentiate(j)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    PolyMatrix::from_rows(nvars, rows)
}

pub fn jacobian(sys: &RestrictionSystem) -> PolyMatrix {
    jacobian_of(sys.g()).expect("restrictions share the system arity")
}

/// Exact determinant by cofactor expansion, memoized over column subsets.
pub fn poly_det<F: Scalar>(m: &PolyMatrix<F>) -> Result<Polynomial<F>> {
    let n = m.rows();
    if n != m.cols() {
        return Err(Error::NotSquare { rows: n, cols: m.cols() });
    }
    if n == 0 {
        return Ok(Polynomial::constant(m.nvars(), F::one()));
    }
    if n > 20 {
        return Err(Error::InvalidSystem(format!("determinant of a {n}x{n} polynomial matrix is too large")));
    }
    // minors[mask] = det of the leading popcount(mask) rows on columns `mask`
    let mut minors: Vec<Option<Polynomial<F>>> = vec![None; 1 << n];
    minors[0] = Some(Polynomial::constant(m.nvars(), F::one()));
    for mask in 0usize..(1 << n) {
        let Some(minor) = minors[mask].take() else { continue };
        let r = mask.count_ones() as usize;
        if r == n {
            minors[mask] = Some(minor);
            continue;
        }
        if !minor.is_zero() {
            for j in (0..n).filter(|j| mask & (1 << j) == 0) {
                let entry = m.get(r, j);
                if entry.is_zero() {
                    continue;
                }
                let mut term = &minor * entry;
                if (mask >> (j + 1)).count_ones() % 2 == 1 {
                    term = -&term;
                }
                let slot = &mut minors[mask | (1 << j)];
                *slot = Some(match slot.take() {
                    Some(acc) => &acc + &term,
                    None => term,
                });
            }
        }
    }
    Ok(minors[(1 << n) - 1].take().unwrap_or_else(|| Polynomial::zero(m.nvars())))
}

/// Lexicographically ordered `k`-subsets of `0..n`.
pub fn combinations(n: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut current: Option<Vec<usize>> = (k <= n).then(|| (0..k).collect());
    std::iter::from_fn(move || {
        let out = current.clone()?;
        let next = {
            let mut c = out.clone();
            let mut i = k;
            loop {
                if i == 0 {
                    break None;
                }
                i -= 1;
                if c[i] < n - k + i {
                    c[i] += 1;
                    for t in i + 1..k {
                        c[t] = c[t - 1] + 1;
                    }
                    break Some(c);
                }
            }
        };
        current = next;
        Some(out)
    })
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k) as u128;
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n as u128 - i) / (i + 1))
}

fn random_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<Rational> {
    (0..n)
        .map(|_| {
            let num = rng.gen_range(1..=PROBE_MAX);
            let den = rng.gen_range(1..=PROBE_MAX);
            Rational::new(num.into(), den.into())
        })
        .collect()
}

fn has_nonzero_minor(m: &PolyMatrix, k: usize) -> bool {
    combinations(m.rows(), k).any(|rows| {
        combinations(m.cols(), k).any(|cols| !poly_det(&m.select(&rows, &cols)).map_or(true, |d| d.is_zero()))
    })
}

/// Rank over the rational function field. Exact ranks at seeded random
/// rational points give a lower bound, which is then confirmed or raised by
/// symbolic minors.
pub fn generic_rank(m: &PolyMatrix) -> usize {
    let full = m.rows().min(m.cols());
    let mut rng = ChaCha8Rng::seed_from_u64(RANK_PROBE_SEED);
    let mut rank = 0;
    for _ in 0..RANK_PROBES {
        let point = random_point(&mut rng, m.nvars());
        let r = m.evaluate(&point).map_or(0, |v| v.rank());
        rank = rank.max(r);
        if rank == full {
            return rank;
        }
    }
    while rank < full && has_nonzero_minor(m, rank + 1) {
        rank += 1;
    }
    rank
}

/// Minimal lowest order of a `q x q` minor, with the lexicographically
/// first column selection attaining it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaBar {
    pub value: Order,
    pub columns: Option<Vec<usize>>,
}

/// Lowest order of `det(M_l)` for each column selection `l`, in
/// lexicographic order.
pub fn selection_orders(m: &PolyMatrix, cap: u128) -> Result<Vec<(Vec<usize>, Order)>> {
    let (q, p) = (m.rows(), m.cols());
    if q > p {
        return Err(Error::InvalidSystem(format!("q={q} exceeds p={p}")));
    }
    let count = binomial(p, q);
    if count > cap {
        return Err(Error::TooManySubmatrices { p, q, count, cap });
    }
    let selections: Vec<Vec<usize>> = combinations(p, q).collect();
    selections
        .into_par_iter()
        .map(|cols| {
            let det = poly_det(&m.select_columns(&cols))?;
            Ok((cols, det.lowest_order()))
        })
        .collect()
}

pub fn alpha_bar(m: &PolyMatrix, cap: u128) -> Result<AlphaBar> {
    let orders = selection_orders(m, cap)?;
    let best = orders
        .into_iter()
        .filter(|(_, o)| *o != Order::Infinity)
        .min_by_key(|(_, o)| *o);
    Ok(match best {
        Some((cols, value)) => AlphaBar { value, columns: Some(cols) },
        None => AlphaBar { value: Order::Infinity, columns: None },
    })
}
