//! Row-rescaling analysis of a polynomial Jacobian at a singular point.
//!
//! [`cldr_construct`] finds a nonsingular constant `S` and orders
//! `alpha_1 <= ... <= alpha_q` such that `diag(lambda^alpha_i) S G(y/lambda)`
//! tends to a finite matrix `Gbar(y)` with homogeneous rows. The system is
//! CLDR when `Gbar` keeps full row rank, which happens exactly when the
//! orders sum to `alpha_bar`. Otherwise the Wald statistic diverges.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::Zero;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::poly::{Degree, Monomial, Order, Polynomial};
use crate::polymatrix::{alpha_bar, generic_rank, jacobian_of, PolyMatrix, SELECTION_CAP};
use crate::scalar::{format_rational, Rational, Scalar};
use crate::system::RestrictionSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Classification {
    Cldr,
    DeficientRank,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Cldr => "CLDR",
            Classification::DeficientRank => "DeficientRank",
        })
    }
}

impl Serialize for Classification {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// One step of the recursion: the rows settled at order `order`, by
/// original restriction index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Stage {
    pub order: u32,
    pub rows: Vec<usize>,
}

/// Output of the recursion in either coefficient field.
#[derive(Debug, Clone)]
pub struct Reduction<F> {
    pub s: Matrix<F>,
    pub alpha: Vec<u32>,
    pub gbar: PolyMatrix<F>,
    pub stages: Vec<Stage>,
}

fn max_entry_degree<F: Scalar>(g: &PolyMatrix<F>) -> u32 {
    (0..g.rows())
        .flat_map(|i| g.row(i).iter().map(Polynomial::degree))
        .filter_map(|d| match d {
            Degree::Finite(d) => Some(d),
            Degree::NegInfinity => None,
        })
        .max()
        .unwrap_or(0)
}

struct BasisVector<F> {
    values: Vec<F>,
    pivot: usize,
    /// Coefficients over the current rows that produce `values`.
    combo: Vec<F>,
}

/// Runs the stage recursion on `g`. With `tol` set (binary64 estimates),
/// coefficient vectors below `tol` count as dependent and residual rows
/// are re-thresholded at `tol` after each elimination.
pub fn reduce<F: Scalar>(g: &PolyMatrix<F>, tol: Option<f64>) -> Result<Reduction<F>> {
    let q = g.rows();
    let nvars = g.nvars();
    let max_stages = (max_entry_degree(g) as usize + 1) * q.max(1);
    let mut rows: Vec<Vec<Polynomial<F>>> = g.to_rows();
    let mut comb: Vec<Vec<F>> = Matrix::<F>::identity(q).to_rows();
    let mut pending: Vec<usize> = (0..q).collect();
    let mut stages = Vec::new();
    let mut settled: Vec<(usize, u32, Vec<Polynomial<F>>)> = Vec::new();

    while !pending.is_empty() {
        if stages.len() >= max_stages {
            return Err(Error::StageLimit(max_stages));
        }
        if let Some(&zero) = pending.iter().find(|&&i| rows[i].iter().all(Polynomial::is_zero)) {
            return Err(Error::AnnihilatedRow { row: zero });
        }
        let k = pending
            .iter()
            .flat_map(|&i| rows[i].iter().map(Polynomial::lowest_order))
            .min()
            .and_then(Order::finite)
            .expect("pending rows are nonzero");

        let leading: Vec<Vec<Polynomial<F>>> = pending
            .iter()
            .map(|&i| rows[i].iter().map(|e| e.homogeneous_component(k)).collect())
            .collect();
        let mut index: BTreeMap<(usize, Monomial), usize> = BTreeMap::new();
        for row in &leading {
            for (j, e) in row.iter().enumerate() {
                for (m, _) in e.terms() {
                    let next = index.len();
                    index.entry((j, m.clone())).or_insert(next);
                }
            }
        }
        let dim = index.len();
        let as_vector = |row: &[Polynomial<F>]| {
            let mut v = vec![F::zero(); dim];
            for (j, e) in row.iter().enumerate() {
                for (m, c) in e.terms() {
                    v[index[&(j, m.clone())]] = c.clone();
                }
            }
            v
        };

        let mut basis: Vec<BasisVector<F>> = Vec::new();
        let mut stage_rows = Vec::new();
        let mut still_pending = Vec::new();
        for (pos, &i) in pending.iter().enumerate() {
            let mut v = as_vector(&leading[pos]);
            let mut t = vec![F::zero(); q];
            for b in &basis {
                let f = v[b.pivot].clone() / b.values[b.pivot].clone();
                if f.is_zero() {
                    continue;
                }
                for (x, y) in v.iter_mut().zip(&b.values) {
                    *x = x.clone() - f.clone() * y.clone();
                }
                for (x, y) in t.iter_mut().zip(&b.combo) {
                    *x = x.clone() - f.clone() * y.clone();
                }
            }
            let largest = v.iter().fold(0.0_f64, |m, x| m.max(x.magnitude()));
            let dependent = match tol {
                Some(tau) => largest < tau,
                None => v.iter().all(Zero::is_zero),
            };
            if dependent {
                // Row i minus its expansion in the stage pivots loses its order-k part.
                let mut new_row = rows[i].clone();
                let mut new_comb = comb[i].clone();
                for (j, tj) in t.iter().enumerate().filter(|(_, tj)| !tj.is_zero()) {
                    for (x, y) in new_row.iter_mut().zip(&rows[j]) {
                        *x = &*x + &y.scale(tj);
                    }
                    for (x, y) in new_comb.iter_mut().zip(&comb[j]) {
                        *x = x.clone() + tj.clone() * y.clone();
                    }
                }
                rows[i] = new_row
                    .iter()
                    .map(|e| {
                        let e = e.strip_orders_through(k);
                        match tol {
                            Some(tau) => e.threshold(tau),
                            None => e,
                        }
                    })
                    .collect();
                comb[i] = new_comb;
                still_pending.push(i);
            } else {
                let pivot = if F::EXACT {
                    v.iter().position(|x| !x.is_zero()).expect("independent vector is nonzero")
                } else {
                    (0..dim).fold(0, |b, j| if v[j].magnitude() > v[b].magnitude() { j } else { b })
                };
                t[i] = t[i].clone() + F::one();
                basis.push(BasisVector { values: v, pivot, combo: t });
                stage_rows.push(i);
                settled.push((i, k, leading[pos].clone()));
            }
        }
        stages.push(Stage { order: k, rows: stage_rows });
        pending = still_pending;
    }

    let s = Matrix::from_rows(settled.iter().map(|(i, _, _)| comb[*i].clone()).collect())?;
    let alpha = settled.iter().map(|(_, k, _)| *k).collect();
    let gbar = PolyMatrix::from_rows(nvars, settled.into_iter().map(|(_, _, r)| r).collect())?;
    Ok(Reduction { s, alpha, gbar, stages })
}

/// Result of the exact analysis of a Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct CldrAnalysis {
    pub s: Matrix<Rational>,
    pub alpha: Vec<u32>,
    pub alpha_bar: Order,
    /// Column selection attaining `alpha_bar`, if finite.
    pub alpha_bar_columns: Option<Vec<usize>>,
    /// Limit matrix `Gbar`; row `i` is homogeneous of degree `alpha_i`.
    pub gbar_matrix: PolyMatrix,
    /// Diagonal of `Lambda`, `1 / (alpha_i + 1)`.
    pub lambda: Vec<Rational>,
    pub classification: Classification,
    /// Leading restriction forms, filled by [`build_gbar`].
    pub gbar: Option<Vec<Polynomial>>,
    pub stages: Vec<Stage>,
}

impl CldrAnalysis {
    pub fn q(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha_sum(&self) -> u32 {
        self.alpha.iter().sum()
    }

    pub fn min_alpha(&self) -> u32 {
        self.alpha.iter().copied().min().unwrap_or(0)
    }

    pub fn is_cldr(&self) -> bool {
        self.classification == Classification::Cldr
    }
}

impl Serialize for CldrAnalysis {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            classification: Classification,
            alpha: &'a [u32],
            alpha_bar: Order,
            alpha_bar_columns: Option<Vec<usize>>,
            #[serde(rename = "S")]
            s: Vec<Vec<String>>,
            #[serde(rename = "Lambda")]
            lambda: Vec<String>,
            #[serde(rename = "Gbar")]
            gbar_matrix: &'a PolyMatrix,
            #[serde(rename = "gbar", skip_serializing_if = "Option::is_none")]
            gbar: Option<Vec<String>>,
            stages: &'a [Stage],
        }
        Repr {
            classification: self.classification,
            alpha: &self.alpha,
            alpha_bar: self.alpha_bar,
            alpha_bar_columns: self.alpha_bar_columns.as_ref().map(|c| c.iter().map(|j| j + 1).collect()),
            s: self.s.to_rows().iter().map(|r| r.iter().map(format_rational).collect()).collect(),
            lambda: self.lambda.iter().map(format_rational).collect(),
            gbar_matrix: &self.gbar_matrix,
            gbar: self.gbar.as_ref().map(|g| g.iter().map(ToString::to_string).collect()),
            stages: &self.stages,
        }
        .serialize(s)
    }
}

pub fn cldr_construct(g: &PolyMatrix) -> Result<CldrAnalysis> {
    cldr_construct_capped(g, SELECTION_CAP)
}

/// [`cldr_construct`] with an explicit cap on the number of `q x q` column
/// selections examined for `alpha_bar`.
pub fn cldr_construct_capped(g: &PolyMatrix, cap: u128) -> Result<CldrAnalysis> {
    let (q, p) = (g.rows(), g.cols());
    if q == 0 || q > p {
        return Err(Error::InvalidSystem(format!("need 1 <= q <= p, got q={q}, p={p}")));
    }
    let rank = generic_rank(g);
    if rank < q {
        return Err(Error::DeficientGenericRank { rank, rows: q });
    }
    let red = reduce(g, None)?;
    let ab = alpha_bar(g, cap)?;
    let sum: u32 = red.alpha.iter().sum();
    let sum_matches = ab.value == Order::Finite(sum);
    let full = generic_rank(&red.gbar) == q;
    if sum_matches != full {
        return Err(Error::MismatchedAnalysis(format!(
            "order sum {sum} vs alpha_bar {} disagrees with the rank of Gbar",
            ab.value
        )));
    }
    let lambda = red.alpha.iter().map(|&a| Rational::new(1.into(), (a + 1).into())).collect();
    Ok(CldrAnalysis {
        s: red.s,
        alpha: red.alpha,
        alpha_bar: ab.value,
        alpha_bar_columns: ab.columns,
        gbar_matrix: red.gbar,
        lambda,
        classification: if full { Classification::Cldr } else { Classification::DeficientRank },
        gbar: None,
        stages: red.stages,
    })
}

fn check_shape(g: &PolyMatrix, a: &CldrAnalysis) -> Result<()> {
    let q = g.rows();
    if a.q() != q || a.s.rows() != q || a.gbar_matrix.cols() != g.cols() || a.gbar_matrix.nvars() != g.nvars() {
        return Err(Error::MismatchedAnalysis(format!(
            "analysis for {}x{} does not fit a {}x{} matrix",
            a.gbar_matrix.rows(),
            a.gbar_matrix.cols(),
            q,
            g.cols()
        )));
    }
    Ok(())
}

/// `Rbar = S G - Gbar`; row `i` only has terms of order above `alpha_i`.
pub fn residual(g: &PolyMatrix, a: &CldrAnalysis) -> Result<PolyMatrix> {
    check_shape(g, a)?;
    let r = g.left_mul(&a.s)?.checked_sub(&a.gbar_matrix)?;
    for (i, &ai) in a.alpha.iter().enumerate() {
        if r.row_lowest_order(i) <= Order::Finite(ai) {
            return Err(Error::MismatchedAnalysis(format!("residual row {} has order <= {ai}", i + 1)));
        }
    }
    Ok(r)
}

/// Leading restriction forms `gbar = Lambda Gbar y`, cross-checked against
/// the degree `alpha_i + 1` part of `(S g)_i`. `g` must vanish at the origin.
pub fn build_gbar(g: &[Polynomial], a: &CldrAnalysis) -> Result<Vec<Polynomial>> {
    if let Some(row) = g.iter().position(|gi| !gi.constant_term().is_zero()) {
        return Err(Error::NonzeroAtOrigin { row });
    }
    if g.len() != a.q() || g.iter().any(|gi| gi.nvars() != a.gbar_matrix.nvars()) {
        return Err(Error::MismatchedAnalysis("restriction count or arity differs from the analysis".into()));
    }
    let gy = a.gbar_matrix.mul_variables()?;
    let mut out = Vec::with_capacity(g.len());
    for (i, (row, lam)) in gy.iter().zip(&a.lambda).enumerate() {
        let euler = row.scale(lam);
        let sg = (0..g.len()).fold(Polynomial::zero(euler.nvars()), |acc, k| &acc + &g[k].scale(a.s.get(i, k)));
        if sg.homogeneous_component(a.alpha[i] + 1) != euler {
            return Err(Error::MismatchedAnalysis(format!(
                "Euler form of row {} differs from the order-{} part of (S g)",
                i + 1,
                a.alpha[i] + 1
            )));
        }
        out.push(euler);
    }
    Ok(out)
}

/// Restrictions of `sys` re-expressed around `theta_bar` (or the origin when
/// none is given), so that the null point is `y = 0`.
pub fn centered_restrictions(sys: &RestrictionSystem) -> Result<Vec<Polynomial>> {
    match sys.theta_bar() {
        Some(tb) => sys.g().iter().map(|gi| gi.translate(tb)).collect(),
        None => Ok(sys.g().to_vec()),
    }
}

/// Full analysis at the system's null point: Jacobian, recursion and `gbar`.
pub fn analyze(sys: &RestrictionSystem) -> Result<CldrAnalysis> {
    let g = centered_restrictions(sys)?;
    if let Some(row) = g.iter().position(|gi| !gi.constant_term().is_zero()) {
        return Err(Error::NonzeroAtOrigin { row });
    }
    let jac = jacobian_of(&g)?;
    let mut a = cldr_construct(&jac)?;
    a.gbar = Some(build_gbar(&g, &a)?);
    Ok(a)
}

/// Behaviour of `diag(lambda^a_i) S G(y/lambda)` for a given sharing rule.
#[derive(Debug, Clone, PartialEq)]
pub enum SharingLimit {
    /// Some row has terms of order below its share.
    NoFiniteLimit,
    Singular(PolyMatrix),
    Nonsingular(PolyMatrix),
}

pub fn sharing_limit(g: &PolyMatrix, s: &Matrix<Rational>, shares: &[u32]) -> Result<SharingLimit> {
    if shares.len() != g.rows() {
        return Err(Error::DimensionMismatch { expected: g.rows(), found: shares.len() });
    }
    if s.det()?.is_zero() {
        return Err(Error::SingularMatrix);
    }
    let sg = g.left_mul(s)?;
    let mut rows = Vec::with_capacity(g.rows());
    for (i, &a) in shares.iter().enumerate() {
        if sg.row_lowest_order(i) < Order::Finite(a) {
            return Ok(SharingLimit::NoFiniteLimit);
        }
        rows.push(sg.row(i).iter().map(|e| e.homogeneous_component(a)).collect());
    }
    let limit = PolyMatrix::from_rows(g.nvars(), rows)?;
    Ok(if generic_rank(&limit) == g.rows() {
        SharingLimit::Nonsingular(limit)
    } else {
        SharingLimit::Singular(limit)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_polynomial, parse_system};
    use crate::polymatrix::jacobian;

    fn pm(nvars: usize, rows: &[&[&str]]) -> PolyMatrix {
        PolyMatrix::from_rows(
            nvars,
            rows.iter().map(|r| r.iter().map(|s| parse_polynomial(s, nvars).unwrap()).collect()).collect(),
        )
        .unwrap()
    }

    fn rat(n: i64) -> Rational {
        Rational::from_int(n)
    }

    fn example_41() -> PolyMatrix {
        pm(4, &[&["2*t1", "0", "3*t3^2", "0"], &["0", "2*t2", "0", "3*t4^2"], &["2*t1", "2*t2", "0", "0"]])
    }

    fn example_42() -> PolyMatrix {
        pm(2, &[&["t1", "0"], &["(1 + t2)^2", "t1*(1 + t2)"]])
    }

    #[test]
    fn example_41_is_cldr() {
        let g = example_41();
        let a = cldr_construct(&g).unwrap();
        assert_eq!(a.alpha, vec![1, 1, 2]);
        assert_eq!(a.alpha_bar, Order::Finite(4));
        assert_eq!(a.classification, Classification::Cldr);
        assert_eq!(a.s, Matrix::from_rows(vec![vec![rat(1), rat(0), rat(0)], vec![rat(0), rat(1), rat(0)], vec![rat(-1), rat(-1), rat(1)]]).unwrap());
        let r = residual(&g, &a).unwrap();
        assert!(r.row(2).iter().all(Polynomial::is_zero));
        assert_eq!(a.gbar_matrix.row(2)[2], parse_polynomial("-3*t3^2", 4).unwrap());
    }

    #[test]
    fn example_42_is_deficient() {
        let a = cldr_construct(&example_42()).unwrap();
        assert_eq!(a.alpha, vec![0, 1]);
        assert_eq!(a.alpha_bar, Order::Finite(2));
        assert_eq!(a.classification, Classification::DeficientRank);
        assert_eq!(a.gbar_matrix, pm(2, &[&["1", "0"], &["t1", "0"]]));
        assert_eq!(generic_rank(&a.gbar_matrix), 1);
    }

    #[test]
    fn example_42_sharing_rules_all_fail() {
        let g = example_42();
        let candidates = [
            Matrix::identity(2),
            Matrix::from_rows(vec![vec![rat(0), rat(1)], vec![rat(1), rat(0)]]).unwrap(),
            Matrix::from_rows(vec![vec![rat(2), rat(-1)], vec![rat(3), rat(5)]]).unwrap(),
            Matrix::from_rows(vec![vec![rat(1), rat(1)], vec![rat(0), rat(1)]]).unwrap(),
        ];
        for shares in [[1, 1], [2, 0], [0, 2]] {
            for s in &candidates {
                let out = sharing_limit(&g, s, &shares).unwrap();
                assert!(!matches!(out, SharingLimit::Nonsingular(_)), "{shares:?} with {s:?}");
            }
        }
        // with S = I the first and third rules blow up
        assert_eq!(sharing_limit(&g, &Matrix::identity(2), &[1, 1]).unwrap(), SharingLimit::NoFiniteLimit);
        assert_eq!(sharing_limit(&g, &Matrix::identity(2), &[0, 2]).unwrap(), SharingLimit::NoFiniteLimit);
    }

    #[test]
    fn example_43_depends_on_null_point() {
        let sys = parse_system("p=2 q=2\nt1^2\nt1*t2^2\ntheta_bar= 0 0").unwrap();
        let a = analyze(&sys).unwrap();
        assert_eq!(a.alpha, vec![1, 2]);
        assert_eq!(a.alpha_bar, Order::Finite(3));
        assert!(a.is_cldr());
        let gbar: Vec<String> = a.gbar.unwrap().iter().map(ToString::to_string).collect();
        assert_eq!(gbar, ["t1^2", "t1*t2^2"]);

        let sys = sys.with_theta_bar(Some(vec![rat(0), rat(1)])).unwrap();
        let a = analyze(&sys).unwrap();
        assert_eq!(a.classification, Classification::DeficientRank);
        assert_eq!(a.alpha, vec![0, 1]);
    }

    #[test]
    fn single_restrictions_and_euler_forms() {
        let a = analyze(&parse_system("p=1 q=1\nt1^2").unwrap()).unwrap();
        assert_eq!(a.gbar_matrix, pm(1, &[&["2*t1"]]));
        assert_eq!(a.lambda, vec![Rational::new(1.into(), 2.into())]);
        assert_eq!(a.gbar.unwrap()[0], parse_polynomial("t1^2", 1).unwrap());

        let a = analyze(&parse_system("p=2 q=1\nt1*t2").unwrap()).unwrap();
        assert_eq!(a.gbar.unwrap()[0], parse_polynomial("t1*t2", 2).unwrap());

        let a = analyze(&parse_system("p=2 q=1\nt1*t2\ntheta_bar= 1 0").unwrap()).unwrap();
        assert_eq!(a.alpha, vec![0]);
        assert_eq!(a.gbar.unwrap()[0], parse_polynomial("t2", 2).unwrap());
    }

    #[test]
    fn preconditions() {
        let zero_row = pm(2, &[&["t1", "0"], &["0", "0"]]);
        assert!(matches!(cldr_construct(&zero_row), Err(Error::DeficientGenericRank { rank: 1, rows: 2 })));
        let sys = parse_system("p=2 q=1\nt1*t2 + 1").unwrap();
        assert!(matches!(analyze(&sys), Err(Error::NonzeroAtOrigin { row: 0 })));
        let a = cldr_construct(&example_41()).unwrap();
        assert!(matches!(residual(&example_42(), &a), Err(Error::MismatchedAnalysis(_))));
    }

    #[test]
    fn linear_jacobian_has_zero_orders() {
        let sys = parse_system("p=3 q=2\nt1 + t2^2\nt3 - t1*t2").unwrap();
        let g = jacobian(&sys);
        let a = cldr_construct(&g).unwrap();
        assert_eq!(a.alpha, vec![0, 0]);
        assert_eq!(a.alpha_bar, Order::Finite(0));
        let r = residual(&g, &a).unwrap();
        assert!((0..2).all(|i| r.row(i).iter().all(|e| e.constant_term().is_zero())));
    }

    #[test]
    fn json_shape() {
        let a = analyze(&parse_system("p=2 q=2\nt1^2\nt1*t2^2").unwrap()).unwrap();
        let v = serde_json::to_value(&a).unwrap();
        assert_eq!(v["classification"], "CLDR");
        assert_eq!(v["alpha"], serde_json::json!([1, 2]));
        assert_eq!(v["alpha_bar"], 3);
        assert_eq!(v["Lambda"], serde_json::json!(["1/2", "1/3"]));
        assert_eq!(v["gbar"], serde_json::json!(["t1^2", "t1*t2^2"]));
        assert_eq!(v["S"][0][0], "1");
    }
}
