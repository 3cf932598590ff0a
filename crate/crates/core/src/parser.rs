//! Reader and printer for `.wrs` restriction-system files.
//!
//! ```text
//! # comments and blank lines are ignored
//! p=2 q=2
//! t1^2
//! t1*t2^2
//! theta_bar= 0 1
//! V=
//! 1 0
//! 0 1
//! ```
//!
//! Restriction lines use integer or `a/b` literals, variables `t1..tp`,
//! `+ - * ^` and parentheses. `^` binds tightest and takes a non-negative
//! integer literal; unary minus binds tighter than `*`. The `theta_bar=`
//! and `V=` blocks hold `p` and `p*p` numbers (row-major) which may span
//! lines and may be decimals; both are stored exactly.

use crate::error::{Error, ParseError, Result};
use crate::linalg::Matrix;
use crate::poly::{Monomial, Polynomial};
use crate::scalar::{format_rational, parse_rational, Rational, Scalar};
use crate::system::RestrictionSystem;

const MAX_EXPONENT: u32 = 256;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(Rational),
    Var(usize),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col_offset: usize,
    nvars: usize,
    _src: &'a str,
}

impl<'a> Lexer<'a> {
    fn err(&self, col: usize, message: impl Into<String>) -> ParseError {
        ParseError { line: self.line, column: col + self.col_offset + 1, message: message.into() }
    }

    fn tokens(mut self) -> std::result::Result<Vec<(Tok, usize)>, ParseError> {
        let mut out = Vec::new();
        while self.pos < self.chars.len() {
            let c = self.chars[self.pos];
            let start = self.pos;
            if c.is_whitespace() {
                self.pos += 1;
                continue;
            }
            let tok = match c {
                '+' => Tok::Plus,
                '-' => Tok::Minus,
                '*' => Tok::Star,
                '^' => Tok::Caret,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '0'..='9' => {
                    let num = self.digits();
                    let mut text = num;
                    if self.peek() == Some('/') && self.peek_at(1).is_some_and(|d| d.is_ascii_digit()) {
                        self.pos += 1;
                        text = format!("{text}/{}", self.digits());
                    } else if self.peek() == Some('.') {
                        return Err(self.err(self.pos, "decimal literals are not allowed in restrictions; use a/b"));
                    }
                    let value = parse_rational(&text)
                        .ok_or_else(|| self.err(start, format!("invalid number '{text}'")))?;
                    out.push((Tok::Num(value), start));
                    continue;
                }
                't' => {
                    self.pos += 1;
                    let digits = self.digits();
                    let index: usize = digits
                        .parse()
                        .map_err(|_| self.err(start, "expected a variable index after 't'"))?;
                    if index == 0 || index > self.nvars {
                        return Err(self.err(
                            start,
                            format!("variable t{index} outside t1..t{}", self.nvars),
                        ));
                    }
                    out.push((Tok::Var(index - 1), start));
                    continue;
                }
                other => return Err(self.err(start, format!("unexpected character '{other}'"))),
            };
            self.pos += 1;
            out.push((tok, start));
        }
        out.push((Tok::End, self.chars.len()));
        Ok(out)
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, k: usize) -> Option<char> {
        self.chars.get(self.pos + k).copied()
    }

    fn digits(&mut self) -> String {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    nvars: usize,
    line: usize,
    col_offset: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn err_here(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            column: self.toks[self.pos].1 + self.col_offset + 1,
            message: message.into(),
        }
    }

    fn expr(&mut self) -> std::result::Result<Polynomial, ParseError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.pos += 1;
                    acc = &acc + &self.term()?;
                }
                Tok::Minus => {
                    self.pos += 1;
                    acc = &acc - &self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> std::result::Result<Polynomial, ParseError> {
        let mut acc = self.unary()?;
        while *self.peek() == Tok::Star {
            self.pos += 1;
            acc = &acc * &self.unary()?;
        }
        Ok(acc)
    }

    fn unary(&mut self) -> std::result::Result<Polynomial, ParseError> {
        if *self.peek() == Tok::Minus {
            self.pos += 1;
            return Ok(-&self.unary()?);
        }
        self.power()
    }

    fn power(&mut self) -> std::result::Result<Polynomial, ParseError> {
        let base = self.atom()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.pos += 1;
        let e = match self.peek() {
            Tok::Num(n) if n.is_integer() => n.to_integer(),
            _ => return Err(self.err_here("exponent must be a non-negative integer literal")),
        };
        let e: u32 = e
            .try_into()
            .ok()
            .filter(|&e| e <= MAX_EXPONENT)
            .ok_or_else(|| self.err_here(format!("exponent exceeds {MAX_EXPONENT}")))?;
        self.pos += 1;
        Ok(base.pow(e))
    }

    fn atom(&mut self) -> std::result::Result<Polynomial, ParseError> {
        match self.peek().clone() {
            Tok::Num(n) => {
                self.pos += 1;
                Ok(Polynomial::constant(self.nvars, n))
            }
            Tok::Var(i) => {
                self.pos += 1;
                Ok(Polynomial::from_terms(self.nvars, [(Monomial::var(self.nvars, i), Rational::from_int(1))])
                    .expect("index checked by lexer"))
            }
            Tok::LParen => {
                self.pos += 1;
                let inner = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.err_here("expected ')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Tok::End => Err(self.err_here("unexpected end of expression")),
            other => Err(self.err_here(format!("unexpected {}", describe(&other)))),
        }
    }
}

fn describe(t: &Tok) -> &'static str {
    match t {
        Tok::Num(_) => "number",
        Tok::Var(_) => "variable",
        Tok::Plus => "'+'",
        Tok::Minus => "'-'",
        Tok::Star => "'*'",
        Tok::Caret => "'^'",
        Tok::LParen => "'('",
        Tok::RParen => "')'",
        Tok::End => "end of input",
    }
}

fn parse_poly_at(
    src: &str,
    nvars: usize,
    line: usize,
    col_offset: usize,
) -> std::result::Result<Polynomial, ParseError> {
    let lexer = Lexer { chars: src.chars().collect(), pos: 0, line, col_offset, nvars, _src: src };
    let toks = lexer.tokens()?;
    let mut parser = Parser { toks, pos: 0, nvars, line, col_offset };
    let poly = parser.expr()?;
    if *parser.peek() != Tok::End {
        return Err(parser.err_here(format!("unexpected {}", describe(parser.peek()))));
    }
    Ok(poly)
}

/// Parses one polynomial over `t1..t{nvars}`.
pub fn parse_polynomial(src: &str, nvars: usize) -> std::result::Result<Polynomial, ParseError> {
    parse_poly_at(src, nvars, 1, 0)
}

struct Line<'a> {
    number: usize,
    indent: usize,
    text: &'a str,
}

fn content_lines(text: &str) -> Vec<Line<'_>> {
    text.lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let body = raw.split('#').next().unwrap_or("");
            let trimmed = body.trim_start();
            let text = trimmed.trim_end();
            (!text.is_empty()).then(|| Line { number: i + 1, indent: body.len() - trimmed.len(), text })
        })
        .collect()
}

fn perr(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse(ParseError { line, column, message: message.into() })
}

fn parse_header(line: &Line<'_>) -> Result<(usize, usize)> {
    let compact: String = line.text.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || perr(line.number, line.indent + 1, "expected header 'p=<int> q=<int>'");
    let rest = compact.strip_prefix("p=").ok_or_else(bad)?;
    let (p, q) = rest.split_once("q=").ok_or_else(bad)?;
    let p: usize = p.parse().map_err(|_| bad())?;
    let q: usize = q.parse().map_err(|_| bad())?;
    if p == 0 {
        return Err(perr(line.number, line.indent + 1, "p must be positive"));
    }
    Ok((p, q))
}

fn push_numbers(values: &mut Vec<Rational>, line: &Line<'_>, offset: usize) -> Result<()> {
    let text = &line.text[offset..];
    let mut rest = text;
    while let Some(begin) = rest.find(|c: char| !c.is_whitespace()) {
        let word_end = rest[begin..].find(char::is_whitespace).map_or(rest.len(), |e| begin + e);
        let word = &rest[begin..word_end];
        let col = line.indent + offset + (text.len() - rest.len()) + begin + 1;
        let value =
            parse_rational(word).ok_or_else(|| perr(line.number, col, format!("invalid number '{word}'")))?;
        values.push(value);
        rest = &rest[word_end..];
    }
    Ok(())
}

/// Collects `count` numbers starting after the `key=` prefix of `lines[*idx]`.
fn read_numbers(lines: &[Line<'_>], idx: &mut usize, key: &str, count: usize) -> Result<Vec<Rational>> {
    let first = &lines[*idx];
    let mut values = Vec::with_capacity(count);
    push_numbers(&mut values, first, key.len())?;
    *idx += 1;
    while values.len() < count && *idx < lines.len() && !is_block_start(lines[*idx].text) {
        push_numbers(&mut values, &lines[*idx], 0)?;
        *idx += 1;
    }
    if values.len() != count {
        return Err(perr(
            first.number,
            first.indent + 1,
            format!("block '{key}' needs {count} numbers, found {}", values.len()),
        ));
    }
    Ok(values)
}

fn is_block_start(text: &str) -> bool {
    text.starts_with("theta_bar=") || text.starts_with("V=")
}

/// Parses and validates a `.wrs` document.
pub fn parse_system(text: &str) -> Result<RestrictionSystem> {
    let lines = content_lines(text);
    let header = lines.first().ok_or_else(|| perr(1, 1, "empty input; expected header 'p=<int> q=<int>'"))?;
    let (p, q) = parse_header(header)?;
    let mut idx = 1;
    let mut g = Vec::with_capacity(q);
    while g.len() < q {
        let line = lines.get(idx).filter(|l| !is_block_start(l.text)).ok_or_else(|| {
            perr(header.number, 1, format!("expected {q} restriction lines, found {}", g.len()))
        })?;
        g.push(parse_poly_at(line.text, p, line.number, line.indent)?);
        idx += 1;
    }
    let mut theta_bar = None;
    let mut v = None;
    while idx < lines.len() {
        let line = &lines[idx];
        if line.text.starts_with("theta_bar=") {
            if theta_bar.is_some() {
                return Err(perr(line.number, line.indent + 1, "duplicate theta_bar block"));
            }
            theta_bar = Some(read_numbers(&lines, &mut idx, "theta_bar=", p)?);
        } else if line.text.starts_with("V=") {
            if v.is_some() {
                return Err(perr(line.number, line.indent + 1, "duplicate V block"));
            }
            let flat = read_numbers(&lines, &mut idx, "V=", p * p)?;
            v = Some(Matrix::from_rows(flat.chunks(p).map(<[Rational]>::to_vec).collect())?);
        } else {
            return Err(perr(line.number, line.indent + 1, "unexpected content after the restriction lines"));
        }
    }
    RestrictionSystem::new(p, g, theta_bar, v)
}

/// Canonical text; `parse_system(format_system(s)) == s`.
pub fn format_system(sys: &RestrictionSystem) -> String {
    let mut out = format!("p={} q={}", sys.p(), sys.q());
    for gi in sys.g() {
        out.push('\n');
        out.push_str(&gi.to_string());
    }
    if let Some(tb) = sys.theta_bar() {
        out.push_str("\ntheta_bar=");
        for x in tb {
            out.push(' ');
            out.push_str(&format_rational(x));
        }
    }
    if let Some(v) = sys.v() {
        out.push_str("\nV=");
        for i in 0..v.rows() {
            out.push('\n');
            let row: Vec<String> = v.row(i).iter().map(format_rational).collect();
            out.push_str(&row.join(" "));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn bilinear_system() {
        let sys = parse_system("p=2 q=1\nt1*t2\n").unwrap();
        assert_eq!((sys.p(), sys.q()), (2, 1));
        assert_eq!(sys.g()[0].to_string(), "t1*t2");
    }

    #[test]
    fn two_restriction_system() {
        let sys = parse_system("p=2 q=2\nt1^2\nt1*t2^2").unwrap();
        assert_eq!(sys.g()[1].to_string(), "t1*t2^2");
        assert_eq!(sys.m(), 3);
    }

    #[test]
    fn double_star_is_rejected_at_second_star() {
        let err = parse_system("p=2 q=1\nt1 ** 2").unwrap_err();
        match err {
            Error::Parse(e) => assert_eq!((e.line, e.column), (2, 5), "{e}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn precedence() {
        assert_eq!(parse_polynomial("-t1^2", 1).unwrap().to_string(), "-t1^2");
        assert_eq!(parse_polynomial("2*-t1 + 3", 1).unwrap().to_string(), "-2*t1 + 3");
        assert_eq!(parse_polynomial("(t1 + 1)^2 - 1", 1).unwrap().to_string(), "t1^2 + 2*t1");
        assert_eq!(parse_polynomial("1/2*t1 - 3/6", 1).unwrap().to_string(), "1/2*t1 - 1/2");
    }

    #[test]
    fn rejects_non_polynomial_syntax() {
        for bad in ["t1^-1", "t1^t2", "t1^1/2", "0.5*t1", "t3", "t0", "(t1", "t1 t2", "t1 / 2", ""] {
            assert!(parse_polynomial(bad, 2).is_err(), "{bad} should fail");
        }
    }

    #[test]
    fn system_validation() {
        assert!(matches!(parse_system("p=1 q=2\nt1\nt1^2"), Err(Error::InvalidSystem(_))));
        assert!(matches!(
            parse_system("p=2 q=1\nt1*t2\ntheta_bar= 1 1"),
            Err(Error::InvalidSystem(_))
        ));
        assert!(parse_system("p=2 q=1\nt1*t2\ntheta_bar= 1 0").is_ok());
        assert!(matches!(
            parse_system("p=2 q=1\nt1*t2\nV=\n1 2\n2 1"),
            Err(Error::InvalidSystem(_))
        ));
        assert!(matches!(parse_system("p=2 q=2\nt1"), Err(Error::Parse(_))));
        assert!(matches!(parse_system("q=2 p=2\nt1"), Err(Error::Parse(_))));
        assert!(matches!(parse_system("p=2 q=1\nt1\nextra"), Err(Error::Parse(_))));
    }

    #[test]
    fn blocks_accept_decimals_and_span_lines() {
        let sys = parse_system("# ex\np=2 q=1\n  t1*t2  # bilinear\n\ntheta_bar= 0.5\n 0\nV= 2 0.25\n0.25 1").unwrap();
        assert_eq!(sys.theta_bar().unwrap(), &[q(1, 2), q(0, 1)]);
        assert_eq!(sys.v().unwrap().get(0, 1), &q(1, 4));
    }

    #[test]
    fn canonical_format() {
        let sys = parse_system("p=3 q=1\nt3^2 + t1^2 + t2^2").unwrap();
        assert_eq!(format_system(&sys), "p=3 q=1\nt1^2 + t2^2 + t3^2");
        let sys = parse_system("p=2 q=1\n0*t1 + t2").unwrap();
        assert_eq!(format_system(&sys), "p=2 q=1\nt2");
    }

    #[test]
    fn error_columns_account_for_indentation() {
        match parse_system("p=2 q=1\n   t1 + $").unwrap_err() {
            Error::Parse(e) => assert_eq!((e.line, e.column), (2, 9)),
            other => panic!("{other:?}"),
        }
    }

    fn arb_system() -> impl Strategy<Value = RestrictionSystem> {
        (1usize..=4).prop_flat_map(|p| {
            let term = (prop::collection::vec(0u32..=4, p), -9i64..=9, 1i64..=4);
            let poly = prop::collection::vec(term, 1..5).prop_map(move |ts| {
                Polynomial::from_terms(
                    p,
                    ts.into_iter().map(|(mut e, n, d)| {
                        // keep total degree <= 4
                        while e.iter().sum::<u32>() > 4 {
                            let k = e.iter().position(|&x| x > 0).unwrap();
                            e[k] -= 1;
                        }
                        (Monomial::new(e), q(n, d))
                    }),
                )
                .unwrap()
            });
            let diag = prop::collection::vec(1i64..=5, p);
            (1..=p, prop::collection::vec(poly, p), prop::option::of(diag)).prop_map(move |(nq, gs, d)| {
                let v = d.map(|d| Matrix::from_diagonal(&d.iter().map(|&x| q(x, 3)).collect::<Vec<_>>()));
                RestrictionSystem::new(p, gs.into_iter().take(nq).collect(), None, v).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn format_then_parse_is_identity(sys in arb_system()) {
            let text = format_system(&sys);
            let back = parse_system(&text).unwrap();
            prop_assert_eq!(back, sys);
        }
    }
}
