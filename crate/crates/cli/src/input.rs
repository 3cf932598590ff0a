use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use singwald_core::parser::parse_system;
use singwald_core::scalar::parse_rational;
use singwald_core::{Error, Rational, RestrictionSystem, Scalar};

use crate::CliError;

/// A parsed system together with the SHA-256 of the file it came from.
pub struct LoadedSystem {
    pub system: RestrictionSystem,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn load_system(path: &Path) -> Result<LoadedSystem, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Usage(format!("{} is not valid UTF-8", path.display())))?;
    Ok(LoadedSystem { system: parse_system(&text)?, sha256: sha256_hex(&bytes) })
}

fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| c.is_whitespace() || c == ',').filter(|w| !w.is_empty())
}

fn bad(flag: &str, word: &str) -> CliError {
    CliError::Usage(format!("{flag}: cannot read '{word}' as a number"))
}

pub fn rational_vector(flag: &str, text: &str) -> Result<Vec<Rational>, CliError> {
    words(text).map(|w| parse_rational(w).ok_or_else(|| bad(flag, w))).collect()
}

pub fn float_vector(flag: &str, text: &str) -> Result<Vec<f64>, CliError> {
    words(text)
        .map(|w| match w.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => parse_rational(w).map(|r| r.to_f64()).ok_or_else(|| bad(flag, w)),
        })
        .collect()
}

/// Rows separated by `;`, entries by whitespace or commas.
pub fn float_matrix(flag: &str, text: &str, n: usize) -> Result<DMatrix<f64>, CliError> {
    let rows = text.split(';').map(|r| float_vector(flag, r)).collect::<Result<Vec<_>, _>>()?;
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Usage(format!("{flag}: expected a {n}x{n} matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// `--vhat` if given, else the system's `V`, else the identity.
pub fn covariance(flag: Option<&str>, sys: &RestrictionSystem) -> Result<DMatrix<f64>, CliError> {
    let p = sys.p();
    match (flag, sys.v()) {
        (Some(text), _) => float_matrix("--vhat", text, p),
        (None, Some(v)) => Ok(v.to_dmatrix()),
        (None, None) => Ok(DMatrix::identity(p, p)),
    }
}

/// The system with `--theta-bar` applied, if given.
pub fn with_theta_bar(sys: RestrictionSystem, flag: Option<&str>) -> Result<RestrictionSystem, CliError> {
    match flag {
        Some(text) => {
            let tb = rational_vector("--theta-bar", text)?;
            if tb.len() != sys.p() {
                return Err(Error::DimensionMismatch { expected: sys.p(), found: tb.len() }.into());
            }
            Ok(sys.with_theta_bar(Some(tb))?)
        }
        None => Ok(sys),
    }
}

/// Estimates read from a JSON file, e.g.
/// `{"theta_hat": [0.1, -0.2], "vhat": [[1, 0], [0, 1]], "T": 500}`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateFile {
    pub theta_hat: Option<Vec<f64>>,
    pub vhat: Option<Vec<Vec<f64>>>,
    #[serde(rename = "T")]
    pub t: Option<f64>,
}

pub fn load_estimate(path: &Path) -> Result<(EstimateFile, String), CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let est = serde_json::from_slice(&bytes).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok((est, sha256_hex(&bytes)))
}

/// Estimate, covariance and sample size from the flags, falling back to
/// the estimate file, then (for the covariance) to the system.
pub struct Estimates {
    pub theta_hat: Vec<f64>,
    pub v_hat: DMatrix<f64>,
    pub t: f64,
    pub sha256: Option<String>,
}

pub fn estimates(
    sys: &RestrictionSystem,
    file: Option<&Path>,
    theta_hat: Option<&str>,
    vhat: Option<&str>,
    t: Option<f64>,
) -> Result<Estimates, CliError> {
    let (est, sha256) = match file {
        Some(path) => {
            let (est, sha) = load_estimate(path)?;
            (est, Some(sha))
        }
        None => (EstimateFile::default(), None),
    };
    let theta_hat = match (theta_hat, est.theta_hat) {
        (Some(text), _) => float_vector("--theta-hat", text)?,
        (None, Some(v)) => v,
        (None, None) => return Err(CliError::Usage("--theta-hat or an estimate file is required".into())),
    };
    let v_hat = match (vhat, est.vhat) {
        (None, Some(rows)) => {
            let p = sys.p();
            if rows.len() != p || rows.iter().any(|r| r.len() != p) {
                return Err(CliError::Usage(format!("vhat: expected a {p}x{p} matrix")));
            }
            DMatrix::from_fn(p, p, |i, j| rows[i][j])
        }
        (flag, _) => covariance(flag, sys)?,
    };
    let t = t.or(est.t).ok_or_else(|| CliError::Usage("--T or an estimate file with \"T\" is required".into()))?;
    Ok(Estimates { theta_hat, v_hat, t, sha256 })
}
