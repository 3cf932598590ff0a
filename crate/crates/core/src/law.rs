//! Sorted Monte Carlo samples with quantiles, Kolmogorov-Smirnov distances
//! and a binary column + JSON sidecar file format.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Provenance recorded next to a sample.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LawMeta {
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_bar: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_size: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalLaw {
    values: Vec<f64>,
    pub seed: u64,
    pub redraws: u64,
    pub meta: LawMeta,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    format: String,
    n: usize,
    seed: u64,
    redraws: u64,
    meta: LawMeta,
}

const FORMAT: &str = "f64-le";

impl EmpiricalLaw {
    /// Sorts `values`; they must be finite and non-negative.
    pub fn new(mut values: Vec<f64>, seed: u64, redraws: u64, meta: LawMeta) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("empty sample".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!("sample value {bad} is not a finite non-negative number")));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values, seed, redraws, meta })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Type-7 quantile (linear interpolation between order statistics).
    pub fn quantile(&self, gamma: f64) -> Result<f64> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {gamma}")));
        }
        let h = (self.values.len() - 1) as f64 * gamma;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(self.values.len() - 1);
        Ok(self.values[lo] + (h - lo as f64) * (self.values[hi] - self.values[lo]))
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5).expect("0.5 is a valid level")
    }

    /// Fraction of the sample at or below `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.values.partition_point(|&v| v <= x) as f64 / self.values.len() as f64
    }

    pub fn ks_distance(&self, other: &EmpiricalLaw) -> f64 {
        ks_two_sample(&self.values, &other.values)
    }

    pub fn ks_distance_cdf(&self, cdf: impl Fn(f64) -> f64) -> f64 {
        ks_one_sample(&self.values, cdf)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn sidecar_json(&self) -> String {
        let sidecar = Sidecar {
            format: FORMAT.into(),
            n: self.values.len(),
            seed: self.seed,
            redraws: self.redraws,
            meta: self.meta.clone(),
        };
        serde_json::to_string_pretty(&sidecar).expect("sidecar serializes")
    }

    /// Writes `<stem>.bin` and `<stem>.json`.
    pub fn write(&self, stem: &Path) -> std::io::Result<()> {
        fs::write(stem.with_extension("bin"), self.to_bytes())?;
        fs::write(stem.with_extension("json"), self.sidecar_json() + "\n")
    }

    pub fn read(stem: &Path) -> Result<Self> {
        let io = |e: std::io::Error| Error::Domain(format!("{}: {e}", stem.display()));
        let bytes = fs::read(stem.with_extension("bin")).map_err(io)?;
        let text = fs::read_to_string(stem.with_extension("json")).map_err(io)?;
        let sidecar: Sidecar =
            serde_json::from_str(&text).map_err(|e| Error::Domain(format!("bad sidecar: {e}")))?;
        if sidecar.format != FORMAT || bytes.len() != 8 * sidecar.n {
            return Err(Error::Domain("sample column does not match its sidecar".into()));
        }
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Self::new(values, sidecar.seed, sidecar.redraws, sidecar.meta)
    }
}

/// `sup |F_n - F|` for a sorted sample.
pub fn ks_one_sample(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

/// `sup |F_a - F_b|` for two sorted samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0_f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}
