use serde::Serialize;
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Everything a run prints: provenance first, then the result.
#[derive(Serialize)]
pub struct Envelope {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub input_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate_sha256: Option<String>,
    pub seed: Option<u64>,
    pub config: Value,
    pub result: Value,
}

impl Envelope {
    pub fn new(command: &'static str, config: &impl Serialize, result: &impl Serialize) -> Result<Self, CliError> {
        Ok(Self {
            tool: "wald",
            version: env!("CARGO_PKG_VERSION"),
            command,
            input_sha256: None,
            estimate_sha256: None,
            seed: None,
            config: serde_json::to_value(config).map_err(json_err)?,
            result: serde_json::to_value(result).map_err(json_err)?,
        })
    }

    pub fn input(mut self, sha256: &str) -> Self {
        self.input_sha256 = Some(sha256.to_owned());
        self
    }

    pub fn estimate(mut self, sha256: Option<String>) -> Self {
        self.estimate_sha256 = sha256;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Json => serde_json::to_string_pretty(self).map(|s| s + "\n").map_err(json_err),
            Format::Csv => self.render_csv(),
        }
    }

    /// Provenance as `#` comment lines, then either the `table` rows of the
    /// result or its flattened `key,value` pairs.
    fn render_csv(&self) -> Result<String, CliError> {
        let mut out = format!("# tool={} version={} command={}\n", self.tool, self.version, self.command);
        if let Some(h) = &self.input_sha256 {
            out.push_str(&format!("# input_sha256={h}\n"));
        }
        if let Some(h) = &self.estimate_sha256 {
            out.push_str(&format!("# estimate_sha256={h}\n"));
        }
        if let Some(s) = self.seed {
            out.push_str(&format!("# seed={s}\n"));
        }
        out.push_str(&format!("# config={}\n", serde_json::to_string(&self.config).map_err(json_err)?));
        let mut w = csv::Writer::from_writer(Vec::new());
        match self.result.get("table").and_then(Value::as_array) {
            Some(rows) if !rows.is_empty() => {
                let header: Vec<String> = rows[0].as_object().map(|o| o.keys().cloned().collect()).unwrap_or_default();
                w.write_record(&header).map_err(csv_err)?;
                for row in rows {
                    let cells: Vec<String> = header.iter().map(|k| scalar_text(&row[k])).collect();
                    w.write_record(&cells).map_err(csv_err)?;
                }
            }
            _ => {
                w.write_record(["key", "value"]).map_err(csv_err)?;
                let mut flat = Vec::new();
                flatten("", &self.result, &mut flat);
                for (k, v) in flat {
                    w.write_record([k, v]).map_err(csv_err)?;
                }
            }
        }
        let body = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        out.push_str(&String::from_utf8(body).expect("csv output is UTF-8"));
        Ok(out)
    }
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_owned() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                flatten(&key(k), v, out);
            }
        }
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                flatten(&key(&i.to_string()), item, out);
            }
        }
        other => out.push((prefix.to_owned(), scalar_text(other))),
    }
}

fn json_err(e: serde_json::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}
