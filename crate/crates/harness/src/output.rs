//! Deterministic CSV rendering.

use crate::config::ExperimentConfig;
use crate::{HarnessError, Result};

/// Fixed-precision decimal, identical across runs and platforms.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.9}")
    } else if x > 0.0 {
        "inf".into()
    } else if x < 0.0 {
        "-inf".into()
    } else {
        "nan".into()
    }
}

/// `10 log10(x)` via [`num`].
pub fn db(x: f64) -> String {
    num(10.0 * x.log10())
}

/// Header plus rows, rendered after a provenance comment line.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str], rows: Vec<Vec<String>>) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows }
    }

    /// `# config_hash=…, seeds=…, version=…` followed by the CSV body.
    pub fn render(&self, cfg: &ExperimentConfig) -> Result<String> {
        let seeds: Vec<String> = cfg.seeds.expand().iter().map(u64::to_string).collect();
        let mut out = format!(
            "# config_hash={}, seeds={}, version={}\n",
            cfg.hash(),
            seeds.join(";"),
            env!("CARGO_PKG_VERSION")
        );
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        let body = w.into_inner().map_err(|e| HarnessError::Config(e.to_string()))?;
        out.push_str(&String::from_utf8(body).expect("CSV of UTF-8 fields is UTF-8"));
        Ok(out)
    }
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Config(format!("csv: {e}"))
}
