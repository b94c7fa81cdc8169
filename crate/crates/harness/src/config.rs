//! Experiment configuration files.
//!
//! ```toml
//! kind = "power_vs_rate"
//! seeds = { start = 0, count = 100 }     # or an explicit list
//! solvers = ["b", "pr1"]
//! orders = ["config", "meb", "o"]
//! total_rates_bits = [8, 16, 24]
//! target_weights = [1, 1, 1, 1]
//!
//! [network]
//! links = 4
//! tx_antennas = 2
//! rx_antennas = 4
//! rx_nodes = [0, 0, 0, 0]
//! ```

use std::path::{Path, PathBuf};

use bmac_core::netmodel::NetworkConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Rate-region boundary along target rays (two links).
    RegionSweep,
    /// Sum power per iteration for each solver.
    ConvergenceTrace,
    /// Mean minimum sum power against total target rate.
    PowerVsRate,
    /// Distributed training rounds.
    PrdRounds,
    /// Objective of every encoding/decoding order.
    OrderCompare,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::RegionSweep => "region_sweep",
            ExperimentKind::ConvergenceTrace => "convergence_trace",
            ExperimentKind::PowerVsRate => "power_vs_rate",
            ExperimentKind::PrdRounds => "prd_rounds",
            ExperimentKind::OrderCompare => "order_compare",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    A,
    B,
    Pr,
    Pr1,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::A => "a",
            SolverKind::B => "b",
            SolverKind::Pr => "pr",
            SolverKind::Pr1 => "pr1",
        }
    }
}

/// Which encoding/decoding order a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderChoice {
    /// The coupling or order given in the network section.
    Config,
    /// Maximum-eigenmode-beamforming order.
    Meb,
    /// Algorithm O started from the MEB order.
    O,
    /// Every combination of per-node orders.
    All,
}

impl OrderChoice {
    pub fn name(self) -> &'static str {
        match self {
            OrderChoice::Config => "config",
            OrderChoice::Meb => "meb",
            OrderChoice::O => "o",
            OrderChoice::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    List(Vec<u64>),
    Range { start: u64, count: u64 },
}

impl Seeds {
    pub fn expand(&self) -> Vec<u64> {
        match self {
            Seeds::List(v) => v.clone(),
            Seeds::Range { start, count } => (*start..start + count).collect(),
        }
    }
}

fn default_solvers() -> Vec<SolverKind> {
    vec![SolverKind::B]
}

fn default_orders() -> Vec<OrderChoice> {
    vec![OrderChoice::Config]
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    2000
}

fn default_rays() -> usize {
    64
}

fn default_total_power_db() -> f64 {
    10.0
}

fn default_rounds() -> usize {
    3
}

fn default_betas() -> Vec<f64> {
    vec![1.0]
}

fn default_init_power() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seeds: Seeds,
    /// Per-link targets in bits per channel use.
    #[serde(default)]
    pub targets_bits: Option<Vec<f64>>,
    /// Sweep of total target rates in bits; split by `target_weights`.
    #[serde(default)]
    pub total_rates_bits: Option<Vec<f64>>,
    #[serde(default)]
    pub target_weights: Option<Vec<f64>>,
    #[serde(default = "default_solvers")]
    pub solvers: Vec<SolverKind>,
    #[serde(default = "default_orders")]
    pub orders: Vec<OrderChoice>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Ray directions for region sweeps.
    #[serde(default = "default_rays")]
    pub rays: usize,
    /// Total power for Algorithm A, in dB over unit noise.
    #[serde(default = "default_total_power_db")]
    pub total_power_db: f64,
    /// Full training rounds after the first forward half-round.
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
    /// Per-link power of the random first-round covariances.
    #[serde(default = "default_init_power")]
    pub init_power: f64,
    /// Output file name; defaults to `<kind>.csv`.
    #[serde(default)]
    pub output: Option<String>,
    pub network: NetworkConfig,
}

/// Command-line overrides applied on top of a configuration file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub solver: Option<SolverKind>,
    pub tol: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.seeds = Seeds::List(vec![s]);
        }
        if let Some(s) = o.solver {
            self.solvers = vec![s];
        }
        if let Some(t) = o.tol {
            self.tol = t;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let n = self.network.links;
        if self.seeds.expand().is_empty() {
            return bad("at least one seed is required".into());
        }
        if !(self.tol >= 0.0) || self.max_iter == 0 {
            return bad("tol must be nonnegative and max_iter positive".into());
        }
        if self.solvers.is_empty() || self.orders.is_empty() {
            return bad("solvers and orders must not be empty".into());
        }
        if let Some(t) = &self.targets_bits {
            if t.len() != n || t.iter().any(|x| !(*x >= 0.0)) {
                return bad(format!("targets_bits needs {n} nonnegative entries"));
            }
        }
        if let Some(w) = &self.target_weights {
            if w.len() != n || w.iter().any(|x| !(*x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return bad(format!("target_weights needs {n} nonnegative entries with a positive sum"));
            }
        }
        if self.betas.iter().any(|b| !(*b >= 1.0)) {
            return bad("every beta must be at least 1".into());
        }
        match self.kind {
            ExperimentKind::RegionSweep => {
                if n != 2 {
                    return bad("region_sweep needs exactly two links".into());
                }
                if self.rays < 2 {
                    return bad("rays must be at least 2".into());
                }
            }
            ExperimentKind::PowerVsRate => {
                if self.total_rates_bits.is_none() {
                    return bad("power_vs_rate needs total_rates_bits".into());
                }
            }
            ExperimentKind::ConvergenceTrace | ExperimentKind::PrdRounds | ExperimentKind::OrderCompare => {
                if self.targets_bits.is_none() {
                    return bad(format!("{} needs targets_bits", self.kind.name()));
                }
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical TOML form, after overrides.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("configuration serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn output_name(&self) -> String {
        self.output.clone().unwrap_or_else(|| format!("{}.csv", self.kind.name()))
    }
}

/// Directory against which relative paths in a config resolve.
pub fn base_dir(config_path: &Path) -> PathBuf {
    config_path.parent().map(Path::to_path_buf).unwrap_or_default()
}
