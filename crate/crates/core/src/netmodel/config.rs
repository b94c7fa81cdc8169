//! TOML description of a network.
//!
//! ```toml
//! links = 3
//! tx_antennas = 4            # or one entry per link
//! rx_antennas = [4, 4, 2]
//! tx_nodes = [0, 0, 1]       # physical node of each link's transmitter
//! rx_nodes = [0, 1, 1]
//! gains_db = { direct = 0.0, cross = -3.0 }   # or a scalar, or an LxL table
//! seed = 7
//! coupling = [[0, 1, 1], [1, 0, 1], [1, 1, 0]]
//! # or: order = { encode = [[1, 0]], decode = [[2, 1]] }
//! # channels = { "0,0" = "h00.csv" } overrides drawn channels
//! ```
//!
//! Channel CSV files hold one row per receive antenna with interleaved real
//! and imaginary parts.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{generate_network, Coupling, NetworkSpec, NodeCaps, Topology};
use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};
use crate::ordering::{order_to_coupling, OrderSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerLink<T> {
    Same(T),
    Each(Vec<T>),
}

impl<T: Clone> PerLink<T> {
    fn expand(&self, n: usize, what: &str) -> Result<Vec<T>> {
        match self {
            PerLink::Same(v) => Ok(vec![v.clone(); n]),
            PerLink::Each(v) if v.len() == n => Ok(v.clone()),
            PerLink::Each(v) => Err(Error::Config(format!("{what} has {} entries, want {n}", v.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Uniform(f64),
    Split { direct: f64, cross: f64 },
    Table(Vec<Vec<f64>>),
}

impl Default for GainSpec {
    fn default() -> Self {
        GainSpec::Uniform(0.0)
    }
}

impl GainSpec {
    pub fn table(&self, n: usize) -> Vec<Vec<f64>> {
        match self {
            GainSpec::Uniform(g) => super::uniform_gains_db(n, *g, *g),
            GainSpec::Split { direct, cross } => super::uniform_gains_db(n, *direct, *cross),
            GainSpec::Table(t) => t.clone(),
        }
    }
}

/// Encoding and decoding orders; each inner list holds the links of one
/// physical node, first-encoded (first-decoded) first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OrderConfig {
    #[serde(default)]
    pub encode: Vec<Vec<usize>>,
    #[serde(default)]
    pub decode: Vec<Vec<usize>>,
}

/// Where the channel matrices of a built network came from.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSource {
    Drawn { seed: u64 },
    DrawnWithOverrides { seed: u64, files: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub links: usize,
    pub tx_antennas: PerLink<usize>,
    pub rx_antennas: PerLink<usize>,
    #[serde(default)]
    pub tx_nodes: Option<Vec<usize>>,
    #[serde(default)]
    pub rx_nodes: Option<Vec<usize>>,
    #[serde(default)]
    pub gains_db: GainSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub coupling: Option<Vec<Vec<u8>>>,
    #[serde(default)]
    pub order: Option<OrderConfig>,
    #[serde(default)]
    pub channels: BTreeMap<String, String>,
    /// Transmit power caps keyed by physical transmitter id.
    #[serde(default)]
    pub tx_caps: BTreeMap<String, f64>,
    /// Reverse-link power caps keyed by physical receiver id.
    #[serde(default)]
    pub rx_caps: BTreeMap<String, f64>,
}

impl NetworkConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn topology(&self) -> Result<Topology> {
        let n = self.links;
        Ok(Topology {
            tx_antennas: self.tx_antennas.expand(n, "tx_antennas")?,
            rx_antennas: self.rx_antennas.expand(n, "rx_antennas")?,
            tx_node: self.tx_nodes.clone().unwrap_or_else(|| (0..n).collect()),
            rx_node: self.rx_nodes.clone().unwrap_or_else(|| (0..n).collect()),
        })
    }

    /// Builds the network and its coupling. `seed` overrides the configured
    /// seed; relative CSV paths resolve against `base_dir`. Without an explicit
    /// coupling or order, every node encodes and decodes in link-index order.
    pub fn build(&self, seed: Option<u64>, base_dir: &Path) -> Result<(NetworkSpec, Coupling, ChannelSource)> {
        let topo = self.topology()?;
        let n = self.links;
        let seed = seed.unwrap_or(self.seed);
        let drawn = generate_network(&topo, &self.gains_db.table(n), seed)?;
        let mut table: Vec<Vec<CMat>> =
            (0..n).map(|l| (0..n).map(|k| drawn.channel(l, k).clone()).collect()).collect();
        for (key, path) in &self.channels {
            let (l, k) = parse_pair(key)?;
            if l >= n || k >= n {
                return Err(Error::Config(format!("channel key {key} out of range")));
            }
            let h = read_complex_csv(&base_dir.join(path))?;
            // The file replaces the physical channel, shared by every link
            // pair between the same two nodes.
            for (a, row) in table.iter_mut().enumerate() {
                for (b, slot) in row.iter_mut().enumerate() {
                    if topo.rx_node[a] == topo.rx_node[l] && topo.tx_node[b] == topo.tx_node[k] {
                        *slot = h.clone();
                    }
                }
            }
        }
        let caps = NodeCaps { tx: parse_caps(&self.tx_caps)?, rx: parse_caps(&self.rx_caps)? };
        let net = NetworkSpec::new(topo, table)?.with_caps(caps)?;
        let phi = match (&self.coupling, &self.order) {
            (Some(_), Some(_)) => return Err(Error::Config("give either coupling or order, not both".into())),
            (Some(rows), None) => {
                let phi = Coupling::from_rows(rows)?;
                if phi.len() != n {
                    return Err(Error::Config(format!("coupling must be {n}x{n}")));
                }
                phi
            }
            (None, Some(o)) => order_to_coupling(&net, &OrderSpec::from_lists(&net, &o.encode, &o.decode)?)?,
            (None, None) => order_to_coupling(&net, &OrderSpec::by_index(&net))?,
        };
        let source = if self.channels.is_empty() {
            ChannelSource::Drawn { seed }
        } else {
            ChannelSource::DrawnWithOverrides { seed, files: self.channels.len() }
        };
        Ok((net, phi, source))
    }
}

fn parse_pair(key: &str) -> Result<(usize, usize)> {
    let mut it = key.split(',').map(|s| s.trim().parse::<usize>());
    match (it.next(), it.next(), it.next()) {
        (Some(Ok(l)), Some(Ok(k)), None) => Ok((l, k)),
        _ => Err(Error::Config(format!("channel key {key:?} is not \"l,k\""))),
    }
}

fn parse_caps(m: &BTreeMap<String, f64>) -> Result<BTreeMap<usize, f64>> {
    m.iter()
        .map(|(k, &v)| {
            k.trim().parse::<usize>().map(|id| (id, v)).map_err(|_| Error::Config(format!("cap key {k:?} is not a node id")))
        })
        .collect()
}

/// Reads a complex matrix stored as rows of interleaved real/imag values.
pub fn read_complex_csv(path: &Path) -> Result<CMat> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<C64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| Error::Config(format!("{}: bad number {s:?}", path.display()))))
            .collect::<Result<_>>()?;
        if !vals.len().is_multiple_of(2) {
            return Err(Error::Config(format!("{}: odd number of values in a row", path.display())));
        }
        rows.push(vals.chunks(2).map(|p| C64::new(p[0], p[1])).collect());
    }
    let r = rows.len();
    let cols = rows.first().map_or(0, Vec::len);
    if r == 0 || rows.iter().any(|row| row.len() != cols) {
        return Err(Error::Config(format!("{}: ragged or empty matrix", path.display())));
    }
    Ok(CMat::from_fn(r, cols, |i, j| rows[i][j]))
}
