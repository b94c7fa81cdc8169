//! Link-level description of a B-MAC network and the per-link quantities
//! derived from a set of covariance matrices.
//!
//! Link `l` carries a signal from virtual transmitter `l` to virtual receiver
//! `l`; several virtual nodes may share a physical node. The coupling matrix
//! records which interference terms survive encoding and decoding.

mod config;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, C64};

pub use config::{ChannelSource, NetworkConfig, OrderConfig};

/// Side of the network a quantity belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::Forward => Direction::Reverse,
            Direction::Reverse => Direction::Forward,
        }
    }
}

/// Binary interference-coupling matrix: `get(l, k)` is true when the signal
/// of link `k` interferes at the receiver of link `l`. The diagonal is zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Coupling {
    n: usize,
    bits: Vec<bool>,
}

impl Coupling {
    /// Every link interferes with every other link.
    pub fn full(n: usize) -> Self {
        Self::from_fn(n, |l, k| l != k)
    }

    /// No link interferes with any other.
    pub fn none(n: usize) -> Self {
        Self::from_fn(n, |_, _| false)
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = vec![false; n * n];
        for l in 0..n {
            for k in 0..n {
                bits[l * n + k] = l != k && f(l, k);
            }
        }
        Self { n, bits }
    }

    /// Builds from 0/1 rows; rejects non-binary entries and a nonzero diagonal.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let mut bits = vec![false; n * n];
        for (l, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension(format!("coupling row {l} has {} entries, want {n}", row.len())));
            }
            for (k, &v) in row.iter().enumerate() {
                match (v, l == k) {
                    (0, _) => {}
                    (1, false) => bits[l * n + k] = true,
                    (1, true) => {
                        return Err(Error::InvalidInput(format!("coupling diagonal entry {l} must be 0")))
                    }
                    _ => return Err(Error::InvalidInput(format!("coupling entry ({l},{k}) = {v} is not binary"))),
                }
            }
        }
        Ok(Self { n, bits })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, l: usize, k: usize) -> bool {
        self.bits[l * self.n + k]
    }

    pub fn set(&mut self, l: usize, k: usize, v: bool) {
        if l != k {
            self.bits[l * self.n + k] = v;
        }
    }

    /// Coupling of the reverse network.
    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |l, k| self.get(k, l))
    }

    /// Coupling restricted to the first `i` links.
    pub fn truncate(&self, i: usize) -> Self {
        Self::from_fn(i, |l, k| self.get(l, k))
    }

    /// Coupling with links relabelled so that new link `j` is old `perm[j]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        Self::from_fn(perm.len(), |l, k| self.get(perm[l], perm[k]))
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        (0..self.n).map(|l| (0..self.n).map(|k| self.get(l, k) as u8).collect()).collect()
    }
}

/// Optional per-node transmit power caps, keyed by physical node id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeCaps {
    pub tx: BTreeMap<usize, f64>,
    pub rx: BTreeMap<usize, f64>,
}

/// Antenna counts and physical-node map of a network, without channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub tx_antennas: Vec<usize>,
    pub rx_antennas: Vec<usize>,
    pub tx_node: Vec<usize>,
    pub rx_node: Vec<usize>,
}

impl Topology {
    /// `links` links on distinct physical nodes with the given antenna counts.
    pub fn distinct(links: usize, tx_antennas: usize, rx_antennas: usize) -> Self {
        Self {
            tx_antennas: vec![tx_antennas; links],
            rx_antennas: vec![rx_antennas; links],
            tx_node: (0..links).collect(),
            rx_node: (0..links).collect(),
        }
    }

    /// Multiple-access channel: distinct transmitters, one shared receiver.
    pub fn mac(users: usize, tx_antennas: usize, rx_antennas: usize) -> Self {
        Self { rx_node: vec![0; users], ..Self::distinct(users, tx_antennas, rx_antennas) }
    }

    /// Broadcast channel: one shared transmitter, distinct receivers.
    pub fn bc(users: usize, tx_antennas: usize, rx_antennas: usize) -> Self {
        Self { tx_node: vec![0; users], ..Self::distinct(users, tx_antennas, rx_antennas) }
    }

    pub fn links(&self) -> usize {
        self.tx_antennas.len()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let l = self.tx_antennas.len();
        if self.rx_antennas.len() != l || self.tx_node.len() != l || self.rx_node.len() != l {
            return Err(Error::Dimension("topology vectors have different lengths".into()));
        }
        if self.tx_antennas.iter().chain(&self.rx_antennas).any(|&a| a == 0) {
            return Err(Error::InvalidInput("every node needs at least one antenna".into()));
        }
        for a in 0..l {
            for b in 0..l {
                if self.tx_node[a] == self.tx_node[b] && self.tx_antennas[a] != self.tx_antennas[b] {
                    return Err(Error::InvalidInput(format!(
                        "links {a} and {b} share a transmitter but differ in antenna count"
                    )));
                }
                if self.rx_node[a] == self.rx_node[b] && self.rx_antennas[a] != self.rx_antennas[b] {
                    return Err(Error::InvalidInput(format!(
                        "links {a} and {b} share a receiver but differ in antenna count"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A validated network: channels `H[l][k]` from transmitter `k` to receiver
/// `l`, receive noise covariances `W_l` and transmit power weights `Ŵ_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    topo: Topology,
    channels: Vec<CMat>,
    noise: Vec<CMat>,
    weight: Vec<CMat>,
    caps: NodeCaps,
}

impl NetworkSpec {
    /// White unit noise and identity power weights.
    pub fn new(topo: Topology, channels: Vec<Vec<CMat>>) -> Result<Self> {
        topo.validate()?;
        let n = topo.links();
        if channels.len() != n || channels.iter().any(|row| row.len() != n) {
            return Err(Error::Dimension(format!("channel table must be {n}x{n}")));
        }
        let mut flat = Vec::with_capacity(n * n);
        for (l, row) in channels.into_iter().enumerate() {
            for (k, h) in row.into_iter().enumerate() {
                if h.nrows() != topo.rx_antennas[l] || h.ncols() != topo.tx_antennas[k] {
                    return Err(Error::Dimension(format!(
                        "H[{l}][{k}] is {}x{}, want {}x{}",
                        h.nrows(),
                        h.ncols(),
                        topo.rx_antennas[l],
                        topo.tx_antennas[k]
                    )));
                }
                if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(Error::InvalidInput(format!("H[{l}][{k}] has non-finite entries")));
                }
                flat.push(h);
            }
        }
        let mut by_pair: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for l in 0..n {
            for k in 0..n {
                let first = *by_pair.entry((topo.rx_node[l], topo.tx_node[k])).or_insert(l * n + k);
                if flat[first] != flat[l * n + k] {
                    let (a, b) = (first / n, first % n);
                    return Err(Error::InvalidInput(format!(
                        "H[{l}][{k}] and H[{a}][{b}] connect the same nodes but differ"
                    )));
                }
            }
        }
        let noise = topo.rx_antennas.iter().map(|&a| linalg::identity(a)).collect();
        let weight = topo.tx_antennas.iter().map(|&a| linalg::identity(a)).collect();
        Ok(Self { topo, channels: flat, noise, weight, caps: NodeCaps::default() })
    }

    /// Single-antenna network with real channel amplitudes `h[l][k]`.
    pub fn scalar(h: &[Vec<f64>]) -> Result<Self> {
        let n = h.len();
        let ch = h
            .iter()
            .map(|row| row.iter().map(|&x| CMat::from_element(1, 1, c(x))).collect())
            .collect();
        Self::new(Topology::distinct(n, 1, 1), ch)
    }

    /// Replaces the receive noise covariances; each must be Hermitian PD.
    pub fn with_noise(mut self, noise: Vec<CMat>) -> Result<Self> {
        self.check_side(&noise, &self.topo.rx_antennas, "noise covariance")?;
        self.noise = noise.iter().map(linalg::hermitize).collect();
        Ok(self)
    }

    /// Replaces the transmit power weights; each must be Hermitian PD.
    pub fn with_weights(mut self, weight: Vec<CMat>) -> Result<Self> {
        self.check_side(&weight, &self.topo.tx_antennas, "power weight")?;
        self.weight = weight.iter().map(linalg::hermitize).collect();
        Ok(self)
    }

    pub fn with_caps(mut self, caps: NodeCaps) -> Result<Self> {
        if caps.tx.values().chain(caps.rx.values()).any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidInput("node power caps must be positive".into()));
        }
        self.caps = caps;
        Ok(self)
    }

    fn check_side(&self, mats: &[CMat], dims: &[usize], what: &str) -> Result<()> {
        if mats.len() != dims.len() {
            return Err(Error::Dimension(format!("need one {what} per link")));
        }
        for (l, (m, &d)) in mats.iter().zip(dims).enumerate() {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::Dimension(format!("{what} {l} must be {d}x{d}")));
            }
            linalg::require_hpd(m, &format!("{what} {l}"))?;
        }
        Ok(())
    }

    pub fn links(&self) -> usize {
        self.topo.links()
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn tx_antennas(&self, l: usize) -> usize {
        self.topo.tx_antennas[l]
    }

    pub fn rx_antennas(&self, l: usize) -> usize {
        self.topo.rx_antennas[l]
    }

    pub fn tx_node(&self, l: usize) -> usize {
        self.topo.tx_node[l]
    }

    pub fn rx_node(&self, l: usize) -> usize {
        self.topo.rx_node[l]
    }

    /// Channel from transmitter `k` to receiver `l`.
    pub fn channel(&self, l: usize, k: usize) -> &CMat {
        &self.channels[l * self.links() + k]
    }

    /// Receive noise covariance `W_l`.
    pub fn noise(&self, l: usize) -> &CMat {
        &self.noise[l]
    }

    /// Transmit power weight `Ŵ_l`.
    pub fn weight(&self, l: usize) -> &CMat {
        &self.weight[l]
    }

    pub fn caps(&self) -> &NodeCaps {
        &self.caps
    }

    /// Cap on `Tr(Σ_l)` implied by the cap of link `l`'s transmitter node.
    pub fn tx_cap(&self, l: usize) -> f64 {
        self.caps.tx.get(&self.tx_node(l)).copied().unwrap_or(f64::INFINITY)
    }

    /// Cap on `Tr(Σ̂_l)` implied by the cap of link `l`'s receiver node.
    pub fn rx_cap(&self, l: usize) -> f64 {
        self.caps.rx.get(&self.rx_node(l)).copied().unwrap_or(f64::INFINITY)
    }

    /// Sum of noise traces, the reference scale for divergence guards.
    pub fn total_noise_power(&self) -> f64 {
        self.noise.iter().map(linalg::trace_re).sum()
    }

    /// Whether every noise covariance and weight is the identity.
    pub fn is_white(&self) -> bool {
        let id = |m: &CMat| (m - linalg::identity(m.nrows())).norm() == 0.0;
        self.noise.iter().all(id) && self.weight.iter().all(id)
    }

    /// Dimensions of the covariance of link `l` on the given side.
    pub fn cov_dim(&self, l: usize, dir: Direction) -> usize {
        match dir {
            Direction::Forward => self.tx_antennas(l),
            Direction::Reverse => self.rx_antennas(l),
        }
    }

    /// Network restricted to links `0..i`, with the given noise covariances.
    pub fn truncate(&self, i: usize, noise: Vec<CMat>) -> Result<Self> {
        let topo = Topology {
            tx_antennas: self.topo.tx_antennas[..i].to_vec(),
            rx_antennas: self.topo.rx_antennas[..i].to_vec(),
            tx_node: self.topo.tx_node[..i].to_vec(),
            rx_node: self.topo.rx_node[..i].to_vec(),
        };
        let ch = (0..i).map(|l| (0..i).map(|k| self.channel(l, k).clone()).collect()).collect();
        Self::new(topo, ch)?.with_noise(noise)?.with_weights(self.weight[..i].to_vec())
    }

    /// Network with links relabelled so that new link `j` is old `perm[j]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        let pick = |v: &Vec<usize>| perm.iter().map(|&p| v[p]).collect::<Vec<_>>();
        let topo = Topology {
            tx_antennas: pick(&self.topo.tx_antennas),
            rx_antennas: pick(&self.topo.rx_antennas),
            tx_node: pick(&self.topo.tx_node),
            rx_node: pick(&self.topo.rx_node),
        };
        let n = perm.len();
        let mut channels = Vec::with_capacity(n * n);
        for &a in perm {
            for &b in perm {
                channels.push(self.channel(a, b).clone());
            }
        }
        Self {
            topo,
            channels,
            noise: perm.iter().map(|&p| self.noise[p].clone()).collect(),
            weight: perm.iter().map(|&p| self.weight[p].clone()).collect(),
            caps: self.caps.clone(),
        }
    }
}

/// The dual network: channels `H[k][l]†`, transmitter and receiver roles
/// swapped, noise and power weights swapped. Pair it with `Coupling::transpose`.
pub fn reverse_network(net: &NetworkSpec) -> NetworkSpec {
    let n = net.links();
    let mut channels = Vec::with_capacity(n * n);
    for l in 0..n {
        for k in 0..n {
            channels.push(net.channel(k, l).adjoint());
        }
    }
    NetworkSpec {
        topo: Topology {
            tx_antennas: net.topo.rx_antennas.clone(),
            rx_antennas: net.topo.tx_antennas.clone(),
            tx_node: net.topo.rx_node.clone(),
            rx_node: net.topo.tx_node.clone(),
        },
        channels,
        noise: net.weight.clone(),
        weight: net.noise.clone(),
        caps: NodeCaps { tx: net.caps.rx.clone(), rx: net.caps.tx.clone() },
    }
}

/// Covariance matrices of every link on one side of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSet {
    pub direction: Direction,
    mats: Vec<CMat>,
}

impl CovarianceSet {
    /// Validates each matrix as PSD (clipping rounding-level negative
    /// eigenvalues) and checks its size against the network.
    pub fn new(net: &NetworkSpec, direction: Direction, mats: Vec<CMat>) -> Result<Self> {
        if mats.len() != net.links() {
            return Err(Error::Dimension(format!("need {} covariances, got {}", net.links(), mats.len())));
        }
        let mut out = Vec::with_capacity(mats.len());
        for (l, m) in mats.iter().enumerate() {
            let d = net.cov_dim(l, direction);
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::Dimension(format!("covariance {l} must be {d}x{d}")));
            }
            out.push(linalg::clip_psd(m, &format!("covariance {l}"))?);
        }
        Ok(Self { direction, mats: out })
    }

    /// All-zero covariances.
    pub fn zeros(net: &NetworkSpec, direction: Direction) -> Self {
        let mats = (0..net.links())
            .map(|l| {
                let d = net.cov_dim(l, direction);
                linalg::zeros(d, d)
            })
            .collect();
        Self { direction, mats }
    }

    /// `scale_l · I` per link.
    pub fn scaled_identity(net: &NetworkSpec, direction: Direction, scale: &[f64]) -> Self {
        let mats = (0..net.links())
            .map(|l| linalg::identity(net.cov_dim(l, direction)) * c(scale[l]))
            .collect();
        Self { direction, mats }
    }

    /// Skips validation; callers guarantee Hermitian PSD inputs.
    pub(crate) fn trusted(direction: Direction, mats: Vec<CMat>) -> Self {
        Self { direction, mats: mats.iter().map(linalg::hermitize).collect() }
    }

    pub fn get(&self, l: usize) -> &CMat {
        &self.mats[l]
    }

    pub fn mats(&self) -> &[CMat] {
        &self.mats
    }

    pub fn into_mats(self) -> Vec<CMat> {
        self.mats
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    /// `Tr(Σ_l)` per link.
    pub fn traces(&self) -> Vec<f64> {
        self.mats.iter().map(linalg::trace_re).collect()
    }

    pub fn total_trace(&self) -> f64 {
        self.traces().iter().sum()
    }

    /// Weighted sum power: `Σ Tr(Σ_l Ŵ_l)` forward, `Σ Tr(Σ̂_l W_l)` reverse.
    pub fn weighted_power(&self, net: &NetworkSpec) -> f64 {
        (0..self.len())
            .map(|l| {
                let w = match self.direction {
                    Direction::Forward => net.weight(l),
                    Direction::Reverse => net.noise(l),
                };
                linalg::trace_prod_re(&self.mats[l], w)
            })
            .sum()
    }

    /// Same matrices with links relabelled so new `j` is old `perm[j]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        Self { direction: self.direction, mats: perm.iter().map(|&p| self.mats[p].clone()).collect() }
    }

    /// Inverse of `permute`.
    pub fn unpermute(&self, perm: &[usize]) -> Self {
        let mut mats = self.mats.clone();
        for (j, &p) in perm.iter().enumerate() {
            mats[p] = self.mats[j].clone();
        }
        Self { direction: self.direction, mats }
    }
}

/// Interference-plus-noise covariance seen by link `l` on the side of `covs`.
///
/// Forward: `W_l + Σ_k Φ[l][k] H[l][k] Σ_k H[l][k]†`.
/// Reverse: `Ŵ_l + Σ_k Φ[k][l] H[k][l]† Σ̂_k H[k][l]`.
pub fn interference_covariance(net: &NetworkSpec, phi: &Coupling, covs: &CovarianceSet, l: usize) -> CMat {
    interference_from(net, phi, covs.direction, covs.mats(), l, net.links())
}

/// Like `interference_covariance` but with explicit matrices, counting only
/// interferers with index below `upto`.
pub(crate) fn interference_from(
    net: &NetworkSpec,
    phi: &Coupling,
    dir: Direction,
    mats: &[CMat],
    l: usize,
    upto: usize,
) -> CMat {
    match dir {
        Direction::Forward => {
            let mut om = net.noise(l).clone();
            for k in 0..upto.min(mats.len()) {
                if phi.get(l, k) && mats[k].norm() > 0.0 {
                    let h = net.channel(l, k);
                    om += h * &mats[k] * h.adjoint();
                }
            }
            linalg::hermitize(&om)
        }
        Direction::Reverse => {
            let mut om = net.weight(l).clone();
            for k in 0..upto.min(mats.len()) {
                if phi.get(k, l) && mats[k].norm() > 0.0 {
                    let h = net.channel(k, l);
                    om += h.adjoint() * &mats[k] * h;
                }
            }
            linalg::hermitize(&om)
        }
    }
}

/// Direct channel of link `l` as seen on the given side.
pub(crate) fn direct_channel(net: &NetworkSpec, l: usize, dir: Direction) -> CMat {
    match dir {
        Direction::Forward => net.channel(l, l).clone(),
        Direction::Reverse => net.channel(l, l).adjoint(),
    }
}

/// `ln det(I + H Σ H† Ω⁻¹)` for one link, in nats.
pub fn rate_with(h: &CMat, sigma: &CMat, omega: &CMat) -> Result<f64> {
    let signal = h * sigma * h.adjoint();
    let total = linalg::hermitize(&(omega + signal));
    Ok((linalg::log_det_hpd(&total)? - linalg::log_det_hpd(omega)?).max(0.0))
}

/// Achievable rate of link `l` in nats with Gaussian signalling and the
/// interference pattern of `phi`.
pub fn link_rate(net: &NetworkSpec, phi: &Coupling, covs: &CovarianceSet, l: usize) -> Result<f64> {
    let omega = interference_covariance(net, phi, covs, l);
    rate_with(&direct_channel(net, l, covs.direction), covs.get(l), &omega)
}

/// Rates of all links.
pub fn link_rates(net: &NetworkSpec, phi: &Coupling, covs: &CovarianceSet) -> Result<Vec<f64>> {
    (0..net.links()).map(|l| link_rate(net, phi, covs, l)).collect()
}

/// Gain table in dB: `gains_db[l][k]` scales the channel from transmitter `k`
/// to receiver `l`.
pub fn uniform_gains_db(links: usize, direct_db: f64, cross_db: f64) -> Vec<Vec<f64>> {
    (0..links)
        .map(|l| (0..links).map(|k| if l == k { direct_db } else { cross_db }).collect())
        .collect()
}

/// Draws one channel per (receiver node, transmitter node) pair,
/// `sqrt(g) · G` with `G` i.i.d. circularly symmetric unit-variance complex
/// Gaussian, deterministically from `seed`. Links that share both nodes share
/// the matrix. A pair carrying a direct link takes that link's gain
/// `gains_db[l][l]`; any other pair takes `gains_db[l][k]` of the first link
/// pair that maps to it.
pub fn generate_network(topo: &Topology, gains_db: &[Vec<f64>], seed: u64) -> Result<NetworkSpec> {
    let n = topo.links();
    if gains_db.len() != n || gains_db.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension(format!("gain table must be {n}x{n}")));
    }
    topo.validate()?;
    let mut gain_of: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for l in 0..n {
        gain_of.insert((topo.rx_node[l], topo.tx_node[l]), gains_db[l][l]);
    }
    for l in 0..n {
        for k in 0..n {
            gain_of.entry((topo.rx_node[l], topo.tx_node[k])).or_insert(gains_db[l][k]);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let mut drawn: BTreeMap<(usize, usize), CMat> = BTreeMap::new();
    let mut channels = Vec::with_capacity(n);
    for l in 0..n {
        let mut row = Vec::with_capacity(n);
        for k in 0..n {
            let pair = (topo.rx_node[l], topo.tx_node[k]);
            let h = drawn.entry(pair).or_insert_with(|| {
                let amp = 10f64.powf(gain_of[&pair] / 20.0);
                let (r, t) = (topo.rx_antennas[l], topo.tx_antennas[k]);
                let mut h = linalg::zeros(r, t);
                for i in 0..r {
                    for j in 0..t {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        h[(i, j)] = C64::new(re, im) * (half * amp);
                    }
                }
                h
            });
            row.push(h.clone());
        }
        channels.push(row);
    }
    NetworkSpec::new(topo.clone(), channels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_ic() -> (NetworkSpec, Coupling) {
        (NetworkSpec::scalar(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap(), Coupling::full(2))
    }

    fn scalar_covs(net: &NetworkSpec, p: &[f64]) -> CovarianceSet {
        let mats = p.iter().map(|&x| CMat::from_element(1, 1, c(x))).collect();
        CovarianceSet::new(net, Direction::Forward, mats).unwrap()
    }

    #[test]
    fn scalar_interference_and_rate() {
        let (net, phi) = scalar_ic();
        let covs = scalar_covs(&net, &[1.0, 1.0]);
        let om = interference_covariance(&net, &phi, &covs, 0);
        assert!((om[(0, 0)].re - 2.0).abs() < 1e-15);
        assert!((link_rate(&net, &phi, &covs, 0).unwrap() - 1.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn rate_of_isolated_identity_link() {
        let h = linalg::identity(2);
        let net = NetworkSpec::new(Topology::distinct(1, 2, 2), vec![vec![h]]).unwrap();
        let covs = CovarianceSet::new(&net, Direction::Forward, vec![linalg::identity(2)]).unwrap();
        let r = link_rate(&net, &Coupling::none(1), &covs, 0).unwrap();
        assert!((r - 2.0 * 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let (net, _) = scalar_ic();
        let bad = vec![CMat::from_element(1, 1, c(-1.0)), CMat::from_element(1, 1, c(1.0))];
        assert!(matches!(CovarianceSet::new(&net, Direction::Forward, bad), Err(Error::NotPsd(_))));
    }

    #[test]
    fn rejects_bad_coupling() {
        assert!(Coupling::from_rows(&[vec![1, 0], vec![0, 0]]).is_err());
        assert!(Coupling::from_rows(&[vec![0, 2], vec![0, 0]]).is_err());
        assert!(Coupling::from_rows(&[vec![0, 1, 0], vec![0, 0]]).is_err());
    }

    #[test]
    fn reverse_is_an_involution() {
        let topo = Topology { tx_antennas: vec![2, 3], rx_antennas: vec![4, 1], tx_node: vec![0, 1], rx_node: vec![0, 1] };
        let net = generate_network(&topo, &uniform_gains_db(2, 0.0, -3.0), 9).unwrap();
        assert_eq!(reverse_network(&reverse_network(&net)), net);
        let phi = Coupling::from_rows(&[vec![0, 1], vec![0, 0]]).unwrap();
        assert_eq!(phi.transpose().transpose(), phi);
    }

    #[test]
    fn generation_is_seeded() {
        let topo = Topology::distinct(2, 2, 2);
        let g = uniform_gains_db(2, 0.0, 0.0);
        assert_eq!(generate_network(&topo, &g, 4).unwrap(), generate_network(&topo, &g, 4).unwrap());
        assert_ne!(generate_network(&topo, &g, 4).unwrap(), generate_network(&topo, &g, 5).unwrap());
    }

    #[test]
    fn unit_gain_entries_have_unit_second_moment() {
        let topo = Topology::distinct(1, 100, 1000);
        let net = generate_network(&topo, &[vec![0.0]], 1).unwrap();
        let h = net.channel(0, 0);
        let m = h.iter().map(|z| z.norm_sqr()).sum::<f64>() / h.len() as f64;
        assert!((m - 1.0).abs() < 0.02, "second moment {m}");
        let g = generate_network(&topo, &[vec![10.0]], 1).unwrap();
        let m10 = g.channel(0, 0).iter().map(|z| z.norm_sqr()).sum::<f64>() / h.len() as f64;
        assert!((m10 / m - 10.0).abs() < 1e-9);
    }
}
