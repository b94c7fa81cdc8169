//! Random instances shared by the integration tests.
#![allow(dead_code)]

use bmac_core::linalg::{self, c, CMat, C64};
use bmac_core::netmodel::{generate_network, CovarianceSet, Coupling, Direction, NetworkSpec, Topology};
use bmac_core::ordering::{order_to_coupling, NodeKind, OrderSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, cols: usize) -> CMat {
    CMat::from_fn(r, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Random PSD matrix of the given rank and trace.
pub fn psd(rng: &mut ChaCha8Rng, n: usize, rank: usize, trace: f64) -> CMat {
    let a = gaussian(rng, n, rank);
    let s = &a * a.adjoint();
    let t = linalg::trace_re(&s);
    if t == 0.0 {
        return linalg::zeros(n, n);
    }
    linalg::hermitize(&(s * c(trace / t)))
}

/// Random Hermitian positive definite matrix with eigenvalues around one.
pub fn hpd(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    psd(rng, n, n, 0.5 * n as f64) + linalg::identity(n) * c(0.5)
}

/// Random B-MAC topology with up to `max_links` links and up to
/// `max_antennas` antennas per node; links may share physical nodes.
pub fn topology(rng: &mut ChaCha8Rng, max_links: usize, max_antennas: usize) -> Topology {
    let n = rng.random_range(1..=max_links);
    let tx_node: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let rx_node: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let tx_ant: Vec<usize> = (0..n).map(|_| rng.random_range(1..=max_antennas)).collect();
    let rx_ant: Vec<usize> = (0..n).map(|_| rng.random_range(1..=max_antennas)).collect();
    Topology {
        tx_antennas: tx_node.iter().map(|&t| tx_ant[t]).collect(),
        rx_antennas: rx_node.iter().map(|&r| rx_ant[r]).collect(),
        tx_node,
        rx_node,
    }
}

/// Random cross gains between -10 and 0 dB, direct gains 0 dB.
pub fn gains(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|l| (0..n).map(|k| if l == k { 0.0 } else { rng.random_range(-10.0..0.0) }).collect()).collect()
}

/// Random per-node encoding and decoding orders.
pub fn random_order(rng: &mut ChaCha8Rng, net: &NetworkSpec) -> OrderSpec {
    let mut order = OrderSpec::by_index(net);
    for kind in [NodeKind::Tx, NodeKind::Rx] {
        for links in order.slot_mut(kind).values_mut() {
            links.shuffle(rng);
        }
    }
    order
}

/// Random forward covariances with random ranks and traces in `[0.2, 5]`.
pub fn covariances(rng: &mut ChaCha8Rng, net: &NetworkSpec) -> CovarianceSet {
    let mats = (0..net.links())
        .map(|l| {
            let d = net.tx_antennas(l);
            let rank = rng.random_range(1..=d);
            let tr = rng.random_range(0.2..5.0);
            psd(rng, d, rank, tr)
        })
        .collect();
    CovarianceSet::new(net, Direction::Forward, mats).unwrap()
}

pub struct Case {
    pub net: NetworkSpec,
    pub phi: Coupling,
    pub covs: CovarianceSet,
}

/// Random network with a coupling induced by random orders.
pub fn case(seed: u64, max_links: usize, max_antennas: usize, colored: bool) -> Case {
    let mut r = rng(seed);
    let topo = topology(&mut r, max_links, max_antennas);
    let g = gains(&mut r, topo.links());
    let mut net = generate_network(&topo, &g, r.random()).unwrap();
    if colored {
        let noise = (0..net.links()).map(|l| hpd(&mut r, net.rx_antennas(l))).collect();
        let weight = (0..net.links()).map(|l| hpd(&mut r, net.tx_antennas(l))).collect();
        net = net.with_noise(noise).unwrap().with_weights(weight).unwrap();
    }
    let order = random_order(&mut r, &net);
    let phi = order_to_coupling(&net, &order).unwrap();
    let covs = covariances(&mut r, &net);
    Case { net, phi, covs }
}

/// Random coupling that is strictly upper triangular, so link `l` is only
/// interfered by links with larger indices.
pub fn itree_coupling(rng: &mut ChaCha8Rng, n: usize) -> Coupling {
    let mask: Vec<Vec<bool>> = (0..n).map(|l| (0..n).map(|k| k > l && rng.random_bool(0.7)).collect()).collect();
    Coupling::from_fn(n, |l, k| mask[l][k])
}

/// Relative difference `|a − b| / max(1, |b|)`.
pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}
