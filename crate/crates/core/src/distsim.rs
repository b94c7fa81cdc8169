//! Simulated time-division-duplex execution of Algorithm PR1 (Algorithm PRD).
//!
//! Nodes never see the network. Every quantity a node uses comes from a
//! `ChannelProvider` that simulates pilot-aided estimation and logs the
//! access, so a run can be audited for locality afterwards. A transmitter
//! may read the reverse interference at its antennas and its reverse
//! effective channel `H† Ω^{-1/2}`; a receiver may read the forward
//! interference at its antennas and its forward effective channel
//! `H Ω̂^{-1/2}`.

use std::cell::RefCell;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, C64};
use crate::netmodel::{interference_from, link_rates, Coupling, CovarianceSet, Direction, NetworkSpec};
use crate::pwf_solvers::{forward_half, polite_update};
use crate::sinr_algs::{IterRecord, SolverResult};

/// Who is reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    /// Transmitter of link `l`.
    Tx(usize),
    /// Receiver of link `l`.
    Rx(usize),
    /// A centralized controller.
    Central,
}

/// What is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Quantity {
    /// `Ω_l`, measured at receiver `l`.
    ForwardInterference(usize),
    /// `Ω̂_l`, measured at transmitter `l`.
    ReverseInterference(usize),
    /// `H_ll Ω̂_l^{-1/2}`, estimated by receiver `l` from forward pilots.
    ForwardEffectiveChannel(usize),
    /// `H_ll† Ω_l^{-1/2}`, estimated by transmitter `l` from reverse pilots.
    ReverseEffectiveChannel(usize),
    /// Raw channel `H[l][k]`.
    Channel(usize, usize),
}

impl NodeId {
    /// The quantities this node may legitimately estimate.
    pub fn may_read(self, q: Quantity) -> bool {
        match (self, q) {
            (NodeId::Tx(l), Quantity::ReverseInterference(k) | Quantity::ReverseEffectiveChannel(k)) => l == k,
            (NodeId::Rx(l), Quantity::ForwardInterference(k) | Quantity::ForwardEffectiveChannel(k)) => l == k,
            _ => false,
        }
    }
}

/// One logged read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Access {
    pub node: NodeId,
    pub quantity: Quantity,
    /// Half-round in which the read happened, counting from one.
    pub half_round: usize,
}

/// Gaussian perturbation of effective-channel estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationNoise {
    /// Per-entry standard deviation of the complex error.
    pub std: f64,
    pub seed: u64,
}

/// Simulated estimation over a frozen snapshot of both sides.
pub struct ChannelProvider<'a> {
    net: &'a NetworkSpec,
    phi: &'a Coupling,
    fwd: &'a [CMat],
    rev: &'a [CMat],
    half_round: usize,
    log: &'a RefCell<Vec<Access>>,
    noise: Option<RefCell<(f64, ChaCha8Rng)>>,
}

impl<'a> ChannelProvider<'a> {
    pub fn new(
        net: &'a NetworkSpec,
        phi: &'a Coupling,
        fwd: &'a [CMat],
        rev: &'a [CMat],
        half_round: usize,
        log: &'a RefCell<Vec<Access>>,
    ) -> Self {
        Self { net, phi, fwd, rev, half_round, log, noise: None }
    }

    fn with_noise(mut self, noise: Option<EstimationNoise>) -> Self {
        self.noise = noise.map(|n| {
            let seed = n.seed.wrapping_add(self.half_round as u64);
            RefCell::new((n.std, ChaCha8Rng::seed_from_u64(seed)))
        });
        self
    }

    fn note(&self, node: NodeId, quantity: Quantity) {
        self.log.borrow_mut().push(Access { node, quantity, half_round: self.half_round });
    }

    fn perturb(&self, m: CMat) -> CMat {
        let Some(cell) = &self.noise else {
            return m;
        };
        let (std, rng) = &mut *cell.borrow_mut();
        let s = *std * std::f64::consts::FRAC_1_SQRT_2;
        let mut out = m;
        for z in out.iter_mut() {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            *z += C64::new(re, im) * s;
        }
        out
    }

    pub fn read(&self, node: NodeId, q: Quantity) -> Result<CMat> {
        self.note(node, q);
        let (net, phi) = (self.net, self.phi);
        let n = net.links();
        let check = |l: usize| {
            if l < n {
                Ok(l)
            } else {
                Err(Error::InvalidInput(format!("link {l} out of range")))
            }
        };
        Ok(match q {
            Quantity::ForwardInterference(l) => interference_from(net, phi, Direction::Forward, self.fwd, check(l)?, n),
            Quantity::ReverseInterference(l) => interference_from(net, phi, Direction::Reverse, self.rev, check(l)?, n),
            Quantity::ForwardEffectiveChannel(l) => {
                let om = interference_from(net, phi, Direction::Reverse, self.rev, check(l)?, n);
                self.perturb(net.channel(l, l) * linalg::herm_inv_sqrt(&om)?)
            }
            Quantity::ReverseEffectiveChannel(l) => {
                let om = interference_from(net, phi, Direction::Forward, self.fwd, check(l)?, n);
                self.perturb(net.channel(l, l).adjoint() * linalg::herm_inv_sqrt(&om)?)
            }
            Quantity::Channel(l, k) => net.channel(check(l)?, check(k)?).clone(),
        })
    }
}

/// Forward covariances used in the first round.
#[derive(Debug, Clone)]
pub enum PrdInit {
    /// `A A† / Tr(A A†)` scaled to `power` per link, `A` square i.i.d.
    /// complex Gaussian drawn from `seed`.
    Random { seed: u64, power: f64 },
    Given(CovarianceSet),
}

/// A node that additionally reads something it should not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RogueRead {
    pub node: NodeId,
    pub quantity: Quantity,
}

#[derive(Debug, Clone)]
pub struct PrdOptions {
    /// Full rounds after the initial forward transmission; the run ends
    /// with the forward half of round `rounds + 1`.
    pub rounds: usize,
    /// Targets are multiplied by `beta ≥ 1`.
    pub beta: f64,
    pub init: PrdInit,
    /// Order in which nodes are visited inside a half-round.
    pub node_order: Option<Vec<usize>>,
    pub rogue: Option<RogueRead>,
    pub estimation_noise: Option<EstimationNoise>,
}

impl Default for PrdOptions {
    fn default() -> Self {
        Self {
            rounds: 3,
            beta: 1.0,
            init: PrdInit::Random { seed: 0, power: 1.0 },
            node_order: None,
            rogue: None,
            estimation_noise: None,
        }
    }
}

/// State after a forward half-round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// `x.5` after `x` full rounds.
    pub label: f64,
    pub sum_power: f64,
    /// Rates in nats against the true (unscaled) targets.
    pub rates: Vec<f64>,
    /// `min_l I_l / I⁰_l` over links with positive targets.
    pub min_scaled_rate: f64,
}

#[derive(Debug, Clone)]
pub struct PrdRun {
    pub result: SolverResult,
    pub rounds: Vec<RoundRecord>,
    pub forward_iterates: Vec<CovarianceSet>,
    pub reverse_iterates: Vec<CovarianceSet>,
    pub access_log: Vec<Access>,
}

/// Random round-one covariances, one per link.
pub fn random_init(net: &NetworkSpec, seed: u64, power: f64) -> CovarianceSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mats = (0..net.links())
        .map(|l| {
            let d = net.tx_antennas(l);
            let a = CMat::from_fn(d, d, |_, _| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                C64::new(re, im)
            });
            let s = &a * a.adjoint();
            linalg::hermitize(&(&s * c(power / linalg::trace_re(&s))))
        })
        .collect();
    CovarianceSet::trusted(Direction::Forward, mats)
}

fn min_scaled(rates: &[f64], targets: &[f64]) -> f64 {
    rates
        .iter()
        .zip(targets)
        .filter(|(_, t)| **t > 0.0)
        .map(|(r, t)| r / t)
        .fold(f64::INFINITY, f64::min)
}

/// Runs Algorithm PRD. Transmitter `l` caps `Tr(Σ_l)` at the cap of its
/// node and receiver `l` caps `Tr(Σ̂_l)` likewise.
pub fn run_prd(net: &NetworkSpec, phi: &Coupling, targets: &[f64], opts: &PrdOptions) -> Result<PrdRun> {
    let n = net.links();
    if targets.len() != n || phi.len() != n {
        return Err(Error::Dimension("targets and coupling must match the link count".into()));
    }
    if !(opts.beta >= 1.0) {
        return Err(Error::InvalidInput(format!("beta {} must be at least 1", opts.beta)));
    }
    let scaled: Vec<f64> = targets.iter().map(|t| t * opts.beta).collect();
    let order: Vec<usize> = opts.node_order.clone().unwrap_or_else(|| (0..n).collect());
    let mut sorted = order.clone();
    sorted.sort_unstable();
    if sorted != (0..n).collect::<Vec<_>>() {
        return Err(Error::InvalidInput("node order must be a permutation of the links".into()));
    }
    let init = match &opts.init {
        PrdInit::Random { seed, power } => random_init(net, *seed, *power),
        PrdInit::Given(s) => {
            if s.direction != Direction::Forward || s.len() != n {
                return Err(Error::InvalidInput("initial point needs one forward covariance per link".into()));
            }
            s.clone()
        }
    };
    let log = RefCell::new(Vec::new());
    let mut fwd = init.into_mats();
    let mut rev = CovarianceSet::zeros(net, Direction::Reverse).into_mats();
    let mut forward_iterates = vec![CovarianceSet::trusted(Direction::Forward, fwd.clone())];
    let mut reverse_iterates = Vec::new();
    let mut rounds = vec![round_record(net, phi, &fwd, targets, 0.5)?];
    let mut half = 1;
    for r in 1..=opts.rounds {
        let provider = ChannelProvider::new(net, phi, &fwd, &rev, half, &log).with_noise(opts.estimation_noise);
        let mut next = rev.clone();
        for &l in &order {
            next[l] = receiver_update(&provider, l, scaled[l], net.rx_cap(l), opts.rogue)?;
        }
        rev = next;
        reverse_iterates.push(CovarianceSet::trusted(Direction::Reverse, rev.clone()));
        half += 1;
        let provider = ChannelProvider::new(net, phi, &fwd, &rev, half, &log).with_noise(opts.estimation_noise);
        let mut next = fwd.clone();
        for &l in &order {
            next[l] = transmitter_update(&provider, l, scaled[l], net.tx_cap(l), opts.rogue)?;
        }
        fwd = next;
        forward_iterates.push(CovarianceSet::trusted(Direction::Forward, fwd.clone()));
        half += 1;
        rounds.push(round_record(net, phi, &fwd, targets, r as f64 + 0.5)?);
    }
    let trace = rounds
        .iter()
        .map(|r| IterRecord {
            objective: r.sum_power,
            sum_power: r.sum_power,
            rates: r.rates.clone(),
            feasible: r.min_scaled_rate >= 1.0,
        })
        .collect();
    let covs = CovarianceSet::new(net, Direction::Forward, fwd)?;
    let iterations = opts.rounds;
    let result = SolverResult::from_covariances(net, phi, covs, None, trace, false, iterations)?;
    Ok(PrdRun { result, rounds, forward_iterates, reverse_iterates, access_log: log.into_inner() })
}

fn round_record(net: &NetworkSpec, phi: &Coupling, fwd: &[CMat], targets: &[f64], label: f64) -> Result<RoundRecord> {
    let set = CovarianceSet::trusted(Direction::Forward, fwd.to_vec());
    let rates = link_rates(net, phi, &set)?;
    Ok(RoundRecord {
        label,
        sum_power: set.weighted_power(net),
        min_scaled_rate: min_scaled(&rates, targets),
        rates,
    })
}

fn rogue_read(p: &ChannelProvider, me: NodeId, rogue: Option<RogueRead>) -> Result<()> {
    if let Some(r) = rogue.filter(|r| r.node == me) {
        p.read(me, r.quantity)?;
    }
    Ok(())
}

fn transmitter_update(p: &ChannelProvider, l: usize, target: f64, cap: f64, rogue: Option<RogueRead>) -> Result<CMat> {
    let me = NodeId::Tx(l);
    rogue_read(p, me, rogue)?;
    let omega_r = p.read(me, Quantity::ReverseInterference(l))?;
    let eff = p.read(me, Quantity::ReverseEffectiveChannel(l))?.adjoint();
    polite_update(&eff, &omega_r, target, cap).map(|(s, _)| s)
}

fn receiver_update(p: &ChannelProvider, l: usize, target: f64, cap: f64, rogue: Option<RogueRead>) -> Result<CMat> {
    let me = NodeId::Rx(l);
    rogue_read(p, me, rogue)?;
    let omega = p.read(me, Quantity::ForwardInterference(l))?;
    let eff = p.read(me, Quantity::ForwardEffectiveChannel(l))?.adjoint();
    polite_update(&eff, &omega, target, cap).map(|(s, _)| s)
}

/// Outcome of a locality audit.
#[derive(Debug, Clone, PartialEq)]
pub enum AuditVerdict {
    Pass,
    /// First read outside the reader's local knowledge.
    Fail { witness: Access },
}

impl AuditVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, AuditVerdict::Pass)
    }
}

/// Checks that every logged read was local to the reading node.
pub fn information_audit(log: &[Access]) -> AuditVerdict {
    match log.iter().find(|a| !a.node.may_read(a.quantity)) {
        Some(&witness) => AuditVerdict::Fail { witness },
        None => AuditVerdict::Pass,
    }
}

/// Runs forward half-iterations of centralized PR1 with every channel read
/// logged as `Central`, to calibrate the audit.
pub fn audited_centralized_pr1(
    net: &NetworkSpec,
    phi: &Coupling,
    targets: &[f64],
    iterations: usize,
) -> Result<Vec<Access>> {
    let log = RefCell::new(Vec::new());
    let mut fwd = CovarianceSet::zeros(net, Direction::Forward).into_mats();
    let scale: Vec<f64> = (0..net.links()).map(|l| 1.0 / net.rx_antennas(l) as f64).collect();
    let rev = CovarianceSet::scaled_identity(net, Direction::Reverse, &scale).into_mats();
    for it in 0..iterations {
        let provider = ChannelProvider::new(net, phi, &fwd, &rev, it + 1, &log);
        for l in 0..net.links() {
            for k in 0..net.links() {
                provider.read(NodeId::Central, Quantity::Channel(l, k))?;
            }
        }
        let inf = vec![f64::INFINITY; net.links()];
        fwd = forward_half(net, phi, &fwd, &rev, targets, &inf)?;
    }
    Ok(log.into_inner())
}
