//! Stream-level solvers built on SINR duality.
//!
//! Algorithm A maximizes the common scaling `C` of per-stream SINR targets
//! under a total power budget by alternating forward and reverse
//! eigen-problems. Algorithm B minimizes total power subject to the targets
//! by alternating forward and reverse power control. Both update receive
//! vectors by forward MMSE-SIC and transmit vectors by reverse MMSE-SIC.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::conversion::{equal_sinr_streams, rate_to_sinr_targets};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec, RMat, RVec, C64};
use crate::netmodel::{interference_from, link_rates, Coupling, CovarianceSet, Direction, NetworkSpec};
use crate::streams::{
    complete_strategy, cross_talk, mmse_sic_receivers, mmse_sic_transmitters, StreamLayout, StreamStrategy,
};

/// Starting point for the stream solvers.
#[derive(Debug, Clone, Default)]
pub enum Init {
    /// Leading right singular vectors of each direct channel, mixed by a
    /// DFT so that every stream touches every eigenmode.
    #[default]
    Mixed,
    /// Leading right singular vectors of each direct channel, unmixed.
    SingularVectors,
    /// i.i.d. Gaussian directions.
    Random(u64),
    /// Equal-SINR split of the given forward covariances.
    Covariances(CovarianceSet),
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub init: Init,
    /// Relative objective change that counts as converged.
    pub tol: f64,
    pub max_iter: usize,
    /// Sum-power ceiling; `None` means `1e6` times the total noise power.
    pub power_cap: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { init: Init::Mixed, tol: 1e-8, max_iter: 2000, power_cap: None }
    }
}

impl SolverOptions {
    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub(crate) fn cap(&self, net: &NetworkSpec) -> f64 {
        self.power_cap.unwrap_or(1e6 * net.total_noise_power())
    }
}

/// State after one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub objective: f64,
    pub sum_power: f64,
    pub rates: Vec<f64>,
    /// All targets met at this iterate.
    pub feasible: bool,
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub covs_f: CovarianceSet,
    pub covs_r: CovarianceSet,
    /// Final stream decomposition, when the solver works with streams.
    pub strategy: Option<StreamStrategy>,
    pub rates: Vec<f64>,
    /// Weighted sum power `Σ Tr(Σ_l Ŵ_l)`.
    pub sum_power: f64,
    /// `C` for the max-min problem, sum power for the power problem.
    pub objective: f64,
    pub trace: Vec<IterRecord>,
    pub converged: bool,
    pub iterations: usize,
}

impl SolverResult {
    /// Builds a result from forward covariances, completing the reverse side
    /// with the covariance transformation.
    pub(crate) fn from_covariances(
        net: &NetworkSpec,
        phi: &Coupling,
        covs_f: CovarianceSet,
        objective: Option<f64>,
        trace: Vec<IterRecord>,
        converged: bool,
        iterations: usize,
    ) -> Result<Self> {
        let t = crate::streams::covariance_transformation(net, phi, &covs_f)?;
        let rates = link_rates(net, phi, &covs_f)?;
        let sum_power = covs_f.weighted_power(net);
        Ok(Self {
            covs_r: t.covs,
            strategy: Some(t.strategy),
            rates,
            sum_power,
            objective: objective.unwrap_or(sum_power),
            covs_f,
            trace,
            converged,
            iterations,
        })
    }
}

/// Streams per link: the rank of the direct channel, zero for links with a
/// zero rate target.
pub fn stream_counts(net: &NetworkSpec, targets: &[f64]) -> Vec<usize> {
    (0..net.links())
        .map(|l| if targets[l] > 0.0 { linalg::rank(net.channel(l, l)) } else { 0 })
        .collect()
}

fn check_targets(net: &NetworkSpec, targets: &[f64]) -> Result<()> {
    if targets.len() != net.links() {
        return Err(Error::Dimension(format!("{} rate targets for {} links", targets.len(), net.links())));
    }
    if targets.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidInput("rate targets must be finite and nonnegative".into()));
    }
    for l in 0..net.links() {
        if targets[l] > 0.0 && linalg::rank(net.channel(l, l)) == 0 {
            return Err(Error::Infeasible(format!("link {l} has a zero direct channel")));
        }
    }
    Ok(())
}

fn dft_mix(v: &CMat) -> CMat {
    let m = v.ncols();
    let s = 1.0 / (m as f64).sqrt();
    let f = CMat::from_fn(m, m, |a, b| C64::from_polar(s, -2.0 * std::f64::consts::PI * (a * b) as f64 / m as f64));
    v * f
}

/// Projects `sigma` onto the row space of `h`, where it can carry signal.
fn project_to_row_space(h: &CMat, sigma: &CMat) -> CMat {
    let v = linalg::thin_svd(h).v;
    let p = &v * v.adjoint();
    linalg::hermitize(&(&p * sigma * &p))
}

/// Initial unit transmit vectors and powers.
fn initial_streams(
    net: &NetworkSpec,
    phi: &Coupling,
    layout: &StreamLayout,
    init: &Init,
    power: f64,
) -> Result<(Vec<CVec>, Vec<f64>)> {
    let n = layout.total();
    let mut tx = Vec::with_capacity(n);
    let mut p = vec![power; n];
    match init {
        Init::Mixed | Init::SingularVectors => {
            for l in 0..layout.links() {
                let m = layout.count(l);
                if m == 0 {
                    continue;
                }
                let v = linalg::thin_svd(net.channel(l, l)).v.columns(0, m).into_owned();
                let v = if matches!(init, Init::Mixed) { dft_mix(&v) } else { v };
                tx.extend((0..m).map(|j| v.column(j).into_owned()));
            }
        }
        Init::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for l in 0..layout.links() {
                for _ in layout.range(l) {
                    let d = net.tx_antennas(l);
                    let v = CVec::from_fn(d, |_, _| {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        C64::new(re, im)
                    });
                    tx.push(&v / c(v.norm()));
                }
            }
        }
        Init::Covariances(covs) => {
            if covs.direction != Direction::Forward || covs.len() != net.links() {
                return Err(Error::InvalidInput("warm start needs one forward covariance per link".into()));
            }
            let mats: Vec<CMat> =
                (0..net.links()).map(|l| project_to_row_space(net.channel(l, l), covs.get(l))).collect();
            for l in 0..layout.links() {
                let m = layout.count(l);
                if m == 0 {
                    continue;
                }
                let omega = interference_from(net, phi, Direction::Forward, &mats, l, net.links());
                let hw = linalg::herm_inv_sqrt(&omega)? * net.channel(l, l);
                let (dirs, pw) = if linalg::trace_re(&mats[l]) > 0.0 {
                    equal_sinr_streams(&hw, &mats[l], m)?
                } else {
                    let v = dft_mix(&linalg::thin_svd(net.channel(l, l)).v.columns(0, m).into_owned());
                    ((0..m).map(|j| v.column(j).into_owned()).collect(), vec![power; m])
                };
                let base = layout.range(l).start;
                for (j, (d, w)) in dirs.into_iter().zip(pw).enumerate() {
                    tx.push(d);
                    p[base + j] = if w > 0.0 { w } else { power };
                }
            }
        }
    }
    Ok((tx, p))
}

/// Dominant eigenpair of the extended matrix
/// `[[D A, D b], [cᵀ D A / P, cᵀ D b / P]]` with `D = diag(d)`.
///
/// Returns the leading block of the Perron vector scaled so that the last
/// component is one (equivalently `cᵀ x = P`), and the Perron root.
pub fn solve_extended_eigensystem(d: &[f64], a: &RMat, b: &[f64], cost: &[f64], total: f64) -> Result<(Vec<f64>, f64)> {
    let n = d.len();
    if a.nrows() != n || a.ncols() != n || b.len() != n || cost.len() != n {
        return Err(Error::Dimension("extended eigensystem sizes disagree".into()));
    }
    if !(total > 0.0) || d.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidInput("extended eigensystem needs positive D and budget".into()));
    }
    let mut ext = RMat::zeros(n + 1, n + 1);
    for i in 0..n {
        for j in 0..n {
            ext[(i, j)] = d[i] * a[(i, j)];
        }
        ext[(i, n)] = d[i] * b[i];
    }
    for j in 0..=n {
        let s: f64 = (0..n).map(|i| cost[i] * ext[(i, j)]).sum();
        ext[(n, j)] = s / total;
    }
    if n + 1 < 200 {
        dense_perron(&ext, n, cost, total)
    } else {
        power_perron(&ext, n, cost, total)
    }
}

fn dense_perron(ext: &RMat, n: usize, cost: &[f64], total: f64) -> Result<(Vec<f64>, f64)> {
    let lambda = ext
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-9 * z.norm().max(1e-300))
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Numerical("no positive Perron root".into()));
    }
    let mut sys = RMat::zeros(n, n);
    let mut rhs = RVec::zeros(n);
    for i in 0..n {
        for j in 0..n {
            sys[(i, j)] = -ext[(i, j)];
        }
        sys[(i, i)] += lambda;
        rhs[i] = ext[(i, n)];
    }
    let x = linalg::solve_refined(&sys, &rhs)?;
    finish_perron(x.as_slice(), lambda, cost, total)
}

fn power_perron(ext: &RMat, n: usize, cost: &[f64], total: f64) -> Result<(Vec<f64>, f64)> {
    let mut x = RVec::from_element(n + 1, 1.0);
    for _ in 0..10_000 {
        let y = ext * &x;
        let lambda = y[n];
        let y = y / lambda;
        let diff = (&y - &x).amax() / y.amax();
        x = y;
        if diff < 1e-14 {
            return finish_perron(&x.as_slice()[..n], lambda, cost, total);
        }
    }
    Err(Error::Numerical("power iteration did not converge in 10^4 steps".into()))
}

fn finish_perron(x: &[f64], lambda: f64, cost: &[f64], total: f64) -> Result<(Vec<f64>, f64)> {
    if x.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Numerical("Perron vector is not strictly positive".into()));
    }
    let spent: f64 = x.iter().zip(cost).map(|(a, b)| a * b).sum();
    let s = total / spent;
    Ok((x.iter().map(|v| v * s).collect(), lambda))
}

struct Problem<'a> {
    net: &'a NetworkSpec,
    phi: &'a Coupling,
    layout: StreamLayout,
    /// Per-stream SINR target.
    gamma0: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(net: &'a NetworkSpec, phi: &'a Coupling, targets: &[f64]) -> Result<Self> {
        check_targets(net, targets)?;
        if phi.len() != net.links() {
            return Err(Error::Dimension("coupling size differs from link count".into()));
        }
        let counts = stream_counts(net, targets);
        let per_link = rate_to_sinr_targets(targets, &counts);
        let layout = StreamLayout::new(counts);
        let gamma0 = (0..layout.total()).map(|i| per_link[layout.link_of(i)]).collect();
        Ok(Self { net, phi, layout, gamma0 })
    }

    fn covs(&self, tx: &[CVec], p: &[f64]) -> CovarianceSet {
        CovarianceSet::trusted(
            Direction::Forward,
            crate::streams::sum_outer(&self.layout, tx, p, |l| self.net.tx_antennas(l)),
        )
    }

    fn rates(&self, tx: &[CVec], p: &[f64]) -> Result<Vec<f64>> {
        link_rates(self.net, self.phi, &self.covs(tx, p))
    }

    fn require_positive_sinr(&self, tx: &[CVec], p: &[f64]) -> Result<()> {
        let rx = mmse_sic_receivers(self.net, self.phi, &self.layout, tx, p)?;
        let g = cross_talk(self.net, self.phi, &self.layout, tx, &rx).forward_sinr(p);
        if let Some(i) = g.iter().position(|&x| !(x > 0.0)) {
            return Err(Error::InvalidInput(format!("initial point gives stream {i} zero SINR")));
        }
        Ok(())
    }

    fn finish(
        &self,
        tx: Vec<CVec>,
        p: Vec<f64>,
        objective: f64,
        trace: Vec<IterRecord>,
        converged: bool,
    ) -> Result<SolverResult> {
        let strategy = complete_strategy(self.net, self.phi, self.layout.clone(), tx, p)?;
        let covs_f = strategy.forward_covariances(self.net);
        let covs_r = strategy.reverse_covariances(self.net);
        let rates = link_rates(self.net, self.phi, &covs_f)?;
        let sum_power = covs_f.weighted_power(self.net);
        let iterations = trace.len();
        Ok(SolverResult { covs_f, covs_r, strategy: Some(strategy), rates, sum_power, objective, trace, converged, iterations })
    }
}

/// Max-min scaled SINR under total weighted power `total_power`.
///
/// The returned objective is `C = 1/λ_max`: every stream reaches `C` times
/// its target SINR `e^{I⁰_l/M_l} − 1`, so the rate targets are jointly
/// feasible exactly when `C ≥ 1`.
pub fn algorithm_a(
    net: &NetworkSpec,
    phi: &Coupling,
    targets: &[f64],
    total_power: f64,
    opts: &SolverOptions,
) -> Result<SolverResult> {
    if !(total_power > 0.0) || !total_power.is_finite() {
        return Err(Error::InvalidInput("total power must be positive and finite".into()));
    }
    let pb = Problem::new(net, phi, targets)?;
    let n = pb.layout.total();
    if n == 0 {
        let z = CovarianceSet::zeros(net, Direction::Forward);
        return SolverResult::from_covariances(net, phi, z, Some(f64::INFINITY), vec![], true, 0);
    }
    let (mut tx, p0) = initial_streams(net, phi, &pb.layout, &opts.init, total_power / n as f64)?;
    let spent: f64 = p0.iter().sum();
    let mut p: Vec<f64> = p0.iter().map(|x| x * total_power / spent).collect();
    pb.require_positive_sinr(&tx, &p)?;
    let mut trace = Vec::new();
    let mut prev = f64::NAN;
    let mut converged = false;
    let mut objective = 0.0;
    for _ in 0..opts.max_iter {
        let rx = mmse_sic_receivers(net, phi, &pb.layout, &tx, &p)?;
        let ct = cross_talk(net, phi, &pb.layout, &tx, &rx);
        let d: Vec<f64> = (0..n).map(|i| pb.gamma0[i] / ct.gain[i]).collect();
        let (q, _) = solve_extended_eigensystem(&d, &ct.psi.transpose(), &ct.rev_noise, &ct.fwd_noise, total_power)?;
        tx = mmse_sic_transmitters(net, phi, &pb.layout, &rx, &q)?;
        let ct = cross_talk(net, phi, &pb.layout, &tx, &rx);
        let d: Vec<f64> = (0..n).map(|i| pb.gamma0[i] / ct.gain[i]).collect();
        let (pn, lambda) = solve_extended_eigensystem(&d, &ct.psi, &ct.fwd_noise, &ct.rev_noise, total_power)?;
        p = pn;
        objective = 1.0 / lambda;
        let rates = pb.rates(&tx, &p)?;
        trace.push(IterRecord { objective, sum_power: total_power, rates, feasible: objective >= 1.0 });
        if (objective - prev).abs() <= opts.tol * objective.abs() {
            converged = true;
            break;
        }
        prev = objective;
    }
    pb.finish(tx, p, objective, trace, converged)
}

/// Minimum weighted sum power meeting the per-link rate targets.
pub fn algorithm_b(net: &NetworkSpec, phi: &Coupling, targets: &[f64], opts: &SolverOptions) -> Result<SolverResult> {
    let pb = Problem::new(net, phi, targets)?;
    let n = pb.layout.total();
    if n == 0 {
        let z = CovarianceSet::zeros(net, Direction::Forward);
        return SolverResult::from_covariances(net, phi, z, None, vec![], true, 0);
    }
    let cap = opts.cap(net);
    let (mut tx, mut p) = initial_streams(net, phi, &pb.layout, &opts.init, 1.0)?;
    pb.require_positive_sinr(&tx, &p)?;
    let mut trace = Vec::new();
    let mut prev = f64::NAN;
    let mut converged = false;
    let ratio = |g0: &[f64], g: &[f64]| g.iter().zip(g0).map(|(a, b)| a / b).fold(f64::INFINITY, f64::min);
    for _ in 0..opts.max_iter {
        let rx = mmse_sic_receivers(net, phi, &pb.layout, &tx, &p)?;
        let ct = cross_talk(net, phi, &pb.layout, &tx, &rx);
        let g = ct.forward_sinr(&p);
        for i in 0..n {
            p[i] *= pb.gamma0[i] / g[i];
        }
        let snap = ct.forward_sinr(&p);
        let mut q = ct.reverse_powers(&snap)?;
        tx = mmse_sic_transmitters(net, phi, &pb.layout, &rx, &q)?;
        let ct = cross_talk(net, phi, &pb.layout, &tx, &rx);
        let g = ct.reverse_sinr(&q);
        for i in 0..n {
            q[i] *= pb.gamma0[i] / g[i];
        }
        let snap = ct.reverse_sinr(&q);
        p = ct.forward_powers(&snap)?;
        let sum_power: f64 = p.iter().zip(&ct.rev_noise).map(|(a, b)| a * b).sum();
        if !(sum_power <= cap) {
            return Err(Error::Infeasible(format!("sum power {sum_power:.3e} exceeds cap {cap:.3e}")));
        }
        let worst = ratio(&pb.gamma0, &snap);
        let rates = pb.rates(&tx, &p)?;
        trace.push(IterRecord { objective: sum_power, sum_power, rates, feasible: worst >= 1.0 - 1e-12 });
        if (sum_power - prev).abs() <= opts.tol * sum_power && worst >= 1.0 - opts.tol {
            converged = true;
            break;
        }
        prev = sum_power;
    }
    let sp: f64 = trace.last().map_or(0.0, |r| r.sum_power);
    pb.finish(tx, p, sp, trace, converged).map(|mut r| {
        r.objective = r.sum_power;
        r
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extended_single_stream() {
        // [[0, d], [0, d/P]] has Perron root d/P with vector (P, 1).
        let (p, lam) = solve_extended_eigensystem(&[0.5], &RMat::zeros(1, 1), &[1.0], &[1.0], 4.0).unwrap();
        assert!((p[0] - 4.0).abs() < 1e-12);
        assert!((lam - 0.125).abs() < 1e-12);
    }

    #[test]
    fn extended_decoupled_equal_streams() {
        let (p, _) = solve_extended_eigensystem(&[2.0, 2.0], &RMat::zeros(2, 2), &[1.0, 1.0], &[1.0, 1.0], 3.0).unwrap();
        assert!((p[0] - 1.5).abs() < 1e-12 && (p[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn algorithm_b_single_user_scalar() {
        let net = NetworkSpec::scalar(&[vec![1.0]]).unwrap();
        let r = algorithm_b(&net, &Coupling::none(1), &[4f64.ln()], &SolverOptions::default()).unwrap();
        assert!((r.sum_power - 3.0).abs() < 1e-9);
    }

    #[test]
    fn algorithm_b_symmetric_ic() {
        let a = 0.5f64.sqrt();
        let net = NetworkSpec::scalar(&[vec![1.0, a], vec![a, 1.0]]).unwrap();
        let r = algorithm_b(&net, &Coupling::full(2), &[2f64.ln(); 2], &SolverOptions::default()).unwrap();
        assert!((r.sum_power - 4.0).abs() < 1e-3, "{}", r.sum_power);
    }

    #[test]
    fn zero_targets_give_zero_power() {
        let net = NetworkSpec::scalar(&[vec![1.0, 0.3], vec![0.2, 1.0]]).unwrap();
        let r = algorithm_b(&net, &Coupling::full(2), &[0.0, 0.0], &SolverOptions::default()).unwrap();
        assert_eq!(r.sum_power, 0.0);
    }
}
