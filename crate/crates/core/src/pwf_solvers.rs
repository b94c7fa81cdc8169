//! Sum-power minimization by imposing polite water-filling directly.
//!
//! Algorithm PR sweeps the sub-networks of an iTree network and replaces one
//! reverse covariance at a time by the rate-constrained polite water-fill.
//! Algorithm PR1 alternates forward and reverse half-iterations in which
//! every link polite water-fills against the latest interference on both
//! sides; each link update only touches matrices of its own antenna size.

use crate::error::{Error, Result};
use crate::itree::{build_subnetwork, is_itree_ordered};
use crate::linalg::{self, CMat};
use crate::netmodel::{interference_from, link_rates, Coupling, CovarianceSet, Direction, NetworkSpec};
use crate::politewf::{algorithm_w, waterfill_weighted, EquivalentChannel};
use crate::sinr_algs::{algorithm_a, IterRecord, SolverOptions, SolverResult};
use crate::streams::covariance_transformation;

/// Consecutive sign flips of the power change that count as oscillation.
pub const OSCILLATION_FLIPS: usize = 100;

/// Starting point of Algorithm PR1.
#[derive(Debug, Clone, Default)]
pub enum Pr1Init {
    /// Reverse covariances `I / L_R` on every link, forward interference
    /// equal to the noise; the first half-iteration is a forward update.
    #[default]
    UniformReverse,
    /// Given reverse covariances; the first half-iteration is forward.
    Reverse(CovarianceSet),
    /// Given forward covariances and reverse interference equal to `Ŵ`; the
    /// first half-iteration is a reverse update.
    Forward(CovarianceSet),
}

#[derive(Debug, Clone)]
pub struct PwfOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Sum-power ceiling; `None` means `1e6` times the total noise power.
    pub power_cap: Option<f64>,
    /// Test feasibility with Algorithm A at the power cap before iterating.
    pub preflight: bool,
}

impl Default for PwfOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 2000, power_cap: None, preflight: false }
    }
}

impl PwfOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    fn cap(&self, net: &NetworkSpec) -> f64 {
        self.power_cap.unwrap_or(1e6 * net.total_noise_power())
    }
}

/// Output of Algorithm PR1 with its full iterate history.
#[derive(Debug, Clone)]
pub struct Pr1Result {
    pub result: SolverResult,
    /// Forward covariances after every forward half-iteration.
    pub forward_iterates: Vec<CovarianceSet>,
    /// Reverse covariances after every reverse half-iteration.
    pub reverse_iterates: Vec<CovarianceSet>,
    /// Stopped because the power change kept flipping sign.
    pub oscillating: bool,
}

/// One node's polite water-fill from its local view.
///
/// `eff` is the effective channel whitened at the far end (`Ω^{-1/2} H` for
/// a transmitter, `Ω̂^{-1/2} H†` for a receiver) and `omega_local` the
/// interference-plus-noise covariance measured at the node. The level meets
/// `target` nats, lowered if needed so the trace stays within `cap`.
/// Returns the covariance and its water level.
pub fn polite_update(eff: &CMat, omega_local: &CMat, target: f64, cap: f64) -> Result<(CMat, f64)> {
    let isqrt = linalg::herm_inv_sqrt(omega_local)?;
    let hbar = eff * &isqrt;
    let svd = linalg::thin_svd(&hbar);
    let deltas: Vec<f64> = svd.s.iter().map(|s| s * s).collect();
    let mut wf = algorithm_w(&deltas, target)?;
    let weights: Vec<f64> = (0..svd.v.ncols()).map(|j| (&isqrt * svd.v.column(j)).norm_squared()).collect();
    let spent: f64 = wf.d.iter().zip(&weights).map(|(d, w)| d * w).sum();
    if spent > cap {
        wf = waterfill_weighted(&deltas, &weights, cap)?;
    }
    let mut g = svd.v.clone();
    for (j, &d) in wf.d.iter().enumerate() {
        g.column_mut(j).scale_mut(d);
    }
    let inner = &g * svd.v.adjoint();
    Ok((linalg::hermitize(&(&isqrt * inner * &isqrt)), wf.nu))
}

/// Forward half-iteration: every transmitter water-fills against the
/// forward interference of `fwd` and the reverse interference of `rev`.
pub(crate) fn forward_half(
    net: &NetworkSpec,
    phi: &Coupling,
    fwd: &[CMat],
    rev: &[CMat],
    targets: &[f64],
    caps: &[f64],
) -> Result<Vec<CMat>> {
    (0..net.links())
        .map(|l| {
            let omega = interference_from(net, phi, Direction::Forward, fwd, l, net.links());
            let omega_r = interference_from(net, phi, Direction::Reverse, rev, l, net.links());
            let eff = linalg::herm_inv_sqrt(&omega)? * net.channel(l, l);
            polite_update(&eff, &omega_r, targets[l], caps[l]).map(|(s, _)| s)
        })
        .collect()
}

/// Reverse half-iteration, the mirror image of `forward_half`.
pub(crate) fn reverse_half(
    net: &NetworkSpec,
    phi: &Coupling,
    fwd: &[CMat],
    rev: &[CMat],
    targets: &[f64],
    caps: &[f64],
) -> Result<Vec<CMat>> {
    (0..net.links())
        .map(|l| {
            let omega = interference_from(net, phi, Direction::Forward, fwd, l, net.links());
            let omega_r = interference_from(net, phi, Direction::Reverse, rev, l, net.links());
            let eff = linalg::herm_inv_sqrt(&omega_r)? * net.channel(l, l).adjoint();
            polite_update(&eff, &omega, targets[l], caps[l]).map(|(s, _)| s)
        })
        .collect()
}

fn check_inputs(net: &NetworkSpec, phi: &Coupling, targets: &[f64]) -> Result<()> {
    if targets.len() != net.links() || phi.len() != net.links() {
        return Err(Error::Dimension("targets and coupling must match the link count".into()));
    }
    if targets.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidInput("rate targets must be finite and nonnegative".into()));
    }
    Ok(())
}

fn preflight(net: &NetworkSpec, phi: &Coupling, targets: &[f64], cap: f64) -> Result<()> {
    let a = algorithm_a(net, phi, targets, cap, &SolverOptions::default())?;
    if a.objective < 1.0 {
        return Err(Error::Infeasible(format!("targets need more than the power cap (scale {:.4})", a.objective)));
    }
    Ok(())
}

fn record(net: &NetworkSpec, phi: &Coupling, fwd: &[CMat], targets: &[f64]) -> Result<(IterRecord, f64)> {
    let set = CovarianceSet::trusted(Direction::Forward, fwd.to_vec());
    let rates = link_rates(net, phi, &set)?;
    let sum_power = set.weighted_power(net);
    let err = rate_error(&rates, targets);
    let feasible = rates.iter().zip(targets).all(|(r, t)| *r >= t * (1.0 - 1e-12));
    Ok((IterRecord { objective: sum_power, sum_power, rates, feasible }, err))
}

fn rate_error(rates: &[f64], targets: &[f64]) -> f64 {
    rates
        .iter()
        .zip(targets)
        .filter(|(_, t)| **t > 0.0)
        .map(|(r, t)| (r - t).abs() / t)
        .fold(0.0, f64::max)
}

/// Algorithm PR1 for any coupling.
pub fn algorithm_pr1(
    net: &NetworkSpec,
    phi: &Coupling,
    targets: &[f64],
    init: &Pr1Init,
    opts: &PwfOptions,
) -> Result<Pr1Result> {
    check_inputs(net, phi, targets)?;
    let cap = opts.cap(net);
    if opts.preflight {
        preflight(net, phi, targets, cap)?;
    }
    let n = net.links();
    let inf = vec![f64::INFINITY; n];
    let zeros = |dir| CovarianceSet::zeros(net, dir).into_mats();
    let (mut fwd, mut rev, reverse_first) = match init {
        Pr1Init::UniformReverse => {
            let scale: Vec<f64> = (0..n).map(|l| 1.0 / net.rx_antennas(l) as f64).collect();
            (zeros(Direction::Forward), CovarianceSet::scaled_identity(net, Direction::Reverse, &scale).into_mats(), false)
        }
        Pr1Init::Reverse(s) => {
            check_set(net, s, Direction::Reverse)?;
            (zeros(Direction::Forward), s.mats().to_vec(), false)
        }
        Pr1Init::Forward(s) => {
            check_set(net, s, Direction::Forward)?;
            (s.mats().to_vec(), zeros(Direction::Reverse), true)
        }
    };
    let mut forward_iterates = Vec::new();
    let mut reverse_iterates = Vec::new();
    if reverse_first {
        rev = reverse_half(net, phi, &fwd, &rev, targets, &inf)?;
        reverse_iterates.push(CovarianceSet::trusted(Direction::Reverse, rev.clone()));
    }
    let mut trace: Vec<IterRecord> = Vec::new();
    let mut converged = false;
    let mut oscillating = false;
    let mut flips = 0;
    let mut last_sign = 0.0;
    for _ in 0..opts.max_iter {
        fwd = forward_half(net, phi, &fwd, &rev, targets, &inf)?;
        forward_iterates.push(CovarianceSet::trusted(Direction::Forward, fwd.clone()));
        let (rec, err) = record(net, phi, &fwd, targets)?;
        if !(rec.sum_power <= cap) {
            return Err(Error::Infeasible(format!("sum power {:.3e} exceeds cap {cap:.3e}", rec.sum_power)));
        }
        let change = trace.last().map(|p| rec.sum_power - p.sum_power);
        trace.push(rec);
        if let Some(dp) = change {
            let p = trace.last().map_or(1.0, |r| r.sum_power);
            if dp.abs() <= opts.tol * p && err <= opts.tol {
                converged = true;
                break;
            }
            let sign = dp.signum();
            flips = if sign != 0.0 && sign == -last_sign { flips + 1 } else { 0 };
            last_sign = sign;
            if flips > OSCILLATION_FLIPS {
                oscillating = true;
                break;
            }
        }
        rev = reverse_half(net, phi, &fwd, &rev, targets, &inf)?;
        reverse_iterates.push(CovarianceSet::trusted(Direction::Reverse, rev.clone()));
    }
    let iterations = trace.len();
    let covs = CovarianceSet::new(net, Direction::Forward, fwd)?;
    let result = SolverResult::from_covariances(net, phi, covs, None, trace, converged, iterations)?;
    Ok(Pr1Result { result, forward_iterates, reverse_iterates, oscillating })
}

fn check_set(net: &NetworkSpec, s: &CovarianceSet, dir: Direction) -> Result<()> {
    if s.direction != dir || s.len() != net.links() {
        return Err(Error::InvalidInput(format!("initial point needs one {dir:?} covariance per link")));
    }
    Ok(())
}

/// Algorithm PR for iTree-ordered networks, starting from `init` or from
/// all-zero covariances.
///
/// Each sweep visits links in order; for link `i` the sub-network of links
/// `0..=i` is transformed to the reverse side, reverse link `i` is polite
/// water-filled to exactly its target, and the sub-network is mapped back.
pub fn algorithm_pr(
    net: &NetworkSpec,
    phi: &Coupling,
    targets: &[f64],
    init: Option<&CovarianceSet>,
    opts: &PwfOptions,
) -> Result<SolverResult> {
    check_inputs(net, phi, targets)?;
    if !is_itree_ordered(phi) {
        return Err(Error::InvalidInput("coupling is not in iTree order; relabel with itree_order first".into()));
    }
    let cap = opts.cap(net);
    if opts.preflight {
        preflight(net, phi, targets, cap)?;
    }
    let mut covs = match init {
        Some(s) => {
            check_set(net, s, Direction::Forward)?;
            s.clone()
        }
        None => CovarianceSet::zeros(net, Direction::Forward),
    };
    let mut trace: Vec<IterRecord> = Vec::new();
    let mut converged = false;
    for _ in 0..opts.max_iter {
        for i in 0..net.links() {
            covs = pr_step(net, phi, &covs, targets[i], i)?;
        }
        let (rec, err) = record(net, phi, covs.mats(), targets)?;
        if !(rec.sum_power <= cap) {
            return Err(Error::Infeasible(format!("sum power {:.3e} exceeds cap {cap:.3e}", rec.sum_power)));
        }
        let change = trace.last().map(|p| (rec.sum_power - p.sum_power).abs());
        let p = rec.sum_power;
        trace.push(rec);
        if change.is_some_and(|dp| dp <= opts.tol * p) && err <= opts.tol {
            converged = true;
            break;
        }
    }
    let iterations = trace.len();
    SolverResult::from_covariances(net, phi, covs, None, trace, converged, iterations)
}

fn pr_step(net: &NetworkSpec, phi: &Coupling, covs: &CovarianceSet, target: f64, i: usize) -> Result<CovarianceSet> {
    let sub = build_subnetwork(net, phi, covs, i + 1)?;
    let sub_covs = CovarianceSet::trusted(Direction::Forward, covs.mats()[..=i].to_vec());
    let mut rev = covariance_transformation(&sub.net, &sub.phi, &sub_covs)?.covs.into_mats();
    let omega = sub.net.noise(i).clone();
    let omega_r = interference_from(&sub.net, &sub.phi, Direction::Reverse, &rev, i, i + 1);
    let eq = EquivalentChannel::new(sub.net.channel(i, i), omega, omega_r)?;
    let wf = algorithm_w(&eq.deltas(), target)?;
    rev[i] = eq.reverse_covariance(&wf.d);
    let back = CovarianceSet::trusted(Direction::Reverse, rev);
    let fwd = covariance_transformation(&sub.net, &sub.phi, &back)?.covs;
    let mut out = covs.mats().to_vec();
    for (l, s) in fwd.into_mats().into_iter().enumerate() {
        out[l] = s;
    }
    CovarianceSet::new(net, Direction::Forward, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    #[test]
    fn polite_update_single_user_scalar() {
        // h = 1, no interference: rate ln 4 needs power 3.
        let one = CMat::from_element(1, 1, c(1.0));
        let (s, nu) = polite_update(&one, &one, 4f64.ln(), f64::INFINITY).unwrap();
        assert!((s[(0, 0)].re - 3.0).abs() < 1e-12);
        assert!((nu - 4.0).abs() < 1e-12);
    }

    #[test]
    fn polite_update_respects_cap() {
        let one = CMat::from_element(1, 1, c(1.0));
        let (s, _) = polite_update(&one, &one, 4f64.ln(), 2.0).unwrap();
        assert!((s[(0, 0)].re - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pr1_symmetric_ic() {
        let a = 0.5f64.sqrt();
        let net = NetworkSpec::scalar(&[vec![1.0, a], vec![a, 1.0]]).unwrap();
        let r = algorithm_pr1(&net, &Coupling::full(2), &[2f64.ln(); 2], &Pr1Init::default(), &PwfOptions::default())
            .unwrap();
        assert!(r.result.converged);
        assert!((r.result.sum_power - 4.0).abs() < 1e-3);
    }

    #[test]
    fn pr_z_channel() {
        let a = 0.5f64.sqrt();
        let net = NetworkSpec::scalar(&[vec![1.0, a], vec![0.0, 1.0]]).unwrap();
        let phi = Coupling::from_rows(&[vec![0, 1], vec![0, 0]]).unwrap();
        let r = algorithm_pr(&net, &phi, &[2f64.ln(); 2], None, &PwfOptions::default()).unwrap();
        assert!((r.sum_power - 2.5).abs() < 1e-3, "{}", r.sum_power);
    }
}
