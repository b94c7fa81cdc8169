//! Networks whose interference graph is acyclic under some link indexing.
//!
//! In iTree order link `l` is never interfered by a link with a smaller
//! index, so the first `i` links form a self-contained sub-network once the
//! interference of the remaining links is folded into colored noise. That
//! structure lets Algorithm S raise one link's rate at fixed total power by a
//! single-user polite water-fill, and Algorithm I alternate it with the
//! stream solvers until every link is polite water-filled.

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec};
use crate::netmodel::{interference_from, Coupling, CovarianceSet, Direction, NetworkSpec};
use crate::politewf::{check_structure, polite_waterfill, EquivalentChannel, WfMode};
use crate::sinr_algs::{algorithm_a, algorithm_b, Init, SolverOptions, SolverResult};
use crate::streams::{covariance_transformation, cross_talk, eigen_streams, mmse_sic_transmitters, StreamLayout};

/// Relabeling `perm` (new link `j` is old `perm[j]`) under which no link is
/// interfered by a link with a smaller index, or `None` if the interference
/// graph has a directed cycle.
///
/// Kahn's algorithm on edges `l → k` whenever `Φ[l][k] = 1`; ties go to the
/// smaller original index.
pub fn itree_order(phi: &Coupling) -> Option<Vec<usize>> {
    let n = phi.len();
    let mut indeg = vec![0usize; n];
    for l in 0..n {
        for k in 0..n {
            if l != k && phi.get(l, k) {
                indeg[k] += 1;
            }
        }
    }
    let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&k| indeg[k] == 0).collect();
    let mut perm = Vec::with_capacity(n);
    while let Some(l) = ready.pop_first() {
        perm.push(l);
        for k in 0..n {
            if l != k && phi.get(l, k) {
                indeg[k] -= 1;
                if indeg[k] == 0 {
                    ready.insert(k);
                }
            }
        }
    }
    (perm.len() == n).then_some(perm)
}

/// True when `Φ[l][k] = 0` for every `k < l`.
pub fn is_itree_ordered(phi: &Coupling) -> bool {
    (0..phi.len()).all(|l| (0..l).all(|k| !phi.get(l, k)))
}

fn require_itree(phi: &Coupling) -> Result<()> {
    if is_itree_ordered(phi) {
        Ok(())
    } else {
        Err(Error::InvalidInput("coupling is not in iTree order; relabel with itree_order first".into()))
    }
}

/// First `i` links of a network with the rest folded into noise.
#[derive(Debug, Clone)]
pub struct SubNetwork {
    pub net: NetworkSpec,
    pub phi: Coupling,
    /// `Σ_{l<i} Tr(Σ_l Ŵ_l)`.
    pub budget: f64,
}

/// Sub-network of links `0..i` with noise
/// `W_l + Σ_{j≥i} Φ[l][j] H[l][j] Σ_j H[l][j]†`.
pub fn build_subnetwork(net: &NetworkSpec, phi: &Coupling, covs: &CovarianceSet, i: usize) -> Result<SubNetwork> {
    if i == 0 || i > net.links() {
        return Err(Error::InvalidInput(format!("sub-network size {i} outside 1..={}", net.links())));
    }
    if covs.direction != Direction::Forward || covs.len() != net.links() {
        return Err(Error::InvalidInput("sub-network needs one forward covariance per link".into()));
    }
    let noise = (0..i)
        .map(|l| {
            let mut w = net.noise(l).clone();
            for j in i..net.links() {
                if phi.get(l, j) {
                    let h = net.channel(l, j);
                    w += h * covs.get(j) * h.adjoint();
                }
            }
            linalg::hermitize(&w)
        })
        .collect();
    let sub = net.truncate(i, noise)?;
    let budget = (0..i).map(|l| linalg::trace_prod_re(covs.get(l), net.weight(l))).sum();
    Ok(SubNetwork { net: sub, phi: phi.truncate(i), budget })
}

/// Raises the rate of link `i` without lowering any other rate or changing
/// the weighted sum power.
///
/// The reverse covariance of link `i` in the sub-network of links `0..=i` is
/// replaced by the polite water-fill with the same weighted power; the
/// sub-network is then mapped back to the forward side one link at a time,
/// from link `i` down to link 0.
pub fn algorithm_s(net: &NetworkSpec, phi: &Coupling, covs: &CovarianceSet, i: usize) -> Result<CovarianceSet> {
    require_itree(phi)?;
    if i >= net.links() {
        return Err(Error::InvalidInput(format!("link {i} out of range")));
    }
    let sub = build_subnetwork(net, phi, covs, i + 1)?;
    let sub_covs = CovarianceSet::trusted(Direction::Forward, covs.mats()[..=i].to_vec());
    let mut rev = covariance_transformation(&sub.net, &sub.phi, &sub_covs)?.covs.into_mats();
    // Forward link i is interference free inside the sub-network.
    let omega = sub.net.noise(i).clone();
    let omega_r = interference_from(&sub.net, &sub.phi, Direction::Reverse, &rev, i, i + 1);
    let eq = EquivalentChannel::new(sub.net.channel(i, i), omega, omega_r)?;
    let beta = linalg::trace_prod_re(&rev[i], sub.net.noise(i));
    let wf = polite_waterfill(&eq, WfMode::Budget(beta))?;
    rev[i] = eq.reverse_covariance(&wf.d);
    let fwd = sequential_forward(&sub.net, &sub.phi, &rev)?;
    let mut out = covs.mats().to_vec();
    for (l, s) in fwd.into_iter().enumerate() {
        out[l] = s;
    }
    CovarianceSet::new(net, Direction::Forward, out)
}

/// Forward covariances matching the reverse rates of `rev` on an
/// iTree-ordered network, with powers solved link by link from the last.
///
/// Transmit vectors are the reverse MMSE-SIC receivers. Stream `m` of link
/// `l` then sees the noise `Ω'_l = W_l + Σ_{k>l} Φ[l][k] H Σ'_k H†` plus the
/// streams of its own link decoded after it, all already known.
fn sequential_forward(net: &NetworkSpec, phi: &Coupling, rev: &[CMat]) -> Result<Vec<CMat>> {
    let set = CovarianceSet::trusted(Direction::Reverse, rev.to_vec());
    let (layout, rx, q) = eigen_streams(&set);
    let tx = mmse_sic_transmitters(net, phi, &layout, &rx, &q)?;
    let gamma = cross_talk(net, phi, &layout, &tx, &rx).reverse_sinr(&q);
    let mut fwd: Vec<CMat> = (0..net.links()).map(|l| linalg::zeros(net.tx_antennas(l), net.tx_antennas(l))).collect();
    let mut p = vec![0.0; layout.total()];
    for l in (0..net.links()).rev() {
        let h = net.channel(l, l);
        let omega = interference_from(net, phi, Direction::Forward, &fwd, l, net.links());
        for m in layout.range(l).rev() {
            let r = &rx[m];
            let signal = r.dotc(&(h * &tx[m])).norm_sqr();
            let mut noise = (r.adjoint() * &omega * r)[(0, 0)].re;
            for j in (m + 1)..layout.range(l).end {
                noise += p[j] * r.dotc(&(h * &tx[j])).norm_sqr();
            }
            p[m] = gamma[m] * noise / signal;
        }
        fwd[l] = stream_sum(&layout, &tx, &p, l, net.tx_antennas(l));
    }
    Ok(fwd)
}

fn stream_sum(layout: &StreamLayout, v: &[CVec], p: &[f64], l: usize, dim: usize) -> CMat {
    let mut s = linalg::zeros(dim, dim);
    for m in layout.range(l) {
        s += &v[m] * v[m].adjoint() * c(p[m]);
    }
    linalg::hermitize(&s)
}

/// Base solver wrapped by Algorithm I.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseSolver {
    /// Algorithm A with this total power.
    A { total_power: f64 },
    /// Algorithm B.
    B,
}

/// Outcome of Algorithm I.
#[derive(Debug, Clone)]
pub struct ImprovedResult {
    pub result: SolverResult,
    /// Base-solver objective at the end of each outer round.
    pub objectives: Vec<f64>,
    /// Number of Algorithm S invocations.
    pub s_calls: usize,
    /// All links polite water-filled at exit.
    pub structured: bool,
}

/// Outer rounds of Algorithm I.
pub const MAX_ROUNDS: usize = 50;

/// Alternates a stream solver with Algorithm S on every link whose forward
/// covariance is not polite water-filled, warm-starting the solver from the
/// improved covariances, until every link passes the structure check.
pub fn algorithm_i(
    net: &NetworkSpec,
    phi: &Coupling,
    targets: &[f64],
    base: BaseSolver,
    opts: &SolverOptions,
) -> Result<ImprovedResult> {
    require_itree(phi)?;
    let solve = |o: &SolverOptions| match base {
        BaseSolver::A { total_power } => algorithm_a(net, phi, targets, total_power, o),
        BaseSolver::B => algorithm_b(net, phi, targets, o),
    };
    let mut result = solve(opts)?;
    let mut objectives = vec![result.objective];
    let mut s_calls = 0;
    for _ in 0..MAX_ROUNDS {
        let mut covs = result.covs_f.clone();
        let mut changed = false;
        for i in 0..net.links() {
            if targets[i] <= 0.0 {
                continue;
            }
            let report = check_structure(net, phi, &covs)?;
            if !report.links[i].satisfied {
                covs = algorithm_s(net, phi, &covs, i)?;
                s_calls += 1;
                changed = true;
            }
        }
        if !changed {
            return Ok(ImprovedResult { result, objectives, s_calls, structured: true });
        }
        let warm = opts.clone().with_init(Init::Covariances(covs));
        result = solve(&warm)?;
        objectives.push(result.objective);
    }
    let structured = check_structure(net, phi, &result.covs_f)?.all_satisfied();
    Ok(ImprovedResult { result, objectives, s_calls, structured })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_coupling_keeps_identity_order() {
        assert_eq!(itree_order(&Coupling::none(3)), Some(vec![0, 1, 2]));
    }

    #[test]
    fn full_coupling_has_no_order() {
        assert_eq!(itree_order(&Coupling::full(2)), None);
    }

    #[test]
    fn order_puts_victims_first() {
        // Link 0 interferes link 1 only: link 1 must come first.
        let phi = Coupling::from_rows(&[vec![0, 0], vec![1, 0]]).unwrap();
        let perm = itree_order(&phi).unwrap();
        assert_eq!(perm, vec![1, 0]);
        assert!(is_itree_ordered(&phi.permute(&perm)));
    }

    #[test]
    fn subnetwork_noise_scalar() {
        let a = 0.5f64.sqrt();
        let net = NetworkSpec::scalar(&[vec![1.0, a], vec![0.0, 1.0]]).unwrap();
        let phi = Coupling::from_rows(&[vec![0, 1], vec![0, 0]]).unwrap();
        let covs = CovarianceSet::scaled_identity(&net, Direction::Forward, &[1.0, 2.0]);
        let sub = build_subnetwork(&net, &phi, &covs, 1).unwrap();
        assert!((sub.net.noise(0)[(0, 0)].re - 2.0).abs() < 1e-12);
        assert!((sub.budget - 1.0).abs() < 1e-12);
        let full = build_subnetwork(&net, &phi, &covs, 2).unwrap();
        assert!((full.net.noise(0)[(0, 0)].re - 1.0).abs() < 1e-12);
    }
}
