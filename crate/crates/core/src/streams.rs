//! Stream-level view of a network: beamformers, MMSE-SIC receivers, the
//! cross-talk matrix, SINRs in both directions, and the covariance
//! transformation that maps forward covariances to reverse covariances
//! achieving the same rates with the same weighted sum power.
//!
//! Streams are indexed link-major. Within a link, stream `m` is the `m`-th
//! decoded in the forward direction and the `m`-th last decoded in the
//! reverse direction.

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec, RMat, RVec};
use crate::netmodel::{
    direct_channel, interference_from, reverse_network, Coupling, CovarianceSet, Direction, NetworkSpec,
};

/// Link-major stream bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamLayout {
    counts: Vec<usize>,
    offsets: Vec<usize>,
}

impl StreamLayout {
    pub fn new(counts: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(counts.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &m in &counts {
            acc += m;
            offsets.push(acc);
        }
        Self { counts, offsets }
    }

    pub fn links(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn count(&self, l: usize) -> usize {
        self.counts[l]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn range(&self, l: usize) -> std::ops::Range<usize> {
        self.offsets[l]..self.offsets[l + 1]
    }

    pub fn link_of(&self, i: usize) -> usize {
        self.offsets.partition_point(|&o| o <= i) - 1
    }
}

/// Transmit vectors `t`, receive vectors `r`, forward powers `p` and reverse
/// powers `q`, all link-major. Beamformers have unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamStrategy {
    pub layout: StreamLayout,
    pub tx: Vec<CVec>,
    pub rx: Vec<CVec>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl StreamStrategy {
    /// `Σ_l = Σ_m p t t†`.
    pub fn forward_covariances(&self, net: &NetworkSpec) -> CovarianceSet {
        CovarianceSet::trusted(Direction::Forward, sum_outer(&self.layout, &self.tx, &self.p, |l| net.tx_antennas(l)))
    }

    /// `Σ̂_l = Σ_m q r r†`.
    pub fn reverse_covariances(&self, net: &NetworkSpec) -> CovarianceSet {
        CovarianceSet::trusted(Direction::Reverse, sum_outer(&self.layout, &self.rx, &self.q, |l| net.rx_antennas(l)))
    }
}

pub(crate) fn sum_outer(layout: &StreamLayout, vecs: &[CVec], pw: &[f64], dim: impl Fn(usize) -> usize) -> Vec<CMat> {
    (0..layout.links())
        .map(|l| {
            let mut s = linalg::zeros(dim(l), dim(l));
            for i in layout.range(l) {
                if pw[i] != 0.0 {
                    s += linalg::outer(&vecs[i], pw[i]);
                }
            }
            s
        })
        .collect()
}

/// Eigen-decomposes each covariance into unit vectors and powers, keeping
/// eigenvalues above the rank tolerance, strongest first.
pub fn eigen_streams(covs: &CovarianceSet) -> (StreamLayout, Vec<CVec>, Vec<f64>) {
    let mut counts = Vec::new();
    let mut vecs = Vec::new();
    let mut pw = Vec::new();
    for m in covs.mats() {
        let e = linalg::herm_eigen(m);
        let top = e.values.first().copied().unwrap_or(0.0);
        let mut cnt = 0;
        for (j, &v) in e.values.iter().enumerate() {
            if top > 0.0 && v > linalg::RANK_TOL * top {
                vecs.push(e.vectors.column(j).into_owned());
                pw.push(v);
                cnt += 1;
            }
        }
        counts.push(cnt);
    }
    (StreamLayout::new(counts), vecs, pw)
}

fn unit_or_default(v: CVec, anchor: &CVec) -> CVec {
    let n = v.norm();
    if n > 0.0 && n.is_finite() {
        let mut u = v / c(n);
        // Phase convention: the inner product with `anchor` is real positive.
        let a = u.dotc(anchor);
        if a.norm() > 0.0 {
            u *= a.conj() / c(a.norm());
        }
        u
    } else {
        let mut u = CVec::zeros(anchor.len());
        if !u.is_empty() {
            u[0] = c(1.0);
        }
        u
    }
}

/// Rejects interference covariances so ill-conditioned that solves with them
/// lose all precision.
fn checked_cholesky(k: &CMat) -> Result<nalgebra::Cholesky<linalg::C64, nalgebra::Dyn>> {
    let ch = linalg::cholesky(k)?;
    let cond = linalg::cond_estimate(&ch);
    if cond > 1e12 {
        return Err(Error::Numerical(format!("interference covariance condition number ~{cond:.1e}")));
    }
    Ok(ch)
}

/// Forward MMSE-SIC receivers: stream `m` of link `l` treats the streams
/// decoded after it, plus `Ω_l`, as noise.
pub fn mmse_sic_receivers(
    net: &NetworkSpec,
    phi: &Coupling,
    layout: &StreamLayout,
    tx: &[CVec],
    p: &[f64],
) -> Result<Vec<CVec>> {
    let sig = sum_outer(layout, tx, p, |l| net.tx_antennas(l));
    let mut rx = vec![CVec::zeros(0); layout.total()];
    for l in 0..layout.links() {
        let h = net.channel(l, l);
        let mut k = interference_from(net, phi, Direction::Forward, &sig, l, net.links());
        for i in layout.range(l).rev() {
            let x = h * &tx[i];
            let ch = checked_cholesky(&k)?;
            rx[i] = unit_or_default(ch.solve(&x), &x);
            if p[i] != 0.0 {
                k += linalg::outer(&x, p[i]);
            }
        }
    }
    Ok(rx)
}

/// Reverse MMSE-SIC receivers used as forward transmit vectors: stream `m`
/// of reverse link `l` treats reverse streams `0..m` plus `Ω̂_l` as noise.
pub fn mmse_sic_transmitters(
    net: &NetworkSpec,
    phi: &Coupling,
    layout: &StreamLayout,
    rx: &[CVec],
    q: &[f64],
) -> Result<Vec<CVec>> {
    let sig = sum_outer(layout, rx, q, |l| net.rx_antennas(l));
    let mut tx = vec![CVec::zeros(0); layout.total()];
    for l in 0..layout.links() {
        let h = direct_channel(net, l, Direction::Reverse);
        let mut k = interference_from(net, phi, Direction::Reverse, &sig, l, net.links());
        for i in layout.range(l) {
            let y = &h * &rx[i];
            let ch = checked_cholesky(&k)?;
            tx[i] = unit_or_default(ch.solve(&y), &y);
            if q[i] != 0.0 {
                k += linalg::outer(&y, q[i]);
            }
        }
    }
    Ok(tx)
}

/// Cross-talk between streams for fixed beamformers.
///
/// `psi[(i, j)]` is the power gain from stream `j`'s transmit vector into
/// stream `i`'s receive vector after cancellation; `gain[i]` is the stream's
/// own gain `|r† H t|²`; `fwd_noise[i] = r† W r` and `rev_noise[i] = t† Ŵ t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossTalk {
    pub psi: RMat,
    pub gain: Vec<f64>,
    pub fwd_noise: Vec<f64>,
    pub rev_noise: Vec<f64>,
}

pub fn cross_talk(net: &NetworkSpec, phi: &Coupling, layout: &StreamLayout, tx: &[CVec], rx: &[CVec]) -> CrossTalk {
    let n = layout.total();
    let mut psi = RMat::zeros(n, n);
    let mut gain = vec![0.0; n];
    let mut fwd_noise = vec![0.0; n];
    let mut rev_noise = vec![0.0; n];
    for l in 0..layout.links() {
        for k in 0..layout.links() {
            if l != k && !phi.get(l, k) {
                continue;
            }
            let h = net.channel(l, k);
            for j in layout.range(k) {
                let ht = h * &tx[j];
                for i in layout.range(l) {
                    let v = rx[i].dotc(&ht).norm_sqr();
                    if l == k {
                        if j == i {
                            gain[i] = v;
                        } else if j > i {
                            psi[(i, j)] = v;
                        }
                    } else {
                        psi[(i, j)] = v;
                    }
                }
            }
        }
        for i in layout.range(l) {
            fwd_noise[i] = (rx[i].adjoint() * net.noise(l) * &rx[i])[(0, 0)].re;
            rev_noise[i] = (tx[i].adjoint() * net.weight(l) * &tx[i])[(0, 0)].re;
        }
    }
    CrossTalk { psi, gain, fwd_noise, rev_noise }
}

impl CrossTalk {
    pub fn forward_sinr(&self, p: &[f64]) -> Vec<f64> {
        let interf = &self.psi * RVec::from_column_slice(p);
        (0..p.len()).map(|i| p[i] * self.gain[i] / (self.fwd_noise[i] + interf[i])).collect()
    }

    pub fn reverse_sinr(&self, q: &[f64]) -> Vec<f64> {
        let interf = self.psi.transpose() * RVec::from_column_slice(q);
        (0..q.len()).map(|i| q[i] * self.gain[i] / (self.rev_noise[i] + interf[i])).collect()
    }

    /// Reverse powers meeting `targets` exactly: `(D⁻¹ − Ψᵀ) q = t†Ŵt`.
    pub fn reverse_powers(&self, targets: &[f64]) -> Result<Vec<f64>> {
        solve_powers(&self.psi.transpose(), &self.gain, &self.rev_noise, targets)
    }

    /// Forward powers meeting `targets` exactly: `(D⁻¹ − Ψ) p = r†Wr`.
    pub fn forward_powers(&self, targets: &[f64]) -> Result<Vec<f64>> {
        solve_powers(&self.psi, &self.gain, &self.fwd_noise, targets)
    }
}

/// Solves `(D⁻¹ − A) x = b` with `D = diag(target / gain)`. Streams with a
/// zero target get zero power and drop out of the system.
fn solve_powers(a: &RMat, gain: &[f64], b: &[f64], targets: &[f64]) -> Result<Vec<f64>> {
    let n = targets.len();
    if gain.len() != n || b.len() != n || a.nrows() != n {
        return Err(Error::Dimension("power system sizes disagree".into()));
    }
    if targets.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidInput("SINR targets must be finite and nonnegative".into()));
    }
    let active: Vec<usize> = (0..n).filter(|&i| targets[i] > 0.0).collect();
    for &i in &active {
        if !(gain[i] > 0.0) {
            return Err(Error::Infeasible(format!("stream {i} has zero gain but a positive target")));
        }
    }
    let m = active.len();
    let mut x = vec![0.0; n];
    if m == 0 {
        return Ok(x);
    }
    let mut da = RMat::zeros(m, m);
    let mut sys = RMat::zeros(m, m);
    let mut rhs = RVec::zeros(m);
    for (ii, &i) in active.iter().enumerate() {
        let d = targets[i] / gain[i];
        for (jj, &j) in active.iter().enumerate() {
            da[(ii, jj)] = d * a[(i, j)];
            sys[(ii, jj)] = -a[(i, j)];
        }
        sys[(ii, ii)] += 1.0 / d;
        rhs[ii] = b[i];
    }
    let rho = linalg::spectral_radius(&da);
    if rho >= 1.0 - 1e-12 {
        return Err(Error::Infeasible(format!("SINR targets infeasible: spectral radius {rho:.6}")));
    }
    let sol = linalg::solve_refined(&sys, &rhs)?;
    for (ii, &i) in active.iter().enumerate() {
        if sol[ii] < -1e-12 * sol.amax() {
            return Err(Error::Numerical("negative power in dual solve".into()));
        }
        x[i] = sol[ii].max(0.0);
    }
    Ok(x)
}

/// SINRs of every stream in the requested direction.
pub fn sinr_report(net: &NetworkSpec, phi: &Coupling, s: &StreamStrategy, dir: Direction) -> Vec<f64> {
    let ct = cross_talk(net, phi, &s.layout, &s.tx, &s.rx);
    match dir {
        Direction::Forward => ct.forward_sinr(&s.p),
        Direction::Reverse => ct.reverse_sinr(&s.q),
    }
}

/// Reverse powers giving every reverse stream the SINR `targets[i]` with the
/// beamformers of `s`.
pub fn dual_powers(net: &NetworkSpec, phi: &Coupling, s: &StreamStrategy, targets: &[f64]) -> Result<Vec<f64>> {
    cross_talk(net, phi, &s.layout, &s.tx, &s.rx).reverse_powers(targets)
}

/// Completes a forward strategy `(t, p)` with MMSE-SIC receivers and the
/// reverse powers that reproduce its forward SINRs in the reverse network.
pub fn complete_strategy(
    net: &NetworkSpec,
    phi: &Coupling,
    layout: StreamLayout,
    tx: Vec<CVec>,
    p: Vec<f64>,
) -> Result<StreamStrategy> {
    let rx = mmse_sic_receivers(net, phi, &layout, &tx, &p)?;
    let ct = cross_talk(net, phi, &layout, &tx, &rx);
    let gamma = ct.forward_sinr(&p);
    let q = ct.reverse_powers(&gamma)?;
    Ok(StreamStrategy { layout, tx, rx, p, q })
}

/// Result of the covariance transformation.
#[derive(Debug, Clone)]
pub struct Transformed {
    /// Covariances on the opposite side of the input.
    pub covs: CovarianceSet,
    /// Streams of the input side (`tx`, `p`) and the output side (`rx`, `q`),
    /// expressed in the network where the input is the forward side.
    pub strategy: StreamStrategy,
}

/// Maps covariances on one side to covariances on the other side that
/// achieve at least the same rates with the same weighted sum power.
pub fn covariance_transformation(net: &NetworkSpec, phi: &Coupling, covs: &CovarianceSet) -> Result<Transformed> {
    if covs.len() != net.links() {
        return Err(Error::Dimension("one covariance per link required".into()));
    }
    match covs.direction {
        Direction::Forward => transform_forward(net, phi, covs),
        Direction::Reverse => {
            let rnet = reverse_network(net);
            let rphi = phi.transpose();
            let as_fwd = CovarianceSet::trusted(Direction::Forward, covs.mats().to_vec());
            let t = transform_forward(&rnet, &rphi, &as_fwd)?;
            Ok(Transformed {
                covs: CovarianceSet::trusted(Direction::Forward, t.covs.into_mats()),
                strategy: t.strategy,
            })
        }
    }
}

fn transform_forward(net: &NetworkSpec, phi: &Coupling, covs: &CovarianceSet) -> Result<Transformed> {
    let (layout, tx, p) = eigen_streams(covs);
    let strategy = complete_strategy(net, phi, layout, tx, p)?;
    let out = strategy.reverse_covariances(net);
    Ok(Transformed { covs: out, strategy })
}
