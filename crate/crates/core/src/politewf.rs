//! Polite water-filling over the doubly whitened channel
//! `Ω^{-1/2} H Ω̂^{-1/2} = F Δ G†`, where `Ω` and `Ω̂` are the forward and
//! reverse interference-plus-noise covariances of a link.
//!
//! The water-filled equivalent input is `G D G†` (forward) or `F D F†`
//! (reverse) with `D = (ν I − Δ^{-2})⁺`; `δ_j` denotes `Δ_jj²`.

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec};
use crate::netmodel::{
    interference_covariance, link_rates, Coupling, CovarianceSet, Direction, NetworkSpec,
};
use crate::streams::covariance_transformation;

/// Relative residual below which a covariance counts as polite water-filled.
pub const STRUCTURE_TOL: f64 = 1e-6;

/// Whitened single-user view of one link.
#[derive(Debug, Clone)]
pub struct EquivalentChannel {
    pub omega_f: CMat,
    pub omega_r: CMat,
    omega_f_isqrt: CMat,
    omega_r_isqrt: CMat,
    omega_f_sqrt: CMat,
    omega_r_sqrt: CMat,
    pub hbar: CMat,
    /// Left singular vectors `F`, one column per nonzero singular value.
    pub f: CMat,
    /// Singular values, descending and strictly positive.
    pub sv: Vec<f64>,
    /// Right singular vectors `G`.
    pub g: CMat,
}

impl EquivalentChannel {
    pub fn new(h: &CMat, omega_f: CMat, omega_r: CMat) -> Result<Self> {
        let (omega_f_sqrt, omega_f_isqrt) = linalg::herm_sqrt_pair(&omega_f)?;
        let (omega_r_sqrt, omega_r_isqrt) = linalg::herm_sqrt_pair(&omega_r)?;
        let hbar = &omega_f_isqrt * h * &omega_r_isqrt;
        let svd = linalg::thin_svd(&hbar);
        Ok(Self {
            omega_f,
            omega_r,
            omega_f_isqrt,
            omega_r_isqrt,
            omega_f_sqrt,
            omega_r_sqrt,
            hbar,
            f: svd.u,
            sv: svd.s,
            g: svd.v,
        })
    }

    /// Builds the equivalent channel from an already whitened channel
    /// `Ω^{-1/2} H Ω̂^{-1/2}` and the two covariances it was whitened with.
    pub fn from_whitened(hbar: CMat, omega_f: CMat, omega_r: CMat) -> Result<Self> {
        let (omega_f_sqrt, omega_f_isqrt) = linalg::herm_sqrt_pair(&omega_f)?;
        let (omega_r_sqrt, omega_r_isqrt) = linalg::herm_sqrt_pair(&omega_r)?;
        let svd = linalg::thin_svd(&hbar);
        Ok(Self {
            omega_f,
            omega_r,
            omega_f_isqrt,
            omega_r_isqrt,
            omega_f_sqrt,
            omega_r_sqrt,
            hbar,
            f: svd.u,
            sv: svd.s,
            g: svd.v,
        })
    }

    pub fn rank(&self) -> usize {
        self.sv.len()
    }

    /// Squared singular values `δ_j`.
    pub fn deltas(&self) -> Vec<f64> {
        self.sv.iter().map(|s| s * s).collect()
    }

    /// `Σ = Ω̂^{-1/2} G D G† Ω̂^{-1/2}`.
    pub fn forward_covariance(&self, d: &[f64]) -> CMat {
        let inner = weighted_gram(&self.g, d);
        linalg::hermitize(&(&self.omega_r_isqrt * inner * &self.omega_r_isqrt))
    }

    /// `Σ̂ = Ω^{-1/2} F D F† Ω^{-1/2}`.
    pub fn reverse_covariance(&self, d: &[f64]) -> CMat {
        let inner = weighted_gram(&self.f, d);
        linalg::hermitize(&(&self.omega_f_isqrt * inner * &self.omega_f_isqrt))
    }

    /// Trace of the forward covariance contributed by unit power on each
    /// mode: `g_j† Ω̂^{-1} g_j`.
    pub fn forward_trace_weights(&self) -> Vec<f64> {
        column_weights(&self.omega_r_isqrt, &self.g)
    }

    /// Trace of the reverse covariance contributed by unit power on each
    /// mode: `f_j† Ω^{-1} f_j`.
    pub fn reverse_trace_weights(&self) -> Vec<f64> {
        column_weights(&self.omega_f_isqrt, &self.f)
    }

    /// Forward equivalent input `Ω̂^{1/2} Σ Ω̂^{1/2}`.
    pub fn forward_equivalent(&self, sigma: &CMat) -> CMat {
        linalg::hermitize(&(&self.omega_r_sqrt * sigma * &self.omega_r_sqrt))
    }

    /// Reverse equivalent input `Ω^{1/2} Σ̂ Ω^{1/2}`.
    pub fn reverse_equivalent(&self, sigma_hat: &CMat) -> CMat {
        linalg::hermitize(&(&self.omega_f_sqrt * sigma_hat * &self.omega_f_sqrt))
    }
}

fn weighted_gram(basis: &CMat, d: &[f64]) -> CMat {
    let mut scaled = basis.clone();
    for (j, &dj) in d.iter().enumerate() {
        scaled.column_mut(j).scale_mut(dj);
    }
    scaled * basis.adjoint()
}

fn column_weights(isqrt: &CMat, basis: &CMat) -> Vec<f64> {
    (0..basis.ncols())
        .map(|j| (isqrt * basis.column(j)).norm_squared())
        .collect()
}

/// Equivalent channel of link `l` given covariances on both sides.
pub fn equivalent_channel(
    net: &NetworkSpec,
    phi: &Coupling,
    covs_f: &CovarianceSet,
    covs_r: &CovarianceSet,
    l: usize,
) -> Result<EquivalentChannel> {
    if covs_f.direction != Direction::Forward || covs_r.direction != Direction::Reverse {
        return Err(Error::InvalidInput("equivalent_channel needs forward then reverse covariances".into()));
    }
    let om = interference_covariance(net, phi, covs_f, l);
    let omr = interference_covariance(net, phi, covs_r, l);
    EquivalentChannel::new(net.channel(l, l), om, omr)
}

/// Water level and per-mode powers `d_j = (ν − 1/δ_j)⁺`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterFill {
    pub nu: f64,
    pub d: Vec<f64>,
}

impl WaterFill {
    pub fn total(&self) -> f64 {
        self.d.iter().sum()
    }

    /// `Σ ln(1 + d_j δ_j)`.
    pub fn rate(&self, deltas: &[f64]) -> f64 {
        self.d.iter().zip(deltas).map(|(d, g)| (d * g).ln_1p()).sum()
    }

    fn from_level(nu: f64, deltas: &[f64]) -> Self {
        Self { nu, d: deltas.iter().map(|&g| (nu - 1.0 / g).max(0.0)).collect() }
    }
}

/// Water-filling target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WfMode {
    /// Total equivalent power `Σ d_j`.
    Budget(f64),
    /// Rate in nats.
    Rate(f64),
}

fn check_deltas(deltas: &[f64]) -> Result<()> {
    if deltas.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
        return Err(Error::InvalidInput("channel gains must be positive and finite".into()));
    }
    Ok(())
}

/// Minimum-power water-filling reaching `rate` nats over gains `deltas`.
///
/// Active-set iteration: start with every mode active, set
/// `ν = (e^{rate} / Π δ_j)^{1/|Γ|}`, drop modes with negative power, repeat.
pub fn algorithm_w(deltas: &[f64], rate: f64) -> Result<WaterFill> {
    check_deltas(deltas)?;
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::InvalidInput(format!("rate target {rate} must be finite and nonnegative")));
    }
    if deltas.is_empty() {
        if rate > 0.0 {
            return Err(Error::Infeasible("positive rate target over a zero channel".into()));
        }
        return Ok(WaterFill { nu: 0.0, d: vec![] });
    }
    if rate == 0.0 {
        let top = deltas.iter().copied().fold(0.0, f64::max);
        return Ok(WaterFill::from_level(1.0 / top, deltas));
    }
    let mut active: Vec<usize> = (0..deltas.len()).collect();
    loop {
        let log_prod: f64 = active.iter().map(|&j| deltas[j].ln()).sum();
        let nu = ((rate - log_prod) / active.len() as f64).exp();
        let keep: Vec<usize> = active.iter().copied().filter(|&j| nu - 1.0 / deltas[j] >= 0.0).collect();
        if keep.len() == active.len() {
            let mut d = vec![0.0; deltas.len()];
            for &j in &active {
                d[j] = nu - 1.0 / deltas[j];
            }
            return Ok(WaterFill { nu, d });
        }
        active = keep;
    }
}

/// Water-filling with total equivalent power `budget`.
pub fn waterfill_budget(deltas: &[f64], budget: f64) -> Result<WaterFill> {
    let ones = vec![1.0; deltas.len()];
    waterfill_weighted(deltas, &ones, budget)
}

/// Water level such that `Σ w_j (ν − 1/δ_j)⁺ = budget`, for positive
/// weights `w_j`. Exact: the left side is piecewise linear in `ν`.
pub fn waterfill_weighted(deltas: &[f64], weights: &[f64], budget: f64) -> Result<WaterFill> {
    check_deltas(deltas)?;
    if weights.len() != deltas.len() || weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidInput("water-filling weights must be positive, one per mode".into()));
    }
    if !(budget >= 0.0) || !budget.is_finite() {
        return Err(Error::InvalidInput(format!("power budget {budget} must be finite and nonnegative")));
    }
    if deltas.is_empty() {
        return Ok(WaterFill { nu: 0.0, d: vec![] });
    }
    let mut order: Vec<usize> = (0..deltas.len()).collect();
    order.sort_by(|&a, &b| deltas[b].total_cmp(&deltas[a]).then(a.cmp(&b)));
    // With the k strongest modes active: Σ w (ν − 1/δ) = budget.
    let (mut sw, mut swi) = (0.0, 0.0);
    let mut nu = 1.0 / deltas[order[0]];
    for (k, &j) in order.iter().enumerate() {
        sw += weights[j];
        swi += weights[j] / deltas[j];
        let cand = (budget + swi) / sw;
        let next = order.get(k + 1).map(|&n| 1.0 / deltas[n]);
        nu = cand;
        if next.is_none_or(|t| cand <= t) {
            break;
        }
    }
    Ok(WaterFill::from_level(nu, deltas))
}

/// Water-fills the modes of `eq` in either mode.
pub fn polite_waterfill(eq: &EquivalentChannel, mode: WfMode) -> Result<WaterFill> {
    let deltas = eq.deltas();
    match mode {
        WfMode::Budget(b) => waterfill_budget(&deltas, b),
        WfMode::Rate(r) => algorithm_w(&deltas, r),
    }
}

/// Structure verdict for one link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkStructure {
    pub satisfied: bool,
    /// Fitted water level.
    pub nu: f64,
    /// Frobenius distance from the equivalent input to the fitted
    /// water-filling form.
    pub residual: f64,
    /// `residual / Tr(Q)`, zero for a zero input.
    pub relative_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoliteWfReport {
    pub links: Vec<LinkStructure>,
}

impl PoliteWfReport {
    pub fn all_satisfied(&self) -> bool {
        self.links.iter().all(|s| s.satisfied)
    }

    pub fn max_relative_residual(&self) -> f64 {
        self.links.iter().map(|s| s.relative_residual).fold(0.0, f64::max)
    }

    pub fn levels(&self) -> Vec<f64> {
        self.links.iter().map(|s| s.nu).collect()
    }
}

/// Fits `(ν − 1/δ)⁺` to the diagonal of `q` in `basis` and measures the
/// distance to that form.
pub fn fit_structure(q: &CMat, basis: &CMat, deltas: &[f64]) -> LinkStructure {
    let tr = linalg::trace_re(q).max(0.0);
    if deltas.is_empty() {
        let residual = q.norm();
        return LinkStructure {
            satisfied: residual <= STRUCTURE_TOL * tr,
            nu: 0.0,
            residual,
            relative_residual: if tr > 0.0 { residual / tr } else { 0.0 },
        };
    }
    let diag: Vec<f64> = (0..basis.ncols())
        .map(|j| {
            let b: CVec = basis.column(j).into_owned();
            (b.adjoint() * q * &b)[(0, 0)].re
        })
        .collect();
    let active: Vec<usize> = (0..diag.len()).filter(|&j| diag[j] > STRUCTURE_TOL * tr).collect();
    let nu = if active.is_empty() {
        1.0 / deltas.iter().copied().fold(0.0, f64::max)
    } else {
        active.iter().map(|&j| diag[j] + 1.0 / deltas[j]).sum::<f64>() / active.len() as f64
    };
    let wf = WaterFill::from_level(nu, deltas);
    let model = weighted_gram(basis, &wf.d);
    let residual = (q - model).norm();
    LinkStructure {
        satisfied: residual <= STRUCTURE_TOL * tr,
        nu,
        residual,
        relative_residual: if tr > 0.0 { residual / tr } else { 0.0 },
    }
}

/// Checks every forward covariance for polite water-filling structure,
/// using the covariance transformation to obtain the reverse side.
pub fn check_structure(net: &NetworkSpec, phi: &Coupling, covs_f: &CovarianceSet) -> Result<PoliteWfReport> {
    let covs_r = covariance_transformation(net, phi, covs_f)?.covs;
    check_structure_with(net, phi, covs_f, &covs_r)
}

/// Like `check_structure` with an explicitly supplied reverse side.
pub fn check_structure_with(
    net: &NetworkSpec,
    phi: &Coupling,
    covs_f: &CovarianceSet,
    covs_r: &CovarianceSet,
) -> Result<PoliteWfReport> {
    let mut links = Vec::with_capacity(net.links());
    for l in 0..net.links() {
        let eq = equivalent_channel(net, phi, covs_f, covs_r, l)?;
        let q = eq.forward_equivalent(covs_f.get(l));
        links.push(fit_structure(&q, &eq.g, &eq.deltas()));
    }
    Ok(PoliteWfReport { links })
}

/// Structure check of the reverse covariances against the reverse modes.
pub fn check_reverse_structure(
    net: &NetworkSpec,
    phi: &Coupling,
    covs_f: &CovarianceSet,
    covs_r: &CovarianceSet,
) -> Result<PoliteWfReport> {
    let mut links = Vec::with_capacity(net.links());
    for l in 0..net.links() {
        let eq = equivalent_channel(net, phi, covs_f, covs_r, l)?;
        let q = eq.reverse_equivalent(covs_r.get(l));
        links.push(fit_structure(&q, &eq.f, &eq.deltas()));
    }
    Ok(PoliteWfReport { links })
}

/// Closed-form reverse covariances of polite water-filled inputs:
/// `Σ̂_l = ν_l (Ω_l^{-1} − (H Σ_l H† + Ω_l)^{-1})`.
pub fn direct_reverse(net: &NetworkSpec, phi: &Coupling, covs_f: &CovarianceSet, nu: &[f64]) -> Result<CovarianceSet> {
    if nu.len() != net.links() {
        return Err(Error::Dimension("one water level per link required".into()));
    }
    let mut out = Vec::with_capacity(net.links());
    for l in 0..net.links() {
        let om = interference_covariance(net, phi, covs_f, l);
        let h = net.channel(l, l);
        let full = linalg::hermitize(&(&om + h * covs_f.get(l) * h.adjoint()));
        let diff = linalg::inv_hpd(&om)? - linalg::inv_hpd(&full)?;
        out.push(linalg::hermitize(&(diff * c(nu[l]))));
    }
    CovarianceSet::new(net, Direction::Reverse, out)
}

/// Which rate-constrained problem a solution claims to solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Problem {
    /// Max-min scaled rate under total power `P_T`.
    Feasibility { total_power: f64 },
    /// Minimum total power under per-link rate targets.
    SumPower,
}

/// Optimality conditions of a candidate solution.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityReport {
    pub structure: PoliteWfReport,
    /// Largest relative structure residual over links.
    pub structure_residual: f64,
    /// Common scaled rate `α`.
    pub alpha: f64,
    /// `max_l |I_l/I⁰_l − α|` over links with positive targets.
    pub rate_residual: f64,
    /// `|Σ Tr(Σ_l) − P_T|`, zero for the sum-power problem.
    pub power_residual: f64,
    /// Per-link Frobenius norm of the negative part of the KKT multiplier.
    pub kkt_negative: Vec<f64>,
    /// Per-link complementary slackness `|Tr(Σ_l Θ_l)|`.
    pub kkt_slackness: Vec<f64>,
}

/// Evaluates structure, rate and power conditions plus a KKT residual with
/// multiplier scale `μ = 1 / Σ_l I⁰_l ν_l`.
pub fn optimality_report(
    net: &NetworkSpec,
    phi: &Coupling,
    covs_f: &CovarianceSet,
    targets: &[f64],
    problem: Problem,
) -> Result<OptimalityReport> {
    if targets.len() != net.links() {
        return Err(Error::Dimension("one rate target per link required".into()));
    }
    let covs_r = covariance_transformation(net, phi, covs_f)?.covs;
    let structure = check_structure_with(net, phi, covs_f, &covs_r)?;
    let rates = link_rates(net, phi, covs_f)?;
    let positive: Vec<usize> = (0..targets.len()).filter(|&l| targets[l] > 0.0).collect();
    let alpha = match problem {
        Problem::SumPower => 1.0,
        Problem::Feasibility { .. } => positive.first().map_or(1.0, |&l| rates[l] / targets[l]),
    };
    let rate_residual = positive.iter().map(|&l| (rates[l] / targets[l] - alpha).abs()).fold(0.0, f64::max);
    let power_residual = match problem {
        Problem::SumPower => 0.0,
        Problem::Feasibility { total_power } => (covs_f.total_trace() - total_power).abs(),
    };
    let nus = structure.levels();
    let weight: f64 = targets.iter().zip(&nus).map(|(t, n)| t * n).sum();
    let mu = if weight > 0.0 { 1.0 / weight } else { 1.0 };
    let mut kkt_negative = Vec::with_capacity(net.links());
    let mut kkt_slackness = Vec::with_capacity(net.links());
    for l in 0..net.links() {
        let om = interference_covariance(net, phi, covs_f, l);
        let omr = interference_covariance(net, phi, &covs_r, l);
        let h = net.channel(l, l);
        let full = linalg::hermitize(&(&om + h * covs_f.get(l) * h.adjoint()));
        let theta = linalg::hermitize(&(omr - h.adjoint() * linalg::inv_hpd(&full)? * h * c(nus[l])));
        let e = linalg::herm_eigen(&theta);
        let neg: f64 = e.values.iter().filter(|&&v| v < 0.0).map(|v| v * v).sum::<f64>().sqrt();
        kkt_negative.push(mu * neg);
        kkt_slackness.push(mu * linalg::trace_prod_re(covs_f.get(l), &theta).abs());
    }
    Ok(OptimalityReport {
        structure_residual: structure.max_relative_residual(),
        structure,
        alpha,
        rate_residual,
        power_residual,
        kkt_negative,
        kkt_slackness,
    })
}
