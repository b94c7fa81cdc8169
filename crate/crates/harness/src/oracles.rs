//! Reference solutions computed independently of the solver crate.
//!
//! Nothing here calls into the optimization routines of `bmac_core`; the
//! oracles use closed forms, direct linear solves and bisection on plain
//! `nalgebra` types.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{HarnessError, Result};

/// Minimal powers of single-antenna links with rate targets `targets`
/// (nats), power gains `gains[l][k]` from transmitter `k` to receiver `l`,
/// unit noise, and `coupling[l][k]` true when link `k` interferes link `l`.
///
/// Solves `p = (I − Γ G)^{-1} Γ 1` with `Γ = diag((e^{I⁰_l} − 1)/g_ll)` and
/// `G` the coupled cross gains. Infeasible exactly when the spectral radius
/// of `Γ G` reaches one.
pub fn oracle_scalar_network(gains: &[Vec<f64>], targets: &[f64], coupling: &[Vec<bool>]) -> Result<Vec<f64>> {
    let n = gains.len();
    let square = gains.iter().all(|r| r.len() == n) && coupling.iter().all(|r| r.len() == n);
    if targets.len() != n || coupling.len() != n || !square {
        return Err(HarnessError::Config("gains, targets and coupling must be n×n, n and n×n".into()));
    }
    let gamma: Vec<f64> = (0..n).map(|l| targets[l].exp_m1() / gains[l][l]).collect();
    let m = DMatrix::from_fn(n, n, |l, k| if l != k && coupling[l][k] { gamma[l] * gains[l][k] } else { 0.0 });
    let rho = m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    if rho >= 1.0 {
        return Err(HarnessError::Infeasible(format!("spectral radius {rho:.6} ≥ 1")));
    }
    let a = DMatrix::identity(n, n) - &m;
    let b = DVector::from_column_slice(&gamma);
    let p = a.lu().solve(&b).ok_or_else(|| HarnessError::Infeasible("singular power-control system".into()))?;
    Ok(p.iter().copied().collect())
}

/// Single-user minimum power for `rate` nats over `h` with unit white
/// noise: water-filling over the eigenvalues of `H†H`, with the level found
/// by bisection. Returns the power and the covariance.
pub fn oracle_single_user(h: &DMatrix<Complex64>, rate: f64) -> (f64, DMatrix<Complex64>) {
    let nt = h.ncols();
    let gram = h.adjoint() * h;
    let eig = gram.symmetric_eigen();
    let gains: Vec<f64> = eig.eigenvalues.iter().map(|&g| g.max(0.0)).collect();
    let top = gains.iter().copied().fold(0.0, f64::max);
    let zero = DMatrix::zeros(nt, nt);
    if rate <= 0.0 || top <= 0.0 {
        return (0.0, zero);
    }
    let active: Vec<f64> = gains.iter().copied().filter(|&g| g > 1e-12 * top).collect();
    let rate_at = |nu: f64| active.iter().map(|&g| (nu * g).max(1.0).ln()).sum::<f64>();
    let (mut lo, mut hi) = (1.0 / top, 2.0 / top);
    while rate_at(hi) < rate {
        hi *= 2.0;
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if rate_at(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let nu = 0.5 * (lo + hi);
    let mut sigma = zero;
    let mut power = 0.0;
    for (j, &g) in gains.iter().enumerate() {
        if g <= 1e-12 * top {
            continue;
        }
        let d = (nu - 1.0 / g).max(0.0);
        power += d;
        let v = eig.eigenvectors.column(j);
        sigma += v * v.adjoint() * Complex64::new(d, 0.0);
    }
    (power, sigma)
}

/// Minimum sum power of a scalar multiple-access channel with power gains
/// `gains`, rates `rates` (nats) and successive decoding in `decode_order`
/// (first decoded first). The last decoded user sees only noise.
pub fn scalar_mac_power(gains: &[f64], rates: &[f64], decode_order: &[usize]) -> f64 {
    let mut received = 0.0;
    let mut total = 0.0;
    for &u in decode_order.iter().rev() {
        let p = rates[u].exp_m1() * (1.0 + received) / gains[u];
        received += gains[u] * p;
        total += p;
    }
    total
}

/// Largest `t` with `t · direction` achievable on a scalar MAC under total
/// power `total_power` with the given decoding order, by bisection.
pub fn scalar_mac_radius(gains: &[f64], direction: &[f64], total_power: f64, decode_order: &[usize]) -> f64 {
    let cost = |t: f64| {
        let r: Vec<f64> = direction.iter().map(|d| d * t).collect();
        scalar_mac_power(gains, &r, decode_order)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while cost(hi) < total_power {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cost(mid) < total_power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Minimum sum power of a two-user scalar multiple-access channel for the
/// rate pair `rates` anywhere in the capacity region, with rate splitting.
///
/// The constraints `g_k p_k ≥ e^{R_k} − 1` and `g_1 p_1 + g_2 p_2 ≥
/// e^{R_1+R_2} − 1` are linear in the powers, so the optimum meets the
/// single-user bounds and tops up the received power through the stronger
/// user.
pub fn two_user_mac_power(gains: [f64; 2], rates: [f64; 2]) -> f64 {
    let floor = [rates[0].exp_m1() / gains[0], rates[1].exp_m1() / gains[1]];
    let received = gains[0] * floor[0] + gains[1] * floor[1];
    let needed = (rates[0] + rates[1]).exp_m1();
    let strongest = gains[0].max(gains[1]);
    floor[0] + floor[1] + (needed - received).max(0.0) / strongest
}

/// Largest `t` with `t · direction` in the two-user scalar MAC capacity
/// region under total power `total_power`, by bisection.
pub fn two_user_mac_radius(gains: [f64; 2], direction: [f64; 2], total_power: f64) -> f64 {
    let cost = |t: f64| two_user_mac_power(gains, [direction[0] * t, direction[1] * t]);
    let (mut lo, mut hi) = (0.0, 1.0);
    while cost(hi) < total_power {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cost(mid) < total_power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
