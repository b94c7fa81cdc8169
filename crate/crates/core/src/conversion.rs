//! Rate/SINR bridges: precoders that split a covariance into streams with
//! equal MMSE-SIC SINRs or with equal powers, and the per-stream SINR target
//! that realizes a link rate target.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec, C64};

/// Per-stream SINR target `e^{I/M} − 1` for a link rate target `I` (nats)
/// spread over `M` streams.
pub fn rate_to_sinr_target(rate: f64, streams: usize) -> f64 {
    if streams == 0 || rate <= 0.0 {
        return 0.0;
    }
    (rate / streams as f64).exp_m1()
}

pub fn rate_to_sinr_targets(rates: &[f64], streams: &[usize]) -> Vec<f64> {
    rates.iter().zip(streams).map(|(&r, &m)| rate_to_sinr_target(r, m)).collect()
}

/// Square-root factor `Ṫ` of `Σ` with `M` columns: scaled eigenvectors,
/// strongest first, padded with zero columns.
pub fn sqrt_factor(sigma: &CMat, m: usize) -> Result<CMat> {
    let e = linalg::herm_eigen(sigma);
    let top = e.values.first().copied().unwrap_or(0.0);
    let r = e.values.iter().filter(|&&v| top > 0.0 && v > linalg::RANK_TOL * top).count();
    if m < r {
        return Err(Error::InvalidInput(format!("{m} streams cannot carry a rank-{r} covariance")));
    }
    let mut t = linalg::zeros(sigma.nrows(), m);
    for j in 0..r {
        t.set_column(j, &(e.vectors.column(j) * c(e.values[j].sqrt())));
    }
    Ok(t)
}

/// Unitary `V` such that the MMSE-SIC SINRs of the streams `H̄ V` are all
/// `e^{I/M} − 1`, with `I = ln det(I + H̄ H̄†)` and `M = H̄.ncols()`.
///
/// Stream `m` is decoded `m`-th. `V` is built from the last stream backwards:
/// each column mixes the extreme eigenvectors of the remaining whitened gain
/// restricted to the orthogonal complement of the columns already chosen.
pub fn equal_sinr_decomposition(hbar: &CMat, m: usize) -> Result<CMat> {
    if hbar.ncols() != m {
        return Err(Error::Dimension(format!("effective channel has {} columns, want {m}", hbar.ncols())));
    }
    if m == 0 {
        return Ok(linalg::zeros(0, 0));
    }
    let nr = hbar.nrows();
    let info = linalg::log_det_hpd(&(linalg::identity(nr) + hbar * hbar.adjoint()))?;
    let target = (info / m as f64).exp_m1();
    let mut chosen: Vec<CVec> = Vec::with_capacity(m);
    let mut k = linalg::identity(nr);
    for step in (1..=m).rev() {
        let gain = linalg::hermitize(&(hbar.adjoint() * linalg::inv_hpd(&k)? * hbar));
        let basis = linalg::orth_complement(&chosen, m);
        if basis.ncols() != step {
            return Err(Error::Numerical("lost orthogonality in equal-SINR construction".into()));
        }
        let reduced = basis.adjoint() * &gain * &basis;
        let e = linalg::herm_eigen(&reduced);
        let (hi, lo) = (e.values[0], e.values[step - 1]);
        let y_hi = e.vectors.column(0).into_owned();
        let y = if hi - lo <= 1e-14 * hi.abs().max(1.0) {
            y_hi
        } else {
            let a = ((target - lo) / (hi - lo)).clamp(0.0, 1.0);
            let y_lo = e.vectors.column(step - 1).into_owned();
            y_hi * c(a.sqrt()) + y_lo * c((1.0 - a).sqrt())
        };
        let v = &basis * y;
        let v = &v / c(v.norm());
        let x = hbar * &v;
        k += &x * x.adjoint();
        chosen.push(v);
    }
    let mut out = linalg::zeros(m, m);
    for (j, v) in chosen.iter().rev().enumerate() {
        out.set_column(j, v);
    }
    Ok(out)
}

/// Unit transmit vectors and powers splitting `sigma` into `m` streams of
/// equal MMSE-SIC SINR over the whitened channel `h_white = Ω^{-1/2} H`.
pub fn equal_sinr_streams(h_white: &CMat, sigma: &CMat, m: usize) -> Result<(Vec<CVec>, Vec<f64>)> {
    let t = sqrt_factor(sigma, m)?;
    let v = equal_sinr_decomposition(&(h_white * &t), m)?;
    Ok(split_columns(&(t * v)))
}

/// `Ṫ = U D^{1/2} F₀`: `ṪṪ† = Σ` and every column carries `Tr(Σ)/M`.
///
/// `F₀` takes the first `L_T` rows of the `M×M` DFT when `M ≥ L_T`, and
/// stacks the DFT over zero rows otherwise.
pub fn equal_power_decomposition(sigma: &CMat, m: usize) -> Result<CMat> {
    let lt = sigma.nrows();
    let e = linalg::herm_eigen(sigma);
    let top = e.values.first().copied().unwrap_or(0.0);
    let r = e.values.iter().filter(|&&v| top > 0.0 && v > linalg::RANK_TOL * top).count();
    if m < r {
        return Err(Error::InvalidInput(format!("{m} streams cannot carry a rank-{r} covariance")));
    }
    if m == 0 {
        return Ok(linalg::zeros(lt, 0));
    }
    let scale = 1.0 / (m as f64).sqrt();
    let dft = |a: usize, b: usize| C64::from_polar(scale, -2.0 * PI * (a * b) as f64 / m as f64);
    let f0 = CMat::from_fn(lt, m, |i, j| if i < m { dft(i, j) } else { c(0.0) });
    let mut ud = e.vectors.clone();
    for j in 0..lt {
        let s = e.values[j].max(0.0).sqrt();
        ud.column_mut(j).scale_mut(s);
    }
    Ok(ud * f0)
}

/// Splits a precoder into unit column directions and column powers.
pub fn split_columns(t: &CMat) -> (Vec<CVec>, Vec<f64>) {
    let mut dirs = Vec::with_capacity(t.ncols());
    let mut pw = Vec::with_capacity(t.ncols());
    for j in 0..t.ncols() {
        let col = t.column(j).into_owned();
        let n2 = col.norm_squared();
        if n2 > 0.0 {
            dirs.push(&col / c(n2.sqrt()));
        } else {
            let mut u = CVec::zeros(t.nrows());
            if !u.is_empty() {
                u[j % t.nrows()] = c(1.0);
            }
            dirs.push(u);
        }
        pw.push(n2);
    }
    (dirs, pw)
}

/// MMSE-SIC SINRs of the columns of `g` over white unit noise, column `m`
/// decoded `m`-th.
pub fn sic_sinrs(g: &CMat) -> Result<Vec<f64>> {
    let n = g.nrows();
    let mut k = linalg::identity(n);
    let mut out = vec![0.0; g.ncols()];
    for j in (0..g.ncols()).rev() {
        let x = g.column(j).into_owned();
        let kinv = linalg::inv_hpd(&k)?;
        out[j] = (x.adjoint() * kinv * &x)[(0, 0)].re;
        k += &x * x.adjoint();
    }
    Ok(out)
}
