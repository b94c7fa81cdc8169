//! Dense Hermitian helpers shared by every module.
//!
//! All functions take matrices by reference and never mutate their inputs.
//! Eigenvalues and singular values are returned in descending order.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Eigenvalues below this fraction of the largest are floored when forming
/// inverse square roots.
pub const INV_SQRT_FLOOR: f64 = 1e-14;
/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-10;
/// Eigenvalues at or above `-PSD_TOL * trace` count as nonnegative.
pub const PSD_TOL: f64 = 1e-10;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(r: usize, c: usize) -> CMat {
    CMat::zeros(r, c)
}

/// `(A + A†) / 2`.
pub fn hermitize(a: &CMat) -> CMat {
    (a + a.adjoint()) * c(0.5)
}

pub fn trace_re(a: &CMat) -> f64 {
    a.trace().re
}

/// Real part of `Tr(A B)` without forming the product.
pub fn trace_prod_re(a: &CMat, b: &CMat) -> f64 {
    let mut s = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            s += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    s
}

/// `x x†` scaled by `w`.
pub fn outer(x: &CVec, w: f64) -> CMat {
    x * x.adjoint() * c(w)
}

/// Spectral decomposition of a Hermitian matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct HermEigen {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

pub fn herm_eigen(a: &CMat) -> HermEigen {
    let n = a.nrows();
    if n == 0 {
        return HermEigen { values: vec![], vectors: zeros(0, 0) };
    }
    let eig = SymmetricEigen::new(hermitize(a));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = zeros(n, n);
    for (dst, &src) in idx.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    HermEigen { values, vectors }
}

impl HermEigen {
    /// `V f(Λ) V†`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let s = f(self.values[j]);
            scaled.column_mut(j).scale_mut(s);
        }
        scaled * self.vectors.adjoint()
    }
}

/// Principal square root of a PSD matrix; negative rounding noise is clipped.
pub fn herm_sqrt(a: &CMat) -> CMat {
    herm_eigen(a).map(|x| x.max(0.0).sqrt())
}

/// `A^{-1/2}` with eigenvalues floored at `INV_SQRT_FLOOR * λ_max`.
pub fn herm_inv_sqrt(a: &CMat) -> Result<CMat> {
    let e = herm_eigen(a);
    let top = e.values.first().copied().unwrap_or(0.0);
    if !(top > 0.0) || !top.is_finite() {
        return Err(Error::Numerical("inverse square root of a non-positive matrix".into()));
    }
    let floor = INV_SQRT_FLOOR * top;
    Ok(e.map(|x| 1.0 / x.max(floor).sqrt()))
}

/// Both `A^{1/2}` and `A^{-1/2}` from one eigendecomposition.
pub fn herm_sqrt_pair(a: &CMat) -> Result<(CMat, CMat)> {
    let e = herm_eigen(a);
    let top = e.values.first().copied().unwrap_or(0.0);
    if !(top > 0.0) || !top.is_finite() {
        return Err(Error::Numerical("square root pair of a non-positive matrix".into()));
    }
    let floor = INV_SQRT_FLOOR * top;
    Ok((e.map(|x| x.max(0.0).sqrt()), e.map(|x| 1.0 / x.max(floor).sqrt())))
}

/// Cholesky factor of a Hermitian positive definite matrix.
pub fn cholesky(a: &CMat) -> Result<Cholesky<C64, nalgebra::Dyn>> {
    Cholesky::new(hermitize(a))
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))
}

/// `ln det A` for Hermitian positive definite `A`.
pub fn log_det_hpd(a: &CMat) -> Result<f64> {
    let ch = cholesky(a)?;
    let l = ch.l_dirty();
    Ok((0..a.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// Inverse of a Hermitian positive definite matrix.
pub fn inv_hpd(a: &CMat) -> Result<CMat> {
    Ok(hermitize(&cholesky(a)?.inverse()))
}

/// Squared ratio of the extreme Cholesky pivots; a cheap lower bound on the
/// condition number.
pub fn cond_estimate(ch: &Cholesky<C64, nalgebra::Dyn>) -> f64 {
    let l = ch.l_dirty();
    let n = l.nrows();
    if n == 0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        let d = l[(i, i)].re;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (hi / lo).powi(2)
}

/// Rank-revealing thin SVD `A = U diag(s) V†` keeping singular values above
/// `RANK_TOL * s_max`.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

pub fn thin_svd(a: &CMat) -> ThinSvd {
    let (m, n) = (a.nrows(), a.ncols());
    if m == 0 || n == 0 {
        return ThinSvd { u: zeros(m, 0), s: vec![], v: zeros(n, 0) };
    }
    let svd = a.clone().svd(true, true);
    let u_full = svd.u.expect("requested U");
    let vt_full = svd.v_t.expect("requested V^H");
    let k = svd.singular_values.len();
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&i, &j| {
        svd.singular_values[j].total_cmp(&svd.singular_values[i]).then(i.cmp(&j))
    });
    let top = svd.singular_values[idx[0]];
    let keep: Vec<usize> = if top > 0.0 {
        idx.into_iter().filter(|&i| svd.singular_values[i] > RANK_TOL * top).collect()
    } else {
        vec![]
    };
    let mut u = zeros(m, keep.len());
    let mut v = zeros(n, keep.len());
    let mut s = Vec::with_capacity(keep.len());
    for (dst, &src) in keep.iter().enumerate() {
        u.set_column(dst, &u_full.column(src));
        v.set_column(dst, &vt_full.row(src).adjoint());
        s.push(svd.singular_values[src]);
    }
    ThinSvd { u, s, v }
}

/// Numerical rank under `RANK_TOL`.
pub fn rank(a: &CMat) -> usize {
    thin_svd(a).s.len()
}

/// Validates `a` as PSD under `PSD_TOL` and clips slightly negative
/// eigenvalues to zero.
pub fn clip_psd(a: &CMat, what: &str) -> Result<CMat> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!("{what} is not square")));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NotPsd(format!("{what} has non-finite entries")));
    }
    let h = hermitize(a);
    let skew = (a - &h).norm();
    let scale = h.norm().max(1.0);
    if skew > 1e-8 * scale {
        return Err(Error::NotPsd(format!("{what} is not Hermitian")));
    }
    let e = herm_eigen(&h);
    let tr: f64 = e.values.iter().sum::<f64>().abs();
    let min = e.values.last().copied().unwrap_or(0.0);
    if min < -PSD_TOL * tr.max(f64::MIN_POSITIVE) && min < -1e-300 {
        return Err(Error::NotPsd(format!("{what} has eigenvalue {min:.3e}")));
    }
    if min < 0.0 {
        Ok(e.map(|x| x.max(0.0)))
    } else {
        Ok(h)
    }
}

/// Checks that a matrix is Hermitian positive definite.
pub fn require_hpd(a: &CMat, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!("{what} is not square")));
    }
    let h = hermitize(a);
    if (a - &h).norm() > 1e-8 * h.norm().max(1.0) {
        return Err(Error::NotPsd(format!("{what} is not Hermitian")));
    }
    let e = herm_eigen(&h);
    match e.values.last() {
        Some(&v) if v > 0.0 => Ok(()),
        None => Ok(()),
        Some(&v) => Err(Error::NotPsd(format!("{what} has eigenvalue {v:.3e}"))),
    }
}

/// Orthonormal basis (as columns) of the orthogonal complement of the span
/// of `vs` in `C^n`, built by modified Gram-Schmidt against the unit vectors.
pub fn orth_complement(vs: &[CVec], n: usize) -> CMat {
    let mut basis: Vec<CVec> = Vec::new();
    for v in vs {
        let mut w = v.clone();
        for b in &basis {
            let proj = b.dotc(&w);
            w -= b * proj;
        }
        let nrm = w.norm();
        if nrm > 1e-8 {
            basis.push(w / c(nrm));
        }
    }
    let fixed = basis.len();
    for i in 0..n {
        if basis.len() == n {
            break;
        }
        let mut w = CVec::zeros(n);
        w[i] = c(1.0);
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dotc(&w);
                w -= b * proj;
            }
        }
        let nrm = w.norm();
        if nrm > 1e-8 {
            basis.push(w / c(nrm));
        }
    }
    let cols: Vec<CVec> = basis.split_off(fixed);
    let mut out = zeros(n, cols.len());
    for (j, col) in cols.iter().enumerate() {
        out.set_column(j, col);
    }
    out
}

/// Real column vector helper for small dense systems.
pub type RVec = DVector<f64>;
pub type RMat = DMatrix<f64>;

/// Solves `A x = b` by LU with one step of residual refinement.
pub fn solve_refined(a: &RMat, b: &RVec) -> Result<RVec> {
    let lu = a.clone().lu();
    let mut x = lu
        .solve(b)
        .ok_or_else(|| Error::Numerical("singular linear system".into()))?;
    let r = b - a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite solution".into()));
    }
    Ok(x)
}

/// Spectral radius of a real square matrix.
pub fn spectral_radius(a: &RMat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}
