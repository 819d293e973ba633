//! Dense complex linear algebra on top of `nalgebra`.
//!
//! Matrices are `DMatrix<Complex64>` and kets are `DVector<Complex64>`. The
//! decompositions themselves (SVD, Hermitian eigensolver, QR) come from
//! nalgebra; this module adds the contracts the rest of the crate relies on:
//! relative rank cutoffs, Hermiticity checks, PSD clamping and the ascending
//! eigenvalue order.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<Complex64>;
pub type Ket = DVector<Complex64>;

/// Relative singular-value cutoff used for pseudoinverses and ranks.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;
/// Absolute Hermiticity tolerance, scaled by `max(1, max|m_ij|)`.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues above this (negative) value are clamped to zero by
/// [`matrix_sqrt_psd`]; anything below is reported as not PSD.
pub const PSD_CLAMP_TOL: f64 = -1e-6;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn ket_from(values: &[C64]) -> Ket {
    Ket::from_column_slice(values)
}

pub fn basis_ket(dim: usize, index: usize) -> Ket {
    let mut k = Ket::zeros(dim);
    k[index] = c64(1.0, 0.0);
    k
}

pub fn projector(ket: &Ket) -> CMatrix {
    ket * ket.adjoint()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    max_abs(&(m - m.adjoint()))
}

pub fn is_hermitian(m: &CMatrix) -> bool {
    hermitian_deviation(m) <= HERMITIAN_TOL * max_abs(m).max(1.0)
}

/// Real part of the trace.
pub fn trace_re(m: &CMatrix) -> f64 {
    m.trace().re
}

/// `Tr(a b)` for Hermitian arguments (real by construction).
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}

/// Moore-Penrose pseudoinverse. Singular values below `tol * sigma_max` are
/// treated as zero.
pub fn pseudo_inverse(m: &CMatrix, tol: f64) -> Result<CMatrix> {
    if !is_finite(m) {
        return Err(Error::InvalidInput(
            "pseudo_inverse: matrix has non-finite entries".into(),
        ));
    }
    if tol <= 0.0 {
        return Err(Error::InvalidInput("pseudo_inverse: tol must be > 0".into()));
    }
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(CMatrix::zeros(cols, rows));
    }
    let (values, vectors) = dilation_eigen(m);
    let sigma_max = values.last().copied().unwrap_or(0.0).max(0.0);
    let cutoff = tol * sigma_max;
    let mut out = CMatrix::zeros(cols, rows);
    for (k, &s) in values.iter().enumerate() {
        if s <= cutoff || s <= 0.0 {
            continue;
        }
        let u = vectors.view((0, k), (rows, 1));
        let v = vectors.view((rows, k), (cols, 1));
        out += (v * u.adjoint()) * c64(2.0 / s, 0.0);
    }
    Ok(out)
}

/// Eigen-decomposition of `[[0, M], [M^dagger, 0]]`, whose positive
/// eigenvalues are the singular values of `M` with eigenvectors
/// `(u; v) / sqrt(2)`. nalgebra's complex SVD loses accuracy on some inputs
/// with clustered singular values; the Hermitian eigensolver does not.
fn dilation_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let (r, c) = m.shape();
    let mut h = CMatrix::zeros(r + c, r + c);
    h.view_mut((0, r), (r, c)).copy_from(m);
    h.view_mut((r, 0), (c, r)).copy_from(&m.adjoint());
    let e = hermitian_eigen_unchecked(&h);
    (e.values, e.vectors)
}

/// Number of singular values above `tol * sigma_max`.
pub fn numerical_rank(m: &CMatrix, tol: f64) -> usize {
    let sv = singular_values(m);
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    if sigma_max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * sigma_max).count()
}

/// Singular values, descending.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let (values, _) = dilation_eigen(m);
    values
        .iter()
        .rev()
        .take(m.nrows().min(m.ncols()))
        .map(|&s| s.max(0.0))
        .collect()
}

/// Orthonormal basis of the null space of `m`: eigenvectors of `m^dagger m`
/// with eigenvalue below `tol` times the largest.
pub fn null_space(m: &CMatrix, tol: f64) -> Vec<Ket> {
    let c = m.ncols();
    if c == 0 {
        return Vec::new();
    }
    let h = m.adjoint() * m;
    let e = hermitian_eigen_unchecked(&h);
    let scale = e.values.last().copied().unwrap_or(0.0).max(0.0);
    let cutoff = tol * scale;
    (0..c)
        .filter(|&k| e.values[k] <= cutoff)
        .map(|k| e.vectors.column(k).into_owned())
        .collect()
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector for `values[k]`.
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// `V f(Λ) V†`.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for k in 0..n {
            let s = f(self.values[k]);
            scaled.column_mut(k).scale_mut(s);
        }
        scaled * self.vectors.adjoint()
    }
}

pub fn hermitian_eigen(m: &CMatrix) -> Result<HermitianEigen> {
    if !m.is_square() {
        return Err(Error::Contract(format!(
            "hermitian_eigen: matrix is {}x{}, not square",
            m.nrows(),
            m.ncols()
        )));
    }
    if !is_finite(m) {
        return Err(Error::InvalidInput(
            "hermitian_eigen: matrix has non-finite entries".into(),
        ));
    }
    if !is_hermitian(m) {
        return Err(Error::Contract(format!(
            "hermitian_eigen: matrix is not Hermitian (deviation {:e})",
            hermitian_deviation(m)
        )));
    }
    Ok(hermitian_eigen_unchecked(m))
}

/// Eigen-decomposition of the Hermitian part `(m + m†)/2`, no checks.
pub(crate) fn hermitian_eigen_unchecked(m: &CMatrix) -> HermitianEigen {
    let n = m.nrows();
    if n == 0 {
        return HermitianEigen {
            values: Vec::new(),
            vectors: CMatrix::zeros(0, 0),
        };
    }
    let sym = (m + m.adjoint()) * c64(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    HermitianEigen { values, vectors }
}

pub fn min_eigenvalue(m: &CMatrix) -> Result<f64> {
    Ok(hermitian_eigen(m)?.min())
}

/// Principal square root of a PSD matrix. Eigenvalues in `[-1e-6, 0)` are
/// clamped to zero.
pub fn matrix_sqrt_psd(m: &CMatrix) -> Result<CMatrix> {
    let eig = hermitian_eigen(m)?;
    let scale = max_abs(m).max(1.0);
    if eig.min() < PSD_CLAMP_TOL * scale {
        return Err(Error::NotPsd(eig.min()));
    }
    let floor = NOISE_FLOOR * eig.max().abs();
    Ok(eig.map(|v| if v <= floor { 0.0 } else { v.sqrt() }))
}

/// Eigenvalues below this fraction of the largest are rounding noise; their
/// square roots would otherwise leak in at the 1e-8 level.
const NOISE_FLOOR: f64 = 1e-14;

/// `Tr sqrt(P)` for PSD `P`; negative rounding noise is clamped.
pub fn trace_sqrt_psd(m: &CMatrix) -> f64 {
    let values = hermitian_eigen_unchecked(m).values;
    let floor = NOISE_FLOOR * values.last().map_or(0.0, |v| v.abs());
    values
        .iter()
        .map(|&v| if v <= floor { 0.0 } else { v.sqrt() })
        .sum()
}

/// Kronecker product with the standard layout: row `i*rb + k`, column
/// `j*cb + l` holds `a[i,j] * b[k,l]`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn kron_ket(a: &Ket, b: &Ket) -> Ket {
    a.kronecker(b)
}

/// Uhlmann fidelity `(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2` of two PSD
/// matrices.
pub fn uhlmann_fidelity(rho: &CMatrix, sigma: &CMatrix) -> Result<f64> {
    let sr = matrix_sqrt_psd(rho)?;
    let inner = &sr * sigma * &sr;
    let t = trace_sqrt_psd(&inner);
    Ok(t * t)
}

pub fn random_complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c64(re, im)
}

/// Haar-random unitary: QR of a complex Ginibre matrix with the phases of
/// `diag(R)` folded back into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(n, n, |_, _| random_complex_gaussian(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..n {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c64(1.0, 0.0) };
        let mut col = q.column_mut(k);
        col *= phase;
    }
    q
}

/// Haar-random normalized ket.
pub fn random_ket<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Ket {
    let v = Ket::from_fn(dim, |_, _| random_complex_gaussian(rng));
    let n = v.norm();
    v / c64(n, 0.0)
}

/// Random Hermitian matrix with Gaussian entries.
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| random_complex_gaussian(rng));
    (&g + g.adjoint()) * c64(0.5, 0.0)
}

/// Random PSD matrix `G G†`, with `rank` columns in `G`.
pub fn random_psd<R: Rng + ?Sized>(dim: usize, rank: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(dim, rank, |_, _| random_complex_gaussian(rng));
    &g * g.adjoint()
}

/// Hermitian matrix of a real diagonal.
pub fn diag_real(values: &[f64]) -> CMatrix {
    let n = values.len();
    let mut m = CMatrix::zeros(n, n);
    for (k, v) in values.iter().enumerate() {
        m[(k, k)] = c64(*v, 0.0);
    }
    m
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}
