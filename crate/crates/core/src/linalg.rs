//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn scaled_identity(n: usize, s: f64) -> CMatrix {
    CMatrix::from_diagonal_element(n, n, c(s))
}

/// `(M + M^H) / 2`.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5)
}

pub fn trace_re(m: &CMatrix) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

/// Real part of `tr(A B)` without forming the product.
pub fn trace_product_re(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.ncols(), b.nrows());
    assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order (columns of `vectors` follow the same order).
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn new(m: &CMatrix) -> Self {
        assert!(m.is_square());
        let n = m.nrows();
        if n == 0 {
            return Self {
                values: vec![],
                vectors: CMatrix::zeros(0, 0),
            };
        }
        let eig = SymmetricEigen::new(hermitize(m));
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut vectors = CMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        Self { values, vectors }
    }

    /// `V diag(f(λ)) V^H`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let s = c(f(self.values[j]));
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        &scaled * self.vectors.adjoint()
    }

    pub fn min_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

/// Principal square root of a Hermitian PSD matrix; eigenvalues below zero are clipped.
pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    HermitianEigen::new(m).map(|l| l.max(0.0).sqrt())
}

/// Projects a Hermitian matrix onto the PSD cone by clipping its spectrum.
pub fn psd_clip(m: &CMatrix) -> CMatrix {
    HermitianEigen::new(m).map(|l| l.max(0.0))
}

/// Clips the spectrum of a Hermitian matrix to `[lo, hi]`.
pub fn spectrum_clip(m: &CMatrix, lo: f64, hi: f64) -> CMatrix {
    HermitianEigen::new(m).map(|l| l.clamp(lo, hi))
}

/// Complex Cholesky that also rejects non-positive pivots (nalgebra's complex
/// square root never fails, so an indefinite input would otherwise factor).
fn cholesky_hpd(m: &CMatrix) -> Option<nalgebra::Cholesky<Complex64, nalgebra::Dyn>> {
    let ch = m.clone().cholesky()?;
    let ok = ch
        .l_dirty()
        .diagonal()
        .iter()
        .all(|z| z.re > 0.0 && z.re.is_finite() && z.im.abs() <= 1e-12 * z.re);
    ok.then_some(ch)
}

/// `ln det M` of a Hermitian positive definite matrix.
pub fn ln_det_hpd(m: &CMatrix) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    match cholesky_hpd(m) {
        Some(ch) => Ok(2.0 * ch.l_dirty().diagonal().iter().map(|z| z.re.ln()).sum::<f64>()),
        None => {
            let e = HermitianEigen::new(m);
            if e.min_value() <= 0.0 {
                return Err(Error::Domain(format!(
                    "log-determinant of a matrix that is not positive definite (min eigenvalue {:e})",
                    e.min_value()
                )));
            }
            Ok(e.values.iter().map(|l| l.ln()).sum())
        }
    }
}

/// Inverse of a Hermitian positive definite matrix (Cholesky), Hermitian-symmetrized.
pub fn inv_hpd(m: &CMatrix) -> Result<CMatrix> {
    let ch = cholesky_hpd(m)
        .ok_or_else(|| Error::Numerical("Cholesky factorization failed".into()))?;
    Ok(hermitize(&ch.inverse()))
}

pub fn max_abs_offdiag(m: &CMatrix) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                worst = worst.max(m[(i, j)].norm());
            }
        }
    }
    worst
}

pub fn is_diagonal(m: &CMatrix, tol: f64) -> bool {
    let scale = m.diagonal().iter().map(|z| z.norm()).fold(1.0, f64::max);
    max_abs_offdiag(m) <= tol * scale
}

pub fn is_identity(m: &CMatrix, tol: f64) -> bool {
    m.is_square() && (m - identity(m.nrows())).iter().all(|z| z.norm() <= tol)
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Diagonal matrix from real entries.
pub fn real_diag(d: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(d.len(), d.iter().map(|&x| c(x))))
}
