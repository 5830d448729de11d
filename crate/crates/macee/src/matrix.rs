//! Dense complex linear algebra at desk scale.
//!
//! Provides exactly what the game needs: Hermitian positive-definite
//! log-determinants, inverses and solves via a complex Cholesky
//! factorization, a one-sided Jacobi singular value decomposition, and
//! Moore-Penrose pseudo-inverses of rectangular diagonal factors. Matrices
//! are stored row-major and are immutable after construction, so values can
//! be shared freely across threads.

use num_complex::Complex;
use thiserror::Error;

use crate::scalar::Scalar;

/// Relative tolerance for the Hermitian-symmetry check.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Relative cutoff below which a singular value is treated as zero when
/// forming a pseudo-inverse.
pub const PINV_CUTOFF: f64 = 1e-12;

const MAX_JACOBI_SWEEPS: usize = 64;

/// Errors from the numeric kernel.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix must be at least 1x1, got {rows}x{cols}")]
    EmptyMatrix { rows: usize, cols: usize },
    #[error("entry count {len} does not match {rows}x{cols}")]
    ShapeMismatch { rows: usize, cols: usize, len: usize },
    #[error("entry ({row},{col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian: max asymmetry {defect:e}")]
    NotHermitian { defect: f64 },
    #[error("matrix is not positive definite: leading minor {minor} is not positive")]
    NotPositiveDefinite { minor: usize },
    #[error("SVD did not converge for a {rows}x{cols} matrix after {sweeps} sweeps")]
    SvdNotConverged { rows: usize, cols: usize, sweeps: usize },
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix<S> {
    rows: usize,
    cols: usize,
    entries: Vec<Complex<S>>,
}

impl<S: Scalar> ComplexMatrix<S> {
    /// Build a matrix from row-major entries, validating shape and finiteness.
    pub fn new(rows: usize, cols: usize, entries: Vec<Complex<S>>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::EmptyMatrix { rows, cols });
        }
        if entries.len() != rows * cols {
            return Err(LinalgError::ShapeMismatch {
                rows,
                cols,
                len: entries.len(),
            });
        }
        for (idx, e) in entries.iter().enumerate() {
            if !e.re.is_finite() || !e.im.is_finite() {
                return Err(LinalgError::NonFinite {
                    row: idx / cols,
                    col: idx % cols,
                });
            }
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![Complex::new(S::zero(), S::zero()); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.entries[i * n + i] = Complex::new(S::one(), S::zero());
        }
        m
    }

    /// Square diagonal matrix from real entries.
    pub fn from_real_diag(diag: &[S]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.entries[i * n + i] = Complex::new(d, S::zero());
        }
        m
    }

    /// Rectangular diagonal matrix: `sigma[i]` at (i, i), zero elsewhere.
    pub fn diag_rect(sigma: &[S], rows: usize, cols: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        for (i, &s) in sigma.iter().enumerate().take(rows.min(cols)) {
            m.entries[i * cols + i] = Complex::new(s, S::zero());
        }
        m
    }

    /// Build from a closure over (row, col).
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<S>) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self {
            rows,
            cols,
            entries,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex<S> {
        self.entries[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: Complex<S>) {
        self.entries[row * self.cols + col] = value;
    }

    pub fn entries(&self) -> &[Complex<S>] {
        &self.entries
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    /// Matrix product. Panics on inner-dimension mismatch; public operations
    /// validate shapes before reaching this point.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols, other.rows,
            "matmul inner dimensions {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.re == S::zero() && a.im == S::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let cur = out.get(i, j);
                    out.set(i, j, cur + a * other.get(k, j));
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a + b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            entries,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a - b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            entries,
        }
    }

    pub fn scale(&self, factor: S) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| Complex::new(e.re * factor, e.im * factor))
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            entries,
        }
    }

    /// Add `d[i]` to the (i, i) entry; `d` may be shorter than the diagonal.
    pub fn plus_real_diag(&self, d: &[S]) -> Self {
        let mut out = self.clone();
        for (i, &v) in d.iter().enumerate().take(self.rows.min(self.cols)) {
            let cur = out.get(i, i);
            out.set(i, i, Complex::new(cur.re + v, cur.im));
        }
        out
    }

    pub fn frobenius_norm(&self) -> S {
        self.entries
            .iter()
            .map(|e| e.norm_sqr())
            .fold(S::zero(), |a, b| a + b)
            .sqrt()
    }

    pub fn max_abs(&self) -> S {
        self.entries
            .iter()
            .map(|e| e.norm())
            .fold(S::zero(), S::max)
    }

    /// Largest entry-wise deviation from Hermitian symmetry.
    pub fn hermitian_defect(&self) -> S {
        if self.rows != self.cols {
            return S::infinity();
        }
        let mut worst = S::zero();
        for i in 0..self.rows {
            for j in i..self.cols {
                let d = (self.get(i, j) - self.get(j, i).conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Real parts of the diagonal.
    pub fn diagonal_re(&self) -> Vec<S> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i).re).collect()
    }

    fn check_hermitian(&self) -> Result<(), LinalgError> {
        if self.rows != self.cols {
            return Err(LinalgError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let defect = self.hermitian_defect();
        let scale = S::one().max(self.max_abs());
        if defect > S::real(HERMITIAN_TOL) * scale {
            return Err(LinalgError::NotHermitian {
                defect: defect.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(())
    }

    /// Lower-triangular Cholesky factor L with `self = L L^H`.
    ///
    /// The failed-minor index in the error is 1-based.
    fn cholesky(&self) -> Result<Vec<Complex<S>>, LinalgError> {
        let n = self.rows;
        let mut l = vec![Complex::new(S::zero(), S::zero()); n * n];
        for j in 0..n {
            let mut d = self.get(j, j).re;
            for k in 0..j {
                d = d - l[j * n + k].norm_sqr();
            }
            if !(d > S::zero()) || !d.is_finite() {
                return Err(LinalgError::NotPositiveDefinite { minor: j + 1 });
            }
            let ljj = d.sqrt();
            l[j * n + j] = Complex::new(ljj, S::zero());
            for i in (j + 1)..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s = s - l[i * n + k] * l[j * n + k].conj();
                }
                l[i * n + j] = Complex::new(s.re / ljj, s.im / ljj);
            }
        }
        Ok(l)
    }

    /// Natural-log determinant of a Hermitian positive-definite matrix.
    pub fn logdet_hpd(&self) -> Result<S, LinalgError> {
        self.check_hermitian()?;
        let l = self.cholesky()?;
        let n = self.rows;
        let mut acc = S::zero();
        for j in 0..n {
            acc = acc + l[j * n + j].re.ln();
        }
        Ok(acc + acc)
    }

    /// Solve `self * x = rhs` for a Hermitian positive-definite matrix.
    pub(crate) fn solve_hpd(&self, rhs: &[Complex<S>]) -> Result<Vec<Complex<S>>, LinalgError> {
        self.check_hermitian()?;
        let l = self.cholesky()?;
        let n = self.rows;
        assert_eq!(rhs.len(), n);
        // forward: L y = rhs
        let mut y = rhs.to_vec();
        for i in 0..n {
            for k in 0..i {
                let lik = l[i * n + k];
                y[i] = y[i] - lik * y[k];
            }
            let d = l[i * n + i].re;
            y[i] = Complex::new(y[i].re / d, y[i].im / d);
        }
        // backward: L^H x = y
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let lki = l[k * n + i].conj();
                y[i] = y[i] - lki * y[k];
            }
            let d = l[i * n + i].re;
            y[i] = Complex::new(y[i].re / d, y[i].im / d);
        }
        Ok(y)
    }

    /// Inverse of a Hermitian positive-definite matrix.
    pub fn inv_hpd(&self) -> Result<Self, LinalgError> {
        self.check_hermitian()?;
        let n = self.rows;
        let mut out = Self::zeros(n, n);
        for j in 0..n {
            let mut e = vec![Complex::new(S::zero(), S::zero()); n];
            e[j] = Complex::new(S::one(), S::zero());
            let col = self.solve_hpd(&e)?;
            for i in 0..n {
                out.set(i, j, col[i]);
            }
        }
        Ok(out)
    }

    /// Full singular value decomposition `self = u * diag_rect(sigma) * v^H`.
    ///
    /// `u` is rows x rows unitary, `v` is cols x cols unitary, `sigma` holds
    /// min(rows, cols) nonnegative values in descending order. The phase
    /// convention (first nonzero entry of each column of `u` real
    /// nonnegative) makes the output deterministic for a fixed input.
    pub fn svd(&self) -> Result<SvdFactors<S>, LinalgError> {
        if self.rows < self.cols {
            // self^H = u s v^H  =>  self = v s^T u^H
            let f = self.adjoint().svd()?;
            return Ok(SvdFactors {
                u: f.v,
                sigma: f.sigma,
                v: f.u,
            });
        }
        let m = self.rows;
        let n = self.cols;
        let mut w = self.entries.clone();
        let mut v = ComplexMatrix::<S>::identity(n);
        let eps = S::epsilon() * S::real(16.0);

        // One-sided Jacobi: orthogonalize column pairs of the working copy,
        // accumulating the same rotations into v so that self = w * v^H
        // stays invariant.
        let mut converged = false;
        for _sweep in 0..MAX_JACOBI_SWEEPS {
            let mut rotated = false;
            for p in 0..n {
                for q in (p + 1)..n {
                    let mut app = S::zero();
                    let mut aqq = S::zero();
                    let mut apq = Complex::new(S::zero(), S::zero());
                    for i in 0..m {
                        let wp = w[i * n + p];
                        let wq = w[i * n + q];
                        app = app + wp.norm_sqr();
                        aqq = aqq + wq.norm_sqr();
                        apq = apq + wp.conj() * wq;
                    }
                    let g = apq.norm();
                    let scale = (app * aqq).sqrt();
                    if scale == S::zero() || g <= eps * scale {
                        continue;
                    }
                    rotated = true;
                    let phase_conj = (apq / g).conj();
                    let zeta = (app - aqq) / (g + g);
                    let t = if zeta >= S::zero() {
                        -S::one() / (zeta + (S::one() + zeta * zeta).sqrt())
                    } else {
                        S::one() / (-zeta + (S::one() + zeta * zeta).sqrt())
                    };
                    let c = S::one() / (S::one() + t * t).sqrt();
                    let s = c * t;
                    for i in 0..m {
                        let wp = w[i * n + p];
                        let wq = w[i * n + q] * phase_conj;
                        w[i * n + p] = Complex::new(
                            wp.re * c - wq.re * s,
                            wp.im * c - wq.im * s,
                        );
                        w[i * n + q] = Complex::new(
                            wp.re * s + wq.re * c,
                            wp.im * s + wq.im * c,
                        );
                    }
                    for i in 0..n {
                        let vp = v.get(i, p);
                        let vq = v.get(i, q) * phase_conj;
                        v.set(
                            i,
                            p,
                            Complex::new(vp.re * c - vq.re * s, vp.im * c - vq.im * s),
                        );
                        v.set(
                            i,
                            q,
                            Complex::new(vp.re * s + vq.re * c, vp.im * s + vq.im * c),
                        );
                    }
                }
            }
            if !rotated {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(LinalgError::SvdNotConverged {
                rows: m,
                cols: n,
                sweeps: MAX_JACOBI_SWEEPS,
            });
        }

        // Column norms are the singular values; sort descending (stable).
        let mut sigma: Vec<S> = (0..n)
            .map(|j| {
                (0..m)
                    .map(|i| w[i * n + j].norm_sqr())
                    .fold(S::zero(), |a, b| a + b)
                    .sqrt()
            })
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).expect("finite sigma"));
        let w_sorted = ComplexMatrix::from_fn(m, n, |i, j| w[i * n + order[j]]);
        let v_sorted = ComplexMatrix::from_fn(n, n, |i, j| v.get(i, order[j]));
        sigma = order.iter().map(|&j| sigma[j]).collect();

        // Left factor: normalized columns where sigma is significant, then an
        // orthonormal completion drawn deterministically from the standard
        // basis.
        let sig_max = sigma.first().copied().unwrap_or(S::zero());
        let cutoff = sig_max * S::epsilon() * S::from_usize(m).unwrap();
        let mut u_cols: Vec<Vec<Complex<S>>> = Vec::with_capacity(m);
        for j in 0..n {
            if sigma[j] > cutoff && sigma[j] > S::zero() {
                let col = (0..m)
                    .map(|i| {
                        let e = w_sorted.get(i, j);
                        Complex::new(e.re / sigma[j], e.im / sigma[j])
                    })
                    .collect();
                u_cols.push(col);
            } else {
                break;
            }
        }
        let mut basis_idx = 0usize;
        while u_cols.len() < m {
            assert!(basis_idx < m, "orthonormal completion exhausted the basis");
            let mut cand = vec![Complex::new(S::zero(), S::zero()); m];
            cand[basis_idx] = Complex::new(S::one(), S::zero());
            basis_idx += 1;
            for col in &u_cols {
                let mut dot = Complex::new(S::zero(), S::zero());
                for i in 0..m {
                    dot = dot + col[i].conj() * cand[i];
                }
                for i in 0..m {
                    cand[i] = cand[i] - col[i] * dot;
                }
            }
            let norm = cand
                .iter()
                .map(|e| e.norm_sqr())
                .fold(S::zero(), |a, b| a + b)
                .sqrt();
            if norm > S::real(0.5) {
                for e in cand.iter_mut() {
                    *e = Complex::new(e.re / norm, e.im / norm);
                }
                u_cols.push(cand);
            }
        }
        let mut u = ComplexMatrix::from_fn(m, m, |i, j| u_cols[j][i]);

        // Phase convention: rotate each column of u so its first
        // non-negligible entry is real nonnegative; rotate the matching v
        // column by the same phase so the product is unchanged.
        let anchor_tol = S::epsilon().sqrt();
        let mut v_final = v_sorted;
        for j in 0..m {
            let mut anchor = None;
            for i in 0..m {
                if u.get(i, j).norm() > anchor_tol {
                    anchor = Some(i);
                    break;
                }
            }
            let i = anchor.unwrap_or(0);
            let a = u.get(i, j);
            let norm = a.norm();
            if norm == S::zero() {
                continue;
            }
            let rot = Complex::new(a.re / norm, -a.im / norm); // conj(phase)
            for r in 0..m {
                let e = u.get(r, j);
                u.set(r, j, e * rot);
            }
            if j < n {
                for r in 0..n {
                    let e = v_final.get(r, j);
                    v_final.set(r, j, e * rot);
                }
            }
        }

        Ok(SvdFactors {
            u,
            sigma,
            v: v_final,
        })
    }
}

/// SVD factors: `u * diag_rect(sigma) * v^H` reconstructs the input.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors<S> {
    pub u: ComplexMatrix<S>,
    pub sigma: Vec<S>,
    pub v: ComplexMatrix<S>,
}

impl<S: Scalar> SvdFactors<S> {
    /// Reconstruct the original matrix (rows = u side, cols = v side).
    pub fn reconstruct(&self) -> ComplexMatrix<S> {
        let rect = ComplexMatrix::diag_rect(&self.sigma, self.u.rows(), self.v.rows());
        self.u.matmul(&rect).matmul(&self.v.adjoint())
    }
}

/// Moore-Penrose pseudo-inverse of the rows x cols rectangular diagonal
/// matrix with diagonal `sigma`.
///
/// Returns a cols x rows matrix whose (i, i) entry is `1/sigma[i]` when
/// `sigma[i]` exceeds a relative cutoff and zero otherwise, so zero singular
/// values never produce infinities.
pub fn pinv_rect_diag<S: Scalar>(sigma: &[S], rows: usize, cols: usize) -> ComplexMatrix<S> {
    assert_eq!(
        sigma.len(),
        rows.min(cols),
        "sigma length must equal min(rows, cols)"
    );
    let sig_max = sigma.iter().copied().fold(S::zero(), S::max);
    let cutoff = sig_max * S::real(PINV_CUTOFF);
    let mut out = ComplexMatrix::zeros(cols, rows);
    for (i, &s) in sigma.iter().enumerate() {
        if s > cutoff && s > S::zero() {
            out.set(i, i, Complex::new(S::one() / s, S::zero()));
        }
    }
    out
}
