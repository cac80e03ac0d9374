//! Small dense helpers shared by the other modules.

use alloc::format;

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen, SVD};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex<f64>>;

/// Spectral (operator 2-) norm.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .fold(0.0, |acc: f64, &s| acc.max(s))
}

pub fn op_norm_c(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .fold(0.0, |acc: f64, &s| acc.max(s))
}

pub fn is_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

pub fn ensure_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !is_finite(m) {
        return Err(Error::Value(format!("{what} has non-finite entries")));
    }
    Ok(())
}

pub fn ensure_shape(m: &DMatrix<f64>, rows: usize, cols: usize, what: &str) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::Dimension(format!(
            "{what}: expected {rows}x{cols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Asymmetry measured against the Frobenius norm.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).norm()
}

pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    SymmetricEigen::new(symmetrize(m)).eigenvalues
}

pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m)
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m)
        .iter()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
}

/// `f` applied to the eigenvalues of a symmetric matrix.
pub fn sym_fn(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Principal square root of a symmetric PSD matrix (negative eigenvalues clamped).
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_fn(m, |x| x.max(0.0).sqrt())
}

/// A factor `L` with `L Lᵀ = S` for symmetric PSD `S`; Cholesky when `S` is
/// numerically definite, otherwise the clamped eigen-factor.
pub fn psd_factor(s: &DMatrix<f64>) -> DMatrix<f64> {
    let s = symmetrize(s);
    if let Some(ch) = s.clone().cholesky() {
        let l = ch.unpack();
        if is_finite(&l) {
            return l;
        }
    }
    let eig = SymmetricEigen::new(s);
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| x.max(0.0).sqrt()));
    eig.eigenvectors * d
}

/// Moore–Penrose pseudoinverse, dropping singular values at or below
/// `rel_cutoff · σ_max`.
pub fn pinv(m: &DMatrix<f64>, rel_cutoff: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if m.is_empty() {
        return DMatrix::zeros(c, r);
    }
    let svd = SVD::new(m.clone(), true, true);
    let smax = svd.singular_values.iter().fold(0.0, |a: f64, &b| a.max(b));
    if smax == 0.0 {
        return DMatrix::zeros(c, r);
    }
    let cut = rel_cutoff * smax;
    let u = svd.u.as_ref().expect("u computed");
    let vt = svd.v_t.as_ref().expect("v_t computed");
    let mut out = DMatrix::zeros(c, r);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cut {
            out += vt.row(i).transpose() * u.column(i).transpose() * (1.0 / s);
        }
    }
    out
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex::new(x, 0.0))
}

/// Orthonormal basis (columns) of the numerical null space of `m`, taking
/// exactly `dim` right singular vectors with the smallest singular values.
pub fn null_basis(m: &CMatrix, dim: usize) -> CMatrix {
    let n = m.ncols();
    if dim == 0 {
        return CMatrix::zeros(n, 0);
    }
    // pad to square so that v_t carries a full basis
    let mut sq = CMatrix::zeros(n.max(m.nrows()), n);
    sq.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = SVD::new(sq, false, true);
    let vt = svd.v_t.expect("v_t computed");
    let k = vt.nrows();
    let mut out = CMatrix::zeros(n, dim);
    for j in 0..dim {
        let row = vt.row(k - dim + j);
        for i in 0..n {
            out[(i, j)] = row[i].conj();
        }
    }
    out
}

/// Numerical rank with absolute singular-value cutoff.
pub fn rank_c(m: &CMatrix, cutoff: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .filter(|&&s| s > cutoff)
        .count()
}

/// Condition number `σ_max / σ_min` of a square complex matrix.
pub fn cond_c(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = SVD::new(m.clone(), false, false).singular_values;
    let smax = sv.iter().fold(0.0, |a: f64, &b| a.max(b));
    let smin = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if smin <= 0.0 {
        f64::INFINITY
    } else {
        (smax / smin).max(1.0)
    }
}

/// Horizontal concatenation `[a b]`.
pub fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}
