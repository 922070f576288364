//! Small dense linear-algebra helpers shared by the estimators.
//!
//! Samples are stored as rows of a `DMatrix<f64>`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Reciprocal condition numbers below this are treated as singular.
pub const RCOND_THRESHOLD: f64 = 1e-14;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric eigendecomposition with eigenvalues sorted descending.
///
/// Each eigenvector is sign-normalized so that its largest-magnitude entry
/// is positive, which makes the basis reproducible across runs.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        let pivot = col
            .iter()
            .copied()
            .fold(0.0_f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Ratio of smallest to largest eigenvalue of a symmetric matrix (1 for empty).
pub fn reciprocal_condition(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let (vals, _) = sym_eigen_desc(m);
    let max = vals[0];
    let min = vals[vals.len() - 1];
    if !(max > 0.0) || !min.is_finite() {
        return 0.0;
    }
    (min / max).max(0.0)
}

pub fn add_ridge(m: &DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
    let mut out = symmetrize(m);
    for i in 0..out.nrows() {
        out[(i, i)] += ridge;
    }
    out
}

/// Cholesky factor of `m + ridge·I`, refusing numerically singular input.
pub fn checked_cholesky(m: &DMatrix<f64>, ridge: f64) -> Result<Cholesky<f64, Dyn>> {
    let reg = add_ridge(m, ridge);
    let rcond = reciprocal_condition(&reg);
    if rcond < RCOND_THRESHOLD {
        return Err(Error::Conditioning {
            rcond,
            threshold: RCOND_THRESHOLD,
        });
    }
    Cholesky::new(reg).ok_or(Error::Conditioning {
        rcond,
        threshold: RCOND_THRESHOLD,
    })
}

/// Solves `(a + ridge·I) X = b` for symmetric PSD `a`.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Ok(DMatrix::zeros(0, b.ncols()));
    }
    Ok(checked_cholesky(a, ridge)?.solve(b))
}

pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows().max(1) as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

pub fn center_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let means = column_means(x);
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    out
}

/// Cross-covariance of two row-aligned blocks with denominator N.
pub fn cross_covariance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows().max(1) as f64;
    center_columns(a).transpose() * center_columns(b) / n
}

/// Concatenates row-aligned blocks side by side.
pub fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        debug_assert_eq!(b.nrows(), rows);
        out.columns_mut(offset, b.ncols()).copy_from(b);
        offset += b.ncols();
    }
    out
}

/// Selects the given rows, in order.
pub fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Nearest symmetric matrix with eigenvalues floored at `floor`.
pub fn project_psd_floor(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let (vals, vecs) = sym_eigen_desc(m);
    if vals[n - 1] >= floor {
        return symmetrize(m);
    }
    let clamped = DMatrix::from_diagonal(&vals.map(|v| v.max(floor)));
    symmetrize(&(&vecs * clamped * vecs.transpose()))
}

pub fn trace(m: &DMatrix<f64>) -> f64 {
    m.diagonal().sum()
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}
