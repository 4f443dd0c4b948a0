//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector, QR};

/// Orthonormal basis of the null space of `w` (rows assumed linearly independent).
///
/// Householder QR of `[wᵀ | I]` yields a full orthogonal factor whose leading
/// `k` columns span the row space of `w`; the trailing columns span its complement.
pub(crate) fn null_space(w: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let k = w.nrows();
    if k == 0 {
        return DMatrix::identity(n, n);
    }
    if k >= n {
        return DMatrix::zeros(n, 0);
    }
    let mut aug = DMatrix::zeros(n, k + n);
    aug.view_mut((0, 0), (n, k)).copy_from(&w.transpose());
    aug.view_mut((0, k), (n, n)).fill_with_identity();
    let q = QR::new(aug).q();
    q.columns(k, n - k).into_owned()
}

/// Thin SVD through faer; nalgebra's SVD loses accuracy on some inputs.
fn thin_svd(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let a = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let svd = a.thin_svd().ok()?;
    let (u, v) = (svd.U(), svd.V());
    let s = svd.S().column_vector();
    let k = s.nrows();
    Some((
        DMatrix::from_fn(m.nrows(), k, |i, j| u[(i, j)]),
        DVector::from_fn(k, |i, _| s[i]),
        DMatrix::from_fn(m.ncols(), k, |i, j| v[(i, j)]),
    ))
}

/// Numerical rank with a threshold relative to the largest singular value.
pub(crate) fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let Some((_, sv, _)) = thin_svd(m) else {
        return 0;
    };
    let smax = sv.max();
    if smax <= f64::MIN_POSITIVE {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Minimum-norm least-squares solution of `m x = rhs`.
pub(crate) fn lstsq(m: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DVector::zeros(m.ncols());
    }
    let Some((u, s, v)) = thin_svd(m) else {
        return DVector::zeros(m.ncols());
    };
    let eps = (s.max() * 1e-13).max(f64::MIN_POSITIVE);
    let mut y = u.transpose() * rhs;
    for (yi, &si) in y.iter_mut().zip(s.iter()) {
        *yi = if si > eps { *yi / si } else { 0.0 };
    }
    v * y
}

/// Stack the given rows of `m` into a new matrix, preserving order.
pub(crate) fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Vertical concatenation; all blocks must share a column count.
pub(crate) fn vstack(blocks: &[&DMatrix<f64>], ncols: usize) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, ncols);
    let mut r = 0;
    for b in blocks {
        debug_assert_eq!(b.ncols(), ncols);
        out.view_mut((r, 0), (b.nrows(), ncols)).copy_from(b);
        r += b.nrows();
    }
    out
}

pub(crate) fn vcat(blocks: &[&DVector<f64>]) -> DVector<f64> {
    let n: usize = blocks.iter().map(|b| b.len()).sum();
    let mut out = DVector::zeros(n);
    let mut r = 0;
    for b in blocks {
        out.rows_mut(r, b.len()).copy_from(b);
        r += b.len();
    }
    out
}

pub(crate) fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

/// Indices of rows that greedily increase the rank of `[base; kept rows]`, scanning in order.
pub(crate) fn greedy_independent_rows(
    base: &DMatrix<f64>,
    candidates: &DMatrix<f64>,
    order: &[usize],
    rel_tol: f64,
) -> Vec<usize> {
    let n = candidates.ncols();
    let mut stacked = base.clone();
    let mut current_rank = rank(&stacked, rel_tol);
    let mut kept = Vec::new();
    for &j in order {
        let mut trial = DMatrix::zeros(stacked.nrows() + 1, n);
        trial.view_mut((0, 0), (stacked.nrows(), n)).copy_from(&stacked);
        trial.row_mut(stacked.nrows()).copy_from(&candidates.row(j));
        let r = rank(&trial, rel_tol);
        if r > current_rank {
            stacked = trial;
            current_rank = r;
            kept.push(j);
        }
    }
    kept
}
