//! Dense linear-algebra helpers shared by the numerical modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Thin SVD `m = U diag(s) Vt` with singular values sorted nonincreasing and
/// each singular pair signed so that the largest-magnitude entry of the left
/// vector is nonnegative.
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub vt: DMatrix<f64>,
}

pub fn thin_svd(m: &DMatrix<f64>) -> Result<ThinSvd> {
    let p = m.nrows().min(m.ncols());
    // nalgebra handles wide inputs less accurately; work on the tall orientation.
    let transposed = m.nrows() < m.ncols();
    let work = if transposed { m.transpose() } else { m.clone() };
    let svd = work
        .try_svd(true, true, 5.0 * f64::EPSILON, 0)
        .ok_or_else(|| Error::numerical("SVD failed to converge"))?;
    let (mut u, mut vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    if transposed {
        std::mem::swap(&mut u, &mut vt);
        u = u.transpose();
        vt = vt.transpose();
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));

    let mut uo = DMatrix::zeros(m.nrows(), p);
    let mut vo = DMatrix::zeros(p, m.ncols());
    let mut s = Vec::with_capacity(p);
    for (dst, &src) in order.iter().enumerate() {
        let mut ucol = u.column(src).clone_owned();
        let mut vrow = vt.row(src).clone_owned();
        let pivot = ucol.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            ucol.neg_mut();
            vrow.neg_mut();
        }
        uo.set_column(dst, &ucol);
        vo.set_row(dst, &vrow);
        s.push(svd.singular_values[src]);
    }
    Ok(ThinSvd { u: uo, s, vt: vo })
}

/// Leading `k` left singular vectors of `m`, with the sign convention of [`thin_svd`].
pub fn leading_left_singular(m: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    if k > m.ncols() {
        // A thin SVD yields only ncols left vectors; pad to square so the
        // remaining ones complete an orthonormal basis.
        let mut padded = DMatrix::zeros(m.nrows(), m.nrows());
        padded.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
        return leading_left_singular(&padded, k);
    }
    let svd = thin_svd(m)?;
    Ok(svd.u.columns(0, k).clone_owned())
}

/// Householder QR with column pivoting; returns the first `k` pivot columns in
/// selection order.
pub fn pivoted_qr_columns(a: &DMatrix<f64>, k: usize) -> Vec<usize> {
    let (m, n) = a.shape();
    let steps = k.min(m).min(n);
    let mut r = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut norms: Vec<f64> = (0..n).map(|j| r.column(j).norm_squared()).collect();

    for step in 0..steps {
        // Recompute trailing norms directly; sizes here are small.
        for j in step..n {
            norms[j] = r.view((step, j), (m - step, 1)).norm_squared();
        }
        let mut best = step;
        for j in step + 1..n {
            if norms[j] > norms[best] {
                best = j;
            }
        }
        if best != step {
            r.swap_columns(step, best);
            perm.swap(step, best);
            norms.swap(step, best);
        }
        let x = r.view((step, step), (m - step, 1)).clone_owned();
        let alpha = x.norm();
        if alpha == 0.0 {
            continue;
        }
        let mut v = x;
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += sign * alpha;
        let vnorm2 = v.norm_squared();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in step..n {
            let mut col = r.view_mut((step, j), (m - step, 1));
            let coef = 2.0 * v.dot(&col) / vnorm2;
            for (c, &vi) in col.iter_mut().zip(v.iter()) {
                *c -= coef * vi;
            }
        }
    }
    perm.truncate(steps);
    perm
}

/// Minimum-norm least-squares solution of `a x = b`.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != b.len() {
        return Err(Error::arg("least squares: row count mismatch"));
    }
    if a.nrows() >= a.ncols() && a.ncols() > 0 {
        // Householder QR keeps the residual orthogonal to the columns to
        // working precision; fall through to the SVD when rank deficient.
        let qr = a.clone().qr();
        let r = qr.r();
        let diag = r.diagonal().abs();
        if diag.min() > diag.max() * 1e-10 {
            let qtb = qr.q().transpose() * b;
            if let Some(x) = r.solve_upper_triangular(&qtb) {
                return Ok(x);
            }
        }
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = smax * (a.nrows().max(a.ncols()) as f64) * f64::EPSILON;
    svd.solve(b, eps).map_err(Error::numerical)
}

/// log det of a symmetric positive definite matrix, via Cholesky.
pub fn logdet_spd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numerical("matrix is not positive definite"))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Orthonormal basis for the columns of `m` (thin Q of a QR factorization).
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols().min(r.nrows()) {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}
