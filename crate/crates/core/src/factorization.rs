//! Low-rank surrogates of the error matrix and tensor.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{leading_left_singular, thin_svd};
use crate::tensor::{frobenius_norm, matricize, mode_product, DenseTensor};

pub const DEFAULT_TUCKER_TOL: f64 = 1e-8;
pub const DEFAULT_TUCKER_SWEEPS: usize = 50;

/// Truncated PCA of an `m x n` error matrix: `E ~ X^T Y`.
///
/// `x` is `k x m` with orthonormal rows (left singular vectors), `y` is `k x n`
/// and carries the singular values, matching the order-2 Tucker split.
#[derive(Debug, Clone)]
pub struct PcaFactors {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub singular_values: Vec<f64>,
}

pub fn pca_factorize(e: &DMatrix<f64>, k: usize) -> Result<PcaFactors> {
    let p = e.nrows().min(e.ncols());
    if k < 1 || k > p {
        return Err(Error::arg(format!("rank {k} outside 1..={p}")));
    }
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("error matrix has non-finite entries"));
    }
    let svd = thin_svd(e)?;
    let x = svd.u.columns(0, k).transpose();
    let mut y = svd.vt.rows(0, k).clone_owned();
    for (i, mut row) in y.row_iter_mut().enumerate() {
        row *= svd.s[i];
    }
    Ok(PcaFactors { x, y, singular_values: svd.s })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TuckerRanks(Vec<usize>);

impl TuckerRanks {
    pub fn new(ranks: Vec<usize>, dims: &[usize]) -> Result<Self> {
        if ranks.len() != dims.len() {
            return Err(Error::arg(format!(
                "{} ranks given for an order-{} tensor",
                ranks.len(),
                dims.len()
            )));
        }
        for (mode, (&r, &d)) in ranks.iter().zip(dims).enumerate() {
            if r < 1 || r > d {
                return Err(Error::arg(format!("rank {r} for mode {mode} outside 1..={d}")));
            }
        }
        Ok(TuckerRanks(ranks))
    }

    pub fn full(dims: &[usize]) -> Self {
        TuckerRanks(dims.to_vec())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

#[derive(Debug, Clone)]
pub struct TuckerFactors {
    pub core: DenseTensor,
    /// `n_i x r_i` with orthonormal columns.
    pub factors: Vec<DMatrix<f64>>,
}

impl TuckerFactors {
    /// `core x_1 U_1 ... x_N U_N`.
    pub fn reconstruct(&self) -> DenseTensor {
        let mut t = self.core.clone();
        for (mode, u) in self.factors.iter().enumerate() {
            t = mode_product(&t, u, mode).expect("factor shapes are consistent with the core");
        }
        t
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.factors.iter().map(|u| u.ncols()).collect()
    }
}

/// HOSVD-initialized Tucker decomposition refined by HOOI sweeps.
pub fn tucker_decompose(
    t: &DenseTensor,
    ranks: &TuckerRanks,
    max_sweeps: usize,
    tol: f64,
) -> Result<TuckerFactors> {
    let init = hosvd_factors(t, ranks)?;
    Ok(hooi(t, init, max_sweeps, tol)?.0)
}

/// Leading left singular vectors of every matricization.
pub fn hosvd_factors(t: &DenseTensor, ranks: &TuckerRanks) -> Result<Vec<DMatrix<f64>>> {
    check_ranks(t, ranks)?;
    (0..t.order())
        .map(|mode| leading_left_singular(&matricize(t, mode)?, ranks.0[mode]))
        .collect()
}

/// HOOI sweeps from the given orthonormal factors. Returns the fit and the
/// reconstruction error `||t - fit||_F` before the first sweep and after each one.
pub fn hooi(
    t: &DenseTensor,
    mut factors: Vec<DMatrix<f64>>,
    max_sweeps: usize,
    tol: f64,
) -> Result<(TuckerFactors, Vec<f64>)> {
    if factors.len() != t.order() {
        return Err(Error::arg("one factor per mode required"));
    }
    for (mode, u) in factors.iter().enumerate() {
        if u.nrows() != t.dims()[mode] || u.ncols() == 0 || u.ncols() > u.nrows() {
            return Err(Error::arg(format!("factor {mode} has incompatible shape")));
        }
    }
    let mut fit = project(t, factors.clone())?;
    let mut history = vec![residual(t, &fit)?];

    for _ in 0..max_sweeps {
        for mode in 0..t.order() {
            let mut y = t.clone();
            for (other, u) in factors.iter().enumerate() {
                if other != mode {
                    y = mode_product(&y, &u.transpose(), other)?;
                }
            }
            factors[mode] = leading_left_singular(&matricize(&y, mode)?, factors[mode].ncols())?;
        }
        let next = project(t, factors.clone())?;
        let err = residual(t, &next)?;
        let prev = *history.last().unwrap();
        // Guard against round-off making a converged sweep marginally worse.
        if err <= prev || history.len() == 1 {
            fit = next;
        }
        history.push(err.min(prev));
        if prev == 0.0 || (prev - err) <= tol * prev {
            break;
        }
    }
    Ok((fit, history))
}

/// Optimal core for fixed orthonormal factors.
fn project(t: &DenseTensor, factors: Vec<DMatrix<f64>>) -> Result<TuckerFactors> {
    let mut core = t.clone();
    for (mode, u) in factors.iter().enumerate() {
        core = mode_product(&core, &u.transpose(), mode)?;
    }
    Ok(TuckerFactors { core, factors })
}

fn residual(t: &DenseTensor, fit: &TuckerFactors) -> Result<f64> {
    Ok(frobenius_norm(&t.sub(&fit.reconstruct())?))
}

fn check_ranks(t: &DenseTensor, ranks: &TuckerRanks) -> Result<()> {
    TuckerRanks::new(ranks.0.clone(), t.dims()).map(|_| ())
}

/// Dataset embeddings `X = U_1^T` (`r_1 x n_1`) and pipeline embeddings
/// `Y = (core x_2 U_2 ... x_N U_N)_(1)` (`r_1 x prod n_i`), so that `X^T Y`
/// is the mode-1 matricization of the reconstruction.
pub fn pipeline_embeddings(f: &TuckerFactors) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let mut partial = f.core.clone();
    for (mode, u) in f.factors.iter().enumerate().skip(1) {
        partial = mode_product(&partial, u, mode)?;
    }
    Ok((f.factors[0].transpose(), matricize(&partial, 0)?))
}

/// Smallest `k` whose leading singular values hold `fraction` of the total energy.
pub fn rank_from_energy(singular_values: &[f64], fraction: f64) -> Result<usize> {
    if singular_values.is_empty() {
        return Err(Error::arg("no singular values supplied"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::arg(format!("energy fraction {fraction} outside (0, 1]")));
    }
    if singular_values.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::arg("singular values must be finite and nonnegative"));
    }
    if singular_values.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::arg("singular values must be nonincreasing"));
    }
    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return Ok(1);
    }
    let mut acc = 0.0;
    for (i, s) in singular_values.iter().enumerate() {
        acc += s * s;
        if acc >= fraction * total {
            return Ok(i + 1);
        }
    }
    Ok(singular_values.len())
}
