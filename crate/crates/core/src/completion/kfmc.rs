//! Kernelized factorization matrix completion.
//!
//! Columns of the error matrix are mapped through the feature map of a
//! Gaussian RBF kernel and factored as `phi(E) ~ phi(D) Z`. With the kernel
//! trick the objective becomes
//!
//! ```text
//! f(E, D, Z) = 1/2 tr(K_EE) - tr(Z^T K_DE) + 1/2 tr(Z^T K_DD Z) + beta/2 ||Z||_F^2
//! ```
//!
//! where `K_AB[i][j] = exp(-||a_i - b_j||^2 / (2 sigma^2))` over columns. The
//! `||phi(D)||^2` regularizer is constant for the RBF kernel and is omitted.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::ObservedTensor;

/// Entry-update norm below which a batch's inner loop stops.
const INNER_STOP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KfmcConfig {
    /// Number of dictionary atoms (approximate rank of `phi(E)`).
    pub rank: usize,
    /// RBF bandwidth; `None` selects the median pairwise column distance.
    pub sigma: Option<f64>,
    pub beta: f64,
    /// Momentum in `[0, 1)`.
    pub eta: f64,
    pub n_batch: usize,
    pub n_iter: usize,
    pub n_pass: usize,
    /// Ridge weight used by out-of-sample row prediction.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for KfmcConfig {
    fn default() -> Self {
        KfmcConfig {
            rank: 40,
            sigma: None,
            beta: 1e-3,
            eta: 0.5,
            n_batch: 2,
            n_iter: 10,
            n_pass: 50,
            alpha: 1e-3,
            seed: 0,
        }
    }
}

impl KfmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank < 1 {
            return Err(Error::arg("KFMC rank must be at least 1"));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::arg(format!("KFMC sigma must be positive, got {s}")));
            }
        }
        if !(0.0..1.0).contains(&self.eta) {
            return Err(Error::arg(format!("KFMC momentum {} outside [0, 1)", self.eta)));
        }
        if !(self.beta >= 0.0 && self.alpha >= 0.0) {
            return Err(Error::arg("KFMC regularizers must be nonnegative"));
        }
        if self.n_batch < 1 || self.n_iter < 1 {
            return Err(Error::arg("KFMC batch and iteration counts must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct KfmcModel {
    /// `m x r` dictionary.
    pub d: DMatrix<f64>,
    /// `r x n` coefficients.
    pub z: DMatrix<f64>,
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl KfmcModel {
    pub fn rank(&self) -> usize {
        self.d.ncols()
    }
}

#[derive(Debug, Clone)]
pub struct KfmcFit {
    pub model: KfmcModel,
    pub completed: DMatrix<f64>,
    /// Objective (with `Z` at its optimum) before training and after each pass.
    pub objective_history: Vec<f64>,
}

/// RBF kernel between the columns of `a` and the columns of `b`.
fn kernel(a: &DMatrix<f64>, b: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    let scale = -1.0 / (2.0 * sigma * sigma);
    DMatrix::from_fn(a.ncols(), b.ncols(), |i, j| {
        let d2 = a.column(i).iter().zip(b.column(j).iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        (scale * d2).exp()
    })
}

/// `(K_DD + beta I)^-1 K_DE`.
fn optimal_z(d: &DMatrix<f64>, e: &DMatrix<f64>, sigma: f64, beta: f64) -> Result<DMatrix<f64>> {
    let c = regularized_gram_inverse(d, sigma, beta)?;
    Ok(c * kernel(d, e, sigma))
}

fn regularized_gram_inverse(d: &DMatrix<f64>, sigma: f64, beta: f64) -> Result<DMatrix<f64>> {
    let mut k = kernel(d, d, sigma);
    for i in 0..k.nrows() {
        k[(i, i)] += beta.max(1e-10);
    }
    k.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::numerical("dictionary kernel matrix is not positive definite"))
}

/// Objective value for explicit `(E, D, Z)`.
pub fn kfmc_objective(e: &DMatrix<f64>, d: &DMatrix<f64>, z: &DMatrix<f64>, sigma: f64, beta: f64) -> f64 {
    let k_de = kernel(d, e, sigma);
    let k_dd = kernel(d, d, sigma);
    let cross = z.component_mul(&k_de).sum();
    let quad = (z.transpose() * &k_dd * z).trace();
    0.5 * e.ncols() as f64 - cross + 0.5 * quad + 0.5 * beta * z.norm_squared()
}

/// Gradients of [`kfmc_objective`] with respect to `E` and `D`, holding `Z` fixed.
pub fn kfmc_gradients(
    e: &DMatrix<f64>,
    d: &DMatrix<f64>,
    z: &DMatrix<f64>,
    sigma: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let s2 = sigma * sigma;
    let w = z.component_mul(&kernel(d, e, sigma));
    let q = (z * z.transpose()).component_mul(&kernel(d, d, sigma));
    let w_col: DVector<f64> = w.row_sum().transpose();
    let w_row: DVector<f64> = w.column_sum();
    let q_row: DVector<f64> = q.column_sum();

    let grad_e = (e * DMatrix::from_diagonal(&w_col) - d * &w) / s2;
    let grad_d = (d * &q - d * DMatrix::from_diagonal(&q_row) - e * w.transpose()
        + d * DMatrix::from_diagonal(&w_row))
        / s2;
    (grad_e, grad_d)
}

/// Median Euclidean distance over all pairs of columns.
pub fn median_pairwise_distance(m: &DMatrix<f64>) -> f64 {
    let n = m.ncols();
    let mut dists = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            dists.push((m.column(i) - m.column(j)).norm());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let mid = dists[dists.len() / 2];
    if mid > 0.0 {
        mid
    } else {
        1.0
    }
}

fn reduced_objective(e: &DMatrix<f64>, d: &DMatrix<f64>, sigma: f64, beta: f64) -> Result<f64> {
    let z = optimal_z(d, e, sigma, beta)?;
    Ok(kfmc_objective(e, d, &z, sigma, beta))
}

/// Mini-batch KFMC with momentum. Observed entries are never modified.
pub fn kfmc_fit(e: &ObservedTensor, config: &KfmcConfig) -> Result<KfmcFit> {
    config.validate()?;
    if e.shape().order() != 2 {
        return Err(Error::arg("KFMC operates on matrices"));
    }
    let (m, n) = (e.shape().dims()[0], e.shape().dims()[1]);
    let observed = e.mask().to_matrix()?.map(|v| v == 1.0);
    let mut x = e.data().to_matrix()?;
    for j in 0..n {
        if !observed.column(j).iter().any(|&o| o) {
            return Err(Error::arg(format!("column {j} has no observed entries")));
        }
    }
    // Row means of observed entries seed the unknowns.
    for i in 0..m {
        let (sum, cnt) = (0..n)
            .filter(|&j| observed[(i, j)])
            .fold((0.0, 0usize), |(s, c), j| (s + x[(i, j)], c + 1));
        let fill = if cnt > 0 { sum / cnt as f64 } else { 0.0 };
        for j in 0..n {
            if !observed[(i, j)] {
                x[(i, j)] = fill;
            }
        }
    }
    let sigma = config.sigma.unwrap_or_else(|| median_pairwise_distance(&x));
    let beta = config.beta;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut d = DMatrix::from_fn(m, config.rank, |_, _| StandardNormal.sample(&mut rng));
    let mut d_momentum = DMatrix::zeros(m, config.rank);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_batch = config.n_batch.min(n);
    let batches: Vec<Vec<usize>> = (0..n_batch)
        .map(|b| order[b * n / n_batch..(b + 1) * n / n_batch].to_vec())
        .collect();

    let mut history = vec![reduced_objective(&x, &d, sigma, beta)?];
    for _ in 0..config.n_pass {
        for batch in &batches {
            let mut xb = x.select_columns(batch);
            let ob = observed.select_columns(batch);
            let c = regularized_gram_inverse(&d, sigma, beta)?;
            let mut e_momentum = DMatrix::zeros(m, batch.len());
            let mut zb = DMatrix::zeros(config.rank, batch.len());
            for _ in 0..config.n_iter {
                zb = &c * kernel(&d, &xb, sigma);
                let step = column_steps(&xb, &d, &zb, sigma);
                e_momentum = e_momentum * config.eta + step;
                let mut moved = 0.0;
                for j in 0..xb.ncols() {
                    for i in 0..m {
                        if !ob[(i, j)] {
                            xb[(i, j)] -= e_momentum[(i, j)];
                            moved += e_momentum[(i, j)] * e_momentum[(i, j)];
                        }
                    }
                }
                if moved.sqrt() < INNER_STOP {
                    break;
                }
            }
            let step = dictionary_step(&xb, &d, &zb, sigma);
            d_momentum = d_momentum * config.eta + step;
            d -= &d_momentum;
            for (k, &j) in batch.iter().enumerate() {
                x.set_column(j, &xb.column(k));
            }
        }
        history.push(reduced_objective(&x, &d, sigma, beta)?);
    }
    let z = optimal_z(&d, &x, sigma, beta)?;
    // Observed entries are restored verbatim so they stay bitwise identical.
    let original = e.data().to_matrix()?;
    for j in 0..n {
        for i in 0..m {
            if observed[(i, j)] {
                x[(i, j)] = original[(i, j)];
            }
        }
    }
    Ok(KfmcFit {
        model: KfmcModel { d, z, sigma, alpha: config.alpha, beta },
        completed: x,
        objective_history: history,
    })
}

/// Gradient in `E` scaled per column by its local curvature bound.
fn column_steps(e: &DMatrix<f64>, d: &DMatrix<f64>, z: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    let w = z.component_mul(&kernel(d, e, sigma));
    let mut step = DMatrix::zeros(e.nrows(), e.ncols());
    for j in 0..e.ncols() {
        let wj = w.column(j);
        let total: f64 = wj.sum();
        let scale: f64 = wj.iter().map(|v| v.abs()).sum();
        if scale < 1e-12 {
            continue;
        }
        let pull = d * wj;
        step.set_column(j, &((e.column(j) * total - pull) / scale));
    }
    step
}

/// Gradient in `D` scaled per atom by its local curvature bound.
fn dictionary_step(e: &DMatrix<f64>, d: &DMatrix<f64>, z: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    let (mut grad, _) = (kfmc_gradients(e, d, z, sigma).1, ());
    let w = z.component_mul(&kernel(d, e, sigma));
    let q = (z * z.transpose()).component_mul(&kernel(d, d, sigma));
    let s2 = sigma * sigma;
    for i in 0..d.ncols() {
        let bound = (w.row(i).iter().map(|v| v.abs()).sum::<f64>()
            + q.row(i).iter().enumerate().filter(|&(l, _)| l != i).map(|(_, v)| v.abs()).sum::<f64>())
            / s2;
        let mut col = grad.column_mut(i);
        if bound < 1e-12 {
            col.fill(0.0);
        } else {
            col /= bound;
        }
    }
    grad
}

/// Closed-form prediction of a new row from its entries on `omega`:
/// `d = e_w Z_w^T (Z_w Z_w^T + alpha I)^-1`, unknown entries `d Z`.
pub fn kfmc_predict_new_row(model: &KfmcModel, e_known: &[f64], omega: &[usize], alpha: f64) -> Result<Vec<f64>> {
    let n = model.z.ncols();
    if omega.is_empty() {
        return Err(Error::arg("at least one known entry is required"));
    }
    if omega.len() != e_known.len() {
        return Err(Error::arg("known values and indices differ in length"));
    }
    if alpha < 0.0 {
        return Err(Error::arg("alpha must be nonnegative"));
    }
    let mut seen = vec![false; n];
    for &j in omega {
        if j >= n || std::mem::replace(&mut seen[j], true) {
            return Err(Error::arg(format!("index {j} out of range or repeated")));
        }
    }
    let zw = model.z.select_columns(omega);
    let mut a = &zw * zw.transpose();
    for i in 0..a.nrows() {
        a[(i, i)] += alpha;
    }
    let b = &zw * DVector::from_column_slice(e_known);
    let chol = a.cholesky().ok_or_else(|| {
        Error::numerical("row prediction system is singular; use a positive alpha")
    })?;
    let diag_min = chol.l_dirty().diagonal().iter().copied().fold(f64::INFINITY, f64::min);
    let diag_max = chol.l_dirty().diagonal().iter().copied().fold(0.0, f64::max);
    if diag_min <= diag_max * 1e-7 {
        return Err(Error::numerical("row prediction system is singular; use a positive alpha"));
    }
    let coeff = chol.solve(&b);
    let mut row: Vec<f64> = (model.z.transpose() * coeff).iter().copied().collect();
    for (&j, &v) in omega.iter().zip(e_known) {
        row[j] = v;
    }
    Ok(row)
}

/// Out-of-sample extension for a new column with `D` fixed. Entries with
/// `known[i]` are kept; the rest are fitted by backtracking gradient steps on
/// the reduced objective. Returns the column and the objective per iteration.
pub fn kfmc_predict_new_column(
    model: &KfmcModel,
    values: &[f64],
    known: &[bool],
    n_iter: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = model.d.nrows();
    if values.len() != m || known.len() != m {
        return Err(Error::arg(format!("column must have {m} entries")));
    }
    if !known.iter().any(|&k| k) {
        return Err(Error::arg("at least one known entry is required"));
    }
    let (sum, cnt) = values.iter().zip(known).filter(|(_, &k)| k).fold((0.0, 0), |(s, c), (v, _)| (s + v, c + 1));
    let fill = sum / cnt as f64;
    let mut col = DMatrix::from_fn(m, 1, |i, _| if known[i] { values[i] } else { fill });
    let c = regularized_gram_inverse(&model.d, model.sigma, model.beta)?;
    let objective = |x: &DMatrix<f64>| {
        let z = &c * kernel(&model.d, x, model.sigma);
        kfmc_objective(x, &model.d, &z, model.sigma, model.beta)
    };
    let mut history = vec![objective(&col)];
    for _ in 0..n_iter {
        let z = &c * kernel(&model.d, &col, model.sigma);
        let mut step = column_steps(&col, &model.d, &z, model.sigma);
        for i in 0..m {
            if known[i] {
                step[(i, 0)] = 0.0;
            }
        }
        if step.norm() < INNER_STOP {
            break;
        }
        let current = *history.last().unwrap();
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial = &col - &step * scale;
            let f = objective(&trial);
            if f <= current {
                accepted = Some((trial, f));
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some((trial, f)) => {
                col = trial;
                history.push(f);
            }
            None => break,
        }
    }
    Ok((col.iter().copied().collect(), history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DenseTensor;
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn config_validation() {
        let e = ObservedTensor::fully_observed(DenseTensor::from_matrix(&random(4, 5, 1)).unwrap());
        for bad in [
            KfmcConfig { sigma: Some(0.0), ..Default::default() },
            KfmcConfig { rank: 0, ..Default::default() },
            KfmcConfig { eta: 1.0, ..Default::default() },
            KfmcConfig { eta: -0.1, ..Default::default() },
        ] {
            assert!(matches!(kfmc_fit(&e, &bad), Err(Error::InvalidArgument(_))));
        }
    }

    #[test]
    fn fully_observed_matrix_is_returned_verbatim() {
        let m = random(5, 12, 2);
        let e = ObservedTensor::fully_observed(DenseTensor::from_matrix(&m).unwrap());
        let cfg = KfmcConfig { rank: 4, n_pass: 3, ..Default::default() };
        let fit = kfmc_fit(&e, &cfg).unwrap();
        assert_eq!(fit.completed, m);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let e = random(5, 7, 3);
        let d = random(5, 4, 4);
        let z = random(4, 7, 5);
        let sigma = 1.7;
        let (ge, gd) = kfmc_gradients(&e, &d, &z, sigma);
        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let (i, j) = (rng.random_range(0..5), rng.random_range(0..7));
            let (mut ep, mut em) = (e.clone(), e.clone());
            ep[(i, j)] += h;
            em[(i, j)] -= h;
            let fd = (kfmc_objective(&ep, &d, &z, sigma, 0.1) - kfmc_objective(&em, &d, &z, sigma, 0.1)) / (2.0 * h);
            assert!((fd - ge[(i, j)]).abs() <= 1e-5 * fd.abs().max(1e-3), "E[{i},{j}] {fd} vs {}", ge[(i, j)]);

            let (i, j) = (rng.random_range(0..5), rng.random_range(0..4));
            let (mut dp, mut dm) = (d.clone(), d.clone());
            dp[(i, j)] += h;
            dm[(i, j)] -= h;
            let fd = (kfmc_objective(&e, &dp, &z, sigma, 0.1) - kfmc_objective(&e, &dm, &z, sigma, 0.1)) / (2.0 * h);
            assert!((fd - gd[(i, j)]).abs() <= 1e-5 * fd.abs().max(1e-3), "D[{i},{j}] {fd} vs {}", gd[(i, j)]);
        }
    }

    fn model_from(d: DMatrix<f64>, z: DMatrix<f64>) -> KfmcModel {
        KfmcModel { d, z, sigma: 1.0, alpha: 0.0, beta: 1e-3 }
    }

    #[test]
    fn row_prediction_identity_coefficients() {
        let model = model_from(random(3, 4, 7), DMatrix::identity(4, 4));
        let e = [0.1, 0.4, -0.3, 0.8];
        let row = kfmc_predict_new_row(&model, &e, &[0, 1, 2, 3], 0.0).unwrap();
        assert_eq!(row, e.to_vec());
    }

    #[test]
    fn row_prediction_ridge_limit() {
        let model = model_from(random(3, 2, 8), random(2, 6, 9));
        let row = kfmc_predict_new_row(&model, &[1.0, 2.0, 3.0], &[0, 2, 4], 1e12).unwrap();
        for j in [1, 3, 5] {
            assert!(row[j].abs() < 1e-9);
        }
    }

    #[test]
    fn row_prediction_planted_linear_model() {
        let z = random(3, 10, 10);
        let d_new = DMatrix::from_row_slice(1, 3, &[0.5, -1.0, 2.0]);
        let truth = &d_new * &z;
        let model = model_from(random(4, 3, 11), z);
        let omega = [0, 2, 4, 6, 8];
        let known: Vec<f64> = omega.iter().map(|&j| truth[(0, j)]).collect();
        let row = kfmc_predict_new_row(&model, &known, &omega, 1e-8).unwrap();
        for j in [1, 3, 5, 7, 9] {
            assert!((row[j] - truth[(0, j)]).abs() < 1e-6);
        }
        let exact = kfmc_predict_new_row(&model, &known, &omega, 0.0).unwrap();
        for j in 0..10 {
            assert!((exact[j] - truth[(0, j)]).abs() < 1e-10);
        }
    }

    #[test]
    fn row_prediction_singular_without_ridge() {
        let model = model_from(random(4, 3, 12), random(3, 6, 13));
        let err = kfmc_predict_new_row(&model, &[1.0], &[2], 0.0).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
        assert!(kfmc_predict_new_row(&model, &[1.0], &[2], 1e-3).is_ok());
        assert!(kfmc_predict_new_row(&model, &[], &[], 1e-3).is_err());
    }

    #[test]
    fn new_column_keeps_known_and_objective_decreases() {
        let d = random(6, 5, 14);
        let model = KfmcModel { d, z: DMatrix::zeros(5, 1), sigma: 2.0, alpha: 1e-3, beta: 1e-3 };
        let values = [0.3, -0.2, 0.0, 1.1, 0.0, 0.4];
        let known = [true, true, false, true, false, true];
        let (col, hist) = kfmc_predict_new_column(&model, &values, &known, 50).unwrap();
        for i in 0..6 {
            if known[i] {
                assert_eq!(col[i], values[i]);
            }
        }
        assert!(hist.windows(2).all(|w| w[1] <= w[0]));
        let all = [true; 6];
        let (same, _) = kfmc_predict_new_column(&model, &values, &all, 50).unwrap();
        assert_eq!(same, values.to_vec());
    }
}
