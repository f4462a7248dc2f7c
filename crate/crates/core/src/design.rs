//! Greedy D-optimal experiment design under cardinality and runtime budgets.
//!
//! Pipelines are design vectors `y_j` (columns of a `k x n` matrix). Observing
//! a set `S` yields the Fisher information `X = sum_{j in S} y_j y_j^T`; the
//! greedy rules grow `S` by the column with the largest determinant gain
//! `y^T X^-1 y`, optionally per predicted second.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{logdet_spd, pivoted_qr_columns};

/// Regularizer of [`normalized_logdet`].
pub const NORMALIZED_EPS: f64 = 1e-6;

/// Floor for estimated per-pipeline variances.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Relative slack when comparing accumulated runtimes against a budget, so a
/// budget equal to a sum of runtimes admits all of them regardless of
/// summation order.
const BUDGET_SLACK: f64 = 1e-12;

const SM_DENOM_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct DesignPool {
    y: DMatrix<f64>,
    runtimes: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl DesignPool {
    pub fn new(y: DMatrix<f64>, runtimes: Vec<f64>) -> Result<Self> {
        if y.ncols() != runtimes.len() {
            return Err(Error::arg(format!(
                "{} design vectors but {} runtimes",
                y.ncols(),
                runtimes.len()
            )));
        }
        if y.nrows() == 0 {
            return Err(Error::arg("design vectors have dimension zero"));
        }
        if let Some(t) = runtimes.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::arg(format!("runtime {t} is not positive and finite")));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("design matrix has non-finite entries"));
        }
        Ok(DesignPool { y, runtimes, weights: None })
    }

    /// Attaches per-pipeline noise standard deviations `sigma_j`.
    pub fn with_weights(mut self, sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() != self.n() {
            return Err(Error::arg("weight count does not match pool size"));
        }
        if let Some(s) = sigma.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::arg(format!("weight {s} is not positive")));
        }
        self.weights = Some(sigma);
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.y.nrows()
    }

    pub fn n(&self) -> usize {
        self.y.ncols()
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn runtimes(&self) -> &[f64] {
        &self.runtimes
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    fn column(&self, j: usize) -> DVector<f64> {
        self.y.column(j).clone_owned()
    }

    fn check_indices(&self, idx: &[usize]) -> Result<()> {
        let mut seen = vec![false; self.n()];
        for &j in idx {
            if j >= self.n() {
                return Err(Error::arg(format!("pipeline index {j} out of range")));
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::arg(format!("pipeline index {j} repeated")));
            }
        }
        Ok(())
    }
}

/// Selected set with the inverse Fisher information maintained by rank-one updates.
#[derive(Debug, Clone)]
pub struct DesignState {
    selected: Vec<usize>,
    x_inv: DMatrix<f64>,
    logdet: f64,
    elapsed: f64,
}

impl DesignState {
    /// State for an explicit SPD information matrix and no selection.
    pub fn from_information(x: &DMatrix<f64>) -> Result<Self> {
        if !x.is_square() {
            return Err(Error::arg("information matrix must be square"));
        }
        let logdet = logdet_spd(x)?;
        let x_inv = x
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numerical("information matrix is not positive definite"))?
            .inverse();
        Ok(DesignState { selected: Vec::new(), x_inv, logdet, elapsed: 0.0 })
    }

    /// State after observing `init`; fails if its information matrix is singular.
    pub fn from_init(pool: &DesignPool, init: &[usize]) -> Result<Self> {
        pool.check_indices(init)?;
        let ys = pool.y.select_columns(init);
        let x = &ys * ys.transpose();
        let mut state = DesignState::from_information(&x).map_err(|_| {
            Error::numerical("initial design is singular; initialize with qr_init")
        })?;
        let scale = x.diagonal().max().max(f64::MIN_POSITIVE);
        let chol = x.clone().cholesky().expect("checked above");
        let dmin = chol.l_dirty().diagonal().min();
        if dmin * dmin <= scale * 1e-12 {
            return Err(Error::numerical("initial design is singular; initialize with qr_init"));
        }
        state.selected = init.to_vec();
        state.elapsed = init.iter().map(|&j| pool.runtimes[j]).sum();
        Ok(state)
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn x_inv(&self) -> &DMatrix<f64> {
        &self.x_inv
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    pub fn into_selected(self) -> Vec<usize> {
        self.selected
    }

    fn add(&mut self, j: usize, y: &DVector<f64>, cost: f64) -> Result<()> {
        *self = sherman_morrison_update(self, y)?;
        self.selected.push(j);
        self.elapsed += cost;
        Ok(())
    }
}

/// `y^T X^-1 y`, the factor by which `det X` grows (minus one) when `y` is added.
pub fn det_lemma_payoff(state: &DesignState, y: &DVector<f64>) -> Result<f64> {
    if y.len() != state.x_inv.nrows() {
        return Err(Error::arg(format!(
            "design vector has length {}, expected {}",
            y.len(),
            state.x_inv.nrows()
        )));
    }
    Ok(y.dot(&(&state.x_inv * y)))
}

/// Information update `X <- X + y y^T` applied to the inverse and log-determinant.
pub fn sherman_morrison_update(state: &DesignState, y: &DVector<f64>) -> Result<DesignState> {
    let payoff = det_lemma_payoff(state, y)?;
    let denom = 1.0 + payoff;
    if denom <= SM_DENOM_TOL {
        return Err(Error::numerical(format!("rank-one update denominator {denom} too small")));
    }
    let u = &state.x_inv * y;
    let mut x_inv = &state.x_inv - (&u * u.transpose()) / denom;
    // Keep the inverse exactly symmetric.
    x_inv = (&x_inv + x_inv.transpose()) * 0.5;
    Ok(DesignState {
        selected: state.selected.clone(),
        x_inv,
        logdet: state.logdet + denom.ln(),
        elapsed: state.elapsed,
    })
}

/// `logdet(eps I + sum_{j in set} y_j y_j^T) - k log eps`, nonnegative and monotone.
pub fn normalized_logdet(y: &DMatrix<f64>, set: &[usize], eps: f64) -> f64 {
    let k = y.nrows();
    let ys = y.select_columns(set);
    let m = DMatrix::identity(k, k) * eps + &ys * ys.transpose();
    logdet_spd(&m).unwrap_or(f64::NEG_INFINITY) - k as f64 * eps.ln()
}

/// Returns the index maximizing `score`, lowest index on ties.
fn argmax<I: Iterator<Item = (usize, f64)>>(it: I) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, s) in it {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((j, s));
        }
    }
    best.map(|(j, _)| j)
}

/// Grows `init` to at most `m` pipelines by maximal determinant gain.
pub fn greedy_size_constrained(pool: &DesignPool, m: usize, init: &[usize]) -> Result<Vec<usize>> {
    if m < init.len() {
        return Err(Error::arg(format!("cardinality {m} below initialization size {}", init.len())));
    }
    let mut state = DesignState::from_init(pool, init)?;
    let mut taken = vec![false; pool.n()];
    init.iter().for_each(|&j| taken[j] = true);
    while state.selected.len() < m.min(pool.n()) {
        let scores = (0..pool.n())
            .filter(|&j| !taken[j])
            .map(|j| (j, det_lemma_payoff(&state, &pool.column(j)).unwrap()));
        let Some(j) = argmax(scores) else { break };
        state.add(j, &pool.column(j), pool.runtimes[j])?;
        taken[j] = true;
    }
    Ok(state.into_selected())
}

/// Grows `init` by maximal determinant gain per predicted second while the
/// predicted runtime of the selection stays within `tau`. Candidates that do
/// not fit the remaining budget are skipped.
pub fn greedy_time_constrained(pool: &DesignPool, tau: f64, init: &[usize]) -> Result<Vec<usize>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::arg(format!("time budget {tau} is not positive")));
    }
    let mut state = DesignState::from_init(pool, init)?;
    let limit = tau * (1.0 + BUDGET_SLACK);
    if state.elapsed > limit {
        return Err(Error::arg(format!(
            "initial design needs {}s, above the budget of {tau}s",
            state.elapsed
        )));
    }
    let mut taken = vec![false; pool.n()];
    init.iter().for_each(|&j| taken[j] = true);
    loop {
        let scores = (0..pool.n())
            .filter(|&j| !taken[j] && state.elapsed + pool.runtimes[j] <= limit)
            .map(|j| (j, det_lemma_payoff(&state, &pool.column(j)).unwrap() / pool.runtimes[j]));
        let Some(j) = argmax(scores) else { break };
        state.add(j, &pool.column(j), pool.runtimes[j])?;
        taken[j] = true;
    }
    Ok(state.into_selected())
}

/// Initial design: the first `k` column-pivoted QR picks among pipelines
/// predicted to take at most `tau / (2k)`. When fewer than `k` qualify, the
/// fastest pipelines are taken in order while they fit in `tau`, and the
/// returned flag is set (no greedy steps should follow).
pub fn qr_init(pool: &DesignPool, tau: f64, k: usize) -> Result<(Vec<usize>, bool)> {
    if pool.n() == 0 {
        return Err(Error::arg("design pool is empty"));
    }
    if !(tau > 0.0) {
        return Err(Error::arg(format!("time budget {tau} is not positive")));
    }
    if k < 1 || k > pool.k() {
        return Err(Error::arg(format!("initialization size {k} outside 1..={}", pool.k())));
    }
    let cutoff = tau / (2.0 * k as f64);
    let valid: Vec<usize> = (0..pool.n()).filter(|&j| pool.runtimes[j] <= cutoff).collect();
    if valid.len() >= k {
        let picks = pivoted_qr_columns(&pool.y.select_columns(&valid), k);
        return Ok((picks.into_iter().map(|p| valid[p]).collect(), false));
    }
    let mut order: Vec<usize> = (0..pool.n()).collect();
    order.sort_by(|&a, &b| pool.runtimes[a].total_cmp(&pool.runtimes[b]).then(a.cmp(&b)));
    let limit = tau * (1.0 + BUDGET_SLACK);
    let mut spent = 0.0;
    let mut picks = Vec::new();
    for j in order {
        if spent + pool.runtimes[j] > limit {
            break;
        }
        spent += pool.runtimes[j];
        picks.push(j);
    }
    Ok((picks, true))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Design {
    pub selected: Vec<usize>,
    /// Set when the fastest-first fallback replaced the designed selection.
    pub fallback: bool,
}

/// QR initialization followed by the time-constrained greedy rule.
///
/// If the initial set is rank deficient the greedy rule cannot run; the
/// initial set is returned with the fallback flag.
pub fn time_constrained_design(pool: &DesignPool, tau: f64) -> Result<Design> {
    let (init, fallback) = qr_init(pool, tau, pool.k())?;
    if fallback {
        return Ok(Design { selected: init, fallback });
    }
    match greedy_time_constrained(pool, tau, &init) {
        Ok(selected) => Ok(Design { selected, fallback: false }),
        Err(Error::Numerical(_)) => Ok(Design { selected: init, fallback: true }),
        Err(e) => Err(e),
    }
}

/// Sample variance (denominator `m - 1`) of each column of `E - X^T Y`,
/// floored at [`VARIANCE_FLOOR`].
pub fn estimate_pipeline_variances(e: &DMatrix<f64>, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (m, n) = e.shape();
    if x.ncols() != m || y.ncols() != n || x.nrows() != y.nrows() {
        return Err(Error::arg(format!(
            "factor shapes {}x{} and {}x{} do not match a {m}x{n} matrix",
            x.nrows(),
            x.ncols(),
            y.nrows(),
            y.ncols()
        )));
    }
    if m < 2 {
        return Err(Error::arg("variance estimation needs at least two datasets"));
    }
    let resid = e - x.transpose() * y;
    Ok(resid
        .column_iter()
        .map(|c| {
            let mean = c.mean();
            let ss: f64 = c.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (m - 1) as f64).max(VARIANCE_FLOOR)
        })
        .collect())
}

/// Time-constrained design with each design vector scaled by `1 / sigma_j`.
/// `k` is the initialization size.
pub fn greedy_weighted_time_constrained(pool: &DesignPool, tau: f64, k: usize) -> Result<Design> {
    let sigma = pool.weights().ok_or_else(|| Error::arg("pool has no weights"))?;
    let mut scaled = pool.y.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col /= sigma[j];
    }
    let rescaled = DesignPool::new(scaled, pool.runtimes.clone())?;
    let (init, fallback) = qr_init(&rescaled, tau, k)?;
    if fallback {
        return Ok(Design { selected: init, fallback });
    }
    match greedy_time_constrained(&rescaled, tau, &init) {
        Ok(selected) => Ok(Design { selected, fallback: false }),
        Err(Error::Numerical(_)) => Ok(Design { selected: init, fallback: true }),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    fn unit(k: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(k);
        v[i] = 1.0;
        v
    }

    fn subsets(n: usize, m: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize == m {
                out.push((0..n).filter(|&i| mask >> i & 1 == 1).collect());
            }
        }
        out
    }

    #[test]
    fn payoff_examples() {
        let s = DesignState::from_information(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(det_lemma_payoff(&s, &unit(3, 0)).unwrap(), 1.0);
        assert_eq!(det_lemma_payoff(&s, &DVector::zeros(3)).unwrap(), 0.0);
        let next = sherman_morrison_update(&s, &unit(3, 0)).unwrap();
        assert!((next.logdet() - 2f64.ln()).abs() < 1e-15);
        assert!(det_lemma_payoff(&s, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn sherman_morrison_identity_example() {
        let s = DesignState::from_information(&DMatrix::identity(2, 2)).unwrap();
        let next = sherman_morrison_update(&s, &unit(2, 0)).unwrap();
        assert_eq!(next.x_inv(), &DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn rank_one_identities_on_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let a = gaussian(4, 6, &mut rng);
            let x = &a * a.transpose() + DMatrix::identity(4, 4) * 0.1;
            let y = DVector::from_fn(4, |_, _| StandardNormal.sample(&mut rng));
            let s = DesignState::from_information(&x).unwrap();
            let p = det_lemma_payoff(&s, &y).unwrap();
            let x1 = &x + &y * y.transpose();
            let lhs = x1.determinant();
            let rhs = x.determinant() * (1.0 + p);
            assert!(((lhs - rhs) / lhs).abs() < 1e-10);
            let next = sherman_morrison_update(&s, &y).unwrap();
            assert!((next.x_inv() * &x1 - DMatrix::<f64>::identity(4, 4)).norm() < 1e-8);
        }
    }

    #[test]
    fn accumulated_updates_match_direct_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x = DMatrix::identity(3, 3);
        let mut s = DesignState::from_information(&x).unwrap();
        for _ in 0..3 {
            let y = DVector::from_fn(3, |_, _| StandardNormal.sample(&mut rng));
            x += &y * y.transpose();
            s = sherman_morrison_update(&s, &y).unwrap();
        }
        let direct = x.clone().try_inverse().unwrap();
        assert!((s.x_inv() - direct).norm() < 1e-6);
        assert!((s.logdet() - x.determinant().ln()).abs() < 1e-8);
    }

    #[test]
    fn orthonormal_designs_all_selected() {
        let y = DMatrix::from_fn(3, 5, |i, j| if i == j { 1.0 } else if j >= 3 { 0.5 } else { 0.0 });
        let pool = DesignPool::new(y, vec![1.0; 5]).unwrap();
        let (init, _) = qr_init(&pool, 100.0, 3).unwrap();
        let mut s = greedy_size_constrained(&pool, 3, &init).unwrap();
        s.sort();
        assert_eq!(s, vec![0, 1, 2]);
    }

    #[test]
    fn singular_init_is_rejected() {
        let pool = DesignPool::new(DMatrix::identity(3, 3), vec![1.0; 3]).unwrap();
        let err = greedy_size_constrained(&pool, 3, &[0, 1]).unwrap_err();
        assert!(err.to_string().contains("qr_init"));
    }

    #[test]
    fn size_constrained_meets_approximation_bound() {
        let bound = 1.0 - (-1.0f64).exp();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let all = subsets(12, 5);
        for _ in 0..5 {
            let y = gaussian(3, 12, &mut rng);
            let pool = DesignPool::new(y.clone(), vec![1.0; 12]).unwrap();
            let (init, _) = qr_init(&pool, 1e9, 3).unwrap();
            let greedy = greedy_size_constrained(&pool, 5, &init).unwrap();
            let best = all.iter().map(|s| normalized_logdet(&y, s, NORMALIZED_EPS)).fold(0.0, f64::max);
            assert!(normalized_logdet(&y, &greedy, NORMALIZED_EPS) >= bound * best);
        }
    }

    #[test]
    fn cheaper_of_identical_designs_is_chosen() {
        let y = DMatrix::from_row_slice(2, 4, &[1., 0., 1., 1., 0., 1., 1., 1.]);
        let pool = DesignPool::new(y, vec![1.0, 1.0, 1.0, 10.0]).unwrap();
        let s = greedy_time_constrained(&pool, 4.0, &[0, 1]).unwrap();
        assert_eq!(s, vec![0, 1, 2]);
    }

    #[test]
    fn unbinding_budget_selects_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = gaussian(3, 9, &mut rng);
        let t: Vec<f64> = (0..9).map(|_| rng.random_range(0.1..3.0)).collect();
        let tau: f64 = t.iter().sum();
        let pool = DesignPool::new(y, t).unwrap();
        let d = time_constrained_design(&pool, tau).unwrap();
        assert!(!d.fallback);
        assert_eq!(d.selected.len(), 9);
    }

    #[test]
    fn over_budget_init_is_rejected() {
        let pool = DesignPool::new(DMatrix::identity(2, 2), vec![3.0, 3.0]).unwrap();
        assert!(matches!(greedy_time_constrained(&pool, 5.0, &[0, 1]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn qr_init_cases() {
        let pool = DesignPool::new(DMatrix::identity(3, 3), vec![1.0; 3]).unwrap();
        let (mut s, fb) = qr_init(&pool, 100.0, 3).unwrap();
        s.sort();
        assert_eq!((s, fb), (vec![0, 1, 2], false));

        let pool = DesignPool::new(DMatrix::identity(3, 3), vec![5.0, 2.0, 4.0]).unwrap();
        assert_eq!(qr_init(&pool, 7.0, 3).unwrap(), (vec![1, 2], true));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = gaussian(4, 15, &mut rng);
        let pool = DesignPool::new(y.clone(), vec![0.1; 15]).unwrap();
        let (s, _) = qr_init(&pool, 10.0, 4).unwrap();
        let sv = y.select_columns(&s).singular_values();
        assert!(sv.min() > 1e-10);
    }

    #[test]
    fn variance_examples() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let y = DMatrix::from_row_slice(1, 3, &[0.5, -1.0, 2.0]);
        let e = x.transpose() * &y;
        assert!(estimate_pipeline_variances(&e, &x, &y).unwrap().iter().all(|&v| v == VARIANCE_FLOOR));

        let mut noisy = e.clone();
        noisy[(0, 1)] -= 1.0;
        noisy[(1, 1)] += 1.0;
        let v = estimate_pipeline_variances(&noisy, &x, &y).unwrap();
        // Residual column (-1, 1): mean 0, sum of squares 2, m - 1 = 1.
        assert!((v[1] - 2.0).abs() < 1e-12);

        noisy[(0, 1)] = e[(0, 1)] - 3.0;
        noisy[(1, 1)] = e[(1, 1)] + 3.0;
        let scaled = estimate_pipeline_variances(&noisy, &x, &y).unwrap();
        assert!((scaled[1] - 9.0 * v[1]).abs() < 1e-10);
        assert!(estimate_pipeline_variances(&e.rows(0, 1).clone_owned(), &x.columns(0, 1).clone_owned(), &y).is_err());
    }

    #[test]
    fn huge_sigma_removes_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let y = gaussian(2, 8, &mut rng);
            let t: Vec<f64> = (0..8).map(|_| rng.random_range(0.2..0.9)).collect();
            let mut sigma = vec![1.0; 8];
            sigma[3] = 1e6;
            let pool = DesignPool::new(y, t.clone()).unwrap().with_weights(sigma).unwrap();
            let d = greedy_weighted_time_constrained(&pool, 3.6, 2).unwrap();
            // Only chosen once no other pipeline fits the remaining budget.
            if let Some(pos) = d.selected.iter().position(|&j| j == 3) {
                let before = &d.selected[..pos];
                let left = 3.6 - before.iter().map(|&j| t[j]).sum::<f64>();
                assert!((0..8).filter(|&j| j != 3 && !before.contains(&j)).all(|j| t[j] > left));
            }
        }
    }

    #[test]
    fn weighted_equals_rescaled_unweighted() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let y = gaussian(3, 10, &mut rng);
            let t: Vec<f64> = (0..10).map(|_| rng.random_range(0.2..2.0)).collect();
            let sigma: Vec<f64> = (0..10).map(|_| rng.random_range(0.5..2.0)).collect();
            let mut scaled = y.clone();
            for j in 0..10 {
                scaled.column_mut(j).scale_mut(1.0 / sigma[j]);
            }
            let plain = time_constrained_design(&DesignPool::new(scaled, t.clone()).unwrap(), 5.0).unwrap();
            let pool = DesignPool::new(y, t).unwrap().with_weights(sigma).unwrap();
            assert_eq!(greedy_weighted_time_constrained(&pool, 5.0, 3).unwrap(), plain);
        }
    }

    proptest! {
        #[test]
        fn time_constrained_invariants(seed in 0u64..500, tau in 0.5f64..8.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = gaussian(3, 10, &mut rng);
            let t: Vec<f64> = (0..10).map(|_| rng.random_range(0.05..2.0)).collect();
            let pool = DesignPool::new(y.clone(), t.clone()).unwrap();
            let d = time_constrained_design(&pool, tau).unwrap();
            let spent: f64 = d.selected.iter().map(|&j| t[j]).sum();
            prop_assert!(spent <= tau * (1.0 + 1e-12));
            let mut uniq = d.selected.clone();
            uniq.sort();
            uniq.dedup();
            prop_assert_eq!(uniq.len(), d.selected.len());
            prop_assert_eq!(time_constrained_design(&pool, tau).unwrap(), d.clone());

            // Uniform weights leave the argmax sequence unchanged.
            let weighted = DesignPool::new(y, t).unwrap().with_weights(vec![0.3; 10]).unwrap();
            prop_assert_eq!(greedy_weighted_time_constrained(&weighted, tau, 3).unwrap(), d);
        }

        #[test]
        fn greedy_state_tracks_direct_inverse(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = gaussian(3, 8, &mut rng);
            let pool = DesignPool::new(y.clone(), vec![1.0; 8]).unwrap();
            let (init, _) = qr_init(&pool, 1e3, 3).unwrap();
            let mut state = DesignState::from_init(&pool, &init).unwrap();
            let mut x = y.select_columns(&init) * y.select_columns(&init).transpose();
            for j in (0..8).filter(|j| !init.contains(j)) {
                let col = y.column(j).clone_owned();
                state.add(j, &col, 1.0).unwrap();
                x += &col * col.transpose();
                prop_assert!((state.x_inv() * &x - DMatrix::<f64>::identity(3, 3)).norm() < 1e-6);
                prop_assert!((state.logdet() - logdet_spd(&x).unwrap()).abs() < 1e-8);
            }
        }

        #[test]
        fn duplicated_vectors_are_distinct_picks(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut y = gaussian(3, 6, &mut rng);
            let c = y.column(0).clone_owned();
            y.set_column(5, &c);
            let pool = DesignPool::new(y, vec![1.0; 6]).unwrap();
            let (init, _) = qr_init(&pool, 1e3, 3).unwrap();
            let s = greedy_size_constrained(&pool, 6, &init).unwrap();
            let mut uniq = s.clone();
            uniq.sort();
            uniq.dedup();
            prop_assert_eq!(uniq.len(), s.len());
        }
    }
}
