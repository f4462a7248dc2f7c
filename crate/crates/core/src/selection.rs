//! Online pipeline selection for a new dataset.
//!
//! Each round predicts runtimes, designs a set of pipelines to observe within
//! the round's time target, fits the dataset's embedding to the observed
//! errors, predicts every pipeline's error, and cross-checks the best
//! predictions. Time targets double until they pass half the total budget.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{time_constrained_design, DesignPool};
use crate::error::{Error, Result};
use crate::factorization::rank_from_energy;
use crate::linalg::lstsq_min_norm;
use crate::runtime::RuntimePredictor;

pub const DEFAULT_TOP_N: usize = 10;
pub const DEFAULT_ENSEMBLE_SIZE: usize = 5;
pub const DEFAULT_ENERGY_FRACTION: f64 = 0.97;
/// Initial time target as a fraction of the total budget.
pub const DEFAULT_INITIAL_FRACTION: f64 = 1.0 / 32.0;

/// Cross-validation error and true runtime of one pipeline on the new dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub error: f64,
    pub seconds: f64,
}

/// Source of ground truth for the dataset being served.
pub trait Oracle: Sync {
    fn n_pipelines(&self) -> usize;
    fn observe(&self, pipeline: usize) -> Result<Observation>;
}

/// Oracle backed by a row of known errors and runtimes.
#[derive(Debug, Clone)]
pub struct TableOracle {
    errors: Vec<f64>,
    seconds: Vec<f64>,
}

impl TableOracle {
    pub fn new(errors: Vec<f64>, seconds: Vec<f64>) -> Result<Self> {
        if errors.len() != seconds.len() {
            return Err(Error::arg("oracle errors and runtimes differ in length"));
        }
        if errors.iter().any(|e| !e.is_finite()) {
            return Err(Error::arg("oracle errors must be finite"));
        }
        if seconds.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::arg("oracle runtimes must be positive"));
        }
        Ok(TableOracle { errors, seconds })
    }

    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    pub fn seconds(&self) -> &[f64] {
        &self.seconds
    }
}

impl Oracle for TableOracle {
    fn n_pipelines(&self) -> usize {
        self.errors.len()
    }

    fn observe(&self, pipeline: usize) -> Result<Observation> {
        match (self.errors.get(pipeline), self.seconds.get(pipeline)) {
            (Some(&error), Some(&seconds)) => Ok(Observation { error, seconds }),
            _ => Err(Error::Oracle(format!("no entry for pipeline {pipeline}"))),
        }
    }
}

/// How the compute time of each experiment design is charged to the budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Overhead {
    /// A fixed charge per design; keeps runs reproducible.
    Fixed { seconds: f64 },
    /// Measured wall-clock time of the design computation.
    WallClock,
}

impl Default for Overhead {
    fn default() -> Self {
        Overhead::Fixed { seconds: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub total_budget: f64,
    pub initial_time_target: f64,
    /// `None` picks the rank capturing `energy_fraction` of the spectrum.
    pub initial_rank: Option<usize>,
    pub top_n: usize,
    pub ensemble_size: usize,
    pub energy_fraction: f64,
    pub overhead: Overhead,
}

impl SelectionConfig {
    pub fn new(total_budget: f64) -> Self {
        SelectionConfig {
            total_budget,
            initial_time_target: total_budget * DEFAULT_INITIAL_FRACTION,
            initial_rank: None,
            top_n: DEFAULT_TOP_N,
            ensemble_size: DEFAULT_ENSEMBLE_SIZE,
            energy_fraction: DEFAULT_ENERGY_FRACTION,
            overhead: Overhead::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_budget > 0.0 && self.total_budget.is_finite()) {
            return Err(Error::arg(format!("total budget {} is not positive", self.total_budget)));
        }
        if !(self.initial_time_target > 0.0 && self.initial_time_target <= self.total_budget / 2.0) {
            return Err(Error::arg(format!(
                "initial time target {} outside (0, {}]",
                self.initial_time_target,
                self.total_budget / 2.0
            )));
        }
        if self.initial_rank == Some(0) || self.top_n < 1 || self.ensemble_size < 1 {
            return Err(Error::arg("ranks and counts must be at least 1"));
        }
        if !(self.energy_fraction > 0.0 && self.energy_fraction <= 1.0) {
            return Err(Error::arg(format!("energy fraction {} outside (0, 1]", self.energy_fraction)));
        }
        if let Overhead::Fixed { seconds } = self.overhead {
            if !(seconds >= 0.0 && seconds.is_finite()) {
                return Err(Error::arg("design overhead must be nonnegative"));
            }
        }
        Ok(())
    }
}

/// Meta-trained artifacts consumed by the online stage.
#[derive(Debug, Clone)]
pub struct MetaModel {
    /// `k_max x n` pipeline embeddings, rows in decreasing importance.
    pub y: DMatrix<f64>,
    /// Spectrum used to pick the initial rank.
    pub singular_values: Vec<f64>,
    /// Mean meta-training error per pipeline, used when nothing was observed.
    pub prior_errors: Vec<f64>,
    pub runtime_predictors: Vec<RuntimePredictor>,
}

impl MetaModel {
    pub fn n_pipelines(&self) -> usize {
        self.y.ncols()
    }

    fn validate(&self) -> Result<()> {
        let n = self.y.ncols();
        if n == 0 || self.y.nrows() == 0 {
            return Err(Error::arg("embedding matrix is empty"));
        }
        if self.prior_errors.len() != n || self.runtime_predictors.len() != n {
            return Err(Error::arg("meta model components disagree on the pipeline count"));
        }
        Ok(())
    }

    pub fn predicted_runtimes(&self, n_points: u64, n_features: u64) -> Result<Vec<f64>> {
        self.runtime_predictors.iter().map(|p| p.predict(n_points, n_features)).collect()
    }
}

/// The new dataset being served.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSize {
    pub n_points: u64,
    pub n_features: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub time_target: f64,
    pub rank_used: usize,
    pub designed_set: Vec<usize>,
    /// Aligned with `designed_set`; `None` where the budget ran out.
    pub observed_errors: Vec<Option<f64>>,
    pub design_fallback: bool,
    pub estimated_embedding: Vec<f64>,
    /// Predictions clamped to `[0, 1]`.
    pub predicted_errors: Vec<f64>,
    pub raw_predicted_errors: Vec<f64>,
    pub top_candidates: Vec<usize>,
    pub ensemble_members: Vec<usize>,
    pub validation_error: Option<f64>,
    /// Lowest error observed during this round.
    pub round_best_error: Option<f64>,
    pub budget_spent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub rounds: Vec<RoundLog>,
    pub final_ranking: Vec<usize>,
    pub final_ensemble: Vec<usize>,
    pub total_budget: f64,
    pub budget_spent: f64,
    /// Lowest observed error over the whole run and its pipeline.
    pub best_observed: Option<(usize, f64)>,
}

/// Simulated clock plus the cache of completed observations.
#[derive(Debug, Clone)]
pub struct Session {
    budget: f64,
    spent: f64,
    cache: Vec<Option<f64>>,
}

impl Session {
    pub fn new(budget: f64, n_pipelines: usize) -> Self {
        Session { budget, spent: 0.0, cache: vec![None; n_pipelines] }
    }

    pub fn spent(&self) -> f64 {
        self.spent
    }

    pub fn remaining(&self) -> f64 {
        (self.budget - self.spent).max(0.0)
    }

    fn charge(&mut self, seconds: f64) {
        let take = seconds.min(self.remaining());
        self.spent = (self.spent + take).min(self.budget);
    }

    /// Observes a pipeline unless cached. A run longer than the remaining
    /// budget is killed when the budget runs out and yields nothing.
    fn observe(&mut self, oracle: &dyn Oracle, j: usize) -> Result<Option<f64>> {
        if let Some(e) = self.cache.get(j).copied().flatten() {
            return Ok(Some(e));
        }
        if self.remaining() <= 0.0 {
            return Ok(None);
        }
        let obs = oracle.observe(j)?;
        if obs.seconds > self.remaining() {
            self.charge(obs.seconds);
            return Ok(None);
        }
        self.charge(obs.seconds);
        self.cache[j] = Some(obs.error);
        Ok(Some(obs.error))
    }

    pub fn best_observed(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (j, e) in self.cache.iter().enumerate() {
            if let Some(e) = *e {
                if best.is_none_or(|(_, b)| e < b) {
                    best = Some((j, e));
                }
            }
        }
        best
    }
}

/// Minimum-norm least-squares `x` with `Y[:, S]^T x ~ e_S`.
pub fn estimate_embedding(y: &DMatrix<f64>, s: &[usize], e_s: &[f64]) -> Result<DVector<f64>> {
    if s.is_empty() {
        return Err(Error::arg("no observed pipelines"));
    }
    if s.len() != e_s.len() {
        return Err(Error::arg("observed indices and errors differ in length"));
    }
    if let Some(&j) = s.iter().find(|&&j| j >= y.ncols()) {
        return Err(Error::arg(format!("pipeline index {j} out of range")));
    }
    let a = y.select_columns(s).transpose();
    lstsq_min_norm(&a, &DVector::from_column_slice(e_s))
}

/// `Y^T x`, unclamped.
pub fn predict_errors(y: &DMatrix<f64>, x: &DVector<f64>) -> Result<Vec<f64>> {
    if y.nrows() != x.len() {
        return Err(Error::arg("embedding dimension mismatch"));
    }
    Ok((y.transpose() * x).iter().copied().collect())
}

/// Indices sorted by increasing value, lowest index first on ties.
fn ascending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

/// Picks the `size` observed pipelines with the lowest errors.
pub fn select_ensemble(observed: &[(usize, f64)], size: usize) -> Vec<usize> {
    let mut v = observed.to_vec();
    v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    v.into_iter().take(size).map(|(j, _)| j).collect()
}

/// Per-example modal label across members; ties go to the smallest label.
pub fn majority_vote(labels: &[Vec<i64>]) -> Result<Vec<i64>> {
    let first = labels.first().ok_or_else(|| Error::arg("no ensemble members"))?;
    if labels.iter().any(|l| l.len() != first.len()) {
        return Err(Error::arg("members disagree on the number of examples"));
    }
    Ok((0..first.len())
        .map(|i| {
            let mut votes: Vec<i64> = labels.iter().map(|l| l[i]).collect();
            votes.sort_unstable();
            let (mut best, mut best_count) = (votes[0], 0);
            let mut k = 0;
            while k < votes.len() {
                let run = votes[k..].iter().take_while(|&&v| v == votes[k]).count();
                if run > best_count {
                    best = votes[k];
                    best_count = run;
                }
                k += run;
            }
            best
        })
        .collect())
}

/// One round at a fixed time target and rank.
pub fn fit_one_round(
    model: &MetaModel,
    dataset: DatasetSize,
    oracle: &dyn Oracle,
    session: &mut Session,
    time_target: f64,
    rank: usize,
    config: &SelectionConfig,
) -> Result<RoundLog> {
    model.validate()?;
    let n = model.n_pipelines();
    if oracle.n_pipelines() != n {
        return Err(Error::arg("oracle and meta model disagree on the pipeline count"));
    }
    if rank < 1 || rank > model.y.nrows() {
        return Err(Error::arg(format!("rank {rank} outside 1..={}", model.y.nrows())));
    }
    let runtimes = model.predicted_runtimes(dataset.n_points, dataset.n_features)?;
    let y = model.y.rows(0, rank).clone_owned();

    let started = Instant::now();
    let pool = DesignPool::new(y.clone(), runtimes)?;
    let design = time_constrained_design(&pool, time_target)?;
    session.charge(match config.overhead {
        Overhead::Fixed { seconds } => seconds,
        Overhead::WallClock => started.elapsed().as_secs_f64(),
    });

    let mut observed_errors = Vec::with_capacity(design.selected.len());
    let mut seen = Vec::new();
    for &j in &design.selected {
        let e = session.observe(oracle, j)?;
        observed_errors.push(e);
        if let Some(e) = e {
            seen.push((j, e));
        }
    }

    let (x_hat, raw) = if seen.is_empty() {
        (DVector::zeros(rank), model.prior_errors.clone())
    } else {
        let (s, e): (Vec<usize>, Vec<f64>) = seen.iter().copied().unzip();
        let x = estimate_embedding(&y, &s, &e)?;
        let raw = predict_errors(&y, &x)?;
        (x, raw)
    };
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("predicted errors are not finite"));
    }

    let top: Vec<usize> = ascending(&raw).into_iter().take(config.top_n.min(n)).collect();
    let mut top_seen = Vec::new();
    for &j in &top {
        if let Some(e) = session.observe(oracle, j)? {
            top_seen.push((j, e));
        }
    }
    let pool_for_ensemble = if top_seen.is_empty() { &seen } else { &top_seen };
    let ensemble = select_ensemble(pool_for_ensemble, config.ensemble_size);
    let validation_error = (!ensemble.is_empty()).then(|| {
        let errs: Vec<f64> = ensemble
            .iter()
            .map(|j| pool_for_ensemble.iter().find(|(i, _)| i == j).unwrap().1)
            .collect();
        errs.iter().sum::<f64>() / errs.len() as f64
    });
    let round_best_error = seen.iter().chain(&top_seen).map(|&(_, e)| e).reduce(f64::min);

    Ok(RoundLog {
        round: 0,
        time_target,
        rank_used: rank,
        designed_set: design.selected,
        observed_errors,
        design_fallback: design.fallback,
        estimated_embedding: x_hat.iter().copied().collect(),
        predicted_errors: raw.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        raw_predicted_errors: raw,
        top_candidates: top,
        ensemble_members: ensemble,
        validation_error,
        round_best_error,
        budget_spent: session.spent(),
    })
}

/// Runs rounds at time targets `t0, 2 t0, 4 t0, ...` while the target is at
/// most half the total budget. The rank grows by one after a round whose
/// validation error is strictly below the previous round's.
pub fn run_online(
    model: &MetaModel,
    dataset: DatasetSize,
    oracle: &dyn Oracle,
    config: &SelectionConfig,
) -> Result<SelectionReport> {
    config.validate()?;
    model.validate()?;
    let k_max = model.y.nrows();
    let mut rank = match config.initial_rank {
        Some(r) => r,
        None => rank_from_energy(&model.singular_values, config.energy_fraction)?,
    }
    .clamp(1, k_max);
    let mut session = Session::new(config.total_budget, model.n_pipelines());
    let mut rounds: Vec<RoundLog> = Vec::new();
    let mut target = config.initial_time_target;
    // No ensemble exists before the first round, so its validation error
    // counts as infinite and a first round with observations raises the rank.
    let mut previous = f64::INFINITY;
    while target <= config.total_budget / 2.0 && session.remaining() > 0.0 {
        let mut log = fit_one_round(model, dataset, oracle, &mut session, target, rank, config)?;
        log.round = rounds.len();
        if let Some(cur) = log.validation_error {
            if cur < previous && rank < k_max {
                rank += 1;
            }
            previous = cur;
        }
        rounds.push(log);
        target *= 2.0;
    }
    let (final_ranking, final_ensemble) = match rounds.last() {
        Some(last) => (ascending(&last.raw_predicted_errors), last.ensemble_members.clone()),
        None => (ascending(&model.prior_errors), Vec::new()),
    };
    Ok(SelectionReport {
        rounds,
        final_ranking,
        final_ensemble,
        total_budget: config.total_budget,
        budget_spent: session.spent(),
        best_observed: session.best_observed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::basis_size;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn constant_predictor(seconds: f64) -> RuntimePredictor {
        let mut c = vec![0.0; basis_size()];
        c[0] = seconds;
        RuntimePredictor::from_coefficients(c).unwrap()
    }

    const SIZE: DatasetSize = DatasetSize { n_points: 100, n_features: 10 };

    /// Rank-`k` planted model with a new dataset `x` and unit runtimes.
    fn planted(k: usize, n: usize, seed: u64) -> (MetaModel, TableOracle, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = DMatrix::from_fn(k, n, |_, _| StandardNormal.sample(&mut rng));
        let x = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
        let errors: Vec<f64> = (y.transpose() * &x).iter().copied().collect();
        let model = MetaModel {
            y,
            singular_values: vec![1.0; k],
            prior_errors: vec![0.0; n],
            runtime_predictors: vec![constant_predictor(1.0); n],
        };
        (model, TableOracle::new(errors, vec![1.0; n]).unwrap(), x)
    }

    #[test]
    fn embedding_examples() {
        let (model, oracle, x) = planted(3, 12, 1);
        let s = [0, 3, 5, 7, 9];
        let e: Vec<f64> = s.iter().map(|&j| oracle.errors()[j]).collect();
        let xh = estimate_embedding(&model.y, &s, &e).unwrap();
        assert!((&xh - &x).norm() < 1e-8);
        let pred = predict_errors(&model.y, &xh).unwrap();
        for (p, t) in pred.iter().zip(oracle.errors()) {
            assert!((p - t).abs() < 1e-8);
        }
        let zero = estimate_embedding(&model.y, &s, &[0.0; 5]).unwrap();
        assert_eq!(zero.norm(), 0.0);
        assert!(predict_errors(&model.y, &DVector::zeros(3)).unwrap().iter().all(|&v| v == 0.0));
        assert!(estimate_embedding(&model.y, &[], &[]).is_err());
    }

    #[test]
    fn fitted_values_are_projection_of_observations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = DMatrix::from_fn(2, 8, |_, _| StandardNormal.sample(&mut rng));
        let s = [1, 2, 4, 6];
        let e: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
        let xh = estimate_embedding(&y, &s, &e).unwrap();
        let pred = predict_errors(&y, &xh).unwrap();
        let a = y.select_columns(&s).transpose();
        let proj = &a * a.clone().pseudo_inverse(1e-12).unwrap() * DVector::from_column_slice(&e);
        for (i, &j) in s.iter().enumerate() {
            assert!((pred[j] - proj[i]).abs() < 1e-10);
        }
        // The residual is orthogonal to the selected embeddings.
        let resid: Vec<f64> = s.iter().zip(&e).map(|(&j, &v)| v - pred[j]).collect();
        let dot = y.select_columns(&s) * DVector::from_vec(resid);
        assert!(dot.norm() < 1e-10);
    }

    #[test]
    fn embedding_error_shrinks_with_more_observations() {
        let mut better = 0;
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (k, n) = (3, 40);
            let y = DMatrix::from_fn(k, n, |_, _| StandardNormal.sample(&mut rng));
            let x = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
            let e: Vec<f64> = (y.transpose() * &x)
                .iter()
                .map(|v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + 0.3 * z
                })
                .collect();
            let err = |m: usize| {
                let s: Vec<usize> = (0..m).collect();
                let ev: Vec<f64> = s.iter().map(|&j| e[j]).collect();
                (estimate_embedding(&y, &s, &ev).unwrap() - &x).norm()
            };
            if err(3 * k) < err(k) {
                better += 1;
            }
        }
        assert!(better >= 40, "{better}/50");
    }

    #[test]
    fn majority_vote_examples() {
        let m = vec![vec![0, 1, 1], vec![1, 1, 0], vec![1, 0, 1]];
        assert_eq!(majority_vote(&m).unwrap(), vec![1, 1, 1]);
        assert_eq!(majority_vote(&[vec![4, 2, 9]]).unwrap(), vec![4, 2, 9]);
        assert_eq!(majority_vote(&[vec![3], vec![1]]).unwrap(), vec![1]);
        assert!(majority_vote(&[]).is_err());
        let member = vec![2, 0, 5, 5, 1];
        let others = vec![vec![0, 0, 0, 0, 0], vec![1, 1, 1, 1, 1]];
        let mut all = vec![member.clone(); 3];
        all.extend(others);
        assert_eq!(majority_vote(&all).unwrap(), member);
    }

    #[test]
    fn planted_end_to_end_finds_true_best() {
        let (model, oracle, _) = planted(3, 30, 3);
        let config = SelectionConfig::new(60.0);
        let report = run_online(&model, SIZE, &oracle, &config).unwrap();
        let truth = ascending(oracle.errors());
        assert_eq!(report.final_ranking[0], truth[0]);
        assert!(report.budget_spent <= config.total_budget);
    }

    #[test]
    fn tiny_budget_falls_back_to_fastest() {
        let (mut model, _, _) = planted(3, 10, 4);
        model.runtime_predictors = (0..10).map(|j| constant_predictor(10.0 + j as f64)).collect();
        let oracle = TableOracle::new(vec![0.5; 10], vec![1.0; 10]).unwrap();
        let mut session = Session::new(100.0, 10);
        let config = SelectionConfig::new(100.0);
        let log = fit_one_round(&model, SIZE, &oracle, &mut session, 25.0, 3, &config).unwrap();
        assert!(log.design_fallback);
        assert_eq!(log.designed_set, vec![0, 1]);
    }

    #[test]
    fn exhaustive_top_n_observes_true_best() {
        let (model, oracle, _) = planted(2, 15, 5);
        let mut config = SelectionConfig::new(1000.0);
        config.top_n = 15;
        let mut session = Session::new(1000.0, 15);
        let log = fit_one_round(&model, SIZE, &oracle, &mut session, 4.0, 2, &config).unwrap();
        let truth = ascending(oracle.errors());
        let mut got = log.ensemble_members.clone();
        got.sort();
        let mut want: Vec<usize> = truth[..5].to_vec();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn round_schedule_doubles_to_half_budget() {
        let (model, oracle, _) = planted(2, 20, 6);
        let mut config = SelectionConfig::new(400.0);
        config.initial_time_target = 100.0;
        let report = run_online(&model, SIZE, &oracle, &config).unwrap();
        let targets: Vec<f64> = report.rounds.iter().map(|r| r.time_target).collect();
        assert_eq!(targets, vec![100.0, 200.0]);
    }

    #[test]
    fn constant_validation_error_keeps_rank() {
        let (model, _, _) = planted(3, 20, 7);
        let oracle = TableOracle::new(vec![0.25; 20], vec![0.5; 20]).unwrap();
        let mut config = SelectionConfig::new(640.0);
        config.initial_rank = Some(1);
        let report = run_online(&model, SIZE, &oracle, &config).unwrap();
        assert!(report.rounds.len() > 2);
        // Only the first round improves on the empty ensemble.
        assert_eq!(report.rounds[0].rank_used, 1);
        assert!(report.rounds[1..].iter().all(|r| r.rank_used == 2));
    }

    #[test]
    fn rank_grows_on_improvement() {
        let (model, _, _) = planted(3, 20, 8);
        // Later pipelines are better, so each round's ensemble improves.
        let errors: Vec<f64> = (0..20).map(|j| 1.0 - j as f64 / 20.0).collect();
        let oracle = TableOracle::new(errors, vec![1.0; 20]).unwrap();
        let mut config = SelectionConfig::new(64.0);
        config.initial_rank = Some(1);
        config.top_n = 2;
        config.ensemble_size = 1;
        let report = run_online(&model, SIZE, &oracle, &config).unwrap();
        let r = &report.rounds;
        assert!(r.len() >= 3);
        assert_eq!(r[1].rank_used, r[0].rank_used + 1);
        for i in 1..r.len() - 1 {
            let improved = r[i].validation_error.unwrap() < r[i - 1].validation_error.unwrap();
            assert_eq!(r[i + 1].rank_used, (r[i].rank_used + usize::from(improved)).min(3));
        }
        assert!(r.last().unwrap().rank_used > 1);
    }

    #[test]
    fn budget_is_never_exceeded_with_long_true_runtimes() {
        let (model, _, _) = planted(3, 25, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let secs: Vec<f64> = (0..25).map(|_| rng.random_range(0.1..200.0)).collect();
        let oracle = TableOracle::new(vec![0.3; 25], secs).unwrap();
        let config = SelectionConfig::new(50.0);
        let report = run_online(&model, SIZE, &oracle, &config).unwrap();
        assert!(report.budget_spent <= 50.0);
    }

    #[test]
    fn deterministic_reports() {
        let (model, oracle, _) = planted(3, 30, 11);
        let config = SelectionConfig::new(60.0);
        let a = run_online(&model, SIZE, &oracle, &config).unwrap();
        let b = run_online(&model, SIZE, &oracle, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rounds_use_leading_embedding_rows() {
        let (model, oracle, _) = planted(4, 20, 12);
        let config = SelectionConfig::new(100.0);
        let mut s1 = Session::new(100.0, 20);
        let log = fit_one_round(&model, SIZE, &oracle, &mut s1, 10.0, 2, &config).unwrap();
        let mut truncated = model.clone();
        truncated.y = model.y.rows(0, 2).clone_owned();
        let mut s2 = Session::new(100.0, 20);
        let again = fit_one_round(&truncated, SIZE, &oracle, &mut s2, 10.0, 2, &config).unwrap();
        assert_eq!(log, again);
    }

    #[test]
    fn config_validation() {
        let mut c = SelectionConfig::new(10.0);
        c.initial_time_target = 6.0;
        assert!(c.validate().is_err());
        let mut c = SelectionConfig::new(10.0);
        c.top_n = 0;
        assert!(c.validate().is_err());
        assert!(SelectionConfig::new(10.0).validate().is_ok());
    }
}
