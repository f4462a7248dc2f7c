//! Synthetic corpora with planted structure, censoring, and leave-one-dataset-out
//! evaluation of the selection engine.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::completion::{em_matrix, em_tucker, kfmc_fit, relative_error, KfmcConfig, DEFAULT_EM_MAX_ITER, DEFAULT_EM_TOL};
use crate::error::{Error, Result};
use crate::factorization::{pca_factorize, pipeline_embeddings, tucker_decompose, TuckerFactors, TuckerRanks};
use crate::linalg::{orthonormalize, thin_svd};
use crate::runtime::{fit_runtime, RuntimeObservation, RuntimePredictor};
use crate::selection::{run_online, DatasetSize, MetaModel, Overhead, SelectionConfig, SelectionReport, TableOracle};
use crate::tensor::{frobenius_norm, matricize, DenseTensor, ObservedTensor, Shape};

/// Range the planted errors are mapped into before noise.
const ERROR_RANGE: (f64, f64) = (0.05, 0.95);

/// Runtime of estimator `e` on a dataset with `n` points and `p` features:
/// `c0 + c1 (n p / 1e4) + c2 (n^2 p / 1e8) + c3 (n p^2 / 1e6)` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeLaw {
    pub coefficients: Vec<[f64; 4]>,
    /// Standard deviation of the lognormal jitter on each runtime.
    pub jitter: f64,
}

impl RuntimeLaw {
    /// Random nonnegative coefficients with a positive constant term.
    pub fn random(n_estimators: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coefficients = (0..n_estimators)
            .map(|_| {
                let mut c = [rng.random_range(0.01..0.5), 0.0, 0.0, 0.0];
                for v in c.iter_mut().skip(1) {
                    if rng.random_bool(0.6) {
                        *v = rng.random_range(0.05..1.0);
                    }
                }
                c
            })
            .collect();
        RuntimeLaw { coefficients, jitter: 0.2 }
    }

    pub fn seconds(&self, estimator: usize, n_points: u64, n_features: u64) -> f64 {
        let (n, p) = (n_points as f64, n_features as f64);
        let c = &self.coefficients[estimator];
        c[0] + c[1] * n * p / 1e4 + c[2] * n * n * p / 1e8 + c[3] * n * p * p / 1e6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Mode 0 indexes datasets; the last mode indexes estimators.
    pub dims: Vec<usize>,
    pub tucker_ranks: Vec<usize>,
    pub noise_std: f64,
    pub runtime_law: RuntimeLaw,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 30 datasets x (2 x 2 x 2 x 3 x 20) pipelines at Tucker ranks (5, 2, 2, 2, 2, 4).
    pub fn default_corpus(seed: u64) -> Self {
        SyntheticSpec {
            dims: vec![30, 2, 2, 2, 3, 20],
            tucker_ranks: vec![5, 2, 2, 2, 2, 4],
            noise_std: 0.0,
            runtime_law: RuntimeLaw::random(20, seed ^ 0x5eed),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let shape = Shape::new(self.dims.clone())?;
        if shape.order() < 2 {
            return Err(Error::arg("corpus needs a dataset mode and at least one pipeline mode"));
        }
        TuckerRanks::new(self.tucker_ranks.clone(), &self.dims)?;
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::arg("noise_std must be nonnegative"));
        }
        let estimators = *self.dims.last().unwrap();
        if self.runtime_law.coefficients.len() != estimators {
            return Err(Error::arg(format!("runtime law covers {} estimators, need {estimators}", self.runtime_law.coefficients.len())));
        }
        if self.runtime_law.coefficients.iter().flatten().any(|c| !(*c >= 0.0 && c.is_finite()))
            || self.runtime_law.coefficients.iter().any(|c| c[0] <= 0.0)
        {
            return Err(Error::arg("runtime law coefficients must be nonnegative with a positive constant"));
        }
        if !(self.runtime_law.jitter >= 0.0 && self.runtime_law.jitter.is_finite()) {
            return Err(Error::arg("runtime jitter must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub truth: DenseTensor,
    pub runtimes: DenseTensor,
    pub sizes: Vec<DatasetSize>,
}

impl Corpus {
    pub fn new(truth: DenseTensor, runtimes: DenseTensor, sizes: Vec<DatasetSize>) -> Result<Self> {
        if truth.shape() != runtimes.shape() {
            return Err(Error::arg("error and runtime tensors differ in shape"));
        }
        if sizes.len() != truth.dims()[0] {
            return Err(Error::arg(format!("{} dataset sizes for {} datasets", sizes.len(), truth.dims()[0])));
        }
        if runtimes.values().iter().any(|t| !(*t > 0.0)) {
            return Err(Error::arg("runtimes must be positive"));
        }
        Ok(Corpus { truth, runtimes, sizes })
    }

    pub fn n_datasets(&self) -> usize {
        self.truth.dims()[0]
    }

    pub fn n_pipelines(&self) -> usize {
        self.truth.shape().len() / self.n_datasets()
    }
}

/// Planted corpus. Every factor has the all-ones vector in its span, so the
/// affine map of the planted tensor into `[0.05, 0.95]` keeps the planted
/// Tucker ranks; noise is added afterwards and clipped to `[0, 1]`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let core_shape = Shape::new(spec.tucker_ranks.clone())?;
    let core_vals = (0..core_shape.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let core = DenseTensor::new(core_shape, core_vals)?;
    let factors = spec
        .dims
        .iter()
        .zip(&spec.tucker_ranks)
        .map(|(&d, &r)| {
            let mut m = DMatrix::from_fn(d, r, |_, _| StandardNormal.sample(&mut rng));
            m.column_mut(0).fill(1.0);
            orthonormalize(&m)
        })
        .collect();
    let planted = TuckerFactors { core, factors }.reconstruct();
    let (lo, hi) = planted
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::arg(e.to_string()))?;
    let values = planted
        .values()
        .iter()
        .map(|&v| {
            let base = ERROR_RANGE.0 + (ERROR_RANGE.1 - ERROR_RANGE.0) * (v - lo) / span;
            if spec.noise_std > 0.0 {
                (base + noise.sample(&mut rng)).clamp(0.0, 1.0)
            } else {
                base
            }
        })
        .collect();
    let truth = DenseTensor::new(planted.shape().clone(), values)?;

    let sizes: Vec<DatasetSize> = (0..spec.dims[0])
        .map(|_| DatasetSize {
            n_points: 10f64.powf(rng.random_range(2.0..4.3)).round() as u64,
            n_features: 10f64.powf(rng.random_range(0.7..2.3)).round() as u64,
        })
        .collect();
    let jitter = LogNormal::new(0.0, spec.runtime_law.jitter).map_err(|e| Error::arg(e.to_string()))?;
    let shape = truth.shape().clone();
    let last = shape.order() - 1;
    let runtimes = (0..shape.len())
        .map(|i| {
            let idx = unravel(&shape, i);
            let s = sizes[idx[0]];
            let t = spec.runtime_law.seconds(idx[last], s.n_points, s.n_features);
            if spec.runtime_law.jitter > 0.0 {
                t * jitter.sample(&mut rng)
            } else {
                t
            }
        })
        .collect();
    Corpus::new(truth, DenseTensor::new(shape, runtimes)?, sizes)
}

fn unravel(shape: &Shape, offset: usize) -> Vec<usize> {
    let mut idx = vec![0; shape.order()];
    shape.unravel(offset, &mut idx);
    idx
}

/// Observes exactly the entries whose runtime is within `threshold`.
pub fn censor_by_runtime(truth: &DenseTensor, runtimes: &DenseTensor, threshold: f64) -> Result<ObservedTensor> {
    if truth.shape() != runtimes.shape() {
        return Err(Error::arg("error and runtime tensors differ in shape"));
    }
    let mask = runtimes.values().iter().map(|&t| if t <= threshold { 1.0 } else { 0.0 }).collect();
    ObservedTensor::new(truth.clone(), DenseTensor::new(truth.shape().clone(), mask)?)
}

const CENSOR_RETRIES: usize = 100;

/// I.i.d. missingness at `ratio`, redrawn until every slice of every mode
/// keeps at least one observation.
pub fn censor_uniform(truth: &DenseTensor, ratio: f64, seed: u64) -> Result<ObservedTensor> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::arg(format!("missing ratio {ratio} outside [0, 1)")));
    }
    let shape = truth.shape().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..CENSOR_RETRIES {
        let mask: Vec<f64> = (0..shape.len()).map(|_| if rng.random::<f64>() < ratio { 0.0 } else { 1.0 }).collect();
        let covered = (0..shape.order()).all(|mode| {
            let mut seen = vec![false; shape.dims()[mode]];
            for (i, &m) in mask.iter().enumerate() {
                if m == 1.0 {
                    seen[unravel(&shape, i)[mode]] = true;
                }
            }
            seen.iter().all(|&s| s)
        });
        if covered {
            return ObservedTensor::new(truth.clone(), DenseTensor::new(shape, mask)?);
        }
    }
    Err(Error::arg(format!(
        "missing ratio {ratio} left a slice empty after {CENSOR_RETRIES} draws"
    )))
}

/// Completion methods compared by the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum CompletionMethod {
    /// Missing entries set to zero.
    ZeroFill,
    Tucker { ranks: Vec<usize> },
    /// PCA on the mode-`mode` matricization.
    Matrix { mode: usize, rank: usize },
    /// Kernelized completion of the mode-0 matricization.
    Kernel { config: KfmcConfig },
}

impl CompletionMethod {
    pub fn name(&self) -> &'static str {
        match self {
            CompletionMethod::ZeroFill => "zero-fill",
            CompletionMethod::Tucker { .. } => "em-tucker",
            CompletionMethod::Matrix { .. } => "em-matrix",
            CompletionMethod::Kernel { .. } => "kfmc",
        }
    }

    pub fn complete(&self, t: &ObservedTensor) -> Result<DenseTensor> {
        match self {
            CompletionMethod::ZeroFill => Ok(t.data().clone()),
            CompletionMethod::Tucker { ranks } => {
                let ranks = TuckerRanks::new(ranks.clone(), t.shape().dims())?;
                Ok(em_tucker(t, &ranks, DEFAULT_EM_MAX_ITER, DEFAULT_EM_TOL)?.completed)
            }
            CompletionMethod::Matrix { mode, rank } => {
                Ok(em_matrix(t, *mode, *rank, DEFAULT_EM_MAX_ITER, DEFAULT_EM_TOL)?.completed)
            }
            CompletionMethod::Kernel { config } => {
                let data = matricize(t.data(), 0)?;
                let mask = matricize(t.mask(), 0)?;
                let obs = ObservedTensor::new(DenseTensor::from_matrix(&data)?, DenseTensor::from_matrix(&mask)?)?;
                let fit = kfmc_fit(&obs, config)?;
                crate::tensor::fold(&fit.completed, 0, t.shape())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionCell {
    pub method: String,
    pub mask: usize,
    /// Relative error on hidden entries, or the failure message.
    pub result: std::result::Result<f64, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionTable {
    pub cells: Vec<CompletionCell>,
}

impl CompletionTable {
    /// `method,mask,relative_error` rows; failures leave the value empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,mask,relative_error\n");
        for c in &self.cells {
            let v = match &c.result {
                Ok(e) => format!("{e:?}"),
                Err(_) => String::new(),
            };
            out.push_str(&format!("{},{},{}\n", c.method, c.mask, v));
        }
        out
    }
}

fn hidden_mask(t: &ObservedTensor) -> Result<DenseTensor> {
    DenseTensor::new(t.shape().clone(), t.mask().values().iter().map(|m| 1.0 - m).collect())
}

/// Relative error of every method on the hidden entries of every mask.
pub fn compare_completion_methods(
    truth: &DenseTensor,
    masks: &[ObservedTensor],
    methods: &[CompletionMethod],
) -> Result<CompletionTable> {
    if methods.is_empty() {
        return Err(Error::arg("no completion methods given"));
    }
    let mut cells = Vec::new();
    for method in methods {
        for (k, obs) in masks.iter().enumerate() {
            let result = (|| {
                if obs.shape() != truth.shape() {
                    return Err(Error::arg("mask shape differs from truth"));
                }
                let completed = method.complete(obs)?;
                relative_error(truth, &completed, &hidden_mask(obs)?)
            })()
            .map_err(|e| e.to_string());
            cells.push(CompletionCell { method: method.name().to_string(), mask: k, result });
        }
    }
    Ok(CompletionTable { cells })
}

/// Which training entries are observed during leave-one-out meta-training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Censoring {
    None,
    Runtime { threshold: f64 },
    Uniform { ratio: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooConfig {
    /// Budgets as fractions of the held-out dataset's total pipeline runtime.
    pub budget_fractions: Vec<f64>,
    pub censoring: Censoring,
    pub top_n: usize,
    pub ensemble_size: usize,
    pub energy_fraction: f64,
    pub initial_fraction: f64,
    pub initial_rank: Option<usize>,
    pub overhead: Overhead,
}

impl Default for LooConfig {
    fn default() -> Self {
        let s = SelectionConfig::new(1.0);
        LooConfig {
            budget_fractions: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0],
            censoring: Censoring::None,
            top_n: s.top_n,
            ensemble_size: s.ensemble_size,
            energy_fraction: s.energy_fraction,
            initial_fraction: s.initial_time_target,
            initial_rank: None,
            overhead: s.overhead,
        }
    }
}

impl LooConfig {
    fn selection(&self, total_budget: f64) -> SelectionConfig {
        SelectionConfig {
            total_budget,
            initial_time_target: total_budget * self.initial_fraction,
            initial_rank: self.initial_rank,
            top_n: self.top_n,
            ensemble_size: self.ensemble_size,
            energy_fraction: self.energy_fraction,
            overhead: self.overhead,
        }
    }
}

/// Meta-training method used before the online stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum MetaMethod {
    /// EM-Tucker completion, Tucker embeddings at the same ranks.
    Tensor { ranks: Vec<usize> },
    /// EM-PCA completion of the dataset matricization, PCA embeddings.
    Matrix { rank: usize },
    /// Kernelized completion, PCA embeddings of rank `rank`.
    Kernel { rank: usize, config: KfmcConfig },
}

impl MetaMethod {
    pub fn name(&self) -> &'static str {
        match self {
            MetaMethod::Tensor { .. } => "tensor",
            MetaMethod::Matrix { .. } => "matrix",
            MetaMethod::Kernel { .. } => "kernel",
        }
    }
}

/// Curve of regret against budget for one held-out dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretCurve {
    pub budget_fractions: Vec<f64>,
    pub regrets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub dataset: usize,
    pub method: String,
    pub curve: RegretCurve,
    /// Pipeline chosen at each budget fraction.
    pub selected: Vec<usize>,
    /// 1-based rank of each chosen pipeline's true error (1 = best).
    pub ranks: Vec<usize>,
    pub baseline: usize,
    pub baseline_rank: usize,
    pub baseline_regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooResult {
    /// One entry per (method, dataset); failures are kept as messages.
    pub folds: Vec<std::result::Result<FoldOutcome, String>>,
    pub budget_fractions: Vec<f64>,
}

impl LooResult {
    /// `method,dataset,budget_fraction,regret,rank,baseline_rank` rows.
    pub fn regret_table(&self) -> String {
        let mut out = String::from("method,dataset,budget_fraction,regret,rank,baseline_rank\n");
        for f in self.folds.iter().flatten() {
            for (i, frac) in f.curve.budget_fractions.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{:?},{:?},{},{}\n",
                    f.method, f.dataset, frac, f.curve.regrets[i], f.ranks[i], f.baseline_rank
                ));
            }
        }
        out
    }

    /// Mean rank per method at each budget fraction, plus the baseline's.
    pub fn ranking_table(&self) -> String {
        let mut out = String::from("method,budget_fraction,mean_rank,mean_baseline_rank,datasets,failures\n");
        let mut methods: Vec<String> = Vec::new();
        for f in self.folds.iter().flatten() {
            if !methods.contains(&f.method) {
                methods.push(f.method.clone());
            }
        }
        let failures = self.folds.iter().filter(|f| f.is_err()).count();
        for m in &methods {
            let folds: Vec<&FoldOutcome> = self.folds.iter().flatten().filter(|f| &f.method == m).collect();
            for (i, frac) in self.budget_fractions.iter().enumerate() {
                let mean = folds.iter().map(|f| f.ranks[i] as f64).sum::<f64>() / folds.len() as f64;
                let base = folds.iter().map(|f| f.baseline_rank as f64).sum::<f64>() / folds.len() as f64;
                out.push_str(&format!("{m},{frac:?},{mean:?},{base:?},{},{failures}\n", folds.len()));
            }
        }
        out
    }

    pub fn mean_rank(&self, method: &str, fraction_index: usize) -> Option<f64> {
        let folds: Vec<&FoldOutcome> = self.folds.iter().flatten().filter(|f| f.method == method).collect();
        (!folds.is_empty())
            .then(|| folds.iter().map(|f| f.ranks[fraction_index] as f64).sum::<f64>() / folds.len() as f64)
    }

    pub fn mean_baseline_rank(&self, method: &str) -> Option<f64> {
        let folds: Vec<&FoldOutcome> = self.folds.iter().flatten().filter(|f| f.method == method).collect();
        (!folds.is_empty()).then(|| folds.iter().map(|f| f.baseline_rank as f64).sum::<f64>() / folds.len() as f64)
    }
}

/// Training tensor with dataset `held_out` removed from mode 0.
fn drop_dataset(t: &DenseTensor, held_out: usize) -> Result<DenseTensor> {
    let m = matricize(t, 0)?;
    let keep: Vec<usize> = (0..m.nrows()).filter(|&i| i != held_out).collect();
    let shape = t.shape().with_extent(0, keep.len());
    crate::tensor::fold(&m.select_rows(&keep), 0, &shape)
}

fn row(t: &DenseTensor, i: usize) -> Result<Vec<f64>> {
    Ok(matricize(t, 0)?.row(i).iter().copied().collect())
}

/// Meta-trains on the observed training corpus.
pub fn meta_train(
    train: &ObservedTensor,
    runtimes: &DenseTensor,
    sizes: &[DatasetSize],
    method: &MetaMethod,
) -> Result<MetaModel> {
    let completed = match method {
        MetaMethod::Tensor { ranks } => CompletionMethod::Tucker { ranks: ranks.clone() }.complete(train)?,
        MetaMethod::Matrix { rank } => CompletionMethod::Matrix { mode: 0, rank: *rank }.complete(train)?,
        MetaMethod::Kernel { config, .. } => CompletionMethod::Kernel { config: config.clone() }.complete(train)?,
    };
    build_meta_model(&completed, train, runtimes, sizes, method)
}

/// Factorizes an already completed training tensor and fits the runtime
/// predictors and prior errors from the observed part of `train`.
pub fn build_meta_model(
    completed: &DenseTensor,
    train: &ObservedTensor,
    runtimes: &DenseTensor,
    sizes: &[DatasetSize],
    method: &MetaMethod,
) -> Result<MetaModel> {
    if completed.shape() != train.shape() || runtimes.shape() != train.shape() {
        return Err(Error::arg("completed, training and runtime tensors differ in shape"));
    }
    if sizes.len() != train.shape().dims()[0] {
        return Err(Error::arg(format!("{} dataset sizes for {} datasets", sizes.len(), train.shape().dims()[0])));
    }
    let completed = completed.clone();
    let e = matricize(&completed, 0)?;
    let singular_values = thin_svd(&e)?.s;
    let y = match method {
        MetaMethod::Tensor { ranks } => {
            let ranks = TuckerRanks::new(ranks.clone(), completed.dims())?;
            let f = tucker_decompose(&completed, &ranks, crate::factorization::DEFAULT_TUCKER_SWEEPS, crate::factorization::DEFAULT_TUCKER_TOL)?;
            pipeline_embeddings(&f)?.1
        }
        MetaMethod::Matrix { rank } | MetaMethod::Kernel { rank, .. } => pca_factorize(&e, *rank)?.y,
    };

    let data = matricize(train.data(), 0)?;
    let mask = matricize(train.mask(), 0)?;
    let rt = matricize(runtimes, 0)?;
    let (m, n) = data.shape();
    let mut prior = Vec::with_capacity(n);
    let mut predictors = Vec::with_capacity(n);
    let observed_mean = train.data().values().iter().sum::<f64>() / train.observed_count().max(1) as f64;
    for j in 0..n {
        let seen: Vec<usize> = (0..m).filter(|&i| mask[(i, j)] == 1.0).collect();
        prior.push(if seen.is_empty() {
            observed_mean
        } else {
            seen.iter().map(|&i| data[(i, j)]).sum::<f64>() / seen.len() as f64
        });
        let obs: Vec<RuntimeObservation> = seen
            .iter()
            .map(|&i| RuntimeObservation { n_points: sizes[i].n_points, n_features: sizes[i].n_features, seconds: rt[(i, j)] })
            .collect();
        predictors.push(if obs.is_empty() {
            // Every run timed out; assume the slowest runtime seen anywhere.
            let mut c = vec![0.0; crate::runtime::basis_size()];
            c[0] = rt.column(j).max();
            RuntimePredictor::from_coefficients(c)?
        } else {
            fit_runtime(&obs)?
        });
    }
    Ok(MetaModel { y, singular_values, prior_errors: prior, runtime_predictors: predictors })
}

/// Index of the smallest value, lowest index on ties.
fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

/// 1-based position of `value` among `all` (ties share the better rank).
pub fn true_rank(all: &[f64], value: f64) -> usize {
    1 + all.iter().filter(|&&v| v < value).count()
}

/// Pipeline with the lowest true error among those the run observed plus
/// its top-ranked prediction; lowest index on ties.
pub fn found_pipeline(report: &SelectionReport, errors: &[f64]) -> usize {
    let mut candidates: Vec<usize> = report
        .rounds
        .iter()
        .flat_map(|r| r.designed_set.iter().zip(&r.observed_errors).filter(|(_, e)| e.is_some()).map(|(&j, _)| j))
        .collect();
    candidates.push(report.final_ranking[0]);
    candidates.sort_unstable();
    candidates.into_iter().fold(None, |best: Option<usize>, j| match best {
        Some(b) if errors[b] <= errors[j] => Some(b),
        _ => Some(j),
    })
    .unwrap()
}

/// Meta-trained model and held-out oracle for one fold.
pub fn loo_fold(corpus: &Corpus, held_out: usize, method: &MetaMethod, censoring: Censoring) -> Result<(MetaModel, TableOracle)> {
    let truth = drop_dataset(&corpus.truth, held_out)?;
    let runtimes = drop_dataset(&corpus.runtimes, held_out)?;
    let sizes: Vec<DatasetSize> = corpus.sizes.iter().enumerate().filter(|&(i, _)| i != held_out).map(|(_, s)| *s).collect();
    let train = match censoring {
        Censoring::None => ObservedTensor::fully_observed(truth),
        Censoring::Runtime { threshold } => censor_by_runtime(&truth, &runtimes, threshold)?,
        Censoring::Uniform { ratio, seed } => censor_uniform(&truth, ratio, seed)?,
    };
    let model = meta_train(&train, &runtimes, &sizes, method)?;
    let oracle = TableOracle::new(row(&corpus.truth, held_out)?, row(&corpus.runtimes, held_out)?)?;
    Ok((model, oracle))
}

/// Runs the online stage for one fold at every budget fraction.
pub fn evaluate_fold(
    corpus: &Corpus,
    held_out: usize,
    method: &MetaMethod,
    config: &LooConfig,
) -> Result<(FoldOutcome, Vec<SelectionReport>)> {
    let (model, oracle) = loo_fold(corpus, held_out, method, config.censoring)?;
    let errors = oracle.errors();
    let best = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let total: f64 = oracle.seconds().iter().sum();
    let mut regrets = Vec::new();
    let mut selected = Vec::new();
    let mut ranks = Vec::new();
    let mut reports = Vec::new();
    for &frac in &config.budget_fractions {
        let report = run_online(&model, corpus.sizes[held_out], &oracle, &config.selection(frac * total))?;
        let pick = found_pipeline(&report, errors);
        regrets.push(errors[pick] - best);
        ranks.push(true_rank(errors, errors[pick]));
        selected.push(pick);
        reports.push(report);
    }
    let baseline = argmin(&model.prior_errors);
    Ok((
        FoldOutcome {
            dataset: held_out,
            method: method.name().to_string(),
            curve: RegretCurve { budget_fractions: config.budget_fractions.clone(), regrets },
            selected,
            ranks,
            baseline,
            baseline_rank: true_rank(errors, errors[baseline]),
            baseline_regret: errors[baseline] - best,
        },
        reports,
    ))
}

/// Leave-one-dataset-out evaluation. Folds run in parallel; results are in
/// (method, dataset) order.
pub fn evaluate_loo(corpus: &Corpus, config: &LooConfig, methods: &[MetaMethod]) -> Result<LooResult> {
    if corpus.n_datasets() < 3 {
        return Err(Error::arg("leave-one-out needs at least three datasets"));
    }
    if config.budget_fractions.is_empty()
        || config.budget_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0))
        || config.budget_fractions.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::arg("budget fractions must increase within (0, 1]"));
    }
    config.selection(1.0).validate()?;
    let jobs: Vec<(&MetaMethod, usize)> =
        methods.iter().flat_map(|m| (0..corpus.n_datasets()).map(move |i| (m, i))).collect();
    let folds = jobs
        .par_iter()
        .map(|&(m, i)| evaluate_fold(corpus, i, m, config).map(|(f, _)| f).map_err(|e| format!("{}: {e}", e.code())))
        .collect();
    Ok(LooResult { folds, budget_fractions: config.budget_fractions.clone() })
}

/// Fraction of hidden mass: `||hidden truth||_F / ||truth||_F`.
pub fn hidden_energy(obs: &ObservedTensor, truth: &DenseTensor) -> Result<f64> {
    let hidden = hidden_mask(obs)?;
    let vals = truth.values().iter().zip(hidden.values()).map(|(t, h)| t * h).collect();
    Ok(frobenius_norm(&DenseTensor::new(truth.shape().clone(), vals)?) / frobenius_norm(truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::DEFAULT_TUCKER_SWEEPS;

    fn small_spec(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            dims: vec![12, 3, 4, 5],
            tucker_ranks: vec![3, 2, 2, 3],
            noise_std: 0.0,
            runtime_law: RuntimeLaw::random(5, seed),
            seed,
        }
    }

    #[test]
    fn noiseless_corpus_has_planted_ranks() {
        let c = generate_synthetic(&small_spec(1)).unwrap();
        let ranks = TuckerRanks::new(vec![3, 2, 2, 3], c.truth.dims()).unwrap();
        let f = tucker_decompose(&c.truth, &ranks, DEFAULT_TUCKER_SWEEPS, 0.0).unwrap();
        let err = frobenius_norm(&f.reconstruct().sub(&c.truth).unwrap()) / frobenius_norm(&c.truth);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn generation_is_deterministic_and_bounded() {
        let mut spec = small_spec(2);
        spec.noise_std = 0.3;
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.truth.values().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(a.runtimes.values().iter().all(|&t| t > 0.0));
        spec.tucker_ranks = vec![13, 2, 2, 3];
        assert!(matches!(generate_synthetic(&spec), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn runtime_censoring_is_monotone() {
        let c = generate_synthetic(&small_spec(3)).unwrap();
        let all = censor_by_runtime(&c.truth, &c.runtimes, f64::INFINITY).unwrap();
        assert_eq!(all.missing_ratio(), 0.0);
        let mut last = 0.0;
        let mut sorted = c.runtimes.values().to_vec();
        sorted.sort_by(f64::total_cmp);
        for q in [0.9, 0.7, 0.5, 0.2] {
            let thr = sorted[(q * sorted.len() as f64) as usize];
            let obs = censor_by_runtime(&c.truth, &c.runtimes, thr).unwrap();
            assert!(obs.missing_ratio() >= last);
            last = obs.missing_ratio();
            for (m, f) in obs.mask().values().iter().zip(all.mask().values()) {
                assert!(m <= f);
            }
        }
        assert!(last > 0.0);
    }

    #[test]
    fn uniform_censoring() {
        let t = DenseTensor::filled(Shape::new(vec![100, 100]).unwrap(), 0.5);
        assert_eq!(censor_uniform(&t, 0.0, 1).unwrap().missing_ratio(), 0.0);
        let a = censor_uniform(&t, 0.3, 2).unwrap();
        assert!((a.missing_ratio() - 0.3).abs() < 0.02);
        assert_eq!(a, censor_uniform(&t, 0.3, 2).unwrap());
        let tiny = DenseTensor::filled(Shape::new(vec![2, 2]).unwrap(), 0.5);
        assert!(censor_uniform(&tiny, 0.99, 3).is_err());
        assert!(censor_uniform(&t, 1.0, 3).is_err());
    }

    #[test]
    fn zero_fill_has_unit_error_on_nonzero_hidden_entries() {
        let t = DenseTensor::filled(Shape::new(vec![6, 5]).unwrap(), 0.4);
        let obs = censor_uniform(&t, 0.3, 4).unwrap();
        let table = compare_completion_methods(&t, &[obs], &[CompletionMethod::ZeroFill]).unwrap();
        assert_eq!(table.cells[0].result, Ok(1.0));
        assert!(compare_completion_methods(&t, &[], &[]).is_err());
        assert!(table.to_csv().starts_with("method,mask,relative_error\nzero-fill,0,1.0\n"));
    }

    #[test]
    fn held_out_values_do_not_reach_meta_training() {
        let c = generate_synthetic(&small_spec(5)).unwrap();
        let mut perturbed = c.clone();
        let shape = c.truth.shape().clone();
        let mut vals = c.truth.values().to_vec();
        for (i, v) in vals.iter_mut().enumerate() {
            if unravel(&shape, i)[0] == 4 {
                *v = 1.0 - *v;
            }
        }
        perturbed.truth = DenseTensor::new(shape, vals).unwrap();
        let method = MetaMethod::Tensor { ranks: vec![3, 2, 2, 3] };
        let (a, oa) = loo_fold(&c, 4, &method, Censoring::None).unwrap();
        let (b, ob) = loo_fold(&perturbed, 4, &method, Censoring::None).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.prior_errors, b.prior_errors);
        assert_ne!(oa.errors(), ob.errors());
    }

    #[test]
    fn baseline_regret_matches_direct_computation() {
        let c = generate_synthetic(&small_spec(6)).unwrap();
        let config = LooConfig { budget_fractions: vec![0.5], ..Default::default() };
        let result = evaluate_loo(&c, &config, &[MetaMethod::Matrix { rank: 3 }]).unwrap();
        let e = matricize(&c.truth, 0).unwrap();
        for f in result.folds.iter().flatten() {
            // Mean of each pipeline over the other datasets.
            let mut means = vec![0.0; e.ncols()];
            for j in 0..e.ncols() {
                let mut s = 0.0;
                for i in (0..e.nrows()).filter(|&i| i != f.dataset) {
                    s += e[(i, j)];
                }
                means[j] = s / (e.nrows() - 1) as f64;
            }
            let mut b = 0;
            for j in 1..means.len() {
                if means[j] < means[b] {
                    b = j;
                }
            }
            let row_min = e.row(f.dataset).min();
            assert_eq!(f.baseline, b);
            assert!((f.baseline_regret - (e[(f.dataset, b)] - row_min)).abs() < 1e-15);
            assert!(f.curve.regrets.iter().all(|&r| r >= 0.0));
        }
    }

    #[test]
    fn regret_zero_when_best_is_observed() {
        let c = generate_synthetic(&small_spec(7)).unwrap();
        let config = LooConfig { budget_fractions: vec![1.0], ..Default::default() };
        let (f, reports) = evaluate_fold(&c, 0, &MetaMethod::Tensor { ranks: vec![3, 2, 2, 3] }, &config).unwrap();
        let row = matricize(&c.truth, 0).unwrap().row(0).clone_owned();
        let best = row.iter().copied().fold(f64::INFINITY, f64::min);
        if reports[0].best_observed.map(|(_, e)| e) == Some(best) {
            assert_eq!(f.curve.regrets[0], 0.0);
        }
        assert!(reports[0].budget_spent <= reports[0].total_budget);
    }

    #[test]
    fn loo_requires_three_datasets() {
        let mut spec = small_spec(8);
        spec.dims[0] = 2;
        spec.tucker_ranks[0] = 2;
        let c = generate_synthetic(&spec).unwrap();
        assert!(evaluate_loo(&c, &LooConfig::default(), &[MetaMethod::Matrix { rank: 1 }]).is_err());
    }
}
