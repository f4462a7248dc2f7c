//! Text file formats: observed tensors, runtime and size tables, run
//! configuration, meta-trained models and selection reports.
//!
//! Every reader has a `parse_*` twin taking `&str` so the parsers can be
//! exercised without touching the filesystem. Writers go through
//! [`write_atomic`], so a failed run never leaves a partial output behind.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::completion::{KfmcConfig, DEFAULT_EM_MAX_ITER, DEFAULT_EM_TOL};
use crate::error::{Error, Result};
use crate::harness::{Censoring, LooConfig, MetaMethod};
use crate::runtime::RuntimePredictor;
use crate::selection::{DatasetSize, MetaModel, Overhead, RoundLog, SelectionConfig, SelectionReport};
use crate::tensor::{DenseTensor, ObservedTensor, Shape};

pub const TENSOR_MAGIC: &str = "pipesel-tensor v1";
pub const RUNTIME_HEADER: &str = "dataset,pipeline,seconds";
pub const SIZES_HEADER: &str = "dataset,n_points,n_features";

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Reads a whole file; errors name the path.
pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn parse_f64(tok: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = tok.parse().map_err(|_| Error::parse(line, format!("{what} {tok:?} is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("{what} {tok:?} is not finite")));
    }
    Ok(v)
}

fn parse_usize(tok: &str, line: usize, what: &str) -> Result<usize> {
    tok.parse().map_err(|_| Error::parse(line, format!("{what} {tok:?} is not a nonnegative integer")))
}

/// Serializes observed entries in offset order; unobserved entries are omitted.
pub fn format_tensor(t: &ObservedTensor) -> String {
    let shape = t.shape();
    let mut out = String::new();
    out.push_str(TENSOR_MAGIC);
    out.push_str("\nshape");
    for d in shape.dims() {
        write!(out, " {d}").unwrap();
    }
    out.push('\n');
    let mut idx = vec![0; shape.order()];
    for (i, v) in t.data().values().iter().enumerate() {
        if !t.is_observed(i) {
            continue;
        }
        shape.unravel(i, &mut idx);
        for k in &idx {
            write!(out, "{k} ").unwrap();
        }
        writeln!(out, "{v:?}").unwrap();
    }
    out
}

pub fn parse_tensor(text: &str) -> Result<ObservedTensor> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    match lines.next() {
        Some((_, l)) if l.trim() == TENSOR_MAGIC => {}
        Some((n, l)) => return Err(Error::parse(n, format!("expected header {TENSOR_MAGIC:?}, found {l:?}"))),
        None => return Err(Error::parse(1, "empty file")),
    }
    let (n, shape_line) = lines.next().ok_or_else(|| Error::parse(2, "missing shape line"))?;
    let mut toks = shape_line.split_whitespace();
    if toks.next() != Some("shape") {
        return Err(Error::parse(n, "expected `shape d1 d2 ...`"));
    }
    let dims = toks.map(|t| parse_usize(t, n, "extent")).collect::<Result<Vec<_>>>()?;
    let shape = Shape::new(dims).map_err(|e| Error::parse(n, e))?;
    let order = shape.order();
    let mut values = vec![0.0; shape.len()];
    let mut mask = vec![0.0; shape.len()];
    let mut idx = vec![0; order];
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != order + 1 {
            return Err(Error::parse(n, format!("expected {} indices and a value, found {} fields", order, toks.len())));
        }
        for (k, tok) in toks[..order].iter().enumerate() {
            idx[k] = parse_usize(tok, n, "index")?;
            if idx[k] >= shape.dims()[k] {
                return Err(Error::parse(n, format!("index {} out of range for mode {k} of extent {}", idx[k], shape.dims()[k])));
            }
        }
        let off = shape.offset(&idx);
        if mask[off] == 1.0 {
            return Err(Error::parse(n, format!("duplicate entry {idx:?}")));
        }
        values[off] = parse_f64(toks[order], n, "value")?;
        mask[off] = 1.0;
    }
    ObservedTensor::new(DenseTensor::new(shape.clone(), values)?, DenseTensor::new(shape, mask)?)
}

pub fn read_tensor(path: &Path) -> Result<ObservedTensor> {
    parse_tensor(&read_text(path)?)
}

pub fn write_tensor(t: &ObservedTensor, path: &Path) -> Result<()> {
    write_atomic(path, format_tensor(t).as_bytes())
}

/// One row of a runtime table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRecord {
    pub dataset: usize,
    pub pipeline: usize,
    pub seconds: f64,
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes())
}

fn csv_rows(text: &str, header: &str) -> Result<Vec<(usize, csv::StringRecord)>> {
    let width = header.split(',').count();
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (i, rec) in csv_reader(text).into_records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(i + 1, e))?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if !saw_header {
            let got: Vec<&str> = rec.iter().collect();
            if got.join(",") != header {
                return Err(Error::parse(line, format!("expected header {header:?}")));
            }
            saw_header = true;
            continue;
        }
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != width {
            return Err(Error::parse(line, format!("expected {width} fields, found {}", rec.len())));
        }
        rows.push((line, rec));
    }
    if !saw_header {
        return Err(Error::parse(1, "empty file"));
    }
    Ok(rows)
}

/// Parses `dataset,pipeline,seconds` rows. Seconds must be positive and each
/// (dataset, pipeline) pair may appear once.
pub fn parse_runtimes(text: &str) -> Result<Vec<RuntimeRecord>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (line, rec) in csv_rows(text, RUNTIME_HEADER)? {
        let r = RuntimeRecord {
            dataset: parse_usize(&rec[0], line, "dataset")?,
            pipeline: parse_usize(&rec[1], line, "pipeline")?,
            seconds: parse_f64(&rec[2], line, "seconds")?,
        };
        if r.seconds <= 0.0 {
            return Err(Error::parse(line, format!("runtime {} is not positive", r.seconds)));
        }
        if !seen.insert((r.dataset, r.pipeline)) {
            return Err(Error::parse(line, format!("duplicate entry for dataset {} pipeline {}", r.dataset, r.pipeline)));
        }
        out.push(r);
    }
    Ok(out)
}

pub fn format_runtimes(records: &[RuntimeRecord]) -> String {
    let mut out = format!("{RUNTIME_HEADER}\n");
    for r in records {
        writeln!(out, "{},{},{:?}", r.dataset, r.pipeline, r.seconds).unwrap();
    }
    out
}

/// Rows of a runtime tensor, one per entry, in offset order; the pipeline
/// index is the column of the dataset unfolding.
pub fn runtime_records(runtimes: &DenseTensor) -> Result<Vec<RuntimeRecord>> {
    let m = crate::tensor::matricize(runtimes, 0)?;
    Ok((0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| RuntimeRecord { dataset: i, pipeline: j, seconds: m[(i, j)] })
        .collect())
}

/// Dense runtime tensor of `shape` from records covering every entry.
pub fn runtime_tensor(records: &[RuntimeRecord], shape: &Shape) -> Result<DenseTensor> {
    let m = shape.dims()[0];
    let n = shape.len() / m;
    let mut mat = DMatrix::from_element(m, n, f64::NAN);
    for r in records {
        if r.dataset >= m || r.pipeline >= n {
            return Err(Error::arg(format!("runtime for dataset {} pipeline {} outside {m} x {n}", r.dataset, r.pipeline)));
        }
        mat[(r.dataset, r.pipeline)] = r.seconds;
    }
    if let Some(k) = mat.iter().position(|v| v.is_nan()) {
        return Err(Error::arg(format!("no runtime for dataset {} pipeline {}", k % m, k / m)));
    }
    crate::tensor::fold(&mat, 0, shape)
}

pub fn read_runtimes(path: &Path) -> Result<Vec<RuntimeRecord>> {
    parse_runtimes(&read_text(path)?)
}

pub fn parse_sizes(text: &str) -> Result<Vec<DatasetSize>> {
    let mut out = Vec::new();
    for (line, rec) in csv_rows(text, SIZES_HEADER)? {
        let d = parse_usize(&rec[0], line, "dataset")?;
        if d != out.len() {
            return Err(Error::parse(line, format!("expected dataset {}, found {d}", out.len())));
        }
        let n_points = parse_usize(&rec[1], line, "n_points")? as u64;
        let n_features = parse_usize(&rec[2], line, "n_features")? as u64;
        if n_points == 0 || n_features == 0 {
            return Err(Error::parse(line, "dataset sizes must be positive"));
        }
        out.push(DatasetSize { n_points, n_features });
    }
    Ok(out)
}

pub fn format_sizes(sizes: &[DatasetSize]) -> String {
    let mut out = format!("{SIZES_HEADER}\n");
    for (i, s) in sizes.iter().enumerate() {
        writeln!(out, "{i},{},{}", s.n_points, s.n_features).unwrap();
    }
    out
}

pub fn read_sizes(path: &Path) -> Result<Vec<DatasetSize>> {
    parse_sizes(&read_text(path)?)
}

/// Every tunable, as one flat document. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,

    pub dims: Vec<usize>,
    pub tucker_ranks: Vec<usize>,
    pub noise_std: f64,
    pub runtime_jitter: f64,

    pub em_max_iter: usize,
    pub em_tol: f64,
    pub matrix_rank: usize,

    pub kfmc_rank: usize,
    /// 0 selects the median pairwise distance.
    pub kfmc_sigma: f64,
    pub kfmc_beta: f64,
    pub kfmc_eta: f64,
    pub kfmc_n_batch: usize,
    pub kfmc_n_iter: usize,
    pub kfmc_n_pass: usize,
    pub kfmc_alpha: f64,

    pub total_budget: f64,
    pub initial_fraction: f64,
    /// 0 selects the rank from `energy_fraction`.
    pub initial_rank: usize,
    pub top_n: usize,
    pub ensemble_size: usize,
    pub energy_fraction: f64,
    /// `fixed` or `wall-clock`.
    pub overhead: String,
    pub overhead_seconds: f64,

    pub budget_fractions: Vec<f64>,
    /// `none`, `runtime` or `uniform`.
    pub censoring: String,
    pub censor_threshold: f64,
    pub missing_ratio: f64,
    /// Any of `tensor`, `matrix`, `kernel`.
    pub methods: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let kfmc = KfmcConfig::default();
        let sel = SelectionConfig::new(1.0);
        let loo = LooConfig::default();
        RunConfig {
            seed: 0,
            dims: vec![30, 2, 2, 2, 3, 20],
            tucker_ranks: vec![5, 2, 2, 2, 2, 4],
            noise_std: 0.0,
            runtime_jitter: 0.2,
            em_max_iter: DEFAULT_EM_MAX_ITER,
            em_tol: DEFAULT_EM_TOL,
            matrix_rank: 5,
            kfmc_rank: kfmc.rank,
            kfmc_sigma: kfmc.sigma.unwrap_or(0.0),
            kfmc_beta: kfmc.beta,
            kfmc_eta: kfmc.eta,
            kfmc_n_batch: kfmc.n_batch,
            kfmc_n_iter: kfmc.n_iter,
            kfmc_n_pass: kfmc.n_pass,
            kfmc_alpha: kfmc.alpha,
            total_budget: 60.0,
            initial_fraction: loo.initial_fraction,
            initial_rank: 0,
            top_n: sel.top_n,
            ensemble_size: sel.ensemble_size,
            energy_fraction: sel.energy_fraction,
            overhead: "fixed".into(),
            overhead_seconds: 0.0,
            budget_fractions: loo.budget_fractions,
            censoring: "none".into(),
            censor_threshold: f64::INFINITY,
            missing_ratio: 0.0,
            methods: vec!["tensor".into(), "matrix".into()],
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::arg(msg()))
    }
}

impl RunConfig {
    /// Layers `overrides` (`key=value`, value in TOML syntax or a bare string)
    /// over the document `text` over the defaults, then range-checks.
    pub fn resolve(text: Option<&str>, overrides: &[String]) -> Result<RunConfig> {
        let mut table: toml::Table = match text {
            Some(t) => t.parse().map_err(|e: toml::de::Error| config_error(&e, t))?,
            None => toml::Table::new(),
        };
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::arg(format!("override {o:?} is not key=value")))?;
            let key = key.trim();
            let raw = raw.trim();
            let value = format!("v = {raw}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            table.insert(key.to_string(), value);
        }
        let cfg = RunConfig::deserialize(toml::Value::Table(table)).map_err(|e| Error::arg(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::resolve(Some(text), &[])
    }

    pub fn read(path: &Path) -> Result<RunConfig> {
        RunConfig::parse(&read_text(path)?)
    }

    /// The resolved document, one `key = value` per line.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        check(self.dims.len() >= 2 && self.dims.iter().all(|&d| d >= 1), || "dims needs at least two positive extents".into())?;
        check(self.tucker_ranks.len() == self.dims.len(), || "tucker_ranks must match dims in length".into())?;
        check(
            self.tucker_ranks.iter().zip(&self.dims).all(|(&r, &d)| r >= 1 && r <= d),
            || "tucker_ranks must lie in 1..=dims".into(),
        )?;
        check(nonneg(self.noise_std), || format!("noise_std {} must be nonnegative", self.noise_std))?;
        check(nonneg(self.runtime_jitter), || format!("runtime_jitter {} must be nonnegative", self.runtime_jitter))?;
        check(self.em_max_iter >= 1, || "em_max_iter must be at least 1".into())?;
        check(nonneg(self.em_tol), || format!("em_tol {} must be nonnegative", self.em_tol))?;
        check(self.matrix_rank >= 1, || "matrix_rank must be at least 1".into())?;
        self.kfmc().validate()?;
        self.selection(self.total_budget)?.validate()?;
        check(pos(self.total_budget), || format!("total_budget {} must be positive", self.total_budget))?;
        check(
            self.initial_fraction > 0.0 && self.initial_fraction <= 0.5,
            || format!("initial_fraction {} outside (0, 0.5]", self.initial_fraction),
        )?;
        check(
            !self.budget_fractions.is_empty()
                && self.budget_fractions.iter().all(|f| *f > 0.0 && *f <= 1.0)
                && self.budget_fractions.windows(2).all(|w| w[0] < w[1]),
            || "budget_fractions must increase within (0, 1]".into(),
        )?;
        check(self.censor_threshold > 0.0, || format!("censor_threshold {} must be positive", self.censor_threshold))?;
        check((0.0..1.0).contains(&self.missing_ratio), || format!("missing_ratio {} outside [0, 1)", self.missing_ratio))?;
        self.censoring()?;
        check(!self.methods.is_empty(), || "methods must not be empty".into())?;
        self.methods()?;
        Ok(())
    }

    pub fn kfmc(&self) -> KfmcConfig {
        KfmcConfig {
            rank: self.kfmc_rank,
            sigma: (self.kfmc_sigma > 0.0).then_some(self.kfmc_sigma),
            beta: self.kfmc_beta,
            eta: self.kfmc_eta,
            n_batch: self.kfmc_n_batch,
            n_iter: self.kfmc_n_iter,
            n_pass: self.kfmc_n_pass,
            alpha: self.kfmc_alpha,
            seed: self.seed,
        }
    }

    pub fn overhead(&self) -> Result<Overhead> {
        match self.overhead.as_str() {
            "fixed" => Ok(Overhead::Fixed { seconds: self.overhead_seconds }),
            "wall-clock" => Ok(Overhead::WallClock),
            other => Err(Error::arg(format!("overhead {other:?} is not fixed or wall-clock"))),
        }
    }

    pub fn selection(&self, total_budget: f64) -> Result<SelectionConfig> {
        Ok(SelectionConfig {
            total_budget,
            initial_time_target: total_budget * self.initial_fraction,
            initial_rank: (self.initial_rank > 0).then_some(self.initial_rank),
            top_n: self.top_n,
            ensemble_size: self.ensemble_size,
            energy_fraction: self.energy_fraction,
            overhead: self.overhead()?,
        })
    }

    pub fn censoring(&self) -> Result<Censoring> {
        match self.censoring.as_str() {
            "none" => Ok(Censoring::None),
            "runtime" => {
                check(self.censor_threshold > 0.0, || "censor_threshold must be positive".into())?;
                Ok(Censoring::Runtime { threshold: self.censor_threshold })
            }
            "uniform" => {
                check(
                    (0.0..1.0).contains(&self.missing_ratio),
                    || format!("missing_ratio {} outside [0, 1)", self.missing_ratio),
                )?;
                Ok(Censoring::Uniform { ratio: self.missing_ratio, seed: self.seed })
            }
            other => Err(Error::arg(format!("censoring {other:?} is not none, runtime or uniform"))),
        }
    }

    pub fn methods(&self) -> Result<Vec<MetaMethod>> {
        self.methods
            .iter()
            .map(|m| match m.as_str() {
                "tensor" => Ok(MetaMethod::Tensor { ranks: self.tucker_ranks.clone() }),
                "matrix" => Ok(MetaMethod::Matrix { rank: self.matrix_rank }),
                "kernel" => Ok(MetaMethod::Kernel { rank: self.matrix_rank, config: self.kfmc() }),
                other => Err(Error::arg(format!("method {other:?} is not tensor, matrix or kernel"))),
            })
            .collect()
    }

    pub fn loo(&self) -> Result<LooConfig> {
        let sel = self.selection(1.0)?;
        Ok(LooConfig {
            budget_fractions: self.budget_fractions.clone(),
            censoring: self.censoring()?,
            top_n: sel.top_n,
            ensemble_size: sel.ensemble_size,
            energy_fraction: sel.energy_fraction,
            initial_fraction: self.initial_fraction,
            initial_rank: sel.initial_rank,
            overhead: sel.overhead,
        })
    }
}

fn config_error(e: &toml::de::Error, text: &str) -> Error {
    let line = e.span().map_or(1, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    Error::parse(line, e.message())
}

/// On-disk form of [`MetaModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    /// Rows of the embedding matrix.
    y: Vec<Vec<f64>>,
    singular_values: Vec<f64>,
    prior_errors: Vec<f64>,
    runtime_predictors: Vec<RuntimePredictor>,
}

const MODEL_FORMAT: &str = "pipesel-model v1";

pub fn format_model(m: &MetaModel) -> String {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        y: m.y.row_iter().map(|r| r.iter().copied().collect()).collect(),
        singular_values: m.singular_values.clone(),
        prior_errors: m.prior_errors.clone(),
        runtime_predictors: m.runtime_predictors.clone(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
    s.push('\n');
    s
}

pub fn parse_model(text: &str) -> Result<MetaModel> {
    let f: ModelFile = serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e))?;
    if f.format != MODEL_FORMAT {
        return Err(Error::parse(1, format!("expected format {MODEL_FORMAT:?}, found {:?}", f.format)));
    }
    let k = f.y.len();
    let n = f.y.first().map_or(0, Vec::len);
    if k == 0 || n == 0 || f.y.iter().any(|r| r.len() != n) {
        return Err(Error::arg("embedding rows must be nonempty and equally long"));
    }
    if f.prior_errors.len() != n || f.runtime_predictors.len() != n {
        return Err(Error::arg("model components disagree on the pipeline count"));
    }
    Ok(MetaModel {
        y: DMatrix::from_fn(k, n, |i, j| f.y[i][j]),
        singular_values: f.singular_values,
        prior_errors: f.prior_errors,
        runtime_predictors: f.runtime_predictors,
    })
}

/// One line of a report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case", deny_unknown_fields)]
enum ReportLine {
    Round(RoundLog),
    Summary {
        final_ranking: Vec<usize>,
        final_ensemble: Vec<usize>,
        total_budget: f64,
        budget_spent: f64,
        best_observed: Option<(usize, f64)>,
    },
}

/// JSON Lines: one `round` record per round, then one `summary` record.
pub fn format_report(r: &SelectionReport) -> String {
    let mut out = String::new();
    for round in &r.rounds {
        out.push_str(&serde_json::to_string(&ReportLine::Round(round.clone())).expect("round serializes"));
        out.push('\n');
    }
    let summary = ReportLine::Summary {
        final_ranking: r.final_ranking.clone(),
        final_ensemble: r.final_ensemble.clone(),
        total_budget: r.total_budget,
        budget_spent: r.budget_spent,
        best_observed: r.best_observed,
    };
    out.push_str(&serde_json::to_string(&summary).expect("summary serializes"));
    out.push('\n');
    out
}

pub fn parse_report(text: &str) -> Result<SelectionReport> {
    let mut rounds = Vec::new();
    let mut summary = None;
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if summary.is_some() {
            return Err(Error::parse(n, "record after the summary"));
        }
        match serde_json::from_str::<ReportLine>(line).map_err(|e| Error::parse(n, e))? {
            ReportLine::Round(r) => {
                if r.round != rounds.len() {
                    return Err(Error::parse(n, format!("expected round {}, found {}", rounds.len(), r.round)));
                }
                if r.observed_errors.len() != r.designed_set.len() {
                    return Err(Error::parse(n, "observed errors do not align with the designed set"));
                }
                rounds.push(r);
            }
            ReportLine::Summary { final_ranking, final_ensemble, total_budget, budget_spent, best_observed } => {
                summary = Some(SelectionReport {
                    rounds: Vec::new(),
                    final_ranking,
                    final_ensemble,
                    total_budget,
                    budget_spent,
                    best_observed,
                });
            }
        }
    }
    let mut report = summary.ok_or_else(|| Error::parse(text.lines().count().max(1), "missing summary record"))?;
    report.rounds = rounds;
    Ok(report)
}

pub fn read_report(path: &Path) -> Result<SelectionReport> {
    parse_report(&read_text(path)?)
}

/// Plain-text digest of a report.
pub fn summarize_report(r: &SelectionReport) -> String {
    let mut out = String::new();
    writeln!(out, "budget: {:.3} s of {:.3} s spent over {} rounds", r.budget_spent, r.total_budget, r.rounds.len()).unwrap();
    for round in &r.rounds {
        let observed = round.observed_errors.iter().filter(|e| e.is_some()).count();
        write!(
            out,
            "round {}: target {:.3} s, rank {}, designed {}, observed {}",
            round.round,
            round.time_target,
            round.rank_used,
            round.designed_set.len(),
            observed
        )
        .unwrap();
        if round.design_fallback {
            out.push_str(", fallback design");
        }
        if let Some(v) = round.validation_error {
            write!(out, ", validation {v:.4}").unwrap();
        }
        out.push('\n');
    }
    match r.best_observed {
        Some((j, e)) => writeln!(out, "best observed: pipeline {j} with error {e:.4}").unwrap(),
        None => out.push_str("best observed: none\n"),
    }
    let top: Vec<String> = r.final_ranking.iter().take(10).map(|j| j.to_string()).collect();
    writeln!(out, "top predicted: {}", top.join(" ")).unwrap();
    let ens: Vec<String> = r.final_ensemble.iter().map(|j| j.to_string()).collect();
    writeln!(out, "ensemble: {}", if ens.is_empty() { "none".into() } else { ens.join(" ") }).unwrap();
    out
}
