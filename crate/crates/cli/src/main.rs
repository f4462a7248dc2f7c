use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pipesel::completion::{em_matrix, em_tucker, kfmc_fit};
use pipesel::design::{time_constrained_design, DesignPool};
use pipesel::factorization::TuckerRanks;
use pipesel::harness::{build_meta_model, evaluate_loo, generate_synthetic, Corpus, MetaMethod, RuntimeLaw, SyntheticSpec};
use pipesel::io::{self, RunConfig};
use pipesel::selection::{run_online, TableOracle};
use pipesel::tensor::{fold, matricize, DenseTensor, ObservedTensor};
use pipesel::{Error, Result};

/// Meta-learning pipeline selection under a time budget.
#[derive(Parser)]
#[command(name = "pipesel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set top_n=8`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    /// Flags over file over defaults; the resolved document goes to stderr.
    fn resolve(&self) -> Result<RunConfig> {
        let text = self.config.as_deref().map(io::read_text).transpose()?;
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        let cfg = RunConfig::resolve(text.as_deref(), &overrides)?;
        eprintln!("# resolved configuration\n{}", cfg.to_toml());
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    EmTucker,
    EmMatrix,
    Kfmc,
}

#[derive(Subcommand)]
enum Command {
    /// Write a planted synthetic corpus: errors.tensor, runtimes.csv, sizes.csv.
    Generate {
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Complete a partially observed tensor; optionally meta-train a model.
    Complete {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration error history as CSV.
        #[arg(long)]
        history: Option<PathBuf>,
        /// Runtime table of the training datasets (needed for --model-out).
        #[arg(long)]
        runtimes: Option<PathBuf>,
        #[arg(long)]
        sizes: Option<PathBuf>,
        /// Write the meta-trained model here.
        #[arg(long)]
        model_out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Pick pipelines to observe within a time budget.
    Design {
        /// Order-2 tensor file holding the k x n pipeline embeddings.
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        runtimes: PathBuf,
        /// Dataset whose runtime rows are used.
        #[arg(long, default_value_t = 0)]
        dataset: usize,
        #[arg(long)]
        budget: f64,
        /// Use only the leading rows of the embeddings.
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the online stage against a held-out dataset.
    Select {
        #[arg(long)]
        model: PathBuf,
        /// Error tensor whose dataset slice plays the oracle.
        #[arg(long)]
        errors: PathBuf,
        #[arg(long)]
        runtimes: PathBuf,
        #[arg(long)]
        sizes: PathBuf,
        #[arg(long)]
        dataset: usize,
        /// Total budget in seconds; defaults to `total_budget` from the config.
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Leave-one-dataset-out evaluation: regret.csv and ranking.csv.
    Evaluate {
        #[arg(long)]
        errors: PathBuf,
        #[arg(long)]
        runtimes: PathBuf,
        #[arg(long)]
        sizes: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Summarize a selection report.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("{}: {msg}", e.code());
            ExitCode::FAILURE
        }
    }
}

fn load_corpus(errors: &Path, runtimes: &Path, sizes: &Path) -> Result<Corpus> {
    let obs = io::read_tensor(errors)?;
    if obs.missing_ratio() > 0.0 {
        return Err(Error::InvalidArgument(format!("{} has missing entries; complete it first", errors.display())));
    }
    let runtimes = io::runtime_tensor(&io::read_runtimes(runtimes)?, obs.shape())?;
    Corpus::new(obs.data().clone(), runtimes, io::read_sizes(sizes)?)
}

fn write_all(files: &[(PathBuf, String)]) -> Result<()> {
    for (path, text) in files {
        io::write_atomic(path, text.as_bytes())?;
    }
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate { out_dir, cfg } => {
            let cfg = cfg.resolve()?;
            let estimators = *cfg.dims.last().unwrap();
            let mut law = RuntimeLaw::random(estimators, cfg.seed ^ 0x5eed);
            law.jitter = cfg.runtime_jitter;
            let spec = SyntheticSpec {
                dims: cfg.dims.clone(),
                tucker_ranks: cfg.tucker_ranks.clone(),
                noise_std: cfg.noise_std,
                runtime_law: law,
                seed: cfg.seed,
            };
            let c = generate_synthetic(&spec)?;
            std::fs::create_dir_all(&out_dir)?;
            write_all(&[
                (out_dir.join("errors.tensor"), io::format_tensor(&ObservedTensor::fully_observed(c.truth))),
                (out_dir.join("runtimes.csv"), io::format_runtimes(&io::runtime_records(&c.runtimes)?)),
                (out_dir.join("sizes.csv"), io::format_sizes(&c.sizes)),
            ])
        }
        Command::Complete { input, method, out, history, runtimes, sizes, model_out, cfg } => {
            let cfg = cfg.resolve()?;
            let t = io::read_tensor(&input)?;
            let (completed, hist, meta) = match method {
                Method::EmTucker => {
                    let ranks = TuckerRanks::new(cfg.tucker_ranks.clone(), t.shape().dims())?;
                    let r = em_tucker(&t, &ranks, cfg.em_max_iter, cfg.em_tol)?;
                    (r.completed, r.relative_error_history, MetaMethod::Tensor { ranks: cfg.tucker_ranks.clone() })
                }
                Method::EmMatrix => {
                    let r = em_matrix(&t, 0, cfg.matrix_rank, cfg.em_max_iter, cfg.em_tol)?;
                    (r.completed, r.relative_error_history, MetaMethod::Matrix { rank: cfg.matrix_rank })
                }
                Method::Kfmc => {
                    let data = matricize(t.data(), 0)?;
                    let mask = matricize(t.mask(), 0)?;
                    let obs = ObservedTensor::new(DenseTensor::from_matrix(&data)?, DenseTensor::from_matrix(&mask)?)?;
                    let fit = kfmc_fit(&obs, &cfg.kfmc())?;
                    let completed = fold(&fit.completed, 0, t.shape())?;
                    (completed, fit.objective_history, MetaMethod::Kernel { rank: cfg.matrix_rank, config: cfg.kfmc() })
                }
            };
            let mut files = vec![(out, io::format_tensor(&ObservedTensor::fully_observed(completed.clone())))];
            if let Some(path) = history {
                let mut text = String::from("iteration,value\n");
                for (i, v) in hist.iter().enumerate() {
                    text.push_str(&format!("{},{v:?}\n", i + 1));
                }
                files.push((path, text));
            }
            if let Some(path) = model_out {
                let (Some(rt), Some(sz)) = (runtimes, sizes) else {
                    return Err(Error::InvalidArgument("--model-out needs --runtimes and --sizes".into()));
                };
                let rt = io::runtime_tensor(&io::read_runtimes(&rt)?, t.shape())?;
                let sz = io::read_sizes(&sz)?;
                let model = build_meta_model(&completed, &t, &rt, &sz, &meta)?;
                files.push((path, io::format_model(&model)));
            }
            write_all(&files)
        }
        Command::Design { embeddings, runtimes, dataset, budget, rank, out } => {
            let y = io::read_tensor(&embeddings)?;
            if y.shape().order() != 2 || y.missing_ratio() > 0.0 {
                return Err(Error::InvalidArgument("embeddings must be a fully observed order-2 tensor".into()));
            }
            let mut y = y.data().to_matrix()?;
            if let Some(k) = rank {
                if k < 1 || k > y.nrows() {
                    return Err(Error::InvalidArgument(format!("rank {k} outside 1..={}", y.nrows())));
                }
                y = y.rows(0, k).clone_owned();
            }
            let n = y.ncols();
            let mut t = vec![f64::NAN; n];
            for r in io::read_runtimes(&runtimes)?.into_iter().filter(|r| r.dataset == dataset) {
                if r.pipeline >= n {
                    return Err(Error::InvalidArgument(format!("runtime for pipeline {} but only {n} embeddings", r.pipeline)));
                }
                t[r.pipeline] = r.seconds;
            }
            if let Some(j) = t.iter().position(|v| v.is_nan()) {
                return Err(Error::InvalidArgument(format!("no runtime for dataset {dataset} pipeline {j}")));
            }
            let design = time_constrained_design(&DesignPool::new(y, t)?, budget)?;
            let mut text = String::from("pipeline\n");
            for j in &design.selected {
                text.push_str(&format!("{j}\n"));
            }
            if design.fallback {
                eprintln!("note: fewer than k pipelines fit the initialization budget; fastest-first fallback used");
            }
            match out {
                Some(path) => io::write_atomic(&path, text.as_bytes()),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Select { model, errors, runtimes, sizes, dataset, budget, out, cfg } => {
            let cfg = cfg.resolve()?;
            let model = io::parse_model(&io::read_text(&model)?)?;
            let corpus = load_corpus(&errors, &runtimes, &sizes)?;
            if dataset >= corpus.n_datasets() {
                return Err(Error::InvalidArgument(format!("dataset {dataset} outside 0..{}", corpus.n_datasets())));
            }
            let row = |t: &DenseTensor| -> Result<Vec<f64>> { Ok(matricize(t, 0)?.row(dataset).iter().copied().collect()) };
            let oracle = TableOracle::new(row(&corpus.truth)?, row(&corpus.runtimes)?)?;
            let selection = cfg.selection(budget.unwrap_or(cfg.total_budget))?;
            let report = run_online(&model, corpus.sizes[dataset], &oracle, &selection)?;
            io::write_atomic(&out, io::format_report(&report).as_bytes())
        }
        Command::Evaluate { errors, runtimes, sizes, out_dir, cfg } => {
            let cfg = cfg.resolve()?;
            let corpus = load_corpus(&errors, &runtimes, &sizes)?;
            let result = evaluate_loo(&corpus, &cfg.loo()?, &cfg.methods()?)?;
            for (i, f) in result.folds.iter().enumerate() {
                if let Err(msg) = f {
                    eprintln!("fold {i} failed: {msg}");
                }
            }
            std::fs::create_dir_all(&out_dir)?;
            write_all(&[
                (out_dir.join("regret.csv"), result.regret_table()),
                (out_dir.join("ranking.csv"), result.ranking_table()),
            ])
        }
        Command::Report { input, out } => {
            let text = io::summarize_report(&io::read_report(&input)?);
            match out {
                Some(path) => io::write_atomic(&path, text.as_bytes()),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}
