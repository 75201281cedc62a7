mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use snn_core::encoder::EncodingParams;
use snn_core::evaluator::evaluate;
use snn_core::hyper::HyperParams;
use snn_core::mnist::{self, Dataset};
use snn_core::network::Phase;
use snn_core::report::{self, ReportRow};
use snn_core::search::{self, SearchConfig};
use snn_core::state::{self, merge_states, TrainedState};
use snn_core::trainer::{train_parallel_diversity, TrainConfig};
use snn_core::SnnError;

use manifest::{Resolved, RunManifest, MANIFEST};

const TRAIN_LEN: usize = 60_000;

#[derive(Parser)]
#[command(name = "snn", version, about = "Train, merge, evaluate and tune spiking digit classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Directory holding the four MNIST IDX files (optionally gzipped).
    #[arg(long, env = "SNN_DATA_DIR", default_value = "data/mnist")]
    data_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network per worker and write one .snnw file each.
    Train {
        /// JSON training configuration; omitted fields take defaults.
        #[arg(long)]
        config: PathBuf,
        /// Training stimuli per worker.
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        /// ranked.csv from a search; worker k uses its k-th best configuration.
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long)]
        allow_overlap: bool,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, env = "SNN_SEED")]
        seed: Option<u64>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge every .snnw in a directory and evaluate it on the test set.
    Eval {
        #[arg(long)]
        models: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        n_test: usize,
        #[arg(long, env = "SNN_SEED", default_value_t = 0)]
        seed: u64,
        /// Optional JSON encoding parameters.
        #[arg(long)]
        encoding: Option<PathBuf>,
        /// Row label in metrics.csv (defaults to the models directory name).
        #[arg(long)]
        config_id: Option<String>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random hyperparameter search; writes ranked.csv.
    Search {
        /// Optional JSON search configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long, default_value_t = 10_000)]
        n_train: usize,
        #[arg(long, default_value_t = 1_000)]
        n_val: usize,
        /// Hidden layer sizes, e.g. `10` or `10,10`.
        #[arg(long, value_delimiter = ',')]
        layers: Option<Vec<usize>>,
        /// ranked.csv of a single-layer search (required for multi-layer).
        #[arg(long)]
        validated: Option<PathBuf>,
        /// Also evaluate the validated base configuration.
        #[arg(long)]
        inject_base: bool,
        #[arg(long, env = "SNN_SEED")]
        seed: Option<u64>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate metrics from eval directories into CSVs and SVG charts.
    Report {
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run a command from its manifest.json.
    Replay {
        manifest: PathBuf,
        /// Write to this directory instead of the recorded one.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Error carrying its process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn code_of(e: &SnnError) -> u8 {
    match e {
        SnnError::AtStimulus { source, .. } => code_of(source),
        e if e.is_numeric() => 4,
        SnnError::BadSpec(_)
        | SnnError::BadRange { .. }
        | SnnError::InsufficientData { .. }
        | SnnError::PoolTooSmall { .. } => 2,
        _ => 3,
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = error
            .chain()
            .find_map(|c| c.downcast_ref::<SnnError>())
            .map(code_of)
            .unwrap_or(3);
        Failure { code, error }
    }
}

impl From<SnnError> for Failure {
    fn from(e: SnnError) -> Self {
        Failure { code: code_of(&e), error: e.into() }
    }
}

impl From<snn_core::DataError> for Failure {
    fn from(e: snn_core::DataError) -> Self {
        SnnError::from(e).into()
    }
}

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure { code: 2, error: anyhow!("{msg}") }
}

type Outcome<T> = Result<T, Failure>;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Outcome<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(|e| Failure { code: 2, error: e })?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn resolve(command: Command) -> Outcome<Resolved> {
    Ok(match command {
        Command::Train { config, n_train, workers, pool, allow_overlap, epochs, seed, data, out } => {
            let mut cfg: TrainConfig = read_json(&config)?;
            if let Some(n) = n_train {
                cfg.n_train = n;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.allow_overlap |= allow_overlap;
            if cfg.workers == 0 {
                return Err(usage("--workers must be at least 1"));
            }
            if let Some(path) = pool {
                let records = search::read_ranked_csv(&path)?;
                cfg.diversity_pool = Some(search::diversity_pool(&records, cfg.workers)?);
            }
            if cfg.hyper.len() != cfg.layer_sizes.len() {
                if cfg.hyper.len() == 1 {
                    cfg.hyper = vec![cfg.hyper[0]; cfg.layer_sizes.len()];
                } else {
                    return Err(usage("config: need one hyper entry per layer (or exactly one)"));
                }
            }
            Resolved::Train { config: cfg, data_dir: data.data_dir, out }
        }
        Command::Eval { models, n_test, seed, encoding, config_id, data, out } => {
            let encoding = match encoding {
                Some(p) => read_json(&p)?,
                None => EncodingParams::default(),
            };
            let config_id = config_id.unwrap_or_else(|| {
                models
                    .file_name()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "model".into())
            });
            Resolved::Eval { models, n_test, seed, encoding, config_id, data_dir: data.data_dir, out }
        }
        Command::Search { config, budget, n_train, n_val, layers, validated, inject_base, seed, data, out } => {
            let mut cfg: SearchConfig = match config {
                Some(p) => read_json(&p)?,
                None => SearchConfig::default(),
            };
            if let Some(b) = budget {
                cfg.budget = b;
            }
            if cfg.budget == 0 {
                return Err(usage("--budget must be at least 1"));
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(l) = layers {
                cfg.layer_sizes = l;
            }
            if inject_base {
                cfg.extra.push(HyperParams::base());
            }
            if cfg.layer_sizes.len() > 1 && validated.is_none() {
                return Err(usage("multi-layer search needs --validated ranked.csv"));
            }
            if n_train + n_val > TRAIN_LEN {
                return Err(usage("--n-train plus --n-val exceeds the training file"));
            }
            Resolved::Search { config: cfg, n_train, n_val, validated, data_dir: data.data_dir, out }
        }
        Command::Report { inputs, out } => Resolved::Report { inputs, out },
        Command::Replay { .. } => unreachable!("replay is resolved from its manifest"),
    })
}

fn state_files(dir: &Path) -> Outcome<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == state::EXTENSION))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure { code: 3, error: anyhow!("no .{} files in {}", state::EXTENSION, dir.display()) });
    }
    Ok(files)
}

struct Done {
    seeds: Vec<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<String>,
}

fn execute(run: &Resolved) -> Outcome<Done> {
    let out = run.out();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match run {
        Resolved::Train { config, data_dir, out } => {
            let train = mnist::load_pair(data_dir, mnist::TRAIN_IMAGES, mnist::TRAIN_LABELS, true)?;
            let states = train_parallel_diversity(&train, config)?;
            let mut outputs = Vec::new();
            for st in &states {
                let name = format!("worker_{:03}.{}", st.provenance.worker, state::EXTENSION);
                st.save(&out.join(&name))?;
                outputs.push(name);
            }
            let seeds = states.iter().map(|s| s.provenance.seed).collect();
            Ok(Done { seeds, inputs: vec![data_dir.clone()], outputs })
        }
        Resolved::Eval { models, n_test, seed, encoding, config_id, data_dir, out } => {
            let files = state_files(models)?;
            let states = files
                .iter()
                .map(|p| TrainedState::load(p))
                .collect::<Result<Vec<_>, _>>()?;
            let mut net = merge_states(&states)?;
            net.set_phase(Phase::Eval);
            let test = mnist::load_pair(data_dir, mnist::TEST_IMAGES, mnist::TEST_LABELS, true)?;
            let test = test.take_subset(0, *n_test, None)?;
            let metrics = evaluate(&net, &test, encoding, *seed)?;
            let layers: Vec<usize> = (0..net.n_layers).map(|l| net.layer_size(l)).collect();
            let n_train = states.iter().map(|s| s.provenance.n_train).max().unwrap_or(0);
            let row = ReportRow::from_metrics(config_id.clone(), n_train, states.len(), &layers, &metrics);
            let outputs = report::write_report(&[row], out)?;
            let mut inputs = files;
            inputs.push(data_dir.clone());
            Ok(Done { seeds: vec![*seed], inputs, outputs })
        }
        Resolved::Search { config, n_train, n_val, validated, data_dir, out } => {
            let all = mnist::load_pair(data_dir, mnist::TRAIN_IMAGES, mnist::TRAIN_LABELS, true)?;
            let train: Dataset = all.take_subset(0, *n_train, None)?;
            let val = all.take_subset(all.len() - n_val, *n_val, None)?;
            let pool = match validated {
                Some(p) => search::read_ranked_csv(p)?
                    .into_iter()
                    .filter(|r| r.failure.is_none())
                    .map(|r| r.config)
                    .collect(),
                None => Vec::new(),
            };
            let records = search::random_search(&train, &val, config, &pool)?;
            let name = "ranked.csv".to_string();
            search::write_ranked_csv(&records, &out.join(&name))?;
            let mut inputs = vec![data_dir.clone()];
            inputs.extend(validated.clone());
            Ok(Done { seeds: records.iter().map(|r| r.seed).collect(), inputs, outputs: vec![name] })
        }
        Resolved::Report { inputs, out } => {
            let mut rows = Vec::new();
            for dir in inputs {
                rows.extend(report::read_report(dir)?);
            }
            let outputs = report::write_report(&rows, out)?;
            Ok(Done { seeds: Vec::new(), inputs: inputs.clone(), outputs })
        }
    }
}

fn run_and_record(run: Resolved) -> Outcome<()> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
    let clock = Instant::now();
    let done = execute(&run)?;
    let manifest = RunManifest {
        run,
        seeds: done.seeds,
        inputs: done.inputs,
        outputs: done.outputs,
        started_unix_ms: started,
        wall_clock_s: clock.elapsed().as_secs_f64(),
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let path = manifest.run.out().join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).context("serializing manifest")?;
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn dispatch(cli: Cli) -> Outcome<()> {
    match cli.command {
        Command::Replay { manifest, out } => {
            let m: RunManifest = read_json(&manifest)?;
            let run = match out {
                Some(dir) => m.run.with_out(dir),
                None => m.run,
            };
            run_and_record(run)
        }
        other => run_and_record(resolve(other)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
