//! Command-line front end: configuration parsing, persistence, and the
//! experiment recipes. The binary in `src/bin/d3hr.rs` is a thin shim over
//! [`run`].

use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::ddim::build_schedule;
use crate::distill::{
    distill_dataset, regenerate_from_stats, DistillConfig, LossWeights, Mode, StatsBundle,
};
use crate::error::{Error, Result};
use crate::eval::{
    ablation_run, evaluate_classifier, train_classifier, EvalConfig, SweepRow, TrainConfig,
};
use crate::gmm::{default_world, sample_dataset, Dataset, GmmSpec};
use crate::report::{
    ablation_csv, eval_csv, sweep_csv, write_atomic, write_json, TrainEvalReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Parser)]
#[command(name = "d3hr", version, about = "Dataset distillation over Gaussian-mixture worlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct WorldArgs {
    /// Path to a mixture spec JSON file
    #[arg(long, conflicts_with = "default_world")]
    spec: Option<PathBuf>,
    /// Use the built-in desk-scale world (d=8, 4 classes, 3 components)
    #[arg(long)]
    default_world: bool,
}

impl WorldArgs {
    fn load(&self) -> Result<GmmSpec> {
        let spec = match &self.spec {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                serde_json::from_str::<GmmSpec>(&text)?
            }
            None => default_world(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample train and test datasets from a mixture world
    GenData {
        #[command(flatten)]
        world: WorldArgs,
        /// Points per class in each of the train and test files
        #[arg(long)]
        n_per_class: usize,
        #[arg(long)]
        seed: u64,
        /// Output directory; writes train.json and test.json
        #[arg(long)]
        out: PathBuf,
    },
    /// Distill a dataset into n points per class
    Distill {
        #[command(flatten)]
        world: WorldArgs,
        /// Input dataset JSON
        #[arg(long)]
        data: PathBuf,
        /// group | random | ddpm
        #[arg(long, default_value = "group")]
        mode: Mode,
        /// Distilled points per class
        #[arg(long, default_value_t = 10)]
        ipc: usize,
        /// Candidate subsets per class (group mode)
        #[arg(long, default_value_t = 10000)]
        m: usize,
        /// DDIM inversion/sampling steps
        #[arg(long, default_value_t = 31)]
        steps: usize,
        /// Loss weights lambda_mu,lambda_sigma,lambda_skew
        #[arg(long, default_value = "1,1,0.5", value_parser = parse_weights)]
        weights: LossWeights,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file for the distilled set JSON
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-class stats bundle here
        #[arg(long)]
        stats_out: Option<PathBuf>,
        /// Scale the fitted standard deviations before sampling (ablation)
        #[arg(long, default_value_t = 1.0)]
        var_scale: f64,
    },
    /// Regenerate a distilled set from a stats bundle, without the dataset
    Regen {
        #[command(flatten)]
        world: WorldArgs,
        /// Stats bundle JSON written by `distill --stats-out`
        #[arg(long)]
        stats: PathBuf,
        #[arg(long)]
        ipc: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the linear classifier and report test accuracy
    Eval {
        /// Training dataset JSON (full or distilled)
        #[arg(long)]
        train: PathBuf,
        /// Held-out test dataset JSON
        #[arg(long)]
        test: PathBuf,
        /// Report path prefix; writes <prefix>.json and <prefix>.csv
        #[arg(long)]
        report: PathBuf,
    },
    /// Sweep the number of inversion steps
    SweepSteps {
        #[command(flatten)]
        world: WorldArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Comma-separated step counts, e.g. 4,8,16,31,64
        #[arg(long, value_parser = parse_usize_list)]
        steps_list: std::vec::Vec<usize>,
        /// Comma-separated seeds; accuracy is averaged over them
        #[arg(long, default_value = "0", value_parser = parse_u64_list)]
        seeds: std::vec::Vec<u64>,
        #[arg(long, default_value_t = 10)]
        ipc: usize,
        #[arg(long, default_value_t = 1000)]
        m: usize,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the mode (and optionally weight-combination) ablation
    Ablate {
        #[command(flatten)]
        world: WorldArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Number of seeds (0..N-1 offset by --seed-base)
        #[arg(long)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
        #[arg(long, default_value_t = 10)]
        ipc: usize,
        #[arg(long, default_value_t = 10000)]
        m: usize,
        #[arg(long, default_value_t = 31)]
        steps: usize,
        #[arg(long, default_value = "1,1,0.5", value_parser = parse_weights)]
        weights: LossWeights,
        /// Also evaluate the seven weight combinations
        #[arg(long)]
        weight_grid: bool,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_weights(s: &str) -> std::result::Result<LossWeights, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err("expected three comma-separated weights".into());
    }
    let mut w = [0.0f64; 3];
    for (i, p) in parts.iter().enumerate() {
        w[i] = p.trim().parse::<f64>().map_err(|e| e.to_string())?;
        if w[i] < 0.0 {
            return Err("weights must be nonnegative".into());
        }
    }
    Ok(LossWeights::from(w))
}

fn parse_usize_list(s: &str) -> std::result::Result<Vec<usize>, String> {
    s.split(',').map(|p| p.trim().parse::<usize>().map_err(|e| e.to_string())).collect()
}

fn parse_u64_list(s: &str) -> std::result::Result<Vec<u64>, String> {
    s.split(',').map(|p| p.trim().parse::<u64>().map_err(|e| e.to_string())).collect()
}

/// Accepts either a plain dataset file or a distilled-set file.
fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let ds: Dataset = match serde_json::from_str(&text) {
        Ok(ds) => ds,
        Err(e) => match serde_json::from_str::<crate::distill::DistilledSet>(&text) {
            Ok(set) => set.as_dataset(String::new()),
            Err(_) => return Err(e.into()),
        },
    };
    if ds.points.is_empty() {
        return Err(Error::Degenerate(format!("{} contains no points", path.display())));
    }
    Ok(ds)
}

/// Honor the D3HR_THREADS worker cap (0 or unset = auto).
pub fn init_threads() {
    if let Ok(v) = std::env::var("D3HR_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Io(_) => EXIT_IO,
        _ => EXIT_VALIDATION,
    }
}

/// Parse `args` (including argv[0]) and run the selected subcommand,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    init_threads();
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenData { world, n_per_class, seed, out } => {
            let spec = world.load()?;
            let train = sample_dataset(&spec, n_per_class, seed)?;
            let test = sample_dataset(&spec, n_per_class, seed.wrapping_add(1))?;
            write_json(&out.join("train.json"), &train)?;
            write_json(&out.join("test.json"), &test)?;
            eprintln!(
                "gen-data: wrote {} train and {} test points to {}",
                train.points.len(),
                test.points.len(),
                out.display()
            );
            Ok(())
        }
        Command::Distill {
            world,
            data,
            mode,
            ipc,
            m,
            steps,
            weights,
            seed,
            out,
            stats_out,
            var_scale,
        } => {
            let spec = world.load()?;
            let dataset = read_dataset(&data)?;
            if dataset.dimension != spec.dimension {
                return Err(Error::DimensionMismatch {
                    expected: spec.dimension,
                    got: dataset.dimension,
                });
            }
            if var_scale <= 0.0 {
                return Err(Error::InvalidParameter("var-scale must be positive".into()));
            }
            let schedule = build_schedule(1000, 1e-4, 0.02, steps)?;
            let config = DistillConfig { ipc, m, weights, mode, seed, var_scale };
            let (set, bundle) = distill_dataset(&dataset, &spec, &schedule, &config)?;
            write_json(&out, &set)?;
            if let Some(stats_path) = stats_out {
                write_json(&stats_path, &bundle)?;
            }
            eprintln!("distill: mode {mode}, {} points -> {}", set.points.len(), out.display());
            Ok(())
        }
        Command::Regen { world, stats, ipc, seed, out } => {
            let spec = world.load()?;
            let text = fs::read_to_string(&stats)?;
            let bundle: StatsBundle = serde_json::from_str(&text)?;
            let set = regenerate_from_stats(&bundle, ipc, &spec, seed)?;
            write_json(&out, &set)?;
            eprintln!("regen: {} points -> {}", set.points.len(), out.display());
            Ok(())
        }
        Command::Eval { train, test, report } => {
            let train_set = read_dataset(&train)?;
            let test_set = read_dataset(&test)?;
            let model = train_classifier(&train_set, TrainConfig::default())?;
            let accuracy = evaluate_classifier(&model, &test_set)?;
            let rep = TrainEvalReport {
                accuracy,
                train_points: train_set.points.len(),
                test_points: test_set.points.len(),
            };
            write_json(&report.with_extension("json"), &rep)?;
            write_atomic(&report.with_extension("csv"), eval_csv(&rep).as_bytes())?;
            eprintln!("eval: accuracy {accuracy:.4}");
            Ok(())
        }
        Command::SweepSteps { world, data, test, steps_list, seeds, ipc, m, out } => {
            let spec = world.load()?;
            let dataset = read_dataset(&data)?;
            let test_set = read_dataset(&test)?;
            if seeds.is_empty() {
                return Err(Error::InvalidParameter("need at least one seed".into()));
            }
            let mut rows: Vec<SweepRow> = Vec::new();
            for &k in &steps_list {
                let mut acc_rows = Vec::new();
                for &seed in &seeds {
                    let cfg = EvalConfig {
                        ipc,
                        m,
                        weights: LossWeights::default(),
                        train: TrainConfig::default(),
                        seed,
                    };
                    let row =
                        crate::eval::timestep_sweep(&dataset, &test_set, &spec, &[k], &cfg)?
                            .remove(0);
                    acc_rows.push(row);
                }
                let accuracy =
                    acc_rows.iter().map(|r| r.accuracy).sum::<f64>() / acc_rows.len() as f64;
                rows.push(SweepRow { accuracy, ..acc_rows.remove(0) });
                eprintln!("sweep-steps: K={k} done");
            }
            write_atomic(&out, sweep_csv(&rows).as_bytes())?;
            Ok(())
        }
        Command::Ablate {
            world,
            data,
            test,
            seeds,
            seed_base,
            ipc,
            m,
            steps,
            weights,
            weight_grid,
            out,
        } => {
            let spec = world.load()?;
            let dataset = read_dataset(&data)?;
            let test_set = read_dataset(&test)?;
            let schedule = build_schedule(1000, 1e-4, 0.02, steps)?;
            let seed_list: Vec<u64> = (0..seeds as u64).map(|i| seed_base + i).collect();
            let cfg = EvalConfig {
                ipc,
                m,
                weights,
                train: TrainConfig::default(),
                seed: seed_base,
            };
            let reports = ablation_run(
                &dataset, &test_set, &spec, &schedule, &cfg, &seed_list, weight_grid,
            )?;
            write_atomic(&out, ablation_csv(&reports).as_bytes())?;
            for r in &reports {
                eprintln!(
                    "ablate: {} accuracy {:.4} +/- {:.4}",
                    r.label, r.accuracy_mean, r.accuracy_std
                );
            }
            Ok(())
        }
    }
}
