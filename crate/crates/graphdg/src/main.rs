use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use graphdg::checkpoint::Checkpoint;
use graphdg::config::RunConfigFile;
use graphdg::dataio::{group_molecules, read_dataset, write_dataset, SplitRole};
use graphdg::energy::EnergyFile;
use graphdg::pipeline::{self, GenerateOptions, Method, TrainRequest};
use graphdg::{report, Error, Rayon, Result};

/// Graph-conditioned molecular conformation generation with distance
/// geometry.
#[derive(Parser)]
#[command(name = "graphdg", version)]
struct Cli {
    /// Root seed; every random choice is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = one per CPU). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Training configuration (TOML) for `train`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Model,
    MeanDistance,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Train,
    Validation,
    Test,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark dataset from a spec file.
    MakeData {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Energy-model file; defaults to the dataset path with `.energy.toml`.
        #[arg(long)]
        energy: Option<PathBuf>,
    },
    /// Train the model, writing a checkpoint and a metrics log.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Metrics log (JSON lines); defaults to the checkpoint path with `.metrics.jsonl`.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Continue from the checkpoint at `--out`.
        #[arg(long)]
        resume: bool,
        /// Stop after this many epochs in this run.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Generate conformations and an embedding report.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Embedding report (JSON); defaults to the output path with `.report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(short, long, default_value_t = 50)]
        n: usize,
        #[arg(long, value_enum, default_value_t = MethodArg::Model)]
        method: MethodArg,
        #[arg(long, value_enum, default_value_t = RoleArg::Test)]
        molecules: RoleArg,
    },
    /// Compare generated conformations with reference ones by MMD.
    Evaluate {
        #[arg(long)]
        truth: PathBuf,
        /// Generated datasets as NAME=PATH.
        #[arg(long, required = true)]
        generated: Vec<String>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Use at most this many evenly spaced reference conformations per molecule.
        #[arg(long)]
        truth_limit: Option<usize>,
    },
    /// Importance-sampling estimate of an observable.
    Estimate {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        energy: PathBuf,
        /// `one`, `rg` or `distance:I,J`.
        #[arg(long)]
        observable: String,
        /// Kelvin; defaults to the energy file's temperature, then 500.
        #[arg(long)]
        temperature: Option<f64>,
        /// JSON output; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")))
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    let exec = Rayon::new(cli.threads).map_err(|e| Error::Usage(e.to_string()))?;
    match cli.command {
        Command::MakeData { spec, out, energy } => {
            require_file(&spec)?;
            let energy = energy.unwrap_or_else(|| out.with_extension("energy.toml"));
            let bench = pipeline::make_data(&spec, &out, &energy, cli.seed, &exec)?;
            println!("molecules={} records={} out={}", bench.molecules.len(), bench.records.len(), out.display());
        }
        Command::Train { data, out, metrics, resume, stop_after } => {
            require_file(&data)?;
            let file = match &cli.config {
                Some(p) => RunConfigFile::read(p)?,
                None => RunConfigFile::default(),
            };
            let config = file.resolve(cli.seed);
            let metrics = metrics.unwrap_or_else(|| sibling(&out, ".metrics.jsonl"));
            let req = TrainRequest { data: &data, checkpoint: &out, metrics: &metrics, resume, stop_after };
            let ck = pipeline::train(&req, &config, &exec)?;
            let t = &ck.trainer;
            println!(
                "epochs={}/{} best_epoch={} best_score={} out={}",
                t.epoch,
                t.config.epochs,
                t.best_epoch.map_or("-".into(), |e| e.to_string()),
                t.best_score,
                out.display()
            );
        }
        Command::Generate { checkpoint, data, out, report, n, method, molecules } => {
            let ck = Checkpoint::read(&checkpoint)?;
            let mols = group_molecules(&read_dataset(&data)?)?;
            let opts = GenerateOptions {
                n_per_molecule: n,
                role: match molecules {
                    RoleArg::Train => Some(SplitRole::Train),
                    RoleArg::Validation => Some(SplitRole::Validation),
                    RoleArg::Test => Some(SplitRole::Test),
                    RoleArg::All => None,
                },
                method: match method {
                    MethodArg::Model => Method::Model,
                    MethodArg::MeanDistance => Method::MeanDistance,
                },
                seed: cli.seed,
                ..GenerateOptions::default()
            };
            let g = pipeline::generate(&ck, &mols, &opts, &exec)?;
            write_dataset(&out, &g.records)?;
            let report = report.unwrap_or_else(|| out.with_extension("report.json"));
            write_json(&report, &g.report)?;
            let t = &g.report.total;
            println!(
                "records={} triangle_consistency_rate={:.4} success_rate={:.4} report={}",
                g.records.len(),
                t.triangle_consistency_rate,
                t.success_rate,
                report.display()
            );
        }
        Command::Evaluate { truth, generated, out, truth_limit } => {
            let truth = group_molecules(&read_dataset(&truth)?)?;
            let mut methods = Vec::new();
            for spec in &generated {
                let (name, path) = spec
                    .split_once('=')
                    .ok_or_else(|| Error::Usage(format!("--generated expects NAME=PATH, got {spec:?}")))?;
                methods.push((name.to_string(), group_molecules(&read_dataset(Path::new(path))?)?));
            }
            let names: Vec<String> = methods.iter().map(|(n, _)| n.clone()).collect();
            let evals = pipeline::evaluation_inputs(&truth, &methods, truth_limit, 0)?;
            let mmd = pipeline::evaluate(&evals, &names, &exec);
            let doc = report::write_evaluation(&out, &mmd, &evals)?;
            print!("{}", report::summary_text(&doc));
        }
        Command::Estimate { generated, energy, observable, temperature, out } => {
            let mols = group_molecules(&read_dataset(&generated)?)?;
            let energies = EnergyFile::read(&energy)?;
            let obs = pipeline::parse_observable(&observable).map_err(Error::Usage)?;
            let t = temperature.or(energies.temperature).unwrap_or(500.0);
            let rows = pipeline::estimate(&mols, &energies, obs, t)?;
            match out {
                Some(p) => write_json(&p, &rows)?,
                None => println!("{}", serde_json::to_string_pretty(&rows).expect("rows serialize")),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("graphdg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
