//! Command-line front end: `ingest`, `synth`, `mtm`, `run`, `tune`, `report`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info, warn};

use crate::config::{self, layered_pairs, parse_grid, parse_override, parse_pairs, RunConfig};
use crate::depth_io::{
    self, list_files, load_dataset, parse_manifest, parse_sequence_name, read_canonical, read_msr_bin,
    save_canonical_file, CANONICAL_EXTENSION,
};
use crate::evaluation::{run_experiment, tune};
use crate::mtm::compute_mtm;
use crate::parallel;
use crate::synth::{self, MotionProgram, SynthSpec};

#[derive(Debug, Parser)]
#[command(name = "deptrail", version, about = "Depth-video action recognition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert/validate a directory of depth files into canonical `.dseq` files.
    Ingest {
        #[arg(long)]
        src: PathBuf,
        #[arg(long, value_enum, default_value_t = IngestFormat::MsrBin)]
        format: IngestFormat,
        #[arg(long)]
        out: PathBuf,
        /// CSV of `file,action,subject,trial` overriding file-name metadata.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Generate a synthetic dataset as canonical files.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated motion programs, one per class.
        #[arg(long, default_value = "translate-right,oscillate,arm-raise")]
        classes: String,
        #[arg(long, default_value_t = 4)]
        subjects: u16,
        #[arg(long, default_value_t = 5)]
        trials: u16,
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, default_value_t = 32)]
        height: usize,
        #[arg(long, default_value_t = 16)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        noise: u16,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Dump the six history images of one sequence as PGM files.
    Mtm {
        seq_file: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run an experiment and write report.csv, confusion.csv, predictions.csv, manifest.txt.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Cross-validated grid search over bins, delta_r, spatial_bins and mu.
    Tune {
        #[command(flatten)]
        config: ConfigArgs,
        /// Grid file: `key = v1, v2, …` lines.
        #[arg(long)]
        grid: PathBuf,
    },
    /// Print a summary of a finished run directory.
    Report { dir: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum IngestFormat {
    MsrBin,
    Canonical,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key (`--set key=value`, repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// Failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn failure(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::failure(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

impl ConfigArgs {
    fn resolve(&self) -> CliResult<RunConfig> {
        let file = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::failure(format!("{}: {e}", path.display())))?;
                parse_pairs(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
            }
            None => Vec::new(),
        };
        let overrides = self
            .overrides
            .iter()
            .map(|s| parse_override(s))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| CliError::usage("--set expects KEY=VALUE"))?;
        let pairs = layered_pairs(file, std::env::var(config::DATA_ENV).ok(), overrides);
        let cfg = RunConfig::from_pairs(&pairs).map_err(|e| CliError::usage(e.to_string()))?;
        parallel::init_pool(cfg.threads);
        Ok(cfg)
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::failure(format!("{}: {e}", dir.display())))
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Ingest {
            src,
            format,
            out,
            manifest,
        } => {
            let n = cmd_ingest(&src, format, &out, manifest.as_deref())?;
            println!("ingested {n} files into {}", out.display());
            Ok(())
        }
        Command::Synth {
            out,
            classes,
            subjects,
            trials,
            width,
            height,
            frames,
            noise,
            seed,
        } => {
            let classes = classes
                .split(',')
                .map(str::parse::<MotionProgram>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(CliError::usage)?;
            let spec = SynthSpec {
                classes,
                subjects,
                trials,
                width,
                height,
                frames,
                noise,
                seed,
            };
            let n = cmd_synth(&spec, &out)?;
            println!("wrote {n} sequences to {}", out.display());
            Ok(())
        }
        Command::Mtm {
            seq_file,
            out,
            config,
        } => {
            let cfg = config.resolve()?;
            let files = cmd_mtm(&seq_file, &out, &cfg)?;
            for f in files {
                println!("{}", f.display());
            }
            Ok(())
        }
        Command::Run { config } => {
            let cfg = config.resolve()?;
            let report = cmd_run(&cfg)?;
            println!(
                "{}: average accuracy {:.4} ({} test samples, {} -> {} dims); reports in {}",
                cfg.protocol,
                report.average_accuracy,
                report.test_count,
                report.feature_dim,
                report.reduced_dim,
                cfg.out_dir.display()
            );
            Ok(())
        }
        Command::Tune { config, grid } => {
            let cfg = config.resolve()?;
            cmd_tune(&cfg, &grid)
        }
        Command::Report { dir } => cmd_report(&dir),
    }
}

/// Converts every matching file; returns the number written. Any per-file
/// failure is logged and turns the whole command into exit code 2.
pub fn cmd_ingest(
    src: &Path,
    format: IngestFormat,
    out: &Path,
    manifest: Option<&Path>,
) -> CliResult<usize> {
    let overrides = match manifest {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::failure(format!("{}: {e}", path.display())))?;
            parse_manifest(&text)?
        }
        None => Default::default(),
    };
    let ext = match format {
        IngestFormat::MsrBin => "bin",
        IngestFormat::Canonical => CANONICAL_EXTENSION,
    };
    let files = list_files(src, ext)?;
    create_dir(out)?;

    let mut written = 0;
    let mut failed = Vec::new();
    for path in &files {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let result = (|| -> Result<(), depth_io::DepthIoError> {
            let bytes = depth_io::read_file(path)?;
            let seq = match format {
                IngestFormat::MsrBin => {
                    let meta = overrides
                        .get(name)
                        .copied()
                        .or_else(|| parse_sequence_name(name))
                        .ok_or_else(|| depth_io::DepthIoError::BadFileName(name.to_string()))?;
                    let load = read_msr_bin(&bytes, meta)?;
                    if load.saturated > 0 {
                        warn!("{name}: {} depth values saturated to 16 bits", load.saturated);
                    }
                    load.sequence
                }
                IngestFormat::Canonical => {
                    let seq = read_canonical(&bytes)?;
                    match overrides.get(name) {
                        Some(&meta) => seq.with_meta(meta),
                        None => seq,
                    }
                }
            };
            save_canonical_file(&out.join(format!("{}.{CANONICAL_EXTENSION}", seq.id())), &seq)
        })();
        match result {
            Ok(()) => written += 1,
            Err(e) => {
                error!("{}: {e}", path.display());
                failed.push(name.to_string());
            }
        }
    }
    if !failed.is_empty() {
        return Err(CliError::usage(format!(
            "{} of {} files failed: {}",
            failed.len(),
            files.len(),
            failed.join(", ")
        )));
    }
    info!("ingested {written} files");
    Ok(written)
}

pub fn cmd_synth(spec: &SynthSpec, out: &Path) -> CliResult<usize> {
    let data = synth::generate(spec, parallel::Execution::Parallel).map_err(CliError::usage)?;
    create_dir(out)?;
    for seq in &data {
        save_canonical_file(&out.join(format!("{}.{CANONICAL_EXTENSION}", seq.id())), seq)?;
    }
    Ok(data.len())
}

pub fn cmd_mtm(seq_file: &Path, out: &Path, cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let seq = depth_io::load_canonical_file(seq_file)?;
    let mtm = compute_mtm(&seq, &cfg.experiment.mtm)?;
    create_dir(out)?;
    let mut files = Vec::new();
    for h in mtm.iter() {
        let path = out.join(h.pgm_file_name(&seq.id()));
        fs::write(&path, h.to_pgm()).map_err(|e| CliError::failure(format!("{}: {e}", path.display())))?;
        files.push(path);
    }
    Ok(files)
}

fn dataset_dir(cfg: &RunConfig) -> CliResult<&Path> {
    let dir = cfg.dataset.as_deref().ok_or_else(|| {
        CliError::failure(format!(
            "protocol {} needs a dataset (set `dataset` or {})",
            cfg.protocol,
            config::DATA_ENV
        ))
    })?;
    if !dir.is_dir() {
        return Err(CliError::failure(format!("dataset {} is not a directory", dir.display())));
    }
    Ok(dir)
}

pub fn cmd_run(cfg: &RunConfig) -> CliResult<crate::evaluation::EvalReport> {
    let data = load_dataset(dataset_dir(cfg)?)?;
    if data.is_empty() {
        return Err(CliError::failure("dataset contains no .dseq files"));
    }
    let mut report = run_experiment(&data, &cfg.protocol, &cfg.experiment)?;
    report.config = cfg.echo();
    report.write_to(&cfg.out_dir)?;
    Ok(report)
}

pub fn cmd_tune(cfg: &RunConfig, grid_file: &Path) -> CliResult<()> {
    let text = fs::read_to_string(grid_file)
        .map_err(|e| CliError::failure(format!("{}: {e}", grid_file.display())))?;
    let grid = parse_grid(&text, &cfg.experiment).map_err(|e| CliError::usage(e.to_string()))?;
    let data = load_dataset(dataset_dir(cfg)?)?;
    let report = tune(&data, &cfg.protocol, &cfg.experiment, &grid, cfg.folds)?;
    create_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join("tune.csv");
    fs::write(&path, report.to_csv()).map_err(|e| CliError::failure(format!("{}: {e}", path.display())))?;
    let best = report.best_row();
    println!(
        "best: bins={} delta_r={} spatial_bins={}x{} mu={} ({}-fold CV accuracy {:.4}); table in {}",
        best.bins,
        best.delta_r,
        best.spatial_bins.0,
        best.spatial_bins.1,
        best.mu,
        report.folds,
        best.accuracy,
        path.display()
    );
    Ok(())
}

pub fn cmd_report(dir: &Path) -> CliResult<()> {
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read_to_string(&path).map_err(|e| CliError::failure(format!("{}: {e}", path.display())))
    };
    println!("== metrics ({})", dir.display());
    for line in read("report.csv")?.lines().skip(1) {
        if let Some((k, v)) = line.split_once(',') {
            println!("{k:>24}  {v}");
        }
    }
    println!("== confusion (rows actual, columns predicted)");
    for line in read("confusion.csv")?.lines() {
        let cells: Vec<String> = line.split(',').map(|c| format!("{c:>6}")).collect();
        println!("{}", cells.join(""));
    }
    Ok(())
}
