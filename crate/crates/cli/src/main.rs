use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use nofade::carbon::{CarbonConfig, HardwareDb};
use nofade::commands::{
    run_carbon, run_complexity, run_entropy, run_nofade, run_report, CarbonCommand,
    ComplexityCommand, EntropyCommand, NofadeCommand, ReportCommand, ReportKind,
};
use nofade::complexity::{Binning, ComplexityKind};
use nofade::dataset::Layout;
use nofade::registry::{Task, SAMPLE_REGISTRY};
use nofade::report::AxisScale;
use nofade::synth;

/// Dataset entropy, training CO2 and NoFADE reports.
#[derive(Debug, Parser)]
#[command(name = "nofade", version)]
struct Cli {
    /// TOML config with defaults for the global flags.
    #[arg(long, env = "NOFADE_CONFIG", global = true)]
    config: Option<PathBuf>,

    /// Hardware database (TOML); the bundled table is used otherwise.
    #[arg(long, global = true)]
    hardware_db: Option<PathBuf>,

    /// Carbon intensity in metric tonnes CO2 per kWh.
    #[arg(long, global = true)]
    intensity: Option<f64>,

    /// CPU Watt-to-FLOPS ratio (W per FLOP/s).
    #[arg(long, global = true)]
    cpu_ratio: Option<f64>,

    /// Number of entropy bins over [0, 8] bits.
    #[arg(long, global = true)]
    bins: Option<usize>,

    /// Directory for outputs without an explicit path.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-image entropy samples and histogram for a dataset directory.
    Entropy(EntropyArgs),
    /// Dataset complexity score, stored in the score table.
    Complexity(ComplexityArgs),
    /// Training power and CO2 for every registry row.
    Carbon(CarbonArgs),
    /// NoFADE score for every registry row.
    Nofade(NofadeArgs),
    /// CSV + SVG figure.
    Report(ReportArgs),
    /// Write seeded synthetic datasets and the sample registry.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LayoutArg {
    Flat,
    Classes,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TaskArg {
    Classification,
    Segmentation,
    Detection,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Classification => Task::Classification,
            TaskArg::Segmentation => Task::Segmentation,
            TaskArg::Detection => Task::Detection,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScaleArg {
    Linear,
    Log10,
}

impl From<ScaleArg> for AxisScale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Linear => AxisScale::Linear,
            ScaleArg::Log10 => AxisScale::Log10,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportKindArg {
    EntropyHist,
    Co2Scatter,
    NofadeScatter,
}

#[derive(Debug, Args)]
struct EntropyArgs {
    dataset: PathBuf,
    #[arg(long, value_enum, default_value = "flat")]
    layout: LayoutArg,
    /// Parallel directory of label masks to include (flat layout only).
    #[arg(long)]
    masks: Option<PathBuf>,
    #[arg(long)]
    dataset_id: Option<String>,
    /// Warn about undecodable images instead of failing.
    #[arg(long)]
    allow_failures: bool,
}

#[derive(Debug, Args)]
struct ComplexityArgs {
    dataset: PathBuf,
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long)]
    dataset_id: Option<String>,
    #[arg(long)]
    masks: Option<PathBuf>,
    /// Score table; defaults to <out-dir>/complexity_scores.csv.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long)]
    allow_failures: bool,
}

#[derive(Debug, Args)]
struct CarbonArgs {
    registry: PathBuf,
    /// Defaults to <out-dir>/carbon.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct NofadeArgs {
    registry: PathBuf,
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Defaults to <out-dir>/nofade.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Snapshot directory for the result rows.
    #[arg(long)]
    store: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(value_enum)]
    kind: ReportKindArg,
    #[arg(long)]
    registry: Option<PathBuf>,
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Samples CSV written by `entropy` (entropy-hist).
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Output stem; `.csv` and `.svg` are appended. Defaults to <out-dir>/<kind>.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    x_scale: Option<ScaleArg>,
    #[arg(long, value_enum)]
    y_scale: Option<ScaleArg>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long)]
    dataset: Option<String>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    dir: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    hardware_db: Option<PathBuf>,
    tonnes_per_kwh: Option<f64>,
    cpu_watt_per_flop: Option<f64>,
    bins: Option<usize>,
    out_dir: Option<PathBuf>,
}

/// Global settings after merging config file and flags.
struct Settings {
    hardware: HardwareDb,
    carbon: CarbonConfig,
    binning: Binning,
    out_dir: PathBuf,
}

impl Settings {
    fn resolve(cli: &Cli) -> Result<Self> {
        let file = match &cli.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                toml::from_str::<ConfigFile>(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => ConfigFile::default(),
        };
        let hardware = match cli.hardware_db.as_ref().or(file.hardware_db.as_ref()) {
            Some(path) => HardwareDb::load(path)?,
            None => HardwareDb::bundled(),
        };
        let mut carbon = CarbonConfig::from_db(&hardware);
        if let Some(v) = cli.cpu_ratio.or(file.cpu_watt_per_flop) {
            if !(v >= 0.0 && v.is_finite()) {
                bail!("CPU ratio must be finite and >= 0, got {v}");
            }
            carbon.cpu_watt_per_flop = v;
        }
        if let Some(v) = cli.intensity.or(file.tonnes_per_kwh) {
            if !(v > 0.0 && v.is_finite()) {
                bail!("carbon intensity must be > 0 t/kWh, got {v}");
            }
            carbon.tonnes_per_kwh = v;
        }
        let binning = match cli.bins.or(file.bins) {
            Some(n) => Binning::new(n)?,
            None => Binning::default(),
        };
        let out_dir = cli
            .out_dir
            .clone()
            .or(file.out_dir)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Settings {
            hardware,
            carbon,
            binning,
            out_dir,
        })
    }

    fn scores_path(&self, explicit: Option<&Path>) -> PathBuf {
        explicit
            .map(Path::to_path_buf)
            .unwrap_or_else(|| self.out_dir.join("complexity_scores.csv"))
    }
}

fn warn_failures(failures: &[nofade::dataset::ImageFailure]) {
    for f in failures {
        eprintln!("warning: skipped {}: {}", f.path.display(), f.error);
    }
}

fn run(cli: Cli) -> Result<()> {
    let settings = Settings::resolve(&cli)?;
    match cli.command {
        Command::Entropy(a) => {
            let outcome = run_entropy(&EntropyCommand {
                dataset: a.dataset,
                layout: match a.layout {
                    LayoutArg::Flat => Layout::Flat,
                    LayoutArg::Classes => Layout::ClassPerSubdirectory,
                },
                masks: a.masks,
                dataset_id: a.dataset_id,
                out_dir: settings.out_dir.clone(),
                binning: settings.binning,
                allow_failures: a.allow_failures,
            })?;
            warn_failures(&outcome.failures);
            println!(
                "{}: {} images",
                outcome.dataset_id,
                outcome.distribution.sample_count()
            );
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Complexity(a) => {
            let scores = settings.scores_path(a.scores.as_deref());
            let outcome = run_complexity(&ComplexityCommand {
                dataset: a.dataset,
                task: a.task.into(),
                dataset_id: a.dataset_id,
                masks: a.masks,
                binning: settings.binning,
                scores: scores.clone(),
                allow_failures: a.allow_failures,
            })?;
            warn_failures(&outcome.failures);
            let s = &outcome.score;
            if let Some(p) = outcome.pairwise {
                println!(
                    "{}: pairwise JSD sum {} over {} class pairs",
                    s.dataset, p.sum, p.terms
                );
            }
            println!("{} {} {}", s.dataset, s.kind, s.value);
            if let Some(w) = &s.warning {
                eprintln!("warning: {w}");
            }
            if s.kind == ComplexityKind::LogSumJsd && s.value < 0.0 {
                eprintln!("warning: negative complexity cannot be used for NoFADE");
            }
            println!("stored in {}", scores.display());
        }
        Command::Carbon(a) => {
            let out = a.out.unwrap_or_else(|| settings.out_dir.join("carbon.csv"));
            let rows = run_carbon(&CarbonCommand {
                registry: a.registry,
                hardware: settings.hardware,
                config: settings.carbon,
                out: out.clone(),
            })?;
            println!("{} rows; wrote {}", rows.len(), out.display());
        }
        Command::Nofade(a) => {
            let out = a.out.unwrap_or_else(|| settings.out_dir.join("nofade.csv"));
            let (rows, snapshot) = run_nofade(&NofadeCommand {
                registry: a.registry,
                scores: settings.scores_path(a.scores.as_deref()),
                hardware: settings.hardware,
                config: settings.carbon,
                out: out.clone(),
                store: a.store,
            })?;
            println!("{} rows; wrote {}", rows.len(), out.display());
            if let Some(s) = snapshot {
                println!("snapshot {} at {}", s.hash, s.path.display());
            }
        }
        Command::Report(a) => {
            let (kind, name) = match a.kind {
                ReportKindArg::EntropyHist => (ReportKind::EntropyHist, "entropy-hist"),
                ReportKindArg::Co2Scatter => (ReportKind::Co2Scatter, "co2-scatter"),
                ReportKindArg::NofadeScatter => (ReportKind::NofadeScatter, "nofade-scatter"),
            };
            let scores = match kind {
                ReportKind::NofadeScatter => Some(settings.scores_path(a.scores.as_deref())),
                _ => a.scores,
            };
            let outcome = run_report(&ReportCommand {
                kind,
                registry: a.registry,
                scores,
                samples: a.samples,
                hardware: settings.hardware,
                config: settings.carbon,
                out: a.out.unwrap_or_else(|| settings.out_dir.join(name)),
                x_scale: a.x_scale.map(Into::into),
                y_scale: a.y_scale.map(Into::into),
                task: a.task.map(Into::into),
                dataset: a.dataset,
                binning: settings.binning,
            })?;
            if let Some(plot) = &outcome.plot {
                let omitted = plot.unplottable();
                if omitted > 0 {
                    eprintln!("warning: {omitted} point(s) cannot be placed on a log axis");
                }
            }
            println!(
                "wrote {} and {}",
                outcome.csv.display(),
                outcome.svg.display()
            );
        }
        Command::Synth(a) => {
            let datasets = synth::write_sample_datasets(&a.dir, a.seed)?;
            let registry = a.dir.join("registry.csv");
            std::fs::write(&registry, SAMPLE_REGISTRY)
                .with_context(|| format!("writing {}", registry.display()))?;
            for d in datasets {
                println!("{} ({}) at {}", d.id, d.task, d.path.display());
            }
            println!("registry at {}", registry.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
