//! End-to-end pipelines behind each CLI subcommand.
//!
//! Every command stages its outputs in memory and writes them only after
//! all computation succeeded; each file is written to a temporary sibling
//! and renamed into place.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use crate::carbon::{estimate_record, CarbonConfig, CarbonEstimate, HardwareDb};
use crate::complexity::{
    classification_complexity, pairwise_jsd_sum, segmentation_detection_complexity, Binning,
    ComplexityScore, EntropyDistribution, PairwiseJsd,
};
use crate::dataset::{list_classes, scan_classes, scan_flat, ImageFailure, Layout};
use crate::error::{Error, Result};
use crate::registry::{
    parse_registry_lines, persist_results, write_atomic, ComplexityStore, ModelRecord, ResultRow,
    Snapshot, Task,
};
use crate::report::{
    histogram_csv, histogram_svg, read_samples_csv, samples_csv, AxisScale, ScatterPlot,
    ScatterPoint,
};
use crate::scoring::nofade;

/// Files produced by a command, written together on success.
#[derive(Debug, Default)]
struct Staged {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Staged {
    fn add(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.files.push((path, bytes));
    }

    fn commit(self) -> Result<Vec<PathBuf>> {
        let mut written = Vec::with_capacity(self.files.len());
        for (path, bytes) in self.files {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            write_atomic(&path, &bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Directory name used as the dataset identifier when none is given.
pub fn default_dataset_id(dir: &Path) -> String {
    dir.canonicalize()
        .ok()
        .as_deref()
        .unwrap_or(dir)
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string())
}

/// Make a label safe to embed in a file name.
fn file_safe(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn failures_csv(failures: &[ImageFailure]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["path", "error"])?;
    for f in failures {
        w.write_record([f.path.display().to_string(), f.error.clone()])?;
    }
    w.into_inner()
        .map_err(|e| Error::Validation(format!("cannot finish CSV: {e}")))
}

fn check_failures(failures: &[ImageFailure], allow: bool) -> Result<()> {
    match failures.first() {
        Some(first) if !allow => Err(Error::DecodeFailures {
            count: failures.len(),
            first: first.error.clone(),
        }),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone)]
pub struct EntropyCommand {
    pub dataset: PathBuf,
    pub layout: Layout,
    pub masks: Option<PathBuf>,
    pub dataset_id: Option<String>,
    pub out_dir: PathBuf,
    pub binning: Binning,
    /// Report undecodable images as warnings instead of failing.
    pub allow_failures: bool,
}

#[derive(Debug, Clone)]
pub struct EntropyOutcome {
    pub dataset_id: String,
    pub distribution: EntropyDistribution,
    pub files: Vec<PathBuf>,
    pub failures: Vec<ImageFailure>,
}

/// Per-image entropy samples plus a histogram (CSV and SVG).
///
/// Outputs in `out_dir`, for dataset id `D`:
/// `D.entropy.csv`, `D.entropy-hist.csv`, `D.entropy-hist.svg`, and for the
/// class layout one `D.class-<label>.entropy.csv` per class.
pub fn run_entropy(cmd: &EntropyCommand) -> Result<EntropyOutcome> {
    let id = cmd
        .dataset_id
        .clone()
        .unwrap_or_else(|| default_dataset_id(&cmd.dataset));
    let stem = file_safe(&id);
    let mut staged = Staged::default();

    let (samples, distribution, failures) = match cmd.layout {
        Layout::Flat => {
            let scan = scan_flat(&cmd.dataset, cmd.masks.as_deref(), cmd.binning)?;
            (scan.samples, scan.distribution, scan.failures)
        }
        Layout::ClassPerSubdirectory => {
            let scan = scan_classes(&cmd.dataset, cmd.binning)?;
            for (label, class_samples) in &scan.samples {
                staged.add(
                    cmd.out_dir
                        .join(format!("{stem}.class-{}.entropy.csv", file_safe(label))),
                    samples_csv(class_samples)?,
                );
            }
            let all = scan.all_samples();
            let mut dist = EntropyDistribution::empty(cmd.binning);
            for class in &scan.classes {
                dist.merge(&class.distribution)?;
            }
            (all, dist, scan.failures)
        }
    };
    check_failures(&failures, cmd.allow_failures)?;

    staged.add(
        cmd.out_dir.join(format!("{stem}.entropy.csv")),
        samples_csv(&samples)?,
    );
    staged.add(
        cmd.out_dir.join(format!("{stem}.entropy-hist.csv")),
        histogram_csv(&distribution)?,
    );
    staged.add(
        cmd.out_dir.join(format!("{stem}.entropy-hist.svg")),
        histogram_svg(&distribution, &format!("Entropy histogram: {id}")).into_bytes(),
    );
    if !failures.is_empty() {
        staged.add(
            cmd.out_dir.join(format!("{stem}.failures.csv")),
            failures_csv(&failures)?,
        );
    }
    let files = staged.commit()?;
    Ok(EntropyOutcome {
        dataset_id: id,
        distribution,
        files,
        failures,
    })
}

#[derive(Debug, Clone)]
pub struct ComplexityCommand {
    pub dataset: PathBuf,
    pub task: Task,
    pub dataset_id: Option<String>,
    pub masks: Option<PathBuf>,
    pub binning: Binning,
    /// Score table updated in place, keyed by dataset id.
    pub scores: PathBuf,
    pub allow_failures: bool,
}

#[derive(Debug, Clone)]
pub struct ComplexityOutcome {
    pub score: ComplexityScore,
    pub pairwise: Option<PairwiseJsd>,
    pub failures: Vec<ImageFailure>,
}

/// Compute a dataset's complexity and upsert it into the score table.
pub fn run_complexity(cmd: &ComplexityCommand) -> Result<ComplexityOutcome> {
    let id = cmd
        .dataset_id
        .clone()
        .unwrap_or_else(|| default_dataset_id(&cmd.dataset));
    let (score, pairwise, failures) = match cmd.task {
        Task::Classification => {
            let classes = list_classes(&cmd.dataset)?;
            if classes.len() < 2 {
                return Err(Error::Refused(format!(
                    "classification complexity of '{id}' needs at least 2 class subdirectories, \
                     found {}; it is the log of summed pairwise class distances, which a single \
                     class does not have",
                    classes.len()
                )));
            }
            let scan = scan_classes(&cmd.dataset, cmd.binning)?;
            check_failures(&scan.failures, cmd.allow_failures)?;
            let pairwise = pairwise_jsd_sum(&scan.classes)?;
            let score = classification_complexity(&id, pairwise.sum)?;
            (score, Some(pairwise), scan.failures)
        }
        Task::Segmentation | Task::Detection => {
            let scan = scan_flat(&cmd.dataset, cmd.masks.as_deref(), cmd.binning)?;
            check_failures(&scan.failures, cmd.allow_failures)?;
            let score = segmentation_detection_complexity(&id, &scan.samples)?;
            (score, None, scan.failures)
        }
    };
    let mut store = ComplexityStore::load_or_default(&cmd.scores)?;
    store.upsert(score.clone());
    let mut staged = Staged::default();
    staged.add(cmd.scores.clone(), store.to_csv()?);
    staged.commit()?;
    Ok(ComplexityOutcome {
        score,
        pairwise,
        failures,
    })
}

fn load_registry(path: &Path) -> Result<Vec<(usize, ModelRecord)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_registry_lines(file, path)
}

fn estimate_rows(
    path: &Path,
    records: &[(usize, ModelRecord)],
    hardware: &HardwareDb,
    config: &CarbonConfig,
) -> Result<Vec<CarbonEstimate>> {
    records
        .iter()
        .map(|(line, r)| {
            estimate_record(r, hardware, config).map_err(|e| Error::Row {
                path: path.to_path_buf(),
                row: *line,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CarbonCommand {
    pub registry: PathBuf,
    pub hardware: HardwareDb,
    pub config: CarbonConfig,
    pub out: PathBuf,
}

pub const CARBON_COLUMNS: [&str; 9] = [
    "model",
    "task",
    "dataset",
    "gpu_type",
    "flops",
    "gpu_hours",
    "power_wh",
    "co2_tonnes",
    "tonnes_per_kwh",
];

/// Power and CO2 per registry row, written as CSV with a trailing `TOTAL` row.
pub fn run_carbon(cmd: &CarbonCommand) -> Result<Vec<(ModelRecord, CarbonEstimate)>> {
    let records = load_registry(&cmd.registry)?;
    let estimates = estimate_rows(&cmd.registry, &records, &cmd.hardware, &cmd.config)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CARBON_COLUMNS)?;
    let (mut total_wh, mut total_t) = (0.0, 0.0);
    for ((_, r), e) in records.iter().zip(&estimates) {
        total_wh += e.power_wh;
        total_t += e.co2_tonnes;
        w.write_record([
            r.model.clone(),
            r.task.to_string(),
            r.dataset.clone(),
            r.gpu_type.clone(),
            r.flops.to_string(),
            r.gpu_hours.to_string(),
            e.power_wh.to_string(),
            e.co2_tonnes.to_string(),
            e.tonnes_per_kwh.to_string(),
        ])?;
    }
    w.write_record([
        "TOTAL".to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        total_wh.to_string(),
        total_t.to_string(),
        cmd.config.tonnes_per_kwh.to_string(),
    ])?;
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Validation(format!("cannot finish CSV: {e}")))?;
    let mut staged = Staged::default();
    staged.add(cmd.out.clone(), bytes);
    staged.commit()?;

    Ok(records.into_iter().map(|(_, r)| r).zip(estimates).collect())
}

/// Carbon, complexity and NoFADE for every record.
pub fn score_records(
    registry: &Path,
    records: &[(usize, ModelRecord)],
    hardware: &HardwareDb,
    config: &CarbonConfig,
    scores: &ComplexityStore,
) -> Result<Vec<ResultRow>> {
    let estimates = estimate_rows(registry, records, hardware, config)?;
    records
        .iter()
        .zip(estimates)
        .map(|((line, r), carbon)| {
            let complexity = scores
                .get(&r.dataset)
                .ok_or_else(|| Error::MissingComplexity(r.dataset.clone()))?;
            let score = nofade(&r.model, r.metric_percent, complexity, r.flops).map_err(|e| {
                Error::Row {
                    path: registry.to_path_buf(),
                    row: *line,
                    message: e.to_string(),
                }
            })?;
            Ok(ResultRow {
                model: r.model.clone(),
                dataset: r.dataset.clone(),
                task: r.task,
                carbon,
                complexity: Some(complexity.clone()),
                nofade: Some(score),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct NofadeCommand {
    pub registry: PathBuf,
    pub scores: PathBuf,
    pub hardware: HardwareDb,
    pub config: CarbonConfig,
    pub out: PathBuf,
    /// Snapshot store for the result rows, if any.
    pub store: Option<PathBuf>,
}

pub const NOFADE_COLUMNS: [&str; 10] = [
    "model",
    "task",
    "dataset",
    "metric_percent",
    "complexity_kind",
    "complexity",
    "flops",
    "nofade",
    "power_wh",
    "co2_tonnes",
];

pub fn nofade_csv(rows: &[ResultRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(NOFADE_COLUMNS)?;
    for row in rows {
        let (Some(c), Some(n)) = (&row.complexity, &row.nofade) else {
            return Err(Error::MissingComplexity(row.dataset.clone()));
        };
        w.write_record([
            row.model.clone(),
            row.task.to_string(),
            row.dataset.clone(),
            n.metric_percent.to_string(),
            c.kind.to_string(),
            n.complexity.to_string(),
            n.flops.to_string(),
            n.value.to_string(),
            row.carbon.power_wh.to_string(),
            row.carbon.co2_tonnes.to_string(),
        ])?;
    }
    w.into_inner()
        .map_err(|e| Error::Validation(format!("cannot finish CSV: {e}")))
}

pub fn run_nofade(cmd: &NofadeCommand) -> Result<(Vec<ResultRow>, Option<Snapshot>)> {
    let records = load_registry(&cmd.registry)?;
    let scores = ComplexityStore::load(&cmd.scores)?;
    let rows = score_records(&cmd.registry, &records, &cmd.hardware, &cmd.config, &scores)?;
    let mut staged = Staged::default();
    staged.add(cmd.out.clone(), nofade_csv(&rows)?);
    staged.commit()?;
    let snapshot = match &cmd.store {
        Some(dir) => Some(persist_results(&rows, dir)?),
        None => None,
    };
    Ok((rows, snapshot))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    EntropyHist,
    Co2Scatter,
    NofadeScatter,
}

#[derive(Debug, Clone)]
pub struct ReportCommand {
    pub kind: ReportKind,
    pub registry: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    /// Samples CSV from the entropy command (entropy-hist only).
    pub samples: Option<PathBuf>,
    pub hardware: HardwareDb,
    pub config: CarbonConfig,
    /// Writes `<out>.csv` and `<out>.svg`.
    pub out: PathBuf,
    pub x_scale: Option<AxisScale>,
    pub y_scale: Option<AxisScale>,
    pub task: Option<Task>,
    pub dataset: Option<String>,
    pub binning: Binning,
}

#[derive(Debug, Clone)]
pub struct ReportOutcome {
    pub csv: PathBuf,
    pub svg: PathBuf,
    pub plot: Option<ScatterPlot>,
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn filtered_records(cmd: &ReportCommand, registry: &Path) -> Result<Vec<(usize, ModelRecord)>> {
    let records: Vec<_> = load_registry(registry)?
        .into_iter()
        .filter(|(_, r)| cmd.task.is_none_or(|t| r.task == t))
        .filter(|(_, r)| cmd.dataset.as_deref().is_none_or(|d| r.dataset == d))
        .collect();
    if records.is_empty() {
        return Err(Error::Degenerate(
            "no registry rows match the requested task/dataset filter".into(),
        ));
    }
    Ok(records)
}

pub fn run_report(cmd: &ReportCommand) -> Result<ReportOutcome> {
    let csv_path = with_ext(&cmd.out, "csv");
    let svg_path = with_ext(&cmd.out, "svg");
    let mut staged = Staged::default();

    let plot = match cmd.kind {
        ReportKind::EntropyHist => {
            let samples_path = cmd
                .samples
                .as_deref()
                .ok_or_else(|| Error::Config("entropy-hist needs a samples CSV".into()))?;
            let samples = read_samples_csv(samples_path)?;
            if samples.is_empty() {
                return Err(Error::Degenerate(format!(
                    "{} holds no samples",
                    samples_path.display()
                )));
            }
            let dist = EntropyDistribution::from_entropies(
                cmd.binning,
                samples.iter().map(|s| s.entropy_bits),
            );
            let title = format!("Entropy histogram: {}", default_dataset_id(samples_path));
            staged.add(csv_path.clone(), histogram_csv(&dist)?);
            staged.add(svg_path.clone(), histogram_svg(&dist, &title).into_bytes());
            None
        }
        ReportKind::Co2Scatter => {
            let registry = cmd
                .registry
                .as_deref()
                .ok_or_else(|| Error::Config("co2-scatter needs a registry".into()))?;
            let records = filtered_records(cmd, registry)?;
            let estimates = estimate_rows(registry, &records, &cmd.hardware, &cmd.config)?;
            let points = records
                .iter()
                .zip(&estimates)
                .map(|((_, r), e)| ScatterPoint {
                    label: r.model.clone(),
                    dataset: r.dataset.clone(),
                    x: e.co2_tonnes,
                    y: r.metric_percent,
                })
                .collect();
            Some(ScatterPlot {
                kind: "co2-scatter".into(),
                title: "Test metric vs. training CO2".into(),
                x_label: "CO2 (metric tonnes, log10)".into(),
                y_label: "test metric (%)".into(),
                x_scale: cmd.x_scale.unwrap_or(AxisScale::Log10),
                y_scale: cmd.y_scale.unwrap_or(AxisScale::Linear),
                points,
            })
        }
        ReportKind::NofadeScatter => {
            let (Some(registry), Some(scores_path)) =
                (cmd.registry.as_deref(), cmd.scores.as_deref())
            else {
                return Err(Error::Config(
                    "nofade-scatter needs both a registry and a complexity score table".into(),
                ));
            };
            let records = filtered_records(cmd, registry)?;
            let tasks: BTreeSet<Task> = records.iter().map(|(_, r)| r.task).collect();
            if tasks.len() > 1 {
                let names: Vec<String> = tasks.iter().map(Task::to_string).collect();
                return Err(Error::Refused(format!(
                    "NoFADE scores of different tasks ({}) are not comparable on one axis; \
                     select a single task",
                    names.join(", ")
                )));
            }
            let scores = ComplexityStore::load(scores_path)?;
            let rows = score_records(registry, &records, &cmd.hardware, &cmd.config, &scores)?;
            let points = rows
                .iter()
                .filter_map(|row| {
                    let n = row.nofade.as_ref()?;
                    Some(ScatterPoint {
                        label: row.model.clone(),
                        dataset: row.dataset.clone(),
                        x: row.carbon.co2_tonnes,
                        y: n.value,
                    })
                })
                .collect();
            Some(ScatterPlot {
                kind: "nofade-scatter".into(),
                title: format!(
                    "NoFADE vs. training CO2 ({})",
                    tasks.iter().next().map(Task::to_string).unwrap_or_default()
                ),
                x_label: "CO2 (metric tonnes, log10)".into(),
                y_label: "NoFADE".into(),
                x_scale: cmd.x_scale.unwrap_or(AxisScale::Log10),
                y_scale: cmd.y_scale.unwrap_or(AxisScale::Linear),
                points,
            })
        }
    };
    if let Some(p) = &plot {
        staged.add(csv_path.clone(), p.to_csv()?);
        staged.add(svg_path.clone(), p.to_svg().into_bytes());
    }
    staged.commit()?;
    Ok(ReportOutcome {
        csv: csv_path,
        svg: svg_path,
        plot,
    })
}
