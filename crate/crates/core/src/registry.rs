//! Model registry CSV, complexity score table, and content-addressed
//! result snapshots.
//!
//! Registry columns, in emission order:
//!
//! ```text
//! model,task,dataset,metric_percent,flops,gpu_hours,gpu_type,source
//! ```
//!
//! Numbers are written with Rust's shortest round-trip formatting, so
//! `parse_registry(emit_registry(records))` reproduces `records` bit for bit.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::carbon::CarbonEstimate;
use crate::complexity::{ComplexityKind, ComplexityScore};
use crate::error::{Error, Result};
use crate::scoring::NoFadeScore;

pub const REGISTRY_COLUMNS: [&str; 8] = [
    "model",
    "task",
    "dataset",
    "metric_percent",
    "flops",
    "gpu_hours",
    "gpu_type",
    "source",
];

/// Illustrative five-model registry shipped with the crate.
pub const SAMPLE_REGISTRY: &str = include_str!("../data/sample_registry.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Segmentation,
    Detection,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Classification => "classification",
            Task::Segmentation => "segmentation",
            Task::Detection => "detection",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "classification" => Ok(Task::Classification),
            "segmentation" => Ok(Task::Segmentation),
            "detection" => Ok(Task::Detection),
            other => Err(Error::Validation(format!(
                "unknown task '{other}' (expected classification, segmentation or detection)"
            ))),
        }
    }
}

/// One surveyed model-dataset pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub model: String,
    pub task: Task,
    pub dataset: String,
    /// Top-1 accuracy, mAP or mIOU as a percentage.
    pub metric_percent: f64,
    pub flops: f64,
    /// As reported by the source; no per-device normalisation.
    pub gpu_hours: f64,
    pub gpu_type: String,
    pub source: String,
}

impl ModelRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.model.trim().is_empty() {
            return Err("model name is empty".into());
        }
        if self.dataset.trim().is_empty() {
            return Err("dataset is empty".into());
        }
        if self.gpu_type.trim().is_empty() {
            return Err("gpu_type is empty".into());
        }
        if !(0.0..=100.0).contains(&self.metric_percent) {
            return Err(format!(
                "metric_percent {} is outside [0, 100]",
                self.metric_percent
            ));
        }
        if !(self.flops > 0.0 && self.flops.is_finite()) {
            return Err(format!("flops must be finite and > 0, got {}", self.flops));
        }
        if !(self.gpu_hours >= 0.0 && self.gpu_hours.is_finite()) {
            return Err(format!(
                "gpu_hours must be finite and >= 0, got {}",
                self.gpu_hours
            ));
        }
        Ok(())
    }
}

pub fn parse_registry(path: &Path) -> Result<Vec<ModelRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_registry_from(file, path)
}

/// Parse registry CSV from any reader; `path` labels errors.
pub fn parse_registry_from<R: Read>(reader: R, path: &Path) -> Result<Vec<ModelRecord>> {
    Ok(parse_registry_lines(reader, path)?
        .into_iter()
        .map(|(_, r)| r)
        .collect())
}

/// Like [`parse_registry_from`], keeping each record's source line number.
pub fn parse_registry_lines<R: Read>(reader: R, path: &Path) -> Result<Vec<(usize, ModelRecord)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let schema_err = |message: String| Error::Schema {
        path: path.to_path_buf(),
        message,
    };
    let headers = rdr
        .headers()
        .map_err(|e| schema_err(format!("cannot read header: {e}")))?
        .clone();

    let mut index = [usize::MAX; REGISTRY_COLUMNS.len()];
    for (pos, name) in headers.iter().enumerate() {
        let name = name.trim();
        match REGISTRY_COLUMNS.iter().position(|c| *c == name) {
            Some(k) if index[k] != usize::MAX => {
                return Err(schema_err(format!("column '{name}' appears twice")))
            }
            Some(k) => index[k] = pos,
            None => return Err(schema_err(format!("unknown column '{name}'"))),
        }
    }
    if let Some(k) = index.iter().position(|&i| i == usize::MAX) {
        return Err(schema_err(format!(
            "missing column '{}'",
            REGISTRY_COLUMNS[k]
        )));
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for result in rdr.records() {
        let row = result.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Row {
                path: path.to_path_buf(),
                row: line,
                message: e.to_string(),
            }
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let row_err = |message: String| Error::Row {
            path: path.to_path_buf(),
            row: line,
            message,
        };
        let field = |k: usize| row.get(index[k]).unwrap_or("").trim();
        let number = |k: usize| -> Result<f64> {
            let raw = field(k);
            raw.parse::<f64>().map_err(|_| {
                row_err(format!(
                    "{}: cannot parse '{raw}' as a number",
                    REGISTRY_COLUMNS[k]
                ))
            })
        };

        let record = ModelRecord {
            model: field(0).to_string(),
            task: field(1)
                .parse()
                .map_err(|e: Error| row_err(e.to_string()))?,
            dataset: field(2).to_string(),
            metric_percent: number(3)?,
            flops: number(4)?,
            gpu_hours: number(5)?,
            gpu_type: field(6).to_string(),
            source: field(7).to_string(),
        };
        record.validate().map_err(row_err)?;
        if !seen.insert((record.model.clone(), record.dataset.clone())) {
            return Err(row_err(format!(
                "duplicate (model, dataset) pair ({}, {})",
                record.model, record.dataset
            )));
        }
        records.push((line, record));
    }
    Ok(records)
}

/// Serialise records as registry CSV.
pub fn registry_to_writer<W: Write>(records: &[ModelRecord], writer: W) -> Result<()> {
    let mut seen = HashSet::new();
    for r in records {
        r.validate()
            .map_err(|m| Error::Validation(format!("{}: {m}", r.model)))?;
        if !seen.insert((&r.model, &r.dataset)) {
            return Err(Error::Validation(format!(
                "duplicate (model, dataset) pair ({}, {})",
                r.model, r.dataset
            )));
        }
    }
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(REGISTRY_COLUMNS)?;
    for r in records {
        wtr.write_record([
            r.model.clone(),
            r.task.to_string(),
            r.dataset.clone(),
            r.metric_percent.to_string(),
            r.flops.to_string(),
            r.gpu_hours.to_string(),
            r.gpu_type.clone(),
            r.source.clone(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<registry>", e))?;
    Ok(())
}

pub fn emit_registry(records: &[ModelRecord], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    registry_to_writer(records, &mut buf)?;
    write_atomic(path, &buf)
}

/// Write via a temporary sibling and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Validation(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// One analysed model-dataset pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub dataset: String,
    pub task: Task,
    pub carbon: CarbonEstimate,
    pub complexity: Option<ComplexityScore>,
    pub nofade: Option<NoFadeScore>,
}

impl ResultRow {
    /// True when any attached NoFADE score agrees with the row's own fields.
    pub fn is_consistent(&self) -> bool {
        match (&self.nofade, &self.complexity) {
            (None, _) => true,
            (Some(n), Some(c)) => {
                n.model == self.model
                    && n.dataset == self.dataset
                    && n.complexity == c.value
                    && (n.recompute() - n.value).abs() <= 1e-12 * n.value.abs().max(1.0)
            }
            (Some(_), None) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    /// Hex SHA-256 of the snapshot body.
    pub hash: String,
    pub path: PathBuf,
}

const LOCK_FILE: &str = ".lock";

fn lock_store(dir: &Path, exclusive: bool) -> Result<File> {
    let lock_path = dir.join(LOCK_FILE);
    let lock = File::options()
        .create(true)
        .truncate(false)
        .write(true)
        .open(&lock_path)
        .map_err(|e| Error::io(&lock_path, e))?;
    if exclusive {
        lock.lock()
    } else {
        lock.lock_shared()
    }
    .map_err(|e| Error::io(&lock_path, e))?;
    Ok(lock)
}

/// Canonical snapshot body and its content hash.
pub fn snapshot_body(rows: &[ResultRow]) -> Result<(Vec<u8>, String)> {
    let mut body = serde_json::to_vec_pretty(rows)?;
    body.push(b'\n');
    let hash = hex::encode(Sha256::digest(&body));
    Ok((body, hash))
}

/// Append a snapshot named `<sha256>.<unix-nanos>.json` to `store`.
pub fn persist_results(rows: &[ResultRow], store: &Path) -> Result<Snapshot> {
    if rows.is_empty() {
        return Err(Error::Degenerate("no result rows to persist".into()));
    }
    fs::create_dir_all(store).map_err(|e| Error::io(store, e))?;
    let (body, hash) = snapshot_body(rows)?;
    let _lock = lock_store(store, true)?;
    let mut stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or_default();
    let mut path = store.join(format!("{hash}.{stamp}.json"));
    // append-only: never replace an existing snapshot
    while path.exists() {
        stamp += 1;
        path = store.join(format!("{hash}.{stamp}.json"));
    }
    write_atomic(&path, &body)?;
    Ok(Snapshot { hash, path })
}

pub fn load_snapshot(path: &Path) -> Result<Vec<ResultRow>> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let _lock = lock_store(dir, false)?;
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&text)?)
}

/// Snapshots in `store`, oldest first.
pub fn list_snapshots(store: &Path) -> Result<Vec<PathBuf>> {
    let _lock = lock_store(store, false)?;
    let mut found: Vec<(u128, PathBuf)> = fs::read_dir(store)
        .map_err(|e| Error::io(store, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter_map(|p| {
            let name = p.file_name()?.to_str()?.to_string();
            let stem = name.strip_suffix(".json")?;
            let (_, stamp) = stem.split_once('.')?;
            Some((stamp.parse().ok()?, p))
        })
        .collect();
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

/// Complexity scores keyed by dataset, persisted as
/// `dataset,kind,value,warning` CSV sorted by dataset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComplexityStore {
    scores: BTreeMap<String, ComplexityScore>,
}

impl ComplexityStore {
    pub fn load(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["dataset", "kind", "value", "warning"] {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                message: "expected header dataset,kind,value,warning".into(),
            });
        }
        let mut scores = BTreeMap::new();
        for result in rdr.records() {
            let row = result?;
            let line = row.position().map_or(0, |p| p.line() as usize);
            let row_err = |message: String| Error::Row {
                path: path.to_path_buf(),
                row: line,
                message,
            };
            let dataset = row.get(0).unwrap_or("").to_string();
            let kind: ComplexityKind = row
                .get(1)
                .unwrap_or("")
                .parse()
                .map_err(|e: Error| row_err(e.to_string()))?;
            let raw = row.get(2).unwrap_or("");
            let value: f64 = raw
                .parse()
                .map_err(|_| row_err(format!("cannot parse '{raw}' as a number")))?;
            let warning = row.get(3).filter(|w| !w.is_empty()).map(str::to_string);
            if scores.contains_key(&dataset) {
                return Err(row_err(format!("duplicate dataset '{dataset}'")));
            }
            scores.insert(
                dataset.clone(),
                ComplexityScore {
                    dataset,
                    kind,
                    value,
                    warning,
                },
            );
        }
        Ok(ComplexityStore { scores })
    }

    /// Load if present, otherwise start empty.
    pub fn load_or_default(path: &Path) -> Result<Self> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::default())
        }
    }

    pub fn upsert(&mut self, score: ComplexityScore) {
        self.scores.insert(score.dataset.clone(), score);
    }

    pub fn get(&self, dataset: &str) -> Option<&ComplexityScore> {
        self.scores.get(dataset)
    }

    pub fn scores(&self) -> impl Iterator<Item = &ComplexityScore> {
        self.scores.values()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["dataset", "kind", "value", "warning"])?;
        for s in self.scores.values() {
            wtr.write_record([
                s.dataset.clone(),
                s.kind.to_string(),
                s.value.to_string(),
                s.warning.clone().unwrap_or_default(),
            ])?;
        }
        wtr.into_inner()
            .map_err(|e| Error::Validation(format!("cannot finish CSV: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_csv()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "model,task,dataset,metric_percent,flops,gpu_hours,gpu_type,source\n";

    fn parse_str(s: &str) -> Result<Vec<ModelRecord>> {
        parse_registry_from(s.as_bytes(), Path::new("reg.csv"))
    }

    fn row_of(err: Error) -> usize {
        match err {
            Error::Row { row, .. } => row,
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn sample_registry_has_five_rows() {
        let records = parse_str(SAMPLE_REGISTRY).unwrap();
        assert_eq!(records.len(), 5);
    }

    #[test]
    fn out_of_range_metric_names_row() {
        let text = format!(
            "{HEADER}a,detection,coco,50,1e9,1,V100,x\nb,detection,coco,104,1e9,1,V100,x\n"
        );
        let err = parse_str(&text).unwrap_err();
        assert!(err.to_string().contains("metric_percent"));
        assert_eq!(row_of(err), 3);
    }

    #[test]
    fn unparseable_number_names_row() {
        let text = format!("{HEADER}a,detection,coco,50,lots,1,V100,x\n");
        let err = parse_str(&text).unwrap_err();
        assert!(err.to_string().contains("lots"));
        assert_eq!(row_of(err), 2);
    }

    #[test]
    fn duplicate_pair_rejected() {
        let text =
            format!("{HEADER}a,detection,coco,50,1e9,1,V100,x\na,detection,coco,51,1e9,1,V100,y\n");
        assert_eq!(row_of(parse_str(&text).unwrap_err()), 3);
        // same model on another dataset is fine
        let text =
            format!("{HEADER}a,detection,coco,50,1e9,1,V100,x\na,detection,voc,51,1e9,1,V100,y\n");
        assert_eq!(parse_str(&text).unwrap().len(), 2);
    }

    #[test]
    fn schema_drift_rejected() {
        let missing = "model,task,dataset,metric_percent,flops,gpu_hours,gpu_type\n";
        assert!(matches!(parse_str(missing), Err(Error::Schema { .. })));
        let extra = "model,task,dataset,metric_percent,flops,gpu_hours,gpu_type,source,notes\n";
        let err = parse_str(extra).unwrap_err();
        assert!(err.to_string().contains("notes"));
    }

    #[test]
    fn bad_task_and_ranges() {
        assert!(parse_str(&format!("{HEADER}a,dreaming,coco,50,1e9,1,V100,x\n")).is_err());
        assert!(parse_str(&format!("{HEADER}a,detection,coco,50,0,1,V100,x\n")).is_err());
        assert!(parse_str(&format!("{HEADER}a,detection,coco,50,1e9,-2,V100,x\n")).is_err());
        assert!(parse_str(&format!("{HEADER}a,detection,coco,50,1e9,1,,x\n")).is_err());
        assert!(parse_str(&format!("{HEADER}a,detection,coco,50,1e9\n")).is_err());
    }

    #[test]
    fn emit_shapes() {
        let mut buf = Vec::new();
        registry_to_writer(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), HEADER);

        let records = parse_str(SAMPLE_REGISTRY).unwrap();
        let mut buf = Vec::new();
        registry_to_writer(&records[..1], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }

    #[test]
    fn emit_to_unwritable_path_fails() {
        let err = emit_registry(&[], Path::new("/nonexistent-dir/reg.csv")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn complexity_store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        let mut store = ComplexityStore::load_or_default(&path).unwrap();
        store.upsert(ComplexityScore {
            dataset: "b".into(),
            kind: ComplexityKind::LogSumJsd,
            value: -0.25,
            warning: Some("low, with comma".into()),
        });
        store.upsert(ComplexityScore {
            dataset: "a".into(),
            kind: ComplexityKind::MeanEntropy,
            value: 6.125,
            warning: None,
        });
        store.save(&path).unwrap();
        let back = ComplexityStore::load(&path).unwrap();
        assert_eq!(back, store);
        assert_eq!(back.scores().next().unwrap().dataset, "a");
    }

    fn arb_record() -> impl Strategy<Value = ModelRecord> {
        (
            "[A-Za-z][A-Za-z0-9 ,\"-]{0,12}",
            prop_oneof![
                Just(Task::Classification),
                Just(Task::Segmentation),
                Just(Task::Detection)
            ],
            "[A-Za-z][A-Za-z0-9]{0,8}",
            0.0f64..=100.0,
            1.0f64..1e15,
            0.0f64..1e6,
            "[A-Z][A-Za-z0-9 ]{0,8}[A-Za-z0-9]",
            "[ -~]{0,20}",
        )
            .prop_map(
                |(model, task, dataset, metric_percent, flops, gpu_hours, gpu_type, source)| {
                    ModelRecord {
                        model: model.trim().to_string() + "m",
                        task,
                        dataset,
                        metric_percent,
                        flops,
                        gpu_hours,
                        gpu_type,
                        source: source.trim().to_string(),
                    }
                },
            )
    }

    fn dedup(records: Vec<ModelRecord>) -> Vec<ModelRecord> {
        let mut seen = HashSet::new();
        records
            .into_iter()
            .filter(|r| seen.insert((r.model.clone(), r.dataset.clone())))
            .collect()
    }

    proptest! {
        #[test]
        fn parse_inverts_emit(records in proptest::collection::vec(arb_record(), 0..20)) {
            let records = dedup(records);
            let mut buf = Vec::new();
            registry_to_writer(&records, &mut buf).unwrap();
            let back = parse_registry_from(buf.as_slice(), Path::new("mem.csv")).unwrap();
            prop_assert_eq!(back, records);
        }
    }
}
