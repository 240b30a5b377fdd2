//! Directory layouts and parallel per-image entropy extraction.
//!
//! A flat dataset is a directory of images. A class dataset holds one
//! subdirectory per class. Only files with a raster extension
//! (`png`, `jpg`, `jpeg`, `pgm`, `pnm`, `bmp`) are considered; anything that
//! fails to decode is reported as an [`ImageFailure`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::complexity::{
    class_distributions_from_entropies, image_entropy, Binning, ClassDistribution,
    EntropyDistribution, EntropySample,
};
use crate::error::{Error, Result};
use crate::imaging::load_grey;

const IMAGE_EXTENSIONS: [&str; 6] = ["png", "jpg", "jpeg", "pgm", "pnm", "bmp"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Flat,
    ClassPerSubdirectory,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageFailure {
    pub path: PathBuf,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct DatasetEntropy {
    pub samples: Vec<EntropySample>,
    pub distribution: EntropyDistribution,
    pub failures: Vec<ImageFailure>,
}

#[derive(Debug, Clone)]
pub struct ClassDatasetEntropy {
    /// Ordered by class label.
    pub classes: Vec<ClassDistribution>,
    pub samples: BTreeMap<String, Vec<EntropySample>>,
    pub failures: Vec<ImageFailure>,
}

impl ClassDatasetEntropy {
    /// All samples across classes, ordered by class then image id.
    pub fn all_samples(&self) -> Vec<EntropySample> {
        self.samples.values().flatten().cloned().collect()
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn is_hidden(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.starts_with('.'))
}

/// Image files directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && !is_hidden(&path) && is_image(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Class subdirectories of `dir`, sorted by name.
pub fn list_classes(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() && !is_hidden(&path) {
            let label = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            out.push((label, path));
        }
    }
    out.sort();
    Ok(out)
}

fn image_id(root: &Path, path: &Path, prefix: &str) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    let joined = rel
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/");
    format!("{prefix}{joined}")
}

/// Entropy of every file, computed in parallel; output order follows `files`.
fn entropies(
    root: &Path,
    files: &[PathBuf],
    prefix: &str,
) -> (Vec<EntropySample>, Vec<ImageFailure>) {
    let results: Vec<std::result::Result<EntropySample, ImageFailure>> = files
        .par_iter()
        .map(|path| match load_grey(path) {
            Ok(img) => Ok(EntropySample {
                image_id: image_id(root, path, prefix),
                entropy_bits: image_entropy(&img),
            }),
            Err(e) => Err(ImageFailure {
                path: path.clone(),
                error: e.to_string(),
            }),
        })
        .collect();
    let mut samples = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(s) => samples.push(s),
            Err(f) => failures.push(f),
        }
    }
    (samples, failures)
}

/// Entropy distribution of a flat image directory, optionally including a
/// parallel directory of label masks (sample ids prefixed `mask/`).
pub fn scan_flat(dir: &Path, masks: Option<&Path>, binning: Binning) -> Result<DatasetEntropy> {
    let files = list_images(dir)?;
    if files.is_empty() {
        return Err(Error::Degenerate(format!(
            "{} contains no images",
            dir.display()
        )));
    }
    let (mut samples, mut failures) = entropies(dir, &files, "");
    if let Some(mask_dir) = masks {
        let mask_files = list_images(mask_dir)?;
        let (m_samples, m_failures) = entropies(mask_dir, &mask_files, "mask/");
        samples.extend(m_samples);
        failures.extend(m_failures);
    }
    if samples.is_empty() {
        return Err(Error::Degenerate(format!(
            "all {} images in {} failed to decode",
            failures.len(),
            dir.display()
        )));
    }
    let distribution =
        EntropyDistribution::from_entropies(binning, samples.iter().map(|s| s.entropy_bits));
    Ok(DatasetEntropy {
        samples,
        distribution,
        failures,
    })
}

/// Per-class entropy distributions of a class-per-subdirectory dataset.
pub fn scan_classes(dir: &Path, binning: Binning) -> Result<ClassDatasetEntropy> {
    let classes = list_classes(dir)?;
    if classes.is_empty() {
        return Err(Error::Degenerate(format!(
            "{} has no class subdirectories",
            dir.display()
        )));
    }
    let mut samples = BTreeMap::new();
    let mut failures = Vec::new();
    for (label, class_dir) in classes {
        let files = list_images(&class_dir)?;
        let (class_samples, class_failures) = entropies(dir, &files, "");
        failures.extend(class_failures);
        if class_samples.is_empty() {
            return Err(Error::EmptyClass(label));
        }
        samples.insert(label, class_samples);
    }
    let entropies_by_class = samples
        .iter()
        .map(|(label, s)| (label.clone(), s.iter().map(|x| x.entropy_bits).collect()))
        .collect();
    let classes = class_distributions_from_entropies(entropies_by_class, binning)?;
    Ok(ClassDatasetEntropy {
        classes,
        samples,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn flat_scan_collects_failures() {
        let dir = tempfile::tempdir().unwrap();
        synth::write_flat_dataset(dir.path(), 4, 8, 8, 1, 3).unwrap();
        fs::write(dir.path().join("broken.png"), b"\x89PNG\r\n\x1a\nnope").unwrap();
        fs::write(dir.path().join("notes.txt"), b"ignored").unwrap();
        let scan = scan_flat(dir.path(), None, Binning::default()).unwrap();
        assert_eq!(scan.samples.len(), 4);
        assert_eq!(scan.failures.len(), 1);
        assert!(scan.failures[0].path.ends_with("broken.png"));
        assert_eq!(scan.distribution.counts()[0], 4);
    }

    #[test]
    fn empty_and_all_failed_directories() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            scan_flat(dir.path(), None, Binning::default()),
            Err(Error::Degenerate(_))
        ));
        fs::write(dir.path().join("a.png"), b"junk").unwrap();
        let err = scan_flat(dir.path(), None, Binning::default()).unwrap_err();
        assert!(err.to_string().contains("failed"));
    }

    #[test]
    fn masks_are_included_when_requested() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("images");
        let masks = dir.path().join("masks");
        synth::write_flat_dataset(&images, 3, 8, 8, 256, 1).unwrap();
        synth::write_flat_dataset(&masks, 3, 8, 8, 2, 2).unwrap();
        let without = scan_flat(&images, None, Binning::default()).unwrap();
        let with = scan_flat(&images, Some(&masks), Binning::default()).unwrap();
        assert_eq!(without.samples.len(), 3);
        assert_eq!(with.samples.len(), 6);
        assert!(with.samples[3].image_id.starts_with("mask/"));
    }

    #[test]
    fn class_scan_rejects_class_without_images() {
        let dir = tempfile::tempdir().unwrap();
        synth::write_flat_dataset(&dir.path().join("cat"), 2, 4, 4, 4, 1).unwrap();
        fs::create_dir(dir.path().join("dog")).unwrap();
        fs::write(dir.path().join("dog").join("x.png"), b"junk").unwrap();
        let err = scan_classes(dir.path(), Binning::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyClass(ref c) if c == "dog"));
    }

    #[test]
    fn class_scan_ids_and_order() {
        let dir = tempfile::tempdir().unwrap();
        synth::write_flat_dataset(&dir.path().join("b"), 2, 4, 4, 4, 1).unwrap();
        synth::write_flat_dataset(&dir.path().join("a"), 3, 4, 4, 4, 2).unwrap();
        let scan = scan_classes(dir.path(), Binning::default()).unwrap();
        assert_eq!(scan.classes.len(), 2);
        assert_eq!(scan.classes[0].label, "a");
        assert_eq!(scan.classes[0].distribution.sample_count(), 3);
        assert!(scan.samples["b"][0].image_id.starts_with("b/"));
        assert_eq!(scan.all_samples().len(), 5);
    }
}
