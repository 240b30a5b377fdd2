//! Seeded synthetic image datasets for demos, tests and benchmarks.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::GreyImage;
use crate::registry::Task;

/// `levels` evenly spaced intensities between 0 and 255 (1..=256 levels).
fn level_values(levels: u16) -> Vec<u8> {
    match levels {
        0 | 1 => vec![128],
        n => (0..n)
            .map(|k| ((u32::from(k) * 255 + u32::from(n - 1) / 2) / u32::from(n - 1)) as u8)
            .collect(),
    }
}

/// Random image drawing each pixel uniformly from `levels` intensities.
pub fn random_image<R: Rng>(rng: &mut R, width: u32, height: u32, levels: u16) -> GreyImage {
    let values = level_values(levels.clamp(1, 256));
    let px = (0..width as usize * height as usize)
        .map(|_| values[rng.gen_range(0..values.len())])
        .collect();
    GreyImage::new(width.max(1), height.max(1), px).expect("dimensions match pixel count")
}

/// 16x16 image holding every intensity exactly once: 8 bits of entropy.
pub fn equiprobable_image() -> GreyImage {
    GreyImage::new(16, 16, (0..=255).collect()).expect("256 pixels")
}

fn save_png(image: &GreyImage, path: &Path) -> Result<()> {
    image::save_buffer_with_format(
        path,
        image.intensities(),
        image.width(),
        image.height(),
        image::ExtendedColorType::L8,
        image::ImageFormat::Png,
    )
    .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))
}

/// Write `count` greyscale PNGs named `img_00000.png`, ... into `dir`.
pub fn write_flat_dataset(
    dir: &Path,
    count: usize,
    width: u32,
    height: u32,
    levels: u16,
    seed: u64,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..count {
        let img = random_image(&mut rng, width, height, levels);
        save_png(&img, &dir.join(format!("img_{i:05}.png")))?;
    }
    Ok(())
}

/// Range of intensity-level counts drawn for images of class `index`.
pub fn class_level_range(index: usize) -> (u16, u16) {
    let lo = (2 + 24 * index).min(216) as u16;
    (lo, lo + 40)
}

/// In-memory labelled corpus; class `c` draws its per-image level count
/// from [`class_level_range`], so classes differ in entropy profile.
pub fn labelled_corpus(
    classes: usize,
    per_class: usize,
    width: u32,
    height: u32,
    seed: u64,
) -> Vec<(String, GreyImage)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        let (lo, hi) = class_level_range(c);
        for _ in 0..per_class {
            let levels = rng.gen_range(lo..=hi);
            out.push((
                format!("class_{c:03}"),
                random_image(&mut rng, width, height, levels),
            ));
        }
    }
    out
}

/// Write a class-per-subdirectory dataset mirroring [`labelled_corpus`].
pub fn write_class_dataset(
    dir: &Path,
    classes: usize,
    per_class: usize,
    width: u32,
    height: u32,
    seed: u64,
) -> Result<()> {
    let corpus = labelled_corpus(classes, per_class, width, height, seed);
    for (i, (label, img)) in corpus.iter().enumerate() {
        let class_dir = dir.join(label);
        fs::create_dir_all(&class_dir).map_err(|e| Error::io(&class_dir, e))?;
        save_png(
            img,
            &class_dir.join(format!("img_{:05}.png", i % per_class.max(1))),
        )?;
    }
    Ok(())
}

/// A generated stand-in for one dataset of the sample registry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticDataset {
    pub id: String,
    pub task: Task,
    pub path: PathBuf,
}

/// Generate small stand-ins for the datasets named in the sample registry:
/// `ImageNet` (classification, class layout), `Cityscapes` and `COCO`
/// (flat). The output is a pure function of `seed`.
pub fn write_sample_datasets(root: &Path, seed: u64) -> Result<Vec<SyntheticDataset>> {
    let imagenet = root.join("ImageNet");
    write_class_dataset(&imagenet, 5, 12, 16, 16, seed)?;
    let cityscapes = root.join("Cityscapes");
    write_flat_dataset(&cityscapes, 20, 32, 32, 200, seed.wrapping_add(1))?;
    let coco = root.join("COCO");
    write_flat_dataset(&coco, 20, 32, 32, 120, seed.wrapping_add(2))?;
    Ok(vec![
        SyntheticDataset {
            id: "ImageNet".into(),
            task: Task::Classification,
            path: imagenet,
        },
        SyntheticDataset {
            id: "Cityscapes".into(),
            task: Task::Segmentation,
            path: cityscapes,
        },
        SyntheticDataset {
            id: "COCO".into(),
            task: Task::Detection,
            path: coco,
        },
    ])
}
