//! Library results checked against independent brute-force oracles.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use nofade::carbon::{CarbonConfig, HardwareDb};
use nofade::commands::{
    run_carbon, run_complexity, run_entropy, run_nofade, run_report, CarbonCommand,
    ComplexityCommand, EntropyCommand, NofadeCommand, ReportCommand, ReportKind,
};
use nofade::complexity::{
    class_distributions, dataset_entropy_distribution, image_entropy, jensen_shannon_distance,
    mean_entropy, pairwise_jsd_sum, Binning, ClassDistribution, EntropyDistribution, EntropySample,
};
use nofade::dataset::Layout;
use nofade::imaging::GreyImage;
use nofade::registry::{
    emit_registry, parse_registry, persist_results, registry_to_writer, snapshot_body, ModelRecord,
    ResultRow, Task, SAMPLE_REGISTRY,
};
use nofade::synth;
use nofade::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Entropy from a map of pixel value -> probability, built without histograms.
fn naive_entropy(pixels: &[u8]) -> f64 {
    let mut freq: HashMap<u8, f64> = HashMap::new();
    for &p in pixels {
        *freq.entry(p).or_default() += 1.0;
    }
    let n = pixels.len() as f64;
    freq.values()
        .map(|c| c / n)
        .map(|p| -p * p.ln() / std::f64::consts::LN_2)
        .sum()
}

/// JSD written out from the textbook definition with natural logs, converted to bits.
fn naive_jsd(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 0..p.len() {
        let m = (p[k] + q[k]) / 2.0;
        if p[k] > 0.0 {
            acc += 0.5 * p[k] * (p[k] / m).ln();
        }
        if q[k] > 0.0 {
            acc += 0.5 * q[k] * (q[k] / m).ln();
        }
    }
    (acc / std::f64::consts::LN_2).max(0.0).sqrt()
}

fn probs(dist: &EntropyDistribution) -> Vec<f64> {
    let n = dist.sample_count() as f64;
    dist.counts().iter().map(|&c| c as f64 / n).collect()
}

fn brute_force_pairwise(classes: &[ClassDistribution]) -> (f64, usize) {
    let mut sum = 0.0;
    let mut terms = 0;
    for i in 0..classes.len() {
        for j in 0..classes.len() {
            if i < j {
                sum += naive_jsd(
                    &probs(&classes[i].distribution),
                    &probs(&classes[j].distribution),
                );
                terms += 1;
            }
        }
    }
    (sum, terms)
}

#[test]
fn entropy_matches_probability_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..200 {
        let levels = rng.gen_range(1..=256);
        let img = synth::random_image(&mut rng, 8, 8, levels);
        let h = image_entropy(&img);
        assert!((h - naive_entropy(img.intensities())).abs() < 1e-12);
    }
}

#[test]
fn uniform_noise_mean_near_ceiling() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let images = (0..1000).map(|i| (i.to_string(), synth::random_image(&mut rng, 256, 256, 256)));
    let (samples, dist) = dataset_entropy_distribution(images, Binning::default()).unwrap();
    let mean = mean_entropy(&samples).unwrap();
    assert!((8.0 - mean).abs() < 0.1, "mean {mean}");
    assert_eq!(dist.mode_bin(), Some(63));
}

#[test]
fn stream_order_does_not_matter() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let imgs: Vec<(String, GreyImage)> = (0..50)
        .map(|i| {
            (
                i.to_string(),
                synth::random_image(&mut rng, 6, 6, (i % 40 + 1) as u16),
            )
        })
        .collect();
    let (_, forward) = dataset_entropy_distribution(imgs.clone(), Binning::default()).unwrap();
    let (_, backward) =
        dataset_entropy_distribution(imgs.into_iter().rev(), Binning::default()).unwrap();
    assert_eq!(forward, backward);
}

#[test]
fn mean_matches_independent_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for n in [50, 100] {
        let samples: Vec<EntropySample> = (0..n)
            .map(|i| EntropySample {
                image_id: i.to_string(),
                entropy_bits: rng.gen_range(0.0..8.0),
            })
            .collect();
        let mut acc = 0.0;
        for s in &samples {
            acc += s.entropy_bits;
        }
        assert!((mean_entropy(&samples).unwrap() - acc / n as f64).abs() < 1e-12);
    }
}

#[test]
fn cifar_shaped_class_counts() {
    let corpus = synth::labelled_corpus(10, 100, 8, 8, 1);
    let classes = class_distributions(corpus, Binning::default()).unwrap();
    assert_eq!(classes.len(), 10);
    assert!(classes.iter().all(|c| c.distribution.sample_count() == 100));
}

#[test]
fn pairwise_sum_matches_double_loop() {
    let corpus = synth::labelled_corpus(10, 60, 8, 8, 77);
    let classes = class_distributions(corpus, Binning::default()).unwrap();
    let got = pairwise_jsd_sum(&classes).unwrap();
    let (sum, terms) = brute_force_pairwise(&classes);
    assert_eq!(got.terms, 45);
    assert_eq!(terms, 45);
    assert!((got.sum - sum).abs() < 1e-12, "{} vs {}", got.sum, sum);

    let mut reversed = classes.clone();
    reversed.reverse();
    assert!((pairwise_jsd_sum(&reversed).unwrap().sum - got.sum).abs() < 1e-12);
}

#[test]
fn jsd_matches_textbook_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let a: Vec<f64> = (0..64).map(|_| rng.gen::<f64>().powi(3)).collect();
        let b: Vec<f64> = (0..64).map(|_| rng.gen::<f64>().powi(3)).collect();
        let p = nofade::complexity::ProbabilityVector::from_weights(&a).unwrap();
        let q = nofade::complexity::ProbabilityVector::from_weights(&b).unwrap();
        let d = jensen_shannon_distance(&p, &q).unwrap();
        assert!((d - naive_jsd(p.as_slice(), q.as_slice())).abs() < 1e-12);
    }
}

fn write_sample_registry(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("registry.csv");
    fs::write(&path, SAMPLE_REGISTRY).unwrap();
    path
}

#[test]
fn registry_file_round_trip_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let src = write_sample_registry(dir.path());
    let records = parse_registry(&src).unwrap();
    let out = dir.path().join("again.csv");
    emit_registry(&records, &out).unwrap();
    assert_eq!(parse_registry(&out).unwrap(), records);

    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let random: Vec<ModelRecord> = (0..100)
        .map(|i| ModelRecord {
            model: format!("model-{i}"),
            task: [Task::Classification, Task::Segmentation, Task::Detection][i % 3],
            dataset: format!("ds{}", i % 7),
            metric_percent: rng.gen_range(0.0..=100.0),
            flops: rng.gen_range(1e6..1e12),
            gpu_hours: rng.gen_range(0.0..1e5),
            gpu_type: "V100".into(),
            source: format!("note, with \"quotes\" {i}"),
        })
        .collect();
    let mut a = Vec::new();
    let mut b = Vec::new();
    registry_to_writer(&random, &mut a).unwrap();
    registry_to_writer(&random, &mut b).unwrap();
    assert_eq!(a, b);
}

fn sample_setup(root: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let data = root.join("data");
    let datasets = synth::write_sample_datasets(&data, 7).unwrap();
    let scores = root.join("scores.csv");
    for d in datasets {
        run_complexity(&ComplexityCommand {
            dataset: d.path,
            task: d.task,
            dataset_id: Some(d.id),
            masks: None,
            binning: Binning::default(),
            scores: scores.clone(),
            allow_failures: false,
        })
        .unwrap();
    }
    (write_sample_registry(root), scores)
}

#[test]
fn complexity_command_matches_oracle_on_ten_classes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ten");
    synth::write_class_dataset(&data, 10, 20, 8, 8, 5).unwrap();
    let outcome = run_complexity(&ComplexityCommand {
        dataset: data,
        task: Task::Classification,
        dataset_id: None,
        masks: None,
        binning: Binning::default(),
        scores: dir.path().join("scores.csv"),
        allow_failures: false,
    })
    .unwrap();

    // same pixels, computed in memory without touching the file pipeline
    let classes =
        class_distributions(synth::labelled_corpus(10, 20, 8, 8, 5), Binning::default()).unwrap();
    let (sum, terms) = brute_force_pairwise(&classes);
    assert_eq!(outcome.pairwise.unwrap().terms, terms);
    assert!((outcome.score.value - sum.ln()).abs() < 1e-12);
    assert_eq!(outcome.score.dataset, "ten");
}

#[test]
fn identical_classes_are_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    for class in ["a", "b"] {
        synth::write_flat_dataset(&dir.path().join("ds").join(class), 3, 4, 4, 1, 1).unwrap();
    }
    let err = run_complexity(&ComplexityCommand {
        dataset: dir.path().join("ds"),
        task: Task::Classification,
        dataset_id: None,
        masks: None,
        binning: Binning::default(),
        scores: dir.path().join("scores.csv"),
        allow_failures: false,
    })
    .unwrap_err();
    assert!(matches!(err, Error::Degenerate(_)), "{err}");
    assert!(!dir.path().join("scores.csv").exists());
}

#[test]
fn single_class_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    synth::write_flat_dataset(&dir.path().join("ds").join("only"), 3, 4, 4, 8, 1).unwrap();
    let err = run_complexity(&ComplexityCommand {
        dataset: dir.path().join("ds"),
        task: Task::Classification,
        dataset_id: None,
        masks: None,
        binning: Binning::default(),
        scores: dir.path().join("scores.csv"),
        allow_failures: false,
    })
    .unwrap_err();
    assert!(matches!(err, Error::Refused(_)));
}

#[test]
fn segmentation_over_constant_images_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    synth::write_flat_dataset(dir.path(), 5, 8, 8, 1, 0).unwrap();
    let outcome = run_complexity(&ComplexityCommand {
        dataset: dir.path().to_path_buf(),
        task: Task::Segmentation,
        dataset_id: Some("flat".into()),
        masks: None,
        binning: Binning::default(),
        scores: dir.path().join("scores.csv"),
        allow_failures: false,
    })
    .unwrap();
    assert_eq!(outcome.score.value, 0.0);
}

fn entropy_cmd(dataset: &Path, out: &Path, layout: Layout) -> EntropyCommand {
    EntropyCommand {
        dataset: dataset.to_path_buf(),
        layout,
        masks: None,
        dataset_id: None,
        out_dir: out.to_path_buf(),
        binning: Binning::default(),
        allow_failures: false,
    }
}

#[test]
fn entropy_command_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let flat = dir.path().join("flat");
    synth::write_flat_dataset(&flat, 10, 8, 8, 1, 0).unwrap();
    let out = dir.path().join("out");
    let o = run_entropy(&entropy_cmd(&flat, &out, Layout::Flat)).unwrap();
    assert_eq!(o.distribution.counts()[0], 10);
    assert_eq!(o.files.len(), 3);
    let svg = fs::read_to_string(out.join("flat.entropy-hist.svg")).unwrap();
    assert!(svg.contains(r#"data-bin="0" data-count="10""#));

    let noise = dir.path().join("noise");
    synth::write_flat_dataset(&noise, 20, 64, 64, 256, 9).unwrap();
    let o = run_entropy(&entropy_cmd(&noise, &out, Layout::Flat)).unwrap();
    assert_eq!(o.distribution.mode_bin(), Some(63));

    let classes = dir.path().join("classes");
    synth::write_class_dataset(&classes, 2, 3, 4, 4, 1).unwrap();
    let o = run_entropy(&entropy_cmd(&classes, &out, Layout::ClassPerSubdirectory)).unwrap();
    assert_eq!(o.files.len(), 5);
    assert!(out.join("classes.class-class_001.entropy.csv").exists());
}

#[test]
fn entropy_command_failure_policy() {
    let dir = tempfile::tempdir().unwrap();
    let flat = dir.path().join("flat");
    synth::write_flat_dataset(&flat, 3, 8, 8, 4, 0).unwrap();
    fs::write(flat.join("bad.jpg"), b"\xff\xd8\xff\xe0garbage").unwrap();
    let out = dir.path().join("out");

    let err = run_entropy(&entropy_cmd(&flat, &out, Layout::Flat)).unwrap_err();
    assert!(matches!(err, Error::DecodeFailures { count: 1, .. }));
    assert!(!out.exists(), "no partial outputs on failure");

    let mut cmd = entropy_cmd(&flat, &out, Layout::Flat);
    cmd.allow_failures = true;
    let o = run_entropy(&cmd).unwrap();
    assert_eq!(o.failures.len(), 1);
    assert!(out.join("flat.failures.csv").exists());
}

#[test]
fn carbon_rows_match_chained_arithmetic() {
    let dir = tempfile::tempdir().unwrap();
    let registry = write_sample_registry(dir.path());
    let db = HardwareDb::bundled();
    let out = dir.path().join("carbon.csv");
    let rows = run_carbon(&CarbonCommand {
        registry,
        hardware: db.clone(),
        config: CarbonConfig::default(),
        out: out.clone(),
    })
    .unwrap();
    assert_eq!(rows.len(), 5);
    for (r, e) in &rows {
        let gpu = db.gpu(&r.gpu_type).unwrap();
        let wh = r.flops * (gpu.tdp_watts / gpu.peak_flops + 1.0e-11) * r.gpu_hours;
        let t = wh / 1000.0 * 0.707e-3;
        assert!((e.power_wh - wh).abs() <= 1e-12 * wh);
        assert!((e.co2_tonnes - t).abs() <= 1e-12 * t);
    }
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().last().unwrap().starts_with("TOTAL,"));
}

#[test]
fn carbon_reports_unknown_gpu_with_row() {
    let dir = tempfile::tempdir().unwrap();
    let registry = dir.path().join("r.csv");
    fs::write(
        &registry,
        "model,task,dataset,metric_percent,flops,gpu_hours,gpu_type,source\n\
         a,detection,coco,50,1e9,0,V100,x\n\
         b,detection,coco,50,1e9,1,XYZ-9000,x\n",
    )
    .unwrap();
    let err = run_carbon(&CarbonCommand {
        registry,
        hardware: HardwareDb::bundled(),
        config: CarbonConfig::default(),
        out: dir.path().join("c.csv"),
    })
    .unwrap_err();
    assert!(matches!(err, Error::Row { row: 3, .. }), "{err}");
    assert!(err.to_string().contains("XYZ-9000"));
}

#[test]
fn zero_hours_row_has_zero_carbon() {
    let dir = tempfile::tempdir().unwrap();
    let registry = dir.path().join("r.csv");
    fs::write(
        &registry,
        "model,task,dataset,metric_percent,flops,gpu_hours,gpu_type,source\na,detection,coco,50,1e9,0,V100,x\n",
    )
    .unwrap();
    let rows = run_carbon(&CarbonCommand {
        registry,
        hardware: HardwareDb::bundled(),
        config: CarbonConfig::default(),
        out: dir.path().join("c.csv"),
    })
    .unwrap();
    assert_eq!((rows[0].1.power_wh, rows[0].1.co2_tonnes), (0.0, 0.0));
}

#[test]
fn scatter_y_equals_scoring_module() {
    let dir = tempfile::tempdir().unwrap();
    let (registry, scores) = sample_setup(dir.path());
    let (rows, snapshot) = run_nofade(&NofadeCommand {
        registry: registry.clone(),
        scores: scores.clone(),
        hardware: HardwareDb::bundled(),
        config: CarbonConfig::default(),
        out: dir.path().join("nofade.csv"),
        store: Some(dir.path().join("store")),
    })
    .unwrap();
    assert!(rows.iter().all(ResultRow::is_consistent));
    assert!(snapshot.is_some());

    for task in [Task::Classification, Task::Segmentation, Task::Detection] {
        let report = run_report(&ReportCommand {
            kind: ReportKind::NofadeScatter,
            registry: Some(registry.clone()),
            scores: Some(scores.clone()),
            samples: None,
            hardware: HardwareDb::bundled(),
            config: CarbonConfig::default(),
            out: dir.path().join(format!("scatter-{task}")),
            x_scale: None,
            y_scale: None,
            task: Some(task),
            dataset: None,
            binning: Binning::default(),
        })
        .unwrap();
        for p in &report.plot.unwrap().points {
            let row = rows.iter().find(|r| r.model == p.label).unwrap();
            assert_eq!(p.y.to_bits(), row.nofade.as_ref().unwrap().value.to_bits());
            assert_eq!(p.x.to_bits(), row.carbon.co2_tonnes.to_bits());
        }
    }
}

#[test]
fn flops_only_difference_gives_log_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let registry = dir.path().join("r.csv");
    fs::write(
        &registry,
        "model,task,dataset,metric_percent,flops,gpu_hours,gpu_type,source\n\
         small,detection,coco,50,100,10,V100,x\n\
         large,detection,coco,50,10000,10,V100,x\n",
    )
    .unwrap();
    let scores = dir.path().join("scores.csv");
    fs::write(
        &scores,
        "dataset,kind,value,warning\ncoco,mean-entropy,6.5,\n",
    )
    .unwrap();
    let report = run_report(&ReportCommand {
        kind: ReportKind::NofadeScatter,
        registry: Some(registry),
        scores: Some(scores),
        samples: None,
        hardware: HardwareDb::bundled(),
        config: CarbonConfig::default(),
        out: dir.path().join("s"),
        x_scale: None,
        y_scale: None,
        task: None,
        dataset: None,
        binning: Binning::default(),
    })
    .unwrap();
    let pts = report.plot.unwrap().points;
    assert_eq!(pts[0].y, 2.0 * pts[1].y);
}

#[test]
fn missing_score_names_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let registry = write_sample_registry(dir.path());
    let scores = dir.path().join("scores.csv");
    fs::write(
        &scores,
        "dataset,kind,value,warning\nImageNet,log-sum-jsd,2.5,\n",
    )
    .unwrap();
    let err = run_report(&ReportCommand {
        kind: ReportKind::NofadeScatter,
        registry: Some(registry),
        scores: Some(scores),
        samples: None,
        hardware: HardwareDb::bundled(),
        config: CarbonConfig::default(),
        out: dir.path().join("s"),
        x_scale: None,
        y_scale: None,
        task: Some(Task::Detection),
        dataset: None,
        binning: Binning::default(),
    })
    .unwrap_err();
    assert!(matches!(err, Error::MissingComplexity(ref d) if d == "COCO"));
    assert!(!dir.path().join("s.csv").exists());
}

#[test]
fn snapshot_hash_is_content_addressed() {
    let dir = tempfile::tempdir().unwrap();
    let (registry, scores) = sample_setup(dir.path());
    let run = |store: &Path| {
        run_nofade(&NofadeCommand {
            registry: registry.clone(),
            scores: scores.clone(),
            hardware: HardwareDb::bundled(),
            config: CarbonConfig::default(),
            out: dir.path().join("n.csv"),
            store: Some(store.to_path_buf()),
        })
        .unwrap()
    };
    let store = dir.path().join("store");
    let (rows, a) = run(&store);
    let (_, b) = run(&store);
    let (a, b) = (a.unwrap(), b.unwrap());
    assert_eq!(a.hash, b.hash);
    assert_ne!(a.path, b.path, "snapshots are appended, never replaced");
    assert_eq!(nofade::registry::list_snapshots(&store).unwrap().len(), 2);
    assert_eq!(nofade::registry::load_snapshot(&a.path).unwrap(), rows);

    let mut changed = rows.clone();
    changed[0].carbon.power_wh += 1e-9;
    assert_ne!(snapshot_body(&changed).unwrap().1, a.hash);

    assert!(matches!(
        persist_results(&[], &store),
        Err(Error::Degenerate(_))
    ));
}
