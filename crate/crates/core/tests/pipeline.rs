use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use cidnet::beamform::{BeamformGrid, BeamformedImage, ImageKind};
use cidnet::metrics::Envelope;
use cidnet::netspec::Variant;
use cidnet::nn::Signal;
use cidnet::pipeline::*;
use cidnet::{ComplexTensor, RealTensor, Shape};
use tempfile::TempDir;

/// A fast configuration: five tilts, sparse speckle, coarse grids.
fn small_config(root: &Path, scenes: usize) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.acquisition.tilt_angles = vec![-20.0, -10.0, 0.0, 10.0, 20.0];
    cfg.scene.density = 4.0;
    cfg.grid.iq = BeamformGrid::new(24, 16, 10e-3, 70e-3, 90.0);
    cfg.grid.rf = BeamformGrid::new(72, 16, 10e-3, 70e-3, 90.0);
    cfg.dataset.scenes = scenes;
    cfg.dataset.seed = 3;
    cfg.paths = PathsConfig {
        data: root.join("data"),
        models: root.join("models"),
        output: root.join("output"),
    };
    cfg
}

/// Every regular file below `root`, keyed by relative path.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

#[test]
fn simulation_writes_split_layout() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), 6);
    let summary = cmd_simulate(&cfg).unwrap();
    assert_eq!(summary.counts, [4, 1, 1]);
    let tilts = cfg.acquisition.tilt_angles.len();
    // annotations plus, per kind, every tilt, the target and the baseline
    assert_eq!(summary.files, 6 * (1 + 2 * (tilts + 2)));
    for (split, n) in SPLITS.iter().zip(summary.counts) {
        let dirs = scene_dirs(&cfg.paths.data, split).unwrap();
        assert_eq!(dirs.len(), n, "{split}");
        for dir in dirs {
            assert!(dir.join("annotations.json").is_file());
            for kind in ["iq", "rf"] {
                assert_eq!(fs::read_dir(dir.join(kind)).unwrap().count(), tilts + 2);
            }
        }
    }
    let manifest = Manifest::load(&cfg.paths.data).unwrap();
    assert_eq!(manifest.counts, [4, 1, 1]);
    assert_eq!(manifest.tilt_angles, cfg.acquisition.tilt_angles);
}

#[test]
fn default_acquisition_stores_every_tilt() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config(tmp.path(), 1);
    cfg.acquisition.tilt_angles = PipelineConfig::default().acquisition.tilt_angles;
    cfg.dataset.kinds = vec![ImageKind::Iq];
    cfg.dataset.split = [0.0, 0.0, 1.0];
    cmd_simulate(&cfg).unwrap();
    let dir = &scene_dirs(&cfg.paths.data, "test").unwrap()[0];
    let names: Vec<String> = fs::read_dir(dir.join("iq"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.len(), 31 + 2);
    assert!(names.contains(&"target.bin".to_string()));
    assert!(names.contains(&"baseline.bin".to_string()));
    assert!(!dir.join("rf").exists());
}

#[test]
fn simulation_is_reproducible_from_the_seed() {
    let (a, b, c) = (
        TempDir::new().unwrap(),
        TempDir::new().unwrap(),
        TempDir::new().unwrap(),
    );
    cmd_simulate(&small_config(a.path(), 3)).unwrap();
    cmd_simulate(&small_config(b.path(), 3)).unwrap();
    let mut other = small_config(c.path(), 3);
    other.dataset.seed = 4;
    cmd_simulate(&other).unwrap();
    let (ta, tb, tc) = (
        tree(&a.path().join("data")),
        tree(&b.path().join("data")),
        tree(&c.path().join("data")),
    );
    assert_eq!(ta, tb);
    let target = Path::new("train/scene_0000/iq/target.bin");
    assert!(
        ta.contains_key(target),
        "{:?}",
        ta.keys().collect::<Vec<_>>()
    );
    assert_ne!(ta[target], tc[target]);
}

#[test]
fn toy_training_stops_early_and_logs_every_epoch() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config(tmp.path(), 8);
    cfg.dataset.kinds = vec![ImageKind::Iq];
    cfg.dataset.split = [0.75, 0.125, 0.125];
    cfg.trainer.batch_size = 2;
    cfg.trainer.lr0 = 3e-2;
    cfg.trainer.plateau_patience = 1;
    cfg.trainer.stop_patience = 2;
    cfg.trainer.max_epochs = 200;
    cfg.trainer.crop = Some((8, 8));
    cmd_simulate(&cfg).unwrap();
    let outcome = cmd_train(&cfg).unwrap();
    assert_eq!(outcome.branches.len(), 1);
    let (path, report) = &outcome.branches[0];
    assert!(path.is_file());
    assert!(report.early_stopped);
    assert!(report.history.len() < cfg.trainer.max_epochs);

    let vals: Vec<f64> = report.history.iter().map(|r| r.val_loss).collect();
    let best_so_far: Vec<f64> = vals
        .iter()
        .scan(f64::INFINITY, |m, &v| {
            *m = m.min(v);
            Some(*m)
        })
        .collect();
    assert!(best_so_far.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(report.best_val_loss, *best_so_far.last().unwrap());
    // the run ends after `stop_patience` epochs without a new best
    assert_eq!(
        report.history.len(),
        report.best_epoch + cfg.trainer.stop_patience
    );

    let log = fs::read_to_string(cfg.paths.models.join("cid.loss.tsv")).unwrap();
    assert_eq!(log.lines().count(), report.history.len());
    let restored = load_model(&cfg.paths.models, Variant::Cid).unwrap();
    assert_eq!(restored.networks().len(), 1);
}

#[test]
fn two_branch_training_writes_both_archives() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config(tmp.path(), 3);
    cfg.dataset.kinds = vec![ImageKind::Iq];
    cfg.dataset.split = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
    cfg.model.variant = Variant::TwoBranch;
    cfg.trainer.max_epochs = 2;
    cfg.trainer.crop = Some((8, 8));
    cmd_simulate(&cfg).unwrap();
    let outcome = cmd_train(&cfg).unwrap();
    assert_eq!(outcome.branches.len(), 2);
    for stem in ["2bid_re", "2bid_im"] {
        assert!(cfg.paths.models.join(format!("{stem}.weights")).is_file());
        assert_eq!(
            fs::read_to_string(cfg.paths.models.join(format!("{stem}.loss.tsv")))
                .unwrap()
                .lines()
                .count(),
            2
        );
    }
    let written = cmd_infer(&cfg).unwrap();
    assert_eq!(written.len(), 1);
    let reports = cmd_eval(&cfg).unwrap();
    let methods: Vec<&str> = reports.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(methods, ["compound-3 (iq)", "2BID-Net"]);
}

#[test]
fn empty_test_set_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config(tmp.path(), 2);
    cfg.dataset.kinds = vec![ImageKind::Iq];
    cfg.dataset.split = [0.5, 0.5, 0.0];
    cmd_simulate(&cfg).unwrap();
    let err = cmd_eval(&cfg).unwrap_err();
    assert!(err.to_string().contains("empty test set"), "{err}");
}

#[test]
fn reference_scores_perfectly_against_itself() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config(tmp.path(), 2);
    cfg.dataset.kinds = vec![ImageKind::Iq];
    cfg.dataset.split = [0.0, 0.0, 1.0];
    cmd_simulate(&cfg).unwrap();
    let dirs = scene_dirs(&cfg.paths.data, "test").unwrap();
    let grid = cfg.grid.iq;
    let reference: Vec<Envelope> = dirs
        .iter()
        .map(|d| {
            Envelope::from_image(&BeamformedImage::load(d.join("iq/target.bin"), &grid).unwrap())
                .unwrap()
        })
        .collect();
    let annotations = dirs
        .iter()
        .map(|d| {
            serde_json::from_str(&fs::read_to_string(d.join("annotations.json")).unwrap()).unwrap()
        })
        .collect::<Vec<_>>();
    let report = evaluate_set("reference", &reference, &reference, &annotations, &grid).unwrap();
    assert_eq!(report.samples, 2);
    assert_eq!(report.psnr.mean, f64::INFINITY);
    assert!((report.ssim.mean - 1.0).abs() < 1e-12);
}

#[test]
fn full_size_grids_keep_their_shape() {
    let cid = Model::initialized(Variant::Cid, 1).unwrap();
    let g = BeamformGrid::full_iq();
    let x = Signal::Complex(ComplexTensor::zeros(Shape::new(
        3,
        g.depth_samples,
        g.angle_lines,
    )));
    assert_eq!(cid.forward(&x).unwrap().shape(), Shape::new(1, 338, 192));

    let id = Model::initialized(Variant::Id, 1).unwrap();
    let g = BeamformGrid::full_rf();
    let x = Signal::Real(RealTensor::zeros(Shape::new(
        3,
        g.depth_samples,
        g.angle_lines,
    )));
    assert_eq!(id.forward(&x).unwrap().shape(), Shape::new(1, 1013, 192));
}
