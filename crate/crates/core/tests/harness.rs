mod common;

use std::path::Path;

use semnet::adaptation::DriftMode;
use semnet::codec::{SemanticCodec, TrainConfig};
use semnet::harness::checkpoint::{Checkpoint, Dtype};
use semnet::harness::config::{ExperimentConfig, ExperimentKind};
use semnet::harness::experiments::*;
use semnet::harness::metrics::TextTable;
use semnet::lightweight::SessionConfig;
use semnet::numerics::Rng;
use semnet::orchestration::Scheme;

#[test]
fn csv_headers_are_pinned() {
    assert_eq!(CODEC_TRAINING_HEADER, "epoch,snr_db,train_mse,val_mse,val_psnr_db");
    assert_eq!(DRIFT_HEADER, "mode,epoch,snr_db,mse,psnr_db");
    assert_eq!(
        DRIFT_SUMMARY_HEADER,
        "mode,drop_epoch,snr_db,pre_drop_psnr_db,dip_db,recovery_epochs,final_psnr_db"
    );
    assert_eq!(
        SAMPLING_HEADER,
        "source_size,patch_size,max_rounds,image,label,predicted,correct,rounds_used,patches_sent,symbols_sent,final_confidence,entropies"
    );
    assert_eq!(
        SAMPLING_SUMMARY_HEADER,
        "source_size,patch_size,max_rounds,images,accuracy,mean_rounds,mean_symbols"
    );
    assert_eq!(COMPRESS_HEADER, "variant,bits,prune_ratio,sparsity,weight_bytes,psnr_db,psnr_loss_db");
    assert_eq!(SURFACE_HEADER, "rho,snr_db,psnr_db,accuracy");
    assert_eq!(
        ORCHESTRATION_HEADER,
        "scheme,slot,link,beam,power_level,rho_index,sinr_db,qoe,mean_qoe"
    );
    assert_eq!(
        ORCHESTRATION_SUMMARY_HEADER,
        "scheme,seed,first_window_qoe,final_window_qoe,episode_qoe"
    );
}

#[test]
fn trained_codec_checkpoint_round_trips_bitwise() {
    let data = common::mnist();
    let mut codec = SemanticCodec::for_ratio(784, 0.125, &mut Rng::new(1, "init")).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 64,
        lr: 1e-3,
    };
    let mut ch = semnet::channel::Channel::new(semnet::channel::ChannelModel::awgn(15.0));
    semnet::codec::train_codec(
        &mut codec,
        &mut ch,
        &data.train.images.slice_rows(0, 256),
        &data.test.images.slice_rows(0, 64),
        &cfg,
        &mut Rng::new(1, "train"),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("codec.semc");
    let ck = Checkpoint::new("codec", 1, "digest", Dtype::F64, &[("encoder", &codec.encoder), ("decoder", &codec.decoder)]);
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    for (name, net) in [("encoder", &codec.encoder), ("decoder", &codec.decoder)] {
        let a = net.flat_params();
        let b = back.network(name).unwrap().flat_params();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()), "{name}");
        assert_eq!(back.network(name).unwrap().activations(), net.activations());
    }
    assert_eq!(back, ck);
    assert_eq!(std::fs::read(&path).unwrap(), back.to_bytes().unwrap());
}

#[test]
fn unknown_keys_are_rejected() {
    assert!(ExperimentConfig::from_flat_json(r#"{"experiment":"drift","drift.run.epochz":3}"#).is_err());
    assert!(ExperimentConfig::from_flat_json(r#"{"experiment":"drift","drift.run.epochs":"three"}"#).is_err());
    assert!(ExperimentConfig::from_flat_json(r#"{"experiment":"drift","drift.run.epochs":3}"#).is_ok());
}

fn orchestrate_config(out: &Path, surface: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(ExperimentKind::Orchestrate);
    c.seed = 5;
    c.out = out.to_path_buf();
    let o = &mut c.settings.orchestration;
    o.surface.path = Some(surface.to_path_buf());
    o.hierarchy.network.links = 2;
    o.hierarchy.network.episode_slots = 400;
    o.hierarchy.block_frames = 10;
    o.hierarchy.warmup_blocks = 1;
    o.hierarchy.batch_size = 16;
    c
}

#[test]
fn orchestrate_reruns_are_byte_identical_and_carry_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let surface = dir.path().join("surface.json");
    std::fs::write(&surface, serde_json::to_string(&common::toy_surface()).unwrap()).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first = run_experiment(&orchestrate_config(&a, &surface), Path::new("unused")).unwrap();
    run_experiment(&orchestrate_config(&b, &surface), Path::new("unused")).unwrap();
    let mut csvs = 0;
    for file in &first.files {
        let name = file.file_name().unwrap();
        if file.extension().is_some_and(|x| x == "csv") {
            csvs += 1;
            assert_eq!(std::fs::read(file).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name:?}");
        }
    }
    assert_eq!(csvs, 3);

    let run: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["version"], VERSION);
    assert_eq!(run["experiment"], "orchestrate");
    let resolved = ExperimentConfig::load(&a.join("config.json")).unwrap();
    assert_eq!(resolved, orchestrate_config(&a, &surface));

    let summary = TextTable::read(&a.join("orchestration_summary.csv")).unwrap();
    assert_eq!(summary.records.len(), Scheme::ALL.len());
    let trace = TextTable::read(&a.join("orchestration.csv")).unwrap();
    assert_eq!(trace.records.len(), Scheme::ALL.len() * 400 * 2);
    assert!(trace.records.iter().all(|r| r.len() == trace.header.len()));

    // Plots and summary from the same directory.
    let mut report = ExperimentConfig::new(ExperimentKind::Report);
    report.out = dir.path().join("report");
    report.settings.report.inputs = vec![a.clone()];
    let made = run_experiment(&report, Path::new("unused")).unwrap();
    let svgs = made.files.iter().filter(|f| f.extension().is_some_and(|x| x == "svg")).count();
    assert_eq!(svgs, 3, "surface, trace and per-seed charts");
    assert!(!TextTable::read(&report.out.join("summary.csv")).unwrap().records.is_empty());
}

#[test]
fn failures_leave_an_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let c = orchestrate_config(&out, &dir.path().join("missing.json"));
    assert!(run_experiment(&c, Path::new("unused")).is_err());
    let record: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("error.json")).unwrap()).unwrap();
    assert_eq!(record["experiment"], "orchestrate");
    assert_eq!(record["version"], VERSION);
    assert!(record["kind"].is_string() && record["message"].is_string());
}

fn tiny_data(c: &mut ExperimentConfig) {
    c.settings.data.train_images = 600;
    c.settings.data.test_images = 200;
    c.settings.codec.val_images = 100;
    c.settings.codec.train.epochs = 1;
}

#[test]
fn drift_modes_share_the_epoch_grid() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::new(ExperimentKind::Drift);
    c.out = dir.path().to_path_buf();
    tiny_data(&mut c);
    let d = &mut c.settings.drift;
    d.modes = vec![DriftMode::None, DriftMode::FinetuneReal];
    d.schedule = vec![(0, 21.0), (2, 12.0)];
    d.run.epochs = 4;
    d.run.samples_per_epoch = 2;
    run_experiment(&c, &common::data_dir()).unwrap();

    let t = TextTable::read(&dir.path().join("drift.csv")).unwrap();
    let rows = |mode: &str| -> Vec<Vec<String>> {
        t.records.iter().filter(|r| r[0] == mode).cloned().collect()
    };
    let (none, real) = (rows("none"), rows("finetune_real"));
    assert_eq!(none.len(), 4);
    let grid = |rs: &[Vec<String>]| rs.iter().map(|r| (r[1].clone(), r[2].clone())).collect::<Vec<_>>();
    assert_eq!(grid(&none), grid(&real));
    assert_ne!(
        none.iter().map(|r| &r[4]).collect::<Vec<_>>(),
        real.iter().map(|r| &r[4]).collect::<Vec<_>>()
    );
    assert!(!dir.path().join("gan.semc").exists());
}

#[test]
fn sampling_writes_one_row_per_image_patch_and_budget() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::new(ExperimentKind::Sampling);
    c.out = dir.path().to_path_buf();
    tiny_data(&mut c);
    let s = &mut c.settings.sampling;
    s.source_sizes = vec![28];
    s.patch_sizes = vec![4, 8];
    s.session = SessionConfig {
        max_rounds: 2,
        ..SessionConfig::default()
    };
    s.codec_train.epochs = 1;
    s.codec_train_images = 100;
    s.classifier.epochs = 1;
    s.eval_images = 20;
    run_experiment(&c, &common::data_dir()).unwrap();

    let t = TextTable::read(&dir.path().join("sampling.csv")).unwrap();
    assert_eq!(t.records.len(), 20 * 2 * 2);
    let mut keys: Vec<(String, String, String)> =
        t.records.iter().map(|r| (r[1].clone(), r[2].clone(), r[3].clone())).collect();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), 2 * 2 * 20);
    let rounds = t.column("rounds_used").unwrap();
    let entropies = t.column("entropies").unwrap();
    for r in &t.records {
        let used: usize = r[rounds].parse().unwrap();
        assert_eq!(r[entropies].split(';').count(), used);
    }
    let summary = TextTable::read(&dir.path().join("sampling_summary.csv")).unwrap();
    assert_eq!(summary.records.len(), 4);
}
