//! End-to-end experiment drivers.
//!
//! Each study function trains and evaluates in memory and returns its
//! results; the matching driver writes them as CSV, checkpoints and plots.
//! Given the same configuration and seed, every CSV is byte-identical.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::checkpoint::{Checkpoint, Dtype};
use super::config::{
    CodecSettings, CompressSettings, DataSettings, DriftSettings, ExperimentConfig, ExperimentKind,
    OrchestrationSettings, SamplingSettings, SurfaceSettings,
};
use super::metrics::{format_real, MetricsTable};
use super::mnist::{load_mnist, Dataset, PIXELS, SIDE};
use super::plot::{plot_csv, SUMMARY_HEADER};
use crate::adaptation::{collect_observations, train_gan, ChannelGan, DriftMode, DriftRun, run_drift};
use crate::channel::{Channel, ChannelModel, SnrSchedule};
use crate::codec::{build_quality_surface, train_codec, EpochMetrics, QualitySurface, SemanticCodec, TrainConfig};
use crate::error::{Error, Result};
use crate::lightweight::{
    evaluate_sessions, finetune_pruned, patch_codec, prune_codec, quantize, train_classifier, train_patch_codec,
    MaskedClassifier, PatchGrid, PruneMask, SamplingSummary, SessionConfig,
};
use crate::numerics::{Mlp, Rng, Tensor};
use crate::orchestration::{run_scheme, OrchestrationRun};
use crate::row;

/// Tool name and version, recorded beside every run's artifacts.
pub const VERSION: &str = concat!("semnet ", env!("CARGO_PKG_VERSION"));

pub const CODEC_TRAINING_HEADER: &str = "epoch,snr_db,train_mse,val_mse,val_psnr_db";
pub const DRIFT_HEADER: &str = "mode,epoch,snr_db,mse,psnr_db";
pub const DRIFT_SUMMARY_HEADER: &str = "mode,drop_epoch,snr_db,pre_drop_psnr_db,dip_db,recovery_epochs,final_psnr_db";
pub const SAMPLING_HEADER: &str = "source_size,patch_size,max_rounds,image,label,predicted,correct,rounds_used,patches_sent,symbols_sent,final_confidence,entropies";
pub const SAMPLING_SUMMARY_HEADER: &str = "source_size,patch_size,max_rounds,images,accuracy,mean_rounds,mean_symbols";
pub const COMPRESS_HEADER: &str = "variant,bits,prune_ratio,sparsity,weight_bytes,psnr_db,psnr_loss_db";
pub const SURFACE_HEADER: &str = "rho,snr_db,psnr_db,accuracy";
pub const ORCHESTRATION_HEADER: &str = "scheme,slot,link,beam,power_level,rho_index,sinr_db,qoe,mean_qoe";
pub const ORCHESTRATION_SUMMARY_HEADER: &str = "scheme,seed,first_window_qoe,final_window_qoe,episode_qoe";

/// Training and held-out images after the configured truncation.
#[derive(Debug, Clone)]
pub struct Data {
    pub train: Dataset,
    pub test: Dataset,
}

impl Data {
    pub fn load(dir: &Path, settings: &DataSettings) -> Result<Self> {
        let m = load_mnist(dir)?;
        let cut = |d: Dataset, n: usize| if n == 0 { d } else { d.take(n) };
        Ok(Self {
            train: cut(m.train, settings.train_images),
            test: cut(m.test, settings.test_images),
        })
    }

    /// The first `n` held-out images, used for validation and evaluation.
    pub fn held_out(&self, n: usize) -> Result<Dataset> {
        if n == 0 || self.test.is_empty() {
            return Err(Error::Config("no held-out images to evaluate on".into()));
        }
        Ok(self.test.take(n))
    }
}

/// Trains a full-image codec as configured.
pub fn train_image_codec(settings: &CodecSettings, data: &Data, seed: u64) -> Result<(SemanticCodec, Vec<EpochMetrics>)> {
    let val = data.held_out(settings.val_images)?;
    let mut codec = SemanticCodec::for_ratio(PIXELS, settings.rho, &mut Rng::new(seed, "codec/init"))?;
    let mut channel = Channel::new(ChannelModel::awgn(settings.train_snr_db));
    let log = train_codec(
        &mut codec,
        &mut channel,
        &data.train.images,
        &val.images,
        &settings.train,
        &mut Rng::new(seed, "codec/train"),
    )?;
    Ok((codec, log))
}

/// PSNR of `codec` at `snr_db` on `images`, with a noise realisation fixed
/// by `seed` so variants are compared on identical draws.
pub fn codec_psnr(codec: &SemanticCodec, images: &Tensor, snr_db: f64, seed: u64) -> Result<f64> {
    let mut channel = Channel::new(ChannelModel::awgn(snr_db));
    crate::channel::psnr(codec.evaluate(&mut channel, images, &mut Rng::new(seed, "eval/noise"))?)
}

#[derive(Debug, Clone)]
pub struct DriftStudy {
    pub codec: SemanticCodec,
    pub pretraining: Vec<EpochMetrics>,
    pub gan: Option<ChannelGan>,
    /// One run per configured mode, in order.
    pub runs: Vec<DriftRun>,
}

/// Trains a channel GAN on the codec's symbols at every SNR of `snrs_db`.
pub fn train_channel_gan(
    codec: &SemanticCodec,
    images: &Tensor,
    snrs_db: &[f64],
    settings: &DriftSettings,
    seed: u64,
) -> Result<ChannelGan> {
    let obs = collect_observations(codec, images, snrs_db, &mut Rng::new(seed, "gan/observe"))?;
    let mut gan = ChannelGan::new(&mut Rng::new(seed, "gan/init"))?;
    train_gan(&mut gan, &obs, &settings.gan, &mut Rng::new(seed, "gan/train"))?;
    Ok(gan)
}

/// Distinct SNRs of a schedule in order of appearance.
pub fn schedule_snrs(schedule: &SnrSchedule) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for &(_, snr) in schedule.entries() {
        if !out.contains(&snr) {
            out.push(snr);
        }
    }
    out
}

/// Pretrains a codec, then runs it through the SNR schedule in every mode.
/// All modes start from the same weights and see the same evaluation noise.
pub fn drift_study(codec_settings: &CodecSettings, settings: &DriftSettings, data: &Data, seed: u64) -> Result<DriftStudy> {
    let schedule = SnrSchedule::new(settings.schedule.clone())?;
    let val = data.held_out(codec_settings.val_images)?;
    let (codec, pretraining) = train_image_codec(codec_settings, data, seed)?;
    let gan = if settings.modes.contains(&DriftMode::FinetuneGan) {
        let images = data.train.take(settings.gan_observation_images).images;
        Some(train_channel_gan(&codec, &images, &schedule_snrs(&schedule), settings, seed)?)
    } else {
        None
    };
    let runs = settings
        .modes
        .iter()
        .map(|&mode| {
            let mut c = codec.clone();
            run_drift(
                &mut c,
                &schedule,
                mode,
                &settings.run,
                &data.train.images,
                &val.images,
                gan.as_ref(),
                &mut Rng::new(seed, "drift"),
            )
        })
        .collect::<Result<_>>()?;
    Ok(DriftStudy {
        codec,
        pretraining,
        gan,
        runs,
    })
}

/// Sessions for one (source size, patch size) pair at each round budget.
#[derive(Debug, Clone)]
pub struct SamplingCell {
    pub source_size: usize,
    pub patch_size: usize,
    pub codec: SemanticCodec,
    pub classifier: MaskedClassifier,
    /// `(max_rounds, summary)` for budgets `1..=session.max_rounds`.
    pub budgets: Vec<(usize, SamplingSummary)>,
}

/// Trains one patch codec per patch size and one classifier per cell, then
/// runs a session per evaluation image at every round budget.
pub fn sampling_study(settings: &SamplingSettings, data: &Data, seed: u64) -> Result<Vec<SamplingCell>> {
    let eval = data.held_out(settings.eval_images)?;
    let crops = data.train.take(settings.codec_train_images).images;
    let mut cells = Vec::new();
    for &patch in &settings.patch_sizes {
        let mut codec = patch_codec(patch, settings.codec_ratio, &mut Rng::new(seed, &format!("sampling/codec/{patch}")))?;
        train_patch_codec(
            &mut codec,
            &crops,
            &settings.source_sizes,
            settings.session.snr_db,
            &settings.codec_train,
            &mut Rng::new(seed, &format!("sampling/codec-train/{patch}")),
        )?;
        for &source in &settings.source_sizes {
            let label = format!("{source}/{patch}");
            let grid = PatchGrid::new(source, patch)?;
            let mut classifier = MaskedClassifier::new(grid, &mut Rng::new(seed, &format!("sampling/classifier/{label}")))?;
            train_classifier(
                &mut classifier,
                Some(&codec),
                &data.train.images,
                &data.train.labels,
                &settings.session,
                &settings.classifier,
                &mut Rng::new(seed, &format!("sampling/classifier-train/{label}")),
            )?;
            let budgets = (1..=settings.session.max_rounds)
                .map(|rounds| {
                    let session = SessionConfig {
                        max_rounds: rounds,
                        ..settings.session
                    };
                    let summary = evaluate_sessions(
                        &codec,
                        &classifier,
                        &eval.images,
                        &eval.labels,
                        &session,
                        &Rng::new(seed, "sampling/eval"),
                    )?;
                    Ok((rounds, summary))
                })
                .collect::<Result<_>>()?;
            cells.push(SamplingCell {
                source_size: source,
                patch_size: patch,
                codec: codec.clone(),
                classifier,
                budgets,
            });
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressRow {
    pub variant: String,
    /// Weight precision; 64 for the unquantized variants.
    pub bits: u32,
    pub prune_ratio: f64,
    pub sparsity: f64,
    pub weight_bytes: usize,
    pub psnr_db: f64,
    pub psnr_loss_db: f64,
}

#[derive(Debug, Clone)]
pub struct CompressStudy {
    pub codec: SemanticCodec,
    pub pruned: SemanticCodec,
    pub masks: Vec<PruneMask>,
    pub rows: Vec<CompressRow>,
}

fn weight_count(net: &Mlp) -> usize {
    net.layers().iter().map(|l| l.weight.len()).sum()
}

/// Trains a codec, then measures pruning (with and without fine-tuning),
/// weight quantization and both combined against it.
pub fn compress_study(codec_settings: &CodecSettings, settings: &CompressSettings, data: &Data, seed: u64) -> Result<CompressStudy> {
    let val = data.held_out(codec_settings.val_images)?;
    let (codec, _) = train_image_codec(codec_settings, data, seed)?;
    let eval = |c: &SemanticCodec| codec_psnr(c, &val.images, settings.eval_snr_db, seed);
    let dense_bytes = 8 * (weight_count(&codec.encoder) + weight_count(&codec.decoder));
    let base = eval(&codec)?;
    let mut rows = Vec::new();
    let mut push = |variant: &str, bits: u32, ratio: f64, sparsity: f64, bytes: usize, psnr: f64| {
        rows.push(CompressRow {
            variant: variant.to_owned(),
            bits,
            prune_ratio: ratio,
            sparsity,
            weight_bytes: bytes,
            psnr_db: psnr,
            psnr_loss_db: base - psnr,
        })
    };
    push("baseline", 64, 0.0, 0.0, dense_bytes, base);

    let quantized = |c: &SemanticCodec, bits: u32| -> Result<(SemanticCodec, usize)> {
        let (e, d) = (quantize(&c.encoder, bits)?, quantize(&c.decoder, bits)?);
        let bytes = e.weight_bytes() + d.weight_bytes();
        Ok((SemanticCodec::from_parts(e.dequantized, d.dequantized)?, bytes))
    };
    for &bits in &settings.bits {
        let (q, bytes) = quantized(&codec, bits)?;
        push("quantized", bits, 0.0, 0.0, bytes, eval(&q)?);
    }

    let mut pruned = codec.clone();
    let masks = prune_codec(&mut pruned, settings.prune_ratio)?;
    let total: usize = masks.iter().map(PruneMask::total).sum();
    let sparsity = masks.iter().map(PruneMask::pruned).sum::<usize>() as f64 / total as f64;
    push("pruned", 64, settings.prune_ratio, sparsity, dense_bytes, eval(&pruned)?);
    let finetune = TrainConfig {
        epochs: settings.finetune_epochs,
        lr: settings.finetune_lr,
        ..codec_settings.train
    };
    let mut channel = Channel::new(ChannelModel::awgn(codec_settings.train_snr_db));
    finetune_pruned(
        &mut pruned,
        &masks,
        &mut channel,
        &data.train.images,
        &finetune,
        &mut Rng::new(seed, "compress/finetune"),
    )?;
    push("pruned_finetuned", 64, settings.prune_ratio, sparsity, dense_bytes, eval(&pruned)?);
    for &bits in &settings.bits {
        let (q, bytes) = quantized(&pruned, bits)?;
        push("pruned_finetuned_quantized", bits, settings.prune_ratio, sparsity, bytes, eval(&q)?);
    }
    Ok(CompressStudy {
        codec,
        pruned,
        masks,
        rows,
    })
}

/// Trains one full-image codec per compression ratio and a clean-image
/// classifier, then tabulates PSNR and accuracy over the SNR grid.
pub fn measure_surface(settings: &SurfaceSettings, compressions: &[f64], data: &Data, seed: u64) -> Result<QualitySurface> {
    let eval = data.held_out(settings.eval_images)?;
    let grid = PatchGrid::new(SIDE, 7)?;
    let mut classifier = MaskedClassifier::new(grid, &mut Rng::new(seed, "surface/classifier"))?;
    train_classifier(
        &mut classifier,
        None,
        &data.train.images,
        &data.train.labels,
        &SessionConfig::default(),
        &settings.classifier,
        &mut Rng::new(seed, "surface/classifier-train"),
    )?;
    let codecs = compressions
        .iter()
        .enumerate()
        .map(|(i, &rho)| {
            let mut codec = SemanticCodec::for_ratio(PIXELS, rho, &mut Rng::new(seed, &format!("surface/codec/{i}")))?;
            let mut channel = Channel::new(ChannelModel::awgn(settings.codec_train_snr_db));
            train_codec(
                &mut codec,
                &mut channel,
                &data.train.images,
                &eval.images,
                &settings.codec_train,
                &mut Rng::new(seed, &format!("surface/codec-train/{i}")),
            )?;
            Ok(codec)
        })
        .collect::<Result<Vec<_>>>()?;
    build_quality_surface(
        compressions,
        &codecs,
        &settings.snr_grid_db,
        &eval.images,
        &eval.labels,
        &format!("held-out[0..{}]", eval.len()),
        &classifier,
        &mut Rng::new(seed, "surface/eval"),
    )
}

pub fn load_surface(path: &Path) -> Result<QualitySurface> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let s: QualitySurface = serde_json::from_str(&text)?;
    QualitySurface::new(s.rhos, s.snrs_db, s.psnr_db, s.accuracy, s.provenance)
}

/// Runs every configured scheme on one seed.
pub fn orchestration_study(settings: &OrchestrationSettings, surface: &QualitySurface, seed: u64) -> Result<Vec<OrchestrationRun>> {
    settings.hierarchy.validate()?;
    if surface.rhos != settings.hierarchy.network.compressions {
        return Err(Error::Config("quality surface and network use different compression codebooks".into()));
    }
    settings
        .schemes
        .iter()
        .map(|&s| run_scheme(s, &settings.hierarchy, surface, seed))
        .collect()
}

/// What a successful run left behind.
#[derive(Debug, Clone, Default)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    version: &'a str,
    experiment: &'a str,
    seed: u64,
    config_digest: String,
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    version: &'a str,
    experiment: &'a str,
    kind: &'a str,
    message: String,
}

struct Output<'a> {
    config: &'a ExperimentConfig,
    digest: String,
    artifacts: RunArtifacts,
}

impl Output<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.artifacts.dir.join(name)
    }

    fn table(&mut self, name: &str, table: &MetricsTable) -> Result<PathBuf> {
        let path = self.path(name);
        table.write(&path)?;
        self.artifacts.files.push(path.clone());
        Ok(path)
    }

    /// Writes a table and its chart.
    fn charted(&mut self, name: &str, table: &MetricsTable) -> Result<()> {
        let path = self.table(name, table)?;
        let svg = path.with_extension("svg");
        let mut summary = MetricsTable::new(SUMMARY_HEADER);
        if plot_csv(&path, &svg, self.config.settings.report.smoothing, &mut summary)? {
            self.artifacts.files.push(svg);
        }
        Ok(())
    }

    fn checkpoint(&mut self, name: &str, ck: Checkpoint) -> Result<()> {
        let path = self.path(name);
        ck.save(&path)?;
        self.artifacts.files.push(path);
        Ok(())
    }

    fn codec_checkpoint(&mut self, name: &str, codec: &SemanticCodec) -> Result<()> {
        let ck = Checkpoint::new(
            "codec",
            self.config.seed,
            &self.digest,
            Dtype::F64,
            &[("encoder", &codec.encoder), ("decoder", &codec.decoder)],
        );
        self.checkpoint(name, ck)
    }

    fn json(&mut self, name: &str, text: String) -> Result<()> {
        let path = self.path(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.artifacts.files.push(path);
        Ok(())
    }
}

/// Runs the configured experiment, writing the resolved configuration, a
/// provenance record and the experiment's artifacts into `config.out`. On
/// failure an `error.json` record is written there and the error returned.
pub fn run_experiment(config: &ExperimentConfig, data_dir: &Path) -> Result<RunArtifacts> {
    let dir = config.out.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let result = run_in(config, data_dir, &dir);
    if let Err(e) = &result {
        let record = ErrorRecord {
            version: VERSION,
            experiment: config.experiment.tag(),
            kind: e.kind(),
            message: e.to_string(),
        };
        let path = dir.join("error.json");
        std::fs::write(&path, serde_json::to_string_pretty(&record)? + "\n").map_err(|e| Error::io(&path, e))?;
    }
    result
}

fn run_in(config: &ExperimentConfig, data_dir: &Path, dir: &Path) -> Result<RunArtifacts> {
    let stale = dir.join("error.json");
    if stale.exists() {
        std::fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
    }
    let mut out = Output {
        config,
        digest: config.digest()?,
        artifacts: RunArtifacts {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        },
    };
    out.json("config.json", config.to_flat_json()?)?;
    let record = RunRecord {
        version: VERSION,
        experiment: config.experiment.tag(),
        seed: config.seed,
        config_digest: out.digest.clone(),
    };
    out.json("run.json", serde_json::to_string_pretty(&record)? + "\n")?;
    let data = || Data::load(data_dir, &config.settings.data);
    let s = &config.settings;
    let seed = config.seed;
    match config.experiment {
        ExperimentKind::TrainCodec => {
            let (codec, log) = train_image_codec(&s.codec, &data()?, seed)?;
            out.charted("codec_training.csv", &codec_training_table(&log)?)?;
            out.codec_checkpoint("codec.semc", &codec)?;
        }
        ExperimentKind::Drift => {
            let study = drift_study(&s.codec, &s.drift, &data()?, seed)?;
            out.charted("codec_training.csv", &codec_training_table(&study.pretraining)?)?;
            out.charted("drift.csv", &drift_table(&study.runs)?)?;
            out.table("drift_summary.csv", &drift_summary_table(&study.runs)?)?;
            out.codec_checkpoint("codec.semc", &study.codec)?;
            if let Some(gan) = &study.gan {
                let ck = Checkpoint::new(
                    "channel_gan",
                    seed,
                    &out.digest,
                    Dtype::F64,
                    &[("generator", &gan.generator), ("discriminator", &gan.discriminator)],
                )
                .with_scalar("residual_scale", gan.residual_scale);
                out.checkpoint("gan.semc", ck)?;
            }
        }
        ExperimentKind::Sampling => {
            let data = data()?;
            let cells = sampling_study(&s.sampling, &data, seed)?;
            let eval = data.held_out(s.sampling.eval_images)?;
            out.table("sampling.csv", &sampling_table(&cells, &eval.labels)?)?;
            out.charted("sampling_summary.csv", &sampling_summary_table(&cells)?)?;
            for cell in &cells {
                let (src, p) = (cell.source_size, cell.patch_size);
                let ck = Checkpoint::new("masked_classifier", seed, &out.digest, Dtype::F64, &[("classifier", &cell.classifier.net)]);
                out.checkpoint(&format!("classifier_s{src}_p{p}.semc"), ck)?;
                if src == s.sampling.source_sizes[0] {
                    out.codec_checkpoint(&format!("patch_codec_p{p}.semc"), &cell.codec)?;
                }
            }
        }
        ExperimentKind::Compress => {
            let study = compress_study(&s.codec, &s.compress, &data()?, seed)?;
            out.charted("compress.csv", &compress_table(&study.rows)?)?;
            out.codec_checkpoint("codec.semc", &study.codec)?;
            out.codec_checkpoint("codec_pruned.semc", &study.pruned)?;
        }
        ExperimentKind::Orchestrate => {
            let surface = match &s.orchestration.surface.path {
                Some(path) => load_surface(path)?,
                None => measure_surface(&s.orchestration.surface, &s.orchestration.hierarchy.network.compressions, &data()?, seed)?,
            };
            out.json("surface.json", serde_json::to_string_pretty(&surface)? + "\n")?;
            out.charted("surface.csv", &surface_table(&surface)?)?;
            let runs = orchestration_study(&s.orchestration, &surface, seed)?;
            out.charted("orchestration.csv", &orchestration_table(&runs)?)?;
            out.table("orchestration_summary.csv", &orchestration_summary_table(&runs)?)?;
        }
        ExperimentKind::Report => report(config, &mut out)?,
    }
    Ok(out.artifacts)
}

/// CSV files named by `inputs` (files, or directories scanned one level
/// deep), sorted; the output directory when `inputs` is empty.
fn report_inputs(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let roots = if config.settings.report.inputs.is_empty() {
        vec![config.out.clone()]
    } else {
        config.settings.report.inputs.clone()
    };
    let mut files = Vec::new();
    for root in roots {
        if root.is_dir() {
            let entries = std::fs::read_dir(&root).map_err(|e| Error::io(&root, e))?;
            for entry in entries {
                let path = entry.map_err(|e| Error::io(&root, e))?.path();
                if path.extension().is_some_and(|x| x == "csv") {
                    files.push(path);
                }
            }
        } else if root.is_file() {
            files.push(root);
        } else {
            return Err(Error::Config(format!("report input {} does not exist", root.display())));
        }
    }
    files.sort();
    files.dedup();
    Ok(files)
}

fn report(config: &ExperimentConfig, out: &mut Output) -> Result<()> {
    let summary_path = out.path("summary.csv");
    let inputs: Vec<PathBuf> = report_inputs(config)?
        .into_iter()
        .filter(|p| *p != summary_path)
        .collect();
    if inputs.is_empty() {
        return Err(Error::Config("report found no CSV files".into()));
    }
    let mut summary = MetricsTable::new(SUMMARY_HEADER);
    for input in &inputs {
        let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let svg = out.path(&format!("{stem}.svg"));
        if plot_csv(input, &svg, config.settings.report.smoothing, &mut summary)? {
            out.artifacts.files.push(svg);
        }
    }
    out.table("summary.csv", &summary)?;
    Ok(())
}

pub fn codec_training_table(log: &[EpochMetrics]) -> Result<MetricsTable> {
    let mut t = MetricsTable::new(CODEC_TRAINING_HEADER);
    for r in log {
        t.push(row![r.epoch, r.snr_db, r.train_mse, r.val_mse, r.val_psnr])?;
    }
    Ok(t)
}

pub fn drift_table(runs: &[DriftRun]) -> Result<MetricsTable> {
    let mut t = MetricsTable::new(DRIFT_HEADER);
    for run in runs {
        for r in &run.rows {
            t.push(row![r.mode.tag(), r.epoch, r.snr_db, r.mse, r.psnr])?;
        }
    }
    Ok(t)
}

/// One row per SNR drop and mode; `recovery_epochs` is empty when the run
/// never recovered.
pub fn drift_summary_table(runs: &[DriftRun]) -> Result<MetricsTable> {
    let mut t = MetricsTable::new(DRIFT_SUMMARY_HEADER);
    for run in runs {
        for d in run.drops() {
            let recovery = d.recovery_epochs.map(|e| e.to_string()).unwrap_or_default();
            t.push(row![
                run.mode.tag(),
                d.epoch,
                run.rows[d.epoch].snr_db,
                d.pre_drop_psnr,
                d.dip,
                recovery,
                run.final_psnr()
            ])?;
        }
    }
    Ok(t)
}

/// Posterior entropy after each round, `;`-separated.
fn entropy_field(trace: &[f64]) -> String {
    trace.iter().map(|&h| format_real(h)).collect::<Vec<_>>().join(";")
}

pub fn sampling_table(cells: &[SamplingCell], labels: &[usize]) -> Result<MetricsTable> {
    let mut t = MetricsTable::new(SAMPLING_HEADER);
    for cell in cells {
        for (rounds, summary) in &cell.budgets {
            for (i, s) in summary.sessions.iter().enumerate() {
                t.push(row![
                    cell.source_size,
                    cell.patch_size,
                    *rounds,
                    i,
                    labels[i],
                    s.predicted,
                    s.correct,
                    s.rounds_used,
                    s.sent.len(),
                    s.symbols_sent,
                    s.confidence_trace.last().copied().unwrap_or(f64::NAN),
                    entropy_field(&s.entropy_trace)
                ])?;
            }
        }
    }
    Ok(t)
}

pub fn sampling_summary_table(cells: &[SamplingCell]) -> Result<MetricsTable> {
    let mut t = MetricsTable::new(SAMPLING_SUMMARY_HEADER);
    for cell in cells {
        for (rounds, summary) in &cell.budgets {
            let n = summary.sessions.len().max(1) as f64;
            let mean_rounds = summary.sessions.iter().map(|s| s.rounds_used as f64).sum::<f64>() / n;
            let mean_symbols = summary.sessions.iter().map(|s| s.symbols_sent as f64).sum::<f64>() / n;
            t.push(row![
                cell.source_size,
                cell.patch_size,
                *rounds,
                summary.sessions.len(),
                summary.accuracy,
                mean_rounds,
                mean_symbols
            ])?;
        }
    }
    Ok(t)
}

pub fn compress_table(rows: &[CompressRow]) -> Result<MetricsTable> {
    let mut t = MetricsTable::new(COMPRESS_HEADER);
    for r in rows {
        t.push(row![
            r.variant.as_str(),
            r.bits as usize,
            r.prune_ratio,
            r.sparsity,
            r.weight_bytes,
            r.psnr_db,
            r.psnr_loss_db
        ])?;
    }
    Ok(t)
}

pub fn surface_table(surface: &QualitySurface) -> Result<MetricsTable> {
    let mut t = MetricsTable::new(SURFACE_HEADER);
    for (i, &rho) in surface.rhos.iter().enumerate() {
        for (j, &snr) in surface.snrs_db.iter().enumerate() {
            t.push(row![rho, snr, surface.psnr_db[i][j], surface.accuracy[i][j]])?;
        }
    }
    Ok(t)
}

pub fn orchestration_table(runs: &[OrchestrationRun]) -> Result<MetricsTable> {
    let mut t = MetricsTable::new(ORCHESTRATION_HEADER);
    for run in runs {
        for r in &run.records {
            t.push(row![
                run.scheme.tag(),
                r.slot,
                r.link,
                r.beam,
                r.power_level,
                r.rho_index,
                r.sinr_db,
                r.qoe,
                run.mean_qoe[r.slot]
            ])?;
        }
    }
    Ok(t)
}

pub fn orchestration_summary_table(runs: &[OrchestrationRun]) -> Result<MetricsTable> {
    let mut t = MetricsTable::new(ORCHESTRATION_SUMMARY_HEADER);
    for run in runs {
        t.push(row![
            run.scheme.tag(),
            run.seed,
            run.first_window(),
            run.final_window(),
            run.window_mean(0.0, 1.0)
        ])?;
    }
    Ok(t)
}
