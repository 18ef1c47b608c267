//! Online adaptation of the codec under SNR drift.
//!
//! A conditional GAN learns to imitate the channel from logged
//! `(sent, snr, received)` symbols. During deployment the codec is then
//! fine-tuned either through the live channel or through the frozen
//! generator, which needs no fresh transmissions.

use serde::{Deserialize, Serialize};

use crate::channel::{psnr, Channel, ChannelModel, SnrSchedule};
use crate::codec::{CodecOptimizer, SemanticCodec, SymbolChannel};
use crate::error::{Error, Result};
use crate::numerics::{Activation, Adam, AdamConfig, Gradients, Loss, Mlp, Rng, Target, Tensor, Trace};

/// Width of the generator's noise seed vector.
pub const NOISE_WIDTH: usize = 8;
pub const GAN_HIDDEN: usize = 64;
/// `(x, snr feature, y, y - x)`.
const DISCRIMINATOR_INPUTS: usize = 4;

/// SNR conditioning feature fed to both GAN networks.
pub fn snr_feature(snr_db: f64) -> f64 {
    snr_db / 30.0
}

/// Per-symbol conditional GAN channel surrogate.
///
/// The generator maps `(x, snr feature, z)` to a perturbation `g`, and the
/// simulated received symbol is `x + g`. The discriminator scores
/// `(x, snr feature, y)` triples. Both act on one symbol at a time, so a
/// block of any width is simulated as a batch of independent symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelGan {
    pub generator: Mlp,
    pub discriminator: Mlp,
    /// Standardises the discriminator's residual input; set from the
    /// observations by [`train_gan`].
    pub residual_scale: f64,
}

/// Loss traces of GAN training, one entry per step.
#[derive(Debug, Clone, Default)]
pub struct GanTrace {
    pub discriminator_loss: Vec<f64>,
    pub generator_loss: Vec<f64>,
}

/// Logged transmissions used to fit the surrogate.
#[derive(Debug, Clone)]
pub struct Observation {
    pub sent: Tensor,
    pub snr_db: f64,
    pub received: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    /// Discriminator updates per generator update.
    pub discriminator_steps: usize,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            steps: 4000,
            batch_size: 512,
            lr: 1e-3,
            beta1: 0.5,
            discriminator_steps: 3,
        }
    }
}

impl ChannelGan {
    pub fn new(rng: &mut Rng) -> Result<Self> {
        let generator = Mlp::new(
            &[2 + NOISE_WIDTH, GAN_HIDDEN, 1],
            &[Activation::Relu, Activation::Identity],
            rng,
        )?;
        let discriminator = Mlp::new(
            &[DISCRIMINATOR_INPUTS, GAN_HIDDEN, 1],
            &[Activation::Relu, Activation::Sigmoid],
            rng,
        )?;
        Ok(Self {
            generator,
            discriminator,
            residual_scale: 1.0,
        })
    }

    fn generator_input(x: &[f64], snr_db: &[f64], rng: &mut Rng) -> Tensor {
        let width = 2 + NOISE_WIDTH;
        let mut data = Vec::with_capacity(x.len() * width);
        for (&xv, &s) in x.iter().zip(snr_db) {
            data.push(xv);
            data.push(snr_feature(s));
            for _ in 0..NOISE_WIDTH {
                data.push(rng.normal());
            }
        }
        Tensor::from_parts(vec![x.len(), width], data)
    }

    fn discriminator_input(&self, x: &[f64], snr_db: &[f64], y: &[f64]) -> Tensor {
        let k = 1.0 / self.residual_scale;
        let data = x
            .iter()
            .zip(snr_db)
            .zip(y)
            .flat_map(|((&xv, &s), &yv)| [xv, snr_feature(s), yv, k * (yv - xv)])
            .collect();
        Tensor::from_parts(vec![x.len(), DISCRIMINATOR_INPUTS], data)
    }

    /// Simulated received symbols for `sent` (any shape) at `snr_db`.
    pub fn simulate(&self, sent: &Tensor, snr_db: f64, rng: &mut Rng) -> Result<Tensor> {
        let snr = vec![snr_db; sent.len()];
        let input = Self::generator_input(sent.data(), &snr, rng);
        let g = self.generator.forward(&input)?;
        let y = sent.data().iter().zip(g.data()).map(|(x, g)| x + g).collect();
        Tensor::new(sent.shape().to_vec(), y)
    }
}

/// Flattens observations into per-symbol `(x, snr, y)` columns.
fn flatten_observations(observations: &[Observation]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut xs = Vec::new();
    let mut snrs = Vec::new();
    let mut ys = Vec::new();
    for o in observations {
        if o.sent.len() != o.received.len() {
            return Err(Error::Shape("observation sent/received sizes differ".into()));
        }
        xs.extend_from_slice(o.sent.data());
        ys.extend_from_slice(o.received.data());
        snrs.extend(std::iter::repeat_n(o.snr_db, o.sent.len()));
    }
    if xs.is_empty() {
        return Err(Error::Contract("no observations to train on".into()));
    }
    Ok((xs, snrs, ys))
}

/// Alternating GAN training with binary cross-entropy losses (non-saturating
/// generator objective). Fails if the generator collapses to a constant.
pub fn train_gan(
    gan: &mut ChannelGan,
    observations: &[Observation],
    config: &GanConfig,
    rng: &mut Rng,
) -> Result<GanTrace> {
    let (xs, snrs, ys) = flatten_observations(observations)?;
    let ms = xs.iter().zip(&ys).map(|(x, y)| (y - x).powi(2)).sum::<f64>() / xs.len() as f64;
    gan.residual_scale = ms.sqrt().max(1e-6);
    let adam = AdamConfig {
        lr: config.lr,
        beta1: config.beta1,
        ..AdamConfig::default()
    };
    let mut g_opt = Adam::new(adam, &gan.generator);
    let mut d_opt = Adam::new(adam, &gan.discriminator);
    let mut trace = GanTrace::default();
    let m = config.batch_size;
    let ones = Tensor::full(&[m, 1], 1.0);
    let zeros = Tensor::full(&[m, 1], 0.0);
    for step in 0..config.steps {
        // Linear decay to zero settles the adversarial oscillation.
        let lr = config.lr * (1.0 - step as f64 / config.steps as f64);
        g_opt.config.lr = lr;
        d_opt.config.lr = lr;
        let mut d_loss = 0.0;
        let (mut bx, mut bs) = (Vec::new(), Vec::new());
        for _ in 0..config.discriminator_steps.max(1) {
            let idx: Vec<usize> = (0..m).map(|_| rng.below(xs.len())).collect();
            bx = idx.iter().map(|&i| xs[i]).collect();
            bs = idx.iter().map(|&i| snrs[i]).collect();
            let by: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();

            // Discriminator: real triples → 1, generated → 0.
            let g_in = ChannelGan::generator_input(&bx, &bs, rng);
            let g_out = gan.generator.forward(&g_in)?;
            let fake: Vec<f64> = bx.iter().zip(g_out.data()).map(|(x, g)| x + g).collect();
            let real_in = gan.discriminator_input(&bx, &bs, &by);
            let fake_in = gan.discriminator_input(&bx, &bs, &fake);
            let (l_real, mut d_grads) =
                gan.discriminator.backward(&real_in, Loss::Bce, Target::Values(&ones))?;
            let (l_fake, g_fake) =
                gan.discriminator.backward(&fake_in, Loss::Bce, Target::Values(&zeros))?;
            d_grads.add_assign(&g_fake);
            d_opt.step(&mut gan.discriminator, &d_grads)?;
            d_loss = l_real + l_fake;
        }

        // Generator: make generated triples score as real.
        let g_in = ChannelGan::generator_input(&bx, &bs, rng);
        let g_trace = gan.generator.forward_trace(&g_in)?;
        let fake: Vec<f64> = bx.iter().zip(g_trace.output().data()).map(|(x, g)| x + g).collect();
        let fake_in = gan.discriminator_input(&bx, &bs, &fake);
        let d_trace = gan.discriminator.forward_trace(&fake_in)?;
        let (l_gen, dz) = gan.discriminator.loss_grad(&d_trace, Loss::Bce, Target::Values(&ones))?;
        let d_bp = gan.discriminator.backward_preact(&d_trace, dz, true)?;
        let d_input = d_bp.input_grad.expect("requested input gradient");
        // y = x + g enters through the y and residual columns.
        let k = 1.0 / gan.residual_scale;
        let dg: Vec<f64> = (0..m)
            .map(|r| d_input.row(r)[2] + k * d_input.row(r)[3])
            .collect();
        let g_bp = gan
            .generator
            .backward_output(&g_trace, &Tensor::from_parts(vec![m, 1], dg), false)?;
        g_opt.step(&mut gan.generator, &g_bp.grads)?;

        trace.discriminator_loss.push(d_loss);
        trace.generator_loss.push(l_gen);

        if step + 1 == config.steps || (step + 1) % 500 == 0 {
            let out = g_trace.output();
            let mean = out.mean();
            let var = out.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64;
            if var < 1e-6 {
                return Err(Error::TrainingFault {
                    epoch: step,
                    detail: format!("generator collapsed, output variance {var:.3e}"),
                });
            }
        }
    }
    Ok(trace)
}

/// The frozen generator used as a differentiable channel leg.
#[derive(Debug, Clone, Copy)]
pub struct GanChannel<'a> {
    pub gan: &'a ChannelGan,
    pub snr_db: f64,
}

impl SymbolChannel for GanChannel<'_> {
    type Cache = Trace;

    fn snr_db(&self) -> f64 {
        self.snr_db
    }

    fn pass(&mut self, x: &Tensor, rng: &mut Rng) -> Result<(Tensor, Trace)> {
        let snr = vec![self.snr_db; x.len()];
        let input = ChannelGan::generator_input(x.data(), &snr, rng);
        let trace = self.gan.generator.forward_trace(&input)?;
        let y = x
            .data()
            .iter()
            .zip(trace.output().data())
            .map(|(a, g)| a + g)
            .collect();
        Ok((Tensor::from_parts(x.shape().to_vec(), y), trace))
    }

    /// `dy/dx = 1 + ∂g/∂x`.
    fn backprop(&self, trace: &Trace, grad_output: &Tensor) -> Result<Tensor> {
        let n = grad_output.len();
        let flat = Tensor::from_parts(vec![n, 1], grad_output.data().to_vec());
        let bp = self.gan.generator.backward_output(trace, &flat, true)?;
        let dx_in = bp.input_grad.expect("requested input gradient");
        let dx = grad_output
            .data()
            .iter()
            .enumerate()
            .map(|(i, g)| g + dx_in.row(i)[0])
            .collect();
        Ok(Tensor::from_parts(grad_output.shape().to_vec(), dx))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    RealChannel,
    Gan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftMode {
    None,
    FinetuneReal,
    FinetuneGan,
}

impl DriftMode {
    pub fn tag(self) -> &'static str {
        match self {
            DriftMode::None => "none",
            DriftMode::FinetuneReal => "finetune_real",
            DriftMode::FinetuneGan => "finetune_gan",
        }
    }

    pub fn source(self) -> Option<SampleSource> {
        match self {
            DriftMode::None => None,
            DriftMode::FinetuneReal => Some(SampleSource::RealChannel),
            DriftMode::FinetuneGan => Some(SampleSource::Gan),
        }
    }
}

impl std::str::FromStr for DriftMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(DriftMode::None),
            "finetune_real" => Ok(DriftMode::FinetuneReal),
            "finetune_gan" => Ok(DriftMode::FinetuneGan),
            other => Err(Error::Config(format!("unknown drift mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub mse: f64,
    pub psnr: f64,
}

/// Online fine-tuning state: optimizer, the live channel and the optional
/// frozen surrogate.
#[derive(Debug, Clone)]
pub struct FineTuner {
    optimizer: CodecOptimizer,
    live: Channel,
    gan: Option<ChannelGan>,
}

impl FineTuner {
    pub fn new(codec: &SemanticCodec, adam: AdamConfig, gan: Option<ChannelGan>) -> Self {
        Self {
            optimizer: CodecOptimizer::new(adam, codec),
            live: Channel::new(ChannelModel::awgn(0.0)),
            gan,
        }
    }

    /// Restrict updates to the decoder.
    pub fn decoder_only(mut self, on: bool) -> Self {
        self.optimizer.decoder_only = on;
        self
    }

    /// Symbols sent over the live channel for fine-tuning so far.
    pub fn live_symbols(&self) -> u64 {
        self.live.symbols_sent()
    }

    pub fn gan(&self) -> Option<&ChannelGan> {
        self.gan.as_ref()
    }

    /// One Adam update of the codec on `batch` at `snr_db`. The surrogate's
    /// parameters are never touched.
    pub fn step(
        &mut self,
        codec: &mut SemanticCodec,
        batch: &Tensor,
        snr_db: f64,
        source: SampleSource,
        rng: &mut Rng,
    ) -> Result<StepMetrics> {
        let mse = match source {
            SampleSource::RealChannel => {
                self.live.set_snr_db(snr_db);
                self.optimizer.step(codec, &mut self.live, batch, rng)?
            }
            SampleSource::Gan => {
                let gan = self
                    .gan
                    .as_ref()
                    .ok_or_else(|| Error::Contract("gan fine-tuning needs a trained generator".into()))?;
                let mut leg = GanChannel { gan, snr_db };
                self.optimizer.step(codec, &mut leg, batch, rng)?
            }
        };
        Ok(StepMetrics {
            mse,
            psnr: psnr(mse)?,
        })
    }
}

/// Functional form of a single fine-tuning step.
pub fn finetune_step(
    codec: &mut SemanticCodec,
    tuner: &mut FineTuner,
    batch: &Tensor,
    snr_db: f64,
    source: SampleSource,
    rng: &mut Rng,
) -> Result<StepMetrics> {
    tuner.step(codec, batch, snr_db, source, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    pub epochs: usize,
    /// Fine-tuning batches per epoch.
    pub samples_per_epoch: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub decoder_only: bool,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            samples_per_epoch: 20,
            batch_size: 128,
            lr: 3e-4,
            decoder_only: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub epoch: usize,
    pub snr_db: f64,
    pub mse: f64,
    pub psnr: f64,
    pub mode: DriftMode,
}

/// Effect of one SNR change on a drift run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropSummary {
    pub epoch: usize,
    pub pre_drop_psnr: f64,
    /// `pre_drop_psnr - psnr at the change epoch`.
    pub dip: f64,
    /// Epochs after the change until PSNR is back to ≥ 95% of the pre-drop
    /// value (0 if it never fell below), `None` if it never recovered.
    pub recovery_epochs: Option<usize>,
}

/// Fraction of the pre-drop PSNR (in dB) that counts as recovered.
pub const RECOVERY_FRACTION: f64 = 0.95;

#[derive(Debug, Clone)]
pub struct DriftRun {
    pub schedule: SnrSchedule,
    pub mode: DriftMode,
    pub samples_per_epoch: usize,
    pub rows: Vec<DriftRow>,
    /// Live-channel symbols consumed by fine-tuning.
    pub live_symbols: u64,
}

impl DriftRun {
    pub fn drops(&self) -> Vec<DropSummary> {
        self.schedule
            .change_epochs()
            .into_iter()
            .filter(|&e| e >= 1 && e < self.rows.len())
            .map(|e| {
                let pre = self.rows[e - 1].psnr;
                let threshold = RECOVERY_FRACTION * pre;
                let recovery_epochs = self.rows[e..]
                    .iter()
                    .position(|r| r.psnr >= threshold);
                DropSummary {
                    epoch: e,
                    pre_drop_psnr: pre,
                    dip: pre - self.rows[e].psnr,
                    recovery_epochs,
                }
            })
            .collect()
    }

    pub fn final_psnr(&self) -> f64 {
        self.rows.last().map(|r| r.psnr).unwrap_or(f64::NAN)
    }
}

/// Runs a codec through an SNR schedule. Each epoch first evaluates the
/// validation PSNR at the scheduled SNR (on a fixed noise realisation, so
/// epochs and modes are comparable), then, unless `mode` is `None`, applies
/// `samples_per_epoch` fine-tuning batches drawn from `train`.
#[allow(clippy::too_many_arguments)]
pub fn run_drift(
    codec: &mut SemanticCodec,
    schedule: &SnrSchedule,
    mode: DriftMode,
    config: &DriftConfig,
    train: &Tensor,
    val: &Tensor,
    gan: Option<&ChannelGan>,
    rng: &mut Rng,
) -> Result<DriftRun> {
    if mode == DriftMode::FinetuneGan && gan.is_none() {
        return Err(Error::Contract("finetune_gan mode needs a trained generator".into()));
    }
    let mut tuner = FineTuner::new(codec, AdamConfig::with_lr(config.lr), gan.cloned())
        .decoder_only(config.decoder_only);
    let eval_rng = rng.derive("eval");
    let mut train_rng = rng.derive("finetune");
    let mut rows = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let snr_db = schedule.snr_at(epoch);
        let mut channel = Channel::new(ChannelModel::awgn(snr_db));
        let mse = codec.evaluate(&mut channel, val, &mut eval_rng.clone())?;
        rows.push(DriftRow {
            epoch,
            snr_db,
            mse,
            psnr: psnr(mse)?,
            mode,
        });
        if let Some(source) = mode.source() {
            for _ in 0..config.samples_per_epoch {
                let idx: Vec<usize> = (0..config.batch_size)
                    .map(|_| train_rng.below(train.rows()))
                    .collect();
                let batch = train.select_rows(&idx);
                tuner.step(codec, &batch, snr_db, source, &mut train_rng)?;
            }
        }
    }
    Ok(DriftRun {
        schedule: schedule.clone(),
        mode,
        samples_per_epoch: config.samples_per_epoch,
        rows,
        live_symbols: tuner.live_symbols(),
    })
}

/// Logs real channel transmissions of the codec's symbols at each SNR.
pub fn collect_observations(
    codec: &SemanticCodec,
    images: &Tensor,
    snrs_db: &[f64],
    rng: &mut Rng,
) -> Result<Vec<Observation>> {
    let sent = codec.encode(images)?;
    snrs_db
        .iter()
        .map(|&snr_db| {
            let mut ch = Channel::new(ChannelModel::awgn(snr_db));
            let received = ch.transmit(&sent, rng)?.received;
            Ok(Observation {
                sent: sent.clone(),
                snr_db,
                received,
            })
        })
        .collect()
}

/// Mean and variance of `G(x) - x` over `draws` simulated symbols.
pub fn residual_moments(gan: &ChannelGan, sent: &Tensor, snr_db: f64, draws: usize, rng: &mut Rng) -> Result<(f64, f64)> {
    let mut diffs = Vec::with_capacity(draws);
    while diffs.len() < draws {
        let y = gan.simulate(sent, snr_db, rng)?;
        diffs.extend(y.data().iter().zip(sent.data()).map(|(a, b)| a - b));
    }
    diffs.truncate(draws);
    let n = draws as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var))
}

/// Gradients of the generator's simulated output, exposed for the GAN
/// gradient checks.
pub fn generator_gradients(
    gan: &ChannelGan,
    input: &Tensor,
    grad_output: &Tensor,
) -> Result<(Gradients, Tensor)> {
    let trace = gan.generator.forward_trace(input)?;
    let bp = gan.generator.backward_output(&trace, grad_output, true)?;
    Ok((bp.grads, bp.input_grad.expect("requested input gradient")))
}
