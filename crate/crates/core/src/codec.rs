//! Joint semantic-channel codec: encoder, per-block power normalisation,
//! channel, decoder, trained end to end; plus the (ρ, SNR) quality surface
//! that the orchestration reward consults.

use serde::{Deserialize, Serialize};

use crate::channel::{psnr, Channel, ChannelModel};
use crate::error::{Error, Result};
use crate::numerics::{Activation, Adam, AdamConfig, Gradients, Loss, Mlp, Rng, Target, Tensor};

/// Compression ratios of the semantic compression codebook.
pub const COMPRESSION_CODEBOOK: [f64; 5] = [1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 0.5, 1.0];

/// Hidden width of the image codec.
pub const CODEC_HIDDEN: usize = 256;

/// Channel leg of the end-to-end pipeline. Implementations must provide the
/// gradient of their output with respect to their input.
pub trait SymbolChannel {
    type Cache;

    fn snr_db(&self) -> f64;

    fn pass(&mut self, x: &Tensor, rng: &mut Rng) -> Result<(Tensor, Self::Cache)>;

    fn backprop(&self, cache: &Self::Cache, grad_output: &Tensor) -> Result<Tensor>;
}

impl SymbolChannel for Channel {
    /// Per-block fading magnitudes, if any.
    type Cache = Option<Vec<f64>>;

    fn snr_db(&self) -> f64 {
        self.model().snr_db
    }

    fn pass(&mut self, x: &Tensor, rng: &mut Rng) -> Result<(Tensor, Self::Cache)> {
        let t = self.transmit(x, rng)?;
        Ok((t.received, t.gains))
    }

    /// Additive noise does not depend on the input, so the gradient passes
    /// through unchanged (scaled by the fading gain when present).
    fn backprop(&self, gains: &Self::Cache, grad_output: &Tensor) -> Result<Tensor> {
        let mut g = grad_output.clone();
        if let Some(gains) = gains {
            for (r, &h) in gains.iter().enumerate() {
                g.row_mut(r).iter_mut().for_each(|v| *v *= h);
            }
        }
        Ok(g)
    }
}

/// Power-normalised symbol blocks and what is needed to differentiate the
/// normalisation.
#[derive(Debug, Clone)]
pub struct NormalizedBlocks {
    pub symbols: Tensor,
    norms: Vec<f64>,
    /// Number of all-zero blocks, passed through as zeros.
    pub zero_blocks: usize,
}

/// Scales each row to mean square 1: `y = sqrt(n) · z / ||z||`.
pub fn power_normalize(z: &Tensor) -> NormalizedBlocks {
    let n = z.cols();
    let c = (n as f64).sqrt();
    let mut out = z.clone();
    let mut norms = Vec::with_capacity(z.rows());
    let mut zero_blocks = 0;
    for r in 0..z.rows() {
        let row = out.row_mut(r);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            zero_blocks += 1;
        } else {
            let s = c / norm;
            row.iter_mut().for_each(|v| *v *= s);
        }
        norms.push(norm);
    }
    NormalizedBlocks {
        symbols: out,
        norms,
        zero_blocks,
    }
}

impl NormalizedBlocks {
    /// `dz = (c/r) (dy - y (y·dy) / n)` per block.
    pub fn backward(&self, dy: &Tensor) -> Tensor {
        let n = self.symbols.cols();
        let c = (n as f64).sqrt();
        let mut dz = dy.clone();
        for (r, &norm) in self.norms.iter().enumerate() {
            let y = self.symbols.row(r);
            let row = dz.row_mut(r);
            if norm == 0.0 {
                row.fill(0.0);
                continue;
            }
            let dot: f64 = y.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
            let s = c / norm;
            for (g, &yv) in row.iter_mut().zip(y) {
                *g = s * (*g - yv * dot / n as f64);
            }
        }
        dz
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticCodec {
    pub encoder: Mlp,
    pub decoder: Mlp,
}

#[derive(Debug, Clone)]
pub struct RoundTrip {
    pub reconstruction: Tensor,
    pub mse: f64,
    pub psnr: f64,
}

/// Gradients of the batch reconstruction MSE for both halves of a codec.
#[derive(Debug, Clone)]
pub struct CodecGradients {
    pub mse: f64,
    pub encoder: Gradients,
    pub decoder: Gradients,
}

impl SemanticCodec {
    /// `source → hidden → n_symbols` (relu, identity) encoder and
    /// `n_symbols → hidden → source` (relu, sigmoid) decoder.
    pub fn new(source_dim: usize, hidden: usize, n_symbols: usize, rng: &mut Rng) -> Result<Self> {
        if n_symbols == 0 || n_symbols > source_dim {
            return Err(Error::Contract(format!(
                "compression ratio {n_symbols}/{source_dim} must lie in (0, 1]"
            )));
        }
        let encoder = Mlp::new(
            &[source_dim, hidden, n_symbols],
            &[Activation::Relu, Activation::Identity],
            rng,
        )?;
        let decoder = Mlp::new(
            &[n_symbols, hidden, source_dim],
            &[Activation::Relu, Activation::Sigmoid],
            rng,
        )?;
        Ok(Self { encoder, decoder })
    }

    /// Image codec for a codebook ratio on `source_dim` pixels.
    pub fn for_ratio(source_dim: usize, ratio: f64, rng: &mut Rng) -> Result<Self> {
        let n_symbols = (ratio * source_dim as f64).round() as usize;
        Self::new(source_dim, CODEC_HIDDEN, n_symbols, rng)
    }

    pub fn from_parts(encoder: Mlp, decoder: Mlp) -> Result<Self> {
        if encoder.output_width() != decoder.input_width()
            || decoder.output_width() != encoder.input_width()
        {
            return Err(Error::Shape(format!(
                "encoder {:?} and decoder {:?} do not compose",
                encoder.widths(),
                decoder.widths()
            )));
        }
        if decoder.layers().last().map(|l| l.activation) != Some(Activation::Sigmoid) {
            return Err(Error::Contract("decoder must end in a sigmoid".into()));
        }
        if encoder.output_width() > encoder.input_width() {
            return Err(Error::Contract("compression ratio above 1".into()));
        }
        Ok(Self { encoder, decoder })
    }

    pub fn source_dim(&self) -> usize {
        self.encoder.input_width()
    }

    pub fn n_symbols(&self) -> usize {
        self.encoder.output_width()
    }

    pub fn compression_ratio(&self) -> f64 {
        self.n_symbols() as f64 / self.source_dim() as f64
    }

    /// Power-normalised channel symbols for a batch of sources.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        Ok(power_normalize(&self.encoder.forward(x)?).symbols)
    }

    pub fn decode(&self, y: &Tensor) -> Result<Tensor> {
        self.decoder.forward(y)
    }

    /// Encode, transmit and decode one batch; metrics are batch means.
    pub fn round_trip<C: SymbolChannel>(
        &self,
        channel: &mut C,
        batch: &Tensor,
        rng: &mut Rng,
    ) -> Result<RoundTrip> {
        let symbols = self.encode(batch)?;
        let (received, _) = channel.pass(&symbols, rng)?;
        let reconstruction = self.decode(&received)?;
        let mse = mse(&reconstruction, batch);
        Ok(RoundTrip {
            reconstruction,
            mse,
            psnr: psnr(mse)?,
        })
    }

    /// Reconstruction MSE and gradients through the whole pipeline. The
    /// encoder gradient is skipped (left at zero) when `decoder_only`.
    pub fn gradients<C: SymbolChannel>(
        &self,
        channel: &mut C,
        batch: &Tensor,
        rng: &mut Rng,
        decoder_only: bool,
    ) -> Result<CodecGradients> {
        let enc = self.encoder.forward_trace(batch)?;
        let norm = power_normalize(enc.output());
        let (received, cache) = channel.pass(&norm.symbols, rng)?;
        let dec = self.decoder.forward_trace(&received)?;
        let (mse, dz) = self.decoder.loss_grad(&dec, Loss::Mse, Target::Values(batch))?;
        let dec_bp = self.decoder.backward_preact(&dec, dz, !decoder_only)?;
        let encoder = match dec_bp.input_grad {
            Some(dy) => {
                let dsym = channel.backprop(&cache, &dy)?;
                let dz = norm.backward(&dsym);
                self.encoder.backward_output(&enc, &dz, false)?.grads
            }
            None => Gradients::zeros_like(&self.encoder),
        };
        Ok(CodecGradients {
            mse,
            encoder,
            decoder: dec_bp.grads,
        })
    }

    /// Mean reconstruction MSE over `images`, evaluated in chunks.
    pub fn evaluate<C: SymbolChannel>(
        &self,
        channel: &mut C,
        images: &Tensor,
        rng: &mut Rng,
    ) -> Result<f64> {
        let n = images.rows();
        let mut total = 0.0;
        for start in (0..n).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(n);
            let rt = self.round_trip(channel, &images.slice_rows(start, end), rng)?;
            total += rt.mse * (end - start) as f64;
        }
        Ok(total / n as f64)
    }
}

const EVAL_CHUNK: usize = 500;

pub(crate) fn mse(a: &Tensor, b: &Tensor) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64
}

/// Adam state for both halves of a codec.
#[derive(Debug, Clone)]
pub struct CodecOptimizer {
    encoder: Adam,
    decoder: Adam,
    /// Freeze the encoder and adapt the decoder only.
    pub decoder_only: bool,
}

impl CodecOptimizer {
    pub fn new(config: AdamConfig, codec: &SemanticCodec) -> Self {
        Self {
            encoder: Adam::new(config, &codec.encoder),
            decoder: Adam::new(config, &codec.decoder),
            decoder_only: false,
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.encoder.config.lr = lr;
        self.decoder.config.lr = lr;
    }

    /// One Adam update on the batch reconstruction loss; returns the
    /// pre-update batch MSE.
    pub fn step<C: SymbolChannel>(
        &mut self,
        codec: &mut SemanticCodec,
        channel: &mut C,
        batch: &Tensor,
        rng: &mut Rng,
    ) -> Result<f64> {
        let g = codec.gradients(channel, batch, rng, self.decoder_only)?;
        if !self.decoder_only {
            self.encoder.step(&mut codec.encoder, &g.encoder)?;
        }
        self.decoder.step(&mut codec.decoder, &g.decoder)?;
        Ok(g.mse)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 128,
            lr: 1e-3,
        }
    }
}

/// One row of the codec training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub snr_db: f64,
    pub train_mse: f64,
    pub val_mse: f64,
    pub val_psnr: f64,
}

/// Trains `codec` end to end through `channel`; one metric row per epoch.
pub fn train_codec(
    codec: &mut SemanticCodec,
    channel: &mut Channel,
    train: &Tensor,
    val: &Tensor,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<Vec<EpochMetrics>> {
    if train.rows() == 0 || val.rows() == 0 {
        return Err(Error::Contract("empty training or validation set".into()));
    }
    let mut opt = CodecOptimizer::new(AdamConfig::with_lr(config.lr), codec);
    let mut val_channel = Channel::new(*channel.model());
    let mut val_rng = rng.derive("val");
    let mut rows = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let fault = |e: Error| Error::TrainingFault {
            epoch,
            detail: e.to_string(),
        };
        let order = rng.permutation(train.rows());
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = train.select_rows(chunk);
            total += opt.step(codec, channel, &batch, rng).map_err(fault)? * chunk.len() as f64;
        }
        let train_mse = total / train.rows() as f64;
        let val_mse = codec
            .evaluate(&mut val_channel, val, &mut val_rng)
            .map_err(fault)?;
        if !val_mse.is_finite() {
            return Err(Error::TrainingFault {
                epoch,
                detail: "validation mse is not finite".into(),
            });
        }
        rows.push(EpochMetrics {
            epoch,
            snr_db: channel.model().snr_db,
            train_mse,
            val_mse,
            val_psnr: psnr(val_mse)?,
        });
    }
    Ok(rows)
}

/// Anything that maps a batch of `[n, pixels]` images to class predictions.
pub trait ImageClassifier {
    fn predict(&self, images: &Tensor) -> Result<Vec<usize>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceProvenance {
    /// Parameter digests of the codecs, in codebook order.
    pub codec_digests: Vec<String>,
    pub eval_set: String,
    pub samples: usize,
}

/// Measured `(ρ, SNR) → (PSNR, accuracy)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitySurface {
    pub rhos: Vec<f64>,
    pub snrs_db: Vec<f64>,
    /// `psnr_db[rho_index][snr_index]`.
    pub psnr_db: Vec<Vec<f64>>,
    pub accuracy: Vec<Vec<f64>>,
    pub provenance: SurfaceProvenance,
}

fn bracket(grid: &[f64], x: f64) -> (usize, usize, f64) {
    if grid.len() == 1 || x <= grid[0] {
        return (0, 0, 0.0);
    }
    let last = grid.len() - 1;
    if x >= grid[last] {
        return (last, last, 0.0);
    }
    let hi = grid.iter().position(|&g| g > x).expect("x below last grid point");
    let lo = hi - 1;
    (lo, hi, (x - grid[lo]) / (grid[hi] - grid[lo]))
}

impl QualitySurface {
    pub fn new(
        rhos: Vec<f64>,
        snrs_db: Vec<f64>,
        psnr_db: Vec<Vec<f64>>,
        accuracy: Vec<Vec<f64>>,
        provenance: SurfaceProvenance,
    ) -> Result<Self> {
        let increasing = |g: &[f64]| !g.is_empty() && g.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&rhos) || !increasing(&snrs_db) {
            return Err(Error::Contract(
                "surface grids must be non-empty and strictly increasing".into(),
            ));
        }
        let full = |m: &[Vec<f64>]| {
            m.len() == rhos.len() && m.iter().all(|r| r.len() == snrs_db.len())
        };
        if !full(&psnr_db) || !full(&accuracy) {
            return Err(Error::Contract("every surface cell must be populated".into()));
        }
        if accuracy.iter().flatten().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Contract("accuracy outside [0, 1]".into()));
        }
        Ok(Self {
            rhos,
            snrs_db,
            psnr_db,
            accuracy,
            provenance,
        })
    }

    /// Bilinear interpolation over `(ρ, snr)`, clamped to the grid bounds.
    /// Returns `(psnr_db, accuracy)`.
    pub fn interpolate(&self, rho: f64, snr_db: f64) -> (f64, f64) {
        let (r0, r1, tr) = bracket(&self.rhos, rho);
        let (s0, s1, ts) = bracket(&self.snrs_db, snr_db);
        let blend = |m: &[Vec<f64>]| {
            let a = m[r0][s0] * (1.0 - ts) + m[r0][s1] * ts;
            let b = m[r1][s0] * (1.0 - ts) + m[r1][s1] * ts;
            a * (1.0 - tr) + b * tr
        };
        (blend(&self.psnr_db), blend(&self.accuracy))
    }

    /// Task accuracy for codebook entry `rho_index` at `snr_db`.
    pub fn accuracy_at(&self, rho_index: usize, snr_db: f64) -> f64 {
        self.interpolate(self.rhos[rho_index], snr_db).1
    }

    pub fn max_accuracy(&self) -> f64 {
        self.accuracy.iter().flatten().cloned().fold(0.0, f64::max)
    }
}

/// Evaluates one codec per codebook entry at every SNR of `snr_grid`:
/// PSNR of the reconstructions and accuracy of `classifier` on them.
#[allow(clippy::too_many_arguments)]
pub fn build_quality_surface(
    codebook: &[f64],
    codecs: &[SemanticCodec],
    snr_grid: &[f64],
    images: &Tensor,
    labels: &[usize],
    eval_set: &str,
    classifier: &dyn ImageClassifier,
    rng: &mut Rng,
) -> Result<QualitySurface> {
    let mut psnr_rows = Vec::with_capacity(codebook.len());
    let mut acc_rows = Vec::with_capacity(codebook.len());
    let mut digests = Vec::with_capacity(codebook.len());
    for (i, &rho) in codebook.iter().enumerate() {
        let codec = codecs
            .iter()
            .find(|c| (c.compression_ratio() - rho).abs() < 1e-9)
            .ok_or_else(|| Error::Contract(format!("no codec for codebook index {i} (ρ={rho})")))?;
        digests.push(format!(
            "{:016x}{:016x}",
            codec.encoder.digest(),
            codec.decoder.digest()
        ));
        let mut psnr_row = Vec::with_capacity(snr_grid.len());
        let mut acc_row = Vec::with_capacity(snr_grid.len());
        for &snr in snr_grid {
            let mut channel = Channel::new(ChannelModel::awgn(snr));
            let mut cell_rng = rng.derive(&format!("surface/{i}/{snr}"));
            let mut sq = 0.0;
            let mut correct = 0usize;
            for start in (0..images.rows()).step_by(EVAL_CHUNK) {
                let end = (start + EVAL_CHUNK).min(images.rows());
                let batch = images.slice_rows(start, end);
                let rt = codec.round_trip(&mut channel, &batch, &mut cell_rng)?;
                sq += rt.mse * (end - start) as f64;
                let pred = classifier.predict(&rt.reconstruction)?;
                correct += pred
                    .iter()
                    .zip(&labels[start..end])
                    .filter(|(p, l)| p == l)
                    .count();
            }
            psnr_row.push(psnr(sq / images.rows() as f64)?);
            acc_row.push(correct as f64 / images.rows() as f64);
        }
        psnr_rows.push(psnr_row);
        acc_rows.push(acc_row);
    }
    QualitySurface::new(
        codebook.to_vec(),
        snr_grid.to_vec(),
        psnr_rows,
        acc_rows,
        SurfaceProvenance {
            codec_digests: digests,
            eval_set: eval_set.to_owned(),
            samples: images.rows(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::check_against_differences;

    #[test]
    fn normalisation_examples() {
        let z = Tensor::matrix(2, 4, vec![2.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let n = power_normalize(&z);
        assert_eq!(n.symbols.data(), z.data());
        let zero = power_normalize(&Tensor::zeros(&[1, 3]));
        assert_eq!(zero.zero_blocks, 1);
        assert_eq!(zero.symbols.data(), &[0.0; 3]);
    }

    #[test]
    fn normalisation_backward_matches_differences() {
        let mut rng = Rng::new(4, "t");
        let z: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let w: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let f = |p: &[f64]| -> Result<f64> {
            let n = power_normalize(&Tensor::matrix(2, 3, p.to_vec()).unwrap());
            Ok(n.symbols.data().iter().zip(&w).map(|(a, b)| a * b).sum())
        };
        let n = power_normalize(&Tensor::matrix(2, 3, z.clone()).unwrap());
        let dz = n.backward(&Tensor::matrix(2, 3, w.clone()).unwrap());
        let err = check_against_differences(&z, dz.data(), f).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    fn tiny_codec(seed: u64) -> SemanticCodec {
        SemanticCodec::new(12, 8, 4, &mut Rng::new(seed, "init")).unwrap()
    }

    fn tiny_batch(seed: u64) -> Tensor {
        let mut rng = Rng::new(seed, "data");
        Tensor::matrix(5, 12, (0..60).map(|_| rng.uniform()).collect()).unwrap()
    }

    #[test]
    fn end_to_end_gradient_matches_differences() {
        let codec = tiny_codec(1);
        let batch = tiny_batch(2);
        let model = ChannelModel::awgn(10.0);
        let g = codec
            .gradients(&mut Channel::new(model), &batch, &mut Rng::new(5, "channel"), false)
            .unwrap();
        let analytic = [g.encoder.flatten(), g.decoder.flatten()].concat();
        let params = [codec.encoder.flat_params(), codec.decoder.flat_params()].concat();
        let split = codec.encoder.parameter_count();
        let mut probe = codec.clone();
        let err = check_against_differences(&params, &analytic, |p| {
            probe.encoder.set_flat_params(&p[..split])?;
            probe.decoder.set_flat_params(&p[split..])?;
            let rt = probe.round_trip(
                &mut Channel::new(model),
                &batch,
                &mut Rng::new(5, "channel"),
            )?;
            Ok(rt.mse)
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn untrained_codec_mse_is_bounded() {
        let codec = tiny_codec(3);
        let rt = codec
            .round_trip(&mut Channel::new(ChannelModel::awgn(0.0)), &tiny_batch(4), &mut Rng::new(1, "channel"))
            .unwrap();
        assert!(rt.mse <= 1.0);
        assert!(rt.reconstruction.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!((psnr(rt.mse).unwrap() - rt.psnr).abs() < 1e-12);
    }

    #[test]
    fn transmitted_blocks_have_unit_power() {
        let codec = tiny_codec(5);
        let s = codec.encode(&tiny_batch(6)).unwrap();
        for r in 0..s.rows() {
            let ms = s.row(r).iter().map(|v| v * v).sum::<f64>() / s.cols() as f64;
            assert!((ms - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_epochs_changes_nothing() {
        let mut codec = tiny_codec(7);
        let before = codec.clone();
        let rows = train_codec(
            &mut codec,
            &mut Channel::new(ChannelModel::awgn(10.0)),
            &tiny_batch(1),
            &tiny_batch(2),
            &TrainConfig {
                epochs: 0,
                ..TrainConfig::default()
            },
            &mut Rng::new(1, "train"),
        )
        .unwrap();
        assert!(rows.is_empty());
        assert_eq!(codec, before);
    }

    #[test]
    fn ratio_is_validated() {
        assert!(SemanticCodec::new(8, 4, 9, &mut Rng::new(1, "init")).is_err());
        let c = SemanticCodec::for_ratio(784, 0.25, &mut Rng::new(1, "init")).unwrap();
        assert_eq!(c.n_symbols(), 196);
        assert_eq!(c.compression_ratio(), 0.25);
    }

    fn toy_surface() -> QualitySurface {
        QualitySurface::new(
            vec![0.25, 0.5, 1.0],
            vec![0.0, 10.0, 20.0],
            vec![vec![10.0, 12.0, 14.0], vec![11.0, 14.0, 16.0], vec![12.0, 16.0, 20.0]],
            vec![vec![0.2, 0.5, 0.6], vec![0.3, 0.6, 0.8], vec![0.4, 0.7, 0.9]],
            SurfaceProvenance {
                codec_digests: vec![],
                eval_set: "toy".into(),
                samples: 0,
            },
        )
        .unwrap()
    }

    #[test]
    fn interpolation_hits_grid_points_exactly() {
        let s = toy_surface();
        for (i, &rho) in s.rhos.iter().enumerate() {
            for (j, &snr) in s.snrs_db.iter().enumerate() {
                assert_eq!(s.interpolate(rho, snr), (s.psnr_db[i][j], s.accuracy[i][j]));
            }
        }
    }

    #[test]
    fn interpolation_between_cells_is_bounded() {
        let s = toy_surface();
        let a = s.accuracy_at(1, 5.0);
        assert!((0.3..=0.6).contains(&a));
        assert!((a - 0.45).abs() < 1e-12);
        // hand bilinear at (0.375, 15): rows 0.25/0.5, cols 10/20, t = 0.5 each
        let hand = 0.25 * (0.5 + 0.6 + 0.6 + 0.8);
        assert!((s.interpolate(0.375, 15.0).1 - hand).abs() < 1e-12);
        // clamped outside the grid
        assert_eq!(s.accuracy_at(2, 100.0), 0.9);
        assert_eq!(s.accuracy_at(0, -50.0), 0.2);
    }

    #[test]
    fn surface_rejects_holes() {
        assert!(QualitySurface::new(
            vec![0.5, 1.0],
            vec![0.0],
            vec![vec![1.0]],
            vec![vec![0.5], vec![0.5]],
            toy_surface().provenance,
        )
        .is_err());
    }
}
