//! Receiver-guided partial sampling.
//!
//! The transmitter sends a few high-variance patches first. The receiver
//! classifies the partial canvas and, unless it is already confident, asks
//! for the unsent patches its top-class logit is most sensitive to.

use serde::{Deserialize, Serialize};

use crate::channel::{Channel, ChannelModel};
use crate::codec::{ImageClassifier, SemanticCodec, TrainConfig};
use crate::error::{Error, Result};
use crate::harness::mnist::SIDE;
use crate::numerics::{entropy, softmax, Activation, Adam, AdamConfig, Loss, Mlp, Rng, Target, Tensor};

use super::patches::{edge_select_initial, resize_bilinear, PatchGrid};

pub const CLASSES: usize = 10;
pub const CLASSIFIER_HIDDEN: usize = 128;
pub const STOP_CONFIDENCE: f64 = 0.95;

/// Prepares a 28×28 source image at side `size` (bilinear upscaling).
pub fn source_at(image: &[f64], size: usize) -> Vec<f64> {
    if size == SIDE {
        image.to_vec()
    } else {
        resize_bilinear(image, SIDE, size)
    }
}

/// Classifier over a partial canvas: input is the canvas plane followed by
/// a 0/1 plane marking received pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedClassifier {
    pub net: Mlp,
    pub grid: PatchGrid,
}

impl MaskedClassifier {
    pub fn new(grid: PatchGrid, rng: &mut Rng) -> Result<Self> {
        let net = Mlp::new(
            &[2 * grid.canvas_pixels(), CLASSIFIER_HIDDEN, CLASSES],
            &[Activation::Relu, Activation::Identity],
            rng,
        )?;
        Ok(Self { net, grid })
    }

    /// Network input row for a canvas and per-patch sent flags.
    pub fn input(&self, canvas: &[f64], sent: &[bool]) -> Vec<f64> {
        let px = self.grid.canvas_pixels();
        let mut row = Vec::with_capacity(2 * px);
        row.extend_from_slice(canvas);
        row.resize(2 * px, 0.0);
        let (_, plane) = row.split_at_mut(px);
        for (i, _) in sent.iter().enumerate().filter(|(_, &s)| s) {
            for o in self.grid.pixel_offsets(i) {
                plane[o] = 1.0;
            }
        }
        row
    }

    pub fn posterior(&self, canvas: &[f64], sent: &[bool]) -> Result<Vec<f64>> {
        let x = Tensor::matrix(1, 2 * self.grid.canvas_pixels(), self.input(canvas, sent))?;
        Ok(softmax(self.net.forward(&x)?.data()))
    }

    /// Posterior plus, per patch, the summed `|∂ top logit / ∂ pixel|` over
    /// the patch's canvas pixels.
    pub fn saliency(&self, canvas: &[f64], sent: &[bool]) -> Result<(Vec<f64>, Vec<f64>)> {
        let px = self.grid.canvas_pixels();
        let x = Tensor::matrix(1, 2 * px, self.input(canvas, sent))?;
        let trace = self.net.forward_trace(&x)?;
        let logits = trace.logits().data().to_vec();
        let top = argmax(&logits);
        let mut dz = vec![0.0; CLASSES];
        dz[top] = 1.0;
        let bp = self
            .net
            .backward_preact(&trace, Tensor::matrix(1, CLASSES, dz)?, true)?;
        let grad = bp.input_grad.expect("requested input gradient");
        let scores = (0..self.grid.count())
            .map(|i| self.grid.pixel_offsets(i).map(|o| grad.data()[o].abs()).sum())
            .collect();
        Ok((softmax(&logits), scores))
    }
}

impl ImageClassifier for MaskedClassifier {
    /// Classifies complete 28×28 images (resized to the grid's source size,
    /// every patch marked as received).
    fn predict(&self, images: &Tensor) -> Result<Vec<usize>> {
        let all = vec![true; self.grid.count()];
        let mut rows = Vec::with_capacity(images.rows() * 2 * self.grid.canvas_pixels());
        for r in 0..images.rows() {
            let canvas = self.grid.pad(&source_at(images.row(r), self.grid.source))?;
            rows.extend(self.input(&canvas, &all));
        }
        let logits = self
            .net
            .forward(&Tensor::matrix(images.rows(), 2 * self.grid.canvas_pixels(), rows)?)?;
        Ok((0..images.rows()).map(|r| argmax(logits.row(r))).collect())
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

/// What the receiver sends back after a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackMessage {
    /// Unsent patches, most salient first.
    pub requested: Vec<usize>,
    pub entropy: f64,
    pub confidence: f64,
    pub stop: bool,
}

pub fn receiver_feedback(
    classifier: &MaskedClassifier,
    canvas: &[f64],
    sent: &[bool],
    k: usize,
) -> Result<FeedbackMessage> {
    let (posterior, scores) = classifier.saliency(canvas, sent)?;
    let confidence = posterior.iter().cloned().fold(0.0, f64::max);
    let entropy = entropy(&posterior);
    let mut unsent: Vec<(f64, usize)> = scores
        .iter()
        .enumerate()
        .filter(|(i, _)| !sent[*i])
        .map(|(i, &s)| (s, i))
        .collect();
    let stop = confidence >= STOP_CONFIDENCE || unsent.is_empty();
    let requested = if stop {
        Vec::new()
    } else {
        unsent.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        unsent.into_iter().take(k).map(|(_, i)| i).collect()
    };
    Ok(FeedbackMessage {
        requested,
        entropy,
        confidence,
        stop,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub patches_per_round: usize,
    pub max_rounds: usize,
    pub snr_db: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            patches_per_round: 4,
            max_rounds: 3,
            snr_db: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub predicted: usize,
    pub correct: bool,
    pub rounds_used: usize,
    /// Patch indices in transmission order.
    pub sent: Vec<usize>,
    pub symbols_sent: u64,
    /// Posterior entropy (nats) after each round.
    pub entropy_trace: Vec<f64>,
    pub confidence_trace: Vec<f64>,
}

/// Encodes, transmits and decodes the listed patches, writing the
/// reconstructions onto `canvas`.
fn transmit_patches(
    codec: &SemanticCodec,
    channel: &mut Channel,
    grid: &PatchGrid,
    source: &[f64],
    indices: &[usize],
    canvas: &mut [f64],
    rng: &mut Rng,
) -> Result<()> {
    if indices.is_empty() {
        return Ok(());
    }
    let data: Vec<f64> = indices.iter().flat_map(|&i| grid.extract(source, i)).collect();
    let patches = Tensor::matrix(indices.len(), grid.patch_pixels(), data)?;
    let symbols = codec.encode(&patches)?;
    let received = channel.transmit(&symbols, rng)?.received;
    let out = codec.decode(&received)?;
    for (r, &i) in indices.iter().enumerate() {
        grid.place(canvas, i, out.row(r));
    }
    Ok(())
}

/// One sampling session over a 28×28 image; the classifier's grid fixes the
/// source and patch sizes.
pub fn run_session(
    codec: &SemanticCodec,
    classifier: &MaskedClassifier,
    image: &[f64],
    label: usize,
    config: &SessionConfig,
    rng: &mut Rng,
) -> Result<SessionOutcome> {
    let grid = classifier.grid;
    if codec.source_dim() != grid.patch_pixels() {
        return Err(Error::Shape(format!(
            "patch codec takes {} pixels, grid patches have {}",
            codec.source_dim(),
            grid.patch_pixels()
        )));
    }
    if config.max_rounds == 0 {
        return Err(Error::Contract("a session needs at least one round".into()));
    }
    let source = grid.pad(&source_at(image, grid.source))?;
    let mut channel = Channel::new(ChannelModel::awgn(config.snr_db));
    let mut canvas = vec![0.0; grid.canvas_pixels()];
    let mut is_sent = vec![false; grid.count()];
    let mut sent = Vec::new();
    let mut entropy_trace = Vec::new();
    let mut confidence_trace = Vec::new();

    let mut request = edge_select_initial(&source, &grid, config.patches_per_round.min(grid.count()))?;
    let mut rounds_used = 0;
    let posterior = loop {
        transmit_patches(codec, &mut channel, &grid, &source, &request, &mut canvas, rng)?;
        for &i in &request {
            debug_assert!(!is_sent[i], "patch {i} sent twice");
            is_sent[i] = true;
        }
        sent.extend_from_slice(&request);
        rounds_used += 1;
        let fb = receiver_feedback(classifier, &canvas, &is_sent, config.patches_per_round)?;
        entropy_trace.push(fb.entropy);
        confidence_trace.push(fb.confidence);
        if fb.stop || rounds_used == config.max_rounds {
            break classifier.posterior(&canvas, &is_sent)?;
        }
        request = fb.requested;
    };
    let predicted = argmax(&posterior);
    Ok(SessionOutcome {
        predicted,
        correct: predicted == label,
        rounds_used,
        sent,
        symbols_sent: channel.symbols_sent(),
        entropy_trace,
        confidence_trace,
    })
}

/// Patch codec sizes: 16→32→8 for 4×4 patches, 64→64→32 for 8×8.
pub fn patch_codec(patch: usize, ratio: f64, rng: &mut Rng) -> Result<SemanticCodec> {
    let pixels = patch * patch;
    let n = ((ratio * pixels as f64).round() as usize).max(1);
    SemanticCodec::new(pixels, pixels.max(32), n, rng)
}

/// Every grid patch of every image, at each source size, as rows.
pub fn patch_crops(images: &Tensor, sources: &[usize], patch: usize) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut rows = 0;
    for &s in sources {
        let grid = PatchGrid::new(s, patch)?;
        for r in 0..images.rows() {
            let canvas = grid.pad(&source_at(images.row(r), s))?;
            for i in 0..grid.count() {
                data.extend(grid.extract(&canvas, i));
                rows += 1;
            }
        }
    }
    Tensor::matrix(rows, patch * patch, data)
}

/// Trains a patch codec on crops of `images` at the given source sizes.
pub fn train_patch_codec(
    codec: &mut SemanticCodec,
    images: &Tensor,
    sources: &[usize],
    snr_db: f64,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<Vec<crate::codec::EpochMetrics>> {
    let patch = (codec.source_dim() as f64).sqrt() as usize;
    let crops = patch_crops(images, sources, patch)?;
    let order = rng.permutation(crops.rows());
    let crops = crops.select_rows(&order);
    let n_val = (crops.rows() / 20).clamp(1, 5000);
    let val = crops.slice_rows(0, n_val);
    let train = crops.slice_rows(n_val, crops.rows());
    let mut channel = Channel::new(ChannelModel::awgn(snr_db));
    crate::codec::train_codec(codec, &mut channel, &train, &val, config, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Fraction of samples shown with every patch received.
    pub full_fraction: f64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 64,
            lr: 1e-3,
            full_fraction: 0.1,
        }
    }
}

/// Draws a training mask: the edge-selected first round plus a random
/// number of further rounds' worth of random patches, or (with
/// `full_fraction` probability) everything.
fn training_mask(
    grid: &PatchGrid,
    source: &[f64],
    session: &SessionConfig,
    full_fraction: f64,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    let count = grid.count();
    if rng.bernoulli(full_fraction) {
        return Ok((0..count).collect());
    }
    let k = session.patches_per_round.min(count);
    let rounds = 1 + rng.below(session.max_rounds.max(1));
    let total = (rounds * k).min(count);
    let mut chosen = edge_select_initial(source, grid, k)?;
    let mut rest: Vec<usize> = (0..count).filter(|i| !chosen.contains(i)).collect();
    rng.shuffle(&mut rest);
    chosen.extend(rest.into_iter().take(total - k));
    Ok(chosen)
}

/// Trains the classifier on partial canvases that mimic sessions. Patches
/// pass through `codec` and the session channel, or arrive clean when `codec`
/// is `None`. Returns the mean training loss per epoch.
pub fn train_classifier(
    classifier: &mut MaskedClassifier,
    codec: Option<&SemanticCodec>,
    images: &Tensor,
    labels: &[usize],
    session: &SessionConfig,
    config: &ClassifierTrainConfig,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let grid = classifier.grid;
    let width = 2 * grid.canvas_pixels();
    let mut opt = Adam::new(AdamConfig::with_lr(config.lr), &classifier.net);
    let mut channel = Channel::new(ChannelModel::awgn(session.snr_db));
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let order = rng.permutation(images.rows());
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mut rows = Vec::with_capacity(chunk.len() * width);
            let mut targets = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                let source = grid.pad(&source_at(images.row(idx), grid.source))?;
                let chosen = training_mask(&grid, &source, session, config.full_fraction, rng)?;
                let mut canvas = vec![0.0; grid.canvas_pixels()];
                match codec {
                    Some(codec) => transmit_patches(codec, &mut channel, &grid, &source, &chosen, &mut canvas, rng)?,
                    None => chosen
                        .iter()
                        .for_each(|&i| grid.place(&mut canvas, i, &grid.extract(&source, i))),
                }
                let mut is_sent = vec![false; grid.count()];
                chosen.iter().for_each(|&i| is_sent[i] = true);
                rows.extend(classifier.input(&canvas, &is_sent));
                targets.push(labels[idx]);
            }
            let x = Tensor::matrix(chunk.len(), width, rows)?;
            let (loss, grads) = classifier
                .net
                .backward(&x, Loss::CrossEntropy, Target::Classes(&targets))
                .map_err(|e| Error::TrainingFault {
                    epoch,
                    detail: e.to_string(),
                })?;
            opt.step(&mut classifier.net, &grads)?;
            total += loss * chunk.len() as f64;
        }
        history.push(total / images.rows() as f64);
    }
    Ok(history)
}

#[derive(Debug, Clone)]
pub struct SamplingSummary {
    pub accuracy: f64,
    pub sessions: Vec<SessionOutcome>,
}

/// Runs one session per image; each session draws from its own stream.
pub fn evaluate_sessions(
    codec: &SemanticCodec,
    classifier: &MaskedClassifier,
    images: &Tensor,
    labels: &[usize],
    config: &SessionConfig,
    rng: &Rng,
) -> Result<SamplingSummary> {
    let sessions = (0..images.rows())
        .map(|i| {
            let mut r = rng.derive(&format!("session/{i}"));
            run_session(codec, classifier, images.row(i), labels[i], config, &mut r)
        })
        .collect::<Result<Vec<_>>>()?;
    let correct = sessions.iter().filter(|s| s.correct).count();
    Ok(SamplingSummary {
        accuracy: correct as f64 / sessions.len().max(1) as f64,
        sessions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (SemanticCodec, MaskedClassifier) {
        let grid = PatchGrid::new(SIDE, 8).unwrap();
        let codec = patch_codec(8, 0.5, &mut Rng::new(1, "codec")).unwrap();
        let cls = MaskedClassifier::new(grid, &mut Rng::new(1, "cls")).unwrap();
        (codec, cls)
    }

    #[test]
    fn patch_codec_sizes() {
        let c4 = patch_codec(4, 0.5, &mut Rng::new(0, "c")).unwrap();
        assert_eq!((c4.source_dim(), c4.n_symbols()), (16, 8));
        assert_eq!(c4.encoder.widths(), vec![16, 32, 8]);
        let c8 = patch_codec(8, 0.5, &mut Rng::new(0, "c")).unwrap();
        assert_eq!(c8.encoder.widths(), vec![64, 64, 32]);
    }

    #[test]
    fn mask_plane_marks_sent_patches() {
        let (_, cls) = tiny();
        let mut sent = vec![false; 16];
        sent[5] = true;
        let row = cls.input(&vec![0.0; 1024], &sent);
        let plane = &row[1024..];
        assert_eq!(plane.iter().filter(|&&v| v == 1.0).count(), 64);
        assert!(cls.grid.pixel_offsets(5).all(|o| plane[o] == 1.0));
    }

    #[test]
    fn all_sent_stops_without_requests() {
        let (_, cls) = tiny();
        let fb = receiver_feedback(&cls, &vec![0.2; 1024], &[true; 16], 4).unwrap();
        assert!(fb.stop && fb.requested.is_empty());
    }

    #[test]
    fn confident_posterior_stops() {
        let (_, mut cls) = tiny();
        let last = cls.net.layers_mut().last_mut().unwrap();
        last.bias.data_mut()[3] = 50.0;
        let fb = receiver_feedback(&cls, &vec![0.0; 1024], &[false; 16], 4).unwrap();
        assert!(fb.stop && fb.requested.is_empty());
        assert!(fb.confidence >= STOP_CONFIDENCE);
    }

    #[test]
    fn session_accounting() {
        let (codec, cls) = tiny();
        let image: Vec<f64> = (0..784).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
        let cfg = SessionConfig::default();
        let out = run_session(&codec, &cls, &image, 7, &cfg, &mut Rng::new(2, "s")).unwrap();
        assert!(out.rounds_used <= cfg.max_rounds);
        assert_eq!(out.entropy_trace.len(), out.rounds_used);
        assert_eq!(out.symbols_sent, (out.rounds_used * cfg.patches_per_round * codec.n_symbols()) as u64);
        let mut uniq = out.sent.clone();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), out.sent.len());
    }
}
