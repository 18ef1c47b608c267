//! Global magnitude pruning and symmetric per-tensor weight quantization.

use serde::{Deserialize, Serialize};

use crate::channel::Channel;
use crate::codec::{CodecOptimizer, SemanticCodec, TrainConfig};
use crate::error::{Error, Result};
use crate::numerics::{AdamConfig, Mlp, Rng, Tensor};

/// Per-layer keep masks over weight matrices (`true` = kept). Biases are
/// never pruned and carry no mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneMask {
    pub layers: Vec<Vec<bool>>,
}

impl PruneMask {
    pub fn pruned(&self) -> usize {
        self.layers.iter().flatten().filter(|&&keep| !keep).count()
    }

    pub fn total(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn sparsity(&self) -> f64 {
        self.pruned() as f64 / self.total().max(1) as f64
    }

    /// Zeroes masked-out weights of `net` (used after each fine-tuning step).
    pub fn apply(&self, net: &mut Mlp) -> Result<()> {
        if self.layers.len() != net.layers().len() {
            return Err(Error::Shape("mask does not match network depth".into()));
        }
        for (layer, keep) in net.layers_mut().iter_mut().zip(&self.layers) {
            if keep.len() != layer.weight.len() {
                return Err(Error::Shape("mask does not match layer size".into()));
            }
            for (w, &k) in layer.weight.data_mut().iter_mut().zip(keep) {
                if !k {
                    *w = 0.0;
                }
            }
        }
        Ok(())
    }
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::Contract(format!("prune ratio {ratio} outside [0, 1)")));
    }
    Ok(())
}

/// Zeroes the `⌊ratio·N⌋` smallest-magnitude weights of `net` (N = weight
/// count over all layers). Ties go to the earlier weight in parameter order.
pub fn prune(net: &Mlp, ratio: f64) -> Result<(Mlp, PruneMask)> {
    let mut out = net.clone();
    let mut masks = prune_jointly(&mut [&mut out], ratio)?;
    Ok((out, masks.remove(0)))
}

/// Global magnitude pruning over the weight matrices of several networks,
/// in place. Returns one mask per network.
pub fn prune_jointly(nets: &mut [&mut Mlp], ratio: f64) -> Result<Vec<PruneMask>> {
    check_ratio(ratio)?;
    // (|w|, net, layer, index) in parameter order.
    let mut all: Vec<(f64, usize, usize, usize)> = Vec::new();
    for (n, net) in nets.iter().enumerate() {
        for (l, layer) in net.layers().iter().enumerate() {
            all.extend(layer.weight.data().iter().enumerate().map(|(i, w)| (w.abs(), n, l, i)));
        }
    }
    let count = (ratio * all.len() as f64).floor() as usize;
    // Stable sort keeps parameter order among equal magnitudes.
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut masks: Vec<PruneMask> = nets
        .iter()
        .map(|net| PruneMask {
            layers: net.layers().iter().map(|l| vec![true; l.weight.len()]).collect(),
        })
        .collect();
    for &(_, n, l, i) in &all[..count] {
        masks[n].layers[l][i] = false;
    }
    for (net, mask) in nets.iter_mut().zip(&masks) {
        mask.apply(net)?;
    }
    Ok(masks)
}

/// Integer codes of one tensor with their dequantization scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedTensor {
    pub shape: Vec<usize>,
    pub codes: Vec<i32>,
    pub scale: f64,
    pub bits: u32,
}

impl QuantizedTensor {
    pub fn dequantize(&self) -> Tensor {
        Tensor::from_parts(
            self.shape.clone(),
            self.codes.iter().map(|&c| f64::from(c) * self.scale).collect(),
        )
    }
}

/// Largest code magnitude for a bit width.
pub fn max_code(bits: u32) -> i32 {
    (1 << (bits - 1)) - 1
}

/// Symmetric per-tensor quantization with `scale = max|w| / (2^(bits-1) - 1)`
/// and round-half-to-even. An all-zero tensor gets scale 0 and zero codes.
pub fn quantize_tensor(t: &Tensor, bits: u32) -> Result<QuantizedTensor> {
    if !matches!(bits, 4 | 8) {
        return Err(Error::Contract(format!("unsupported bit width {bits}")));
    }
    if !t.is_finite() {
        return Err(Error::Contract("cannot quantize non-finite weights".into()));
    }
    let qmax = max_code(bits);
    let peak = t.data().iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let scale = peak / f64::from(qmax);
    let codes = if scale == 0.0 {
        vec![0; t.len()]
    } else {
        t.data()
            .iter()
            // w·qmax/peak rather than w/scale keeps exact halves exact.
            .map(|w| ((w * f64::from(qmax) / peak).round_ties_even() as i32).clamp(-qmax, qmax))
            .collect()
    };
    Ok(QuantizedTensor {
        shape: t.shape().to_vec(),
        codes,
        scale,
        bits,
    })
}

/// Quantized weight matrices of a network plus its fake-quant twin.
#[derive(Debug, Clone)]
pub struct QuantizedMlp {
    pub weights: Vec<QuantizedTensor>,
    /// Same architecture with dequantized weights; biases stay in full precision.
    pub dequantized: Mlp,
}

impl QuantizedMlp {
    /// Bytes taken by the integer codes and one f32 scale per tensor.
    pub fn weight_bytes(&self) -> usize {
        self.weights
            .iter()
            .map(|q| (q.codes.len() * q.bits as usize).div_ceil(8) + 4)
            .sum()
    }
}

pub fn quantize(net: &Mlp, bits: u32) -> Result<QuantizedMlp> {
    let mut dequantized = net.clone();
    let mut weights = Vec::with_capacity(net.layers().len());
    for layer in dequantized.layers_mut() {
        let q = quantize_tensor(&layer.weight, bits)?;
        layer.weight = q.dequantize();
        weights.push(q);
    }
    Ok(QuantizedMlp {
        weights,
        dequantized,
    })
}

/// Prunes encoder and decoder weights jointly; masks in that order.
pub fn prune_codec(codec: &mut SemanticCodec, ratio: f64) -> Result<Vec<PruneMask>> {
    prune_jointly(&mut [&mut codec.encoder, &mut codec.decoder], ratio)
}

/// End-to-end fine-tuning that keeps pruned weights at zero by re-applying
/// the masks after every optimizer step. Returns the mean loss per epoch.
pub fn finetune_pruned(
    codec: &mut SemanticCodec,
    masks: &[PruneMask],
    channel: &mut Channel,
    train: &Tensor,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if masks.len() != 2 {
        return Err(Error::Contract("expected encoder and decoder masks".into()));
    }
    let mut opt = CodecOptimizer::new(AdamConfig::with_lr(config.lr), codec);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let order = rng.permutation(train.rows());
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = train.select_rows(chunk);
            total += opt.step(codec, channel, &batch, rng).map_err(|e| Error::TrainingFault {
                epoch,
                detail: e.to_string(),
            })? * chunk.len() as f64;
            masks[0].apply(&mut codec.encoder)?;
            masks[1].apply(&mut codec.decoder)?;
        }
        history.push(total / train.rows() as f64);
    }
    Ok(history)
}
