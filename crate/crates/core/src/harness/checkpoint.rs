//! Binary model checkpoints.
//!
//! Layout: `"SEMC"`, a little-endian `u32` format version, a `u32` metadata
//! length, the metadata as JSON, then every layer's weight and bias values in
//! declared order as little-endian reals of the declared width.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Activation, Dense, Mlp, Tensor};

pub const MAGIC: &[u8; 4] = b"SEMC";
pub const FORMAT_VERSION: u32 = 1;

/// Storage width of payload reals. `F64` round-trips bit for bit; `F32`
/// halves the size and round-trips the values already rounded to `f32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkLayout {
    pub name: String,
    pub widths: Vec<usize>,
    pub activations: Vec<String>,
}

impl NetworkLayout {
    fn of(name: &str, net: &Mlp) -> Self {
        Self {
            name: name.to_owned(),
            widths: net.widths(),
            activations: net.activations().iter().map(|a| a.tag().to_owned()).collect(),
        }
    }

    fn values(&self) -> Result<usize> {
        if self.widths.len() < 2 || self.activations.len() + 1 != self.widths.len() {
            return Err(Error::Checkpoint(format!(
                "network {:?}: {} widths do not match {} activations",
                self.name,
                self.widths.len(),
                self.activations.len()
            )));
        }
        Ok(self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    /// What the networks form together, e.g. `codec` or `classifier`.
    pub kind: String,
    pub networks: Vec<NetworkLayout>,
    pub init: String,
    pub seed: u64,
    /// Hex digest of the training configuration that produced the weights.
    pub config_digest: String,
    pub dtype: Dtype,
    /// Total number of reals in the payload.
    pub payload_values: usize,
    /// Named scalars a model needs besides its weights.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scalars: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub networks: Vec<(String, Mlp)>,
}

impl Checkpoint {
    /// Builds a checkpoint; layouts and payload size are derived from `nets`.
    pub fn new(kind: &str, seed: u64, config_digest: &str, dtype: Dtype, nets: &[(&str, &Mlp)]) -> Self {
        let networks: Vec<NetworkLayout> = nets.iter().map(|(n, m)| NetworkLayout::of(n, m)).collect();
        Self {
            meta: CheckpointMeta {
                kind: kind.to_owned(),
                payload_values: nets.iter().map(|(_, m)| m.parameter_count()).sum(),
                networks,
                init: "glorot_uniform".into(),
                seed,
                config_digest: config_digest.to_owned(),
                dtype,
                scalars: BTreeMap::new(),
            },
            networks: nets.iter().map(|(n, m)| (n.to_string(), (*m).clone())).collect(),
        }
    }

    pub fn with_scalar(mut self, name: &str, value: f64) -> Self {
        self.meta.scalars.insert(name.to_owned(), value);
        self
    }

    pub fn network(&self, name: &str) -> Option<&Mlp> {
        self.networks.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta)?;
        let meta_len = u32::try_from(meta.len()).map_err(|_| Error::Checkpoint("metadata too large".into()))?;
        let width = self.meta.dtype.width();
        let mut out = Vec::with_capacity(12 + meta.len() + self.meta.payload_values * width);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&meta_len.to_le_bytes());
        out.extend_from_slice(&meta);
        for (_, net) in &self.networks {
            for layer in net.layers() {
                for &v in layer.weight.data().iter().chain(layer.bias.data()) {
                    match self.meta.dtype {
                        Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
                        Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = |range: std::ops::Range<usize>| {
            bytes
                .get(range)
                .ok_or_else(|| Error::Checkpoint("truncated header".into()))
        };
        if header(0..4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic, not a checkpoint".into()));
        }
        let version = u32::from_le_bytes(header(4..8)?.try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let meta_len = u32::from_le_bytes(header(8..12)?.try_into().expect("4 bytes")) as usize;
        let meta: CheckpointMeta = serde_json::from_slice(header(12..12 + meta_len)?)
            .map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
        let declared: usize = meta.networks.iter().map(NetworkLayout::values).sum::<Result<_>>()?;
        if declared != meta.payload_values {
            return Err(Error::Checkpoint(format!(
                "layer shapes declare {declared} values but the metadata claims {}",
                meta.payload_values
            )));
        }
        let payload = &bytes[12 + meta_len..];
        let width = meta.dtype.width();
        if payload.len() != declared * width {
            return Err(Error::Checkpoint(format!(
                "payload holds {} bytes, expected {} values of {width} bytes",
                payload.len(),
                declared
            )));
        }
        let mut values = payload.chunks_exact(width).map(|c| match meta.dtype {
            Dtype::F64 => f64::from_le_bytes(c.try_into().expect("8 bytes")),
            Dtype::F32 => f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64,
        });
        let mut networks = Vec::with_capacity(meta.networks.len());
        for layout in &meta.networks {
            let mut layers = Vec::with_capacity(layout.activations.len());
            for (w, tag) in layout.widths.windows(2).zip(&layout.activations) {
                let activation = Activation::from_tag(tag)
                    .ok_or_else(|| Error::Checkpoint(format!("unknown activation {tag:?}")))?;
                let weight: Vec<f64> = values.by_ref().take(w[0] * w[1]).collect();
                let bias: Vec<f64> = values.by_ref().take(w[1]).collect();
                layers.push(Dense {
                    weight: Tensor::matrix(w[0], w[1], weight)?,
                    bias: Tensor::vector(bias)?,
                    activation,
                });
            }
            networks.push((layout.name.clone(), Mlp::from_layers(layers)?));
        }
        Ok(Self { meta, networks })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn net() -> Mlp {
        Mlp::new(&[3, 4, 2], &[Activation::Relu, Activation::Sigmoid], &mut Rng::new(1, "ckpt")).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let (a, b) = (net(), Mlp::new(&[2, 2], &[Activation::Tanh], &mut Rng::new(2, "ckpt")).unwrap());
        let ck = Checkpoint::new("pair", 7, "abc", Dtype::F64, &[("a", &a), ("b", &b)]).with_scalar("scale", 0.1);
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ck);
        let bits = |m: &Mlp| m.flat_params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.network("a").unwrap()), bits(&a));
    }

    #[test]
    fn f32_payload_rounds_once() {
        let a = net();
        let bytes = Checkpoint::new("mlp", 0, "", Dtype::F32, &[("net", &a)]).to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        let expect: Vec<f64> = a.flat_params().iter().map(|&v| v as f32 as f64).collect();
        assert_eq!(back.network("net").unwrap().flat_params(), expect);
        assert_eq!(Checkpoint::from_bytes(&back.to_bytes().unwrap()).unwrap(), back);
    }

    #[test]
    fn corruption_is_rejected() {
        let bytes = Checkpoint::new("mlp", 0, "", Dtype::F64, &[("net", &net())]).to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Checkpoint(m)) if m.contains("magic")));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Checkpoint(m)) if m.contains("version")));
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 8]).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..6]).is_err());
    }

    #[test]
    fn inconsistent_shapes_are_rejected() {
        let mut ck = Checkpoint::new("mlp", 0, "", Dtype::F64, &[("net", &net())]);
        ck.meta.networks[0].widths = vec![3, 5, 2];
        assert!(Checkpoint::from_bytes(&ck.to_bytes().unwrap()).is_err());
    }
}
