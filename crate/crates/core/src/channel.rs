//! Stochastic channel models and SNR drift schedules.
//!
//! Symbols are real-valued and blocks are the rows of a `[blocks, symbols]`
//! tensor. Transmit power is normalised to one per symbol, so the noise
//! variance is `10^(-snr_db / 10)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

/// PSNR reported for (near) lossless reconstructions.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Default frame-to-frame Gauss-Markov coefficient of the block-fading model.
pub const DEFAULT_FADING_CORRELATION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelKind {
    Awgn,
    /// Flat block fading with one complex gain per block, correlated across
    /// blocks by a Gauss-Markov process.
    RayleighBlock { correlation: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub kind: ChannelKind,
    pub snr_db: f64,
}

impl ChannelModel {
    pub fn awgn(snr_db: f64) -> Self {
        Self {
            kind: ChannelKind::Awgn,
            snr_db,
        }
    }

    pub fn rayleigh_block(snr_db: f64, correlation: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&correlation) {
            return Err(Error::Contract(format!(
                "fading correlation {correlation} outside [0, 1]"
            )));
        }
        Ok(Self {
            kind: ChannelKind::RayleighBlock { correlation },
            snr_db,
        })
    }

    pub fn noise_variance(&self) -> f64 {
        noise_variance(self.snr_db)
    }
}

pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Channel output plus the per-block fading magnitudes (block fading only),
/// which a coherent receiver would use for equalisation.
#[derive(Debug, Clone)]
pub struct Transmission {
    pub received: Tensor,
    pub gains: Option<Vec<f64>>,
}

/// A channel instance: the model, its fading memory and a count of the
/// symbols it has carried.
#[derive(Debug, Clone)]
pub struct Channel {
    model: ChannelModel,
    fading: Option<Complex64>,
    symbols_sent: u64,
}

impl Channel {
    pub fn new(model: ChannelModel) -> Self {
        Self {
            model,
            fading: None,
            symbols_sent: 0,
        }
    }

    pub fn model(&self) -> &ChannelModel {
        &self.model
    }

    pub fn set_snr_db(&mut self, snr_db: f64) {
        self.model.snr_db = snr_db;
    }

    /// Total symbols carried since construction.
    pub fn symbols_sent(&self) -> u64 {
        self.symbols_sent
    }

    /// Passes each row of `x` through the channel. Draws only from `rng`.
    ///
    /// The power check skips all-zero rows (silent blocks, which power
    /// normalisation leaves at zero); an input of only silent rows passes.
    pub fn transmit(&mut self, x: &Tensor, rng: &mut Rng) -> Result<Transmission> {
        let ms = active_mean_square(x);
        if !(0.5..=2.0).contains(&ms) {
            return Err(Error::Contract(format!(
                "transmit expects power-normalised symbols, mean square is {ms:.4}"
            )));
        }
        self.symbols_sent += x.len() as u64;
        let std = self.model.noise_variance().sqrt();
        let mut y = x.clone();
        match self.model.kind {
            ChannelKind::Awgn => {
                for v in y.data_mut() {
                    *v += std * rng.normal();
                }
                Ok(Transmission {
                    received: y,
                    gains: None,
                })
            }
            ChannelKind::RayleighBlock { correlation } => {
                let mut gains = Vec::with_capacity(y.rows());
                for r in 0..y.rows() {
                    let h = match self.fading {
                        None => complex_normal(rng, 1.0),
                        Some(prev) => gauss_markov_step(prev, correlation, rng),
                    };
                    self.fading = Some(h);
                    let g = h.norm();
                    for v in y.row_mut(r) {
                        *v = g * *v + std * rng.normal();
                    }
                    gains.push(g);
                }
                Ok(Transmission {
                    received: y,
                    gains: Some(gains),
                })
            }
        }
    }
}

fn active_mean_square(x: &Tensor) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for r in 0..x.rows() {
        let row = x.row(r);
        if row.iter().any(|&v| v != 0.0) {
            sum += row.iter().map(|v| v * v).sum::<f64>();
            count += row.len();
        }
    }
    if count == 0 {
        1.0
    } else {
        sum / count as f64
    }
}

/// Stateless convenience: one transmission through a fresh channel.
pub fn transmit(model: &ChannelModel, x: &Tensor, rng: &mut Rng) -> Result<Transmission> {
    Channel::new(*model).transmit(x, rng)
}

/// Circularly-symmetric complex Gaussian sample with the given variance.
pub fn complex_normal(rng: &mut Rng, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    Complex64::new(s * rng.normal(), s * rng.normal())
}

/// `h' = ρ h + sqrt(1 - ρ²) w`, `w ~ CN(0, 1)`; keeps unit average power.
pub fn gauss_markov_step(h: Complex64, correlation: f64, rng: &mut Rng) -> Complex64 {
    h * correlation + complex_normal(rng, 1.0) * (1.0 - correlation * correlation).sqrt()
}

/// Piecewise-constant SNR over epochs, closed on the left of each entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrSchedule {
    entries: Vec<(usize, f64)>,
}

impl SnrSchedule {
    pub fn new(entries: Vec<(usize, f64)>) -> Result<Self> {
        match entries.first() {
            None => return Err(Error::Contract("empty SNR schedule".into())),
            Some(&(start, _)) if start != 0 => {
                return Err(Error::Contract("SNR schedule must start at epoch 0".into()))
            }
            _ => {}
        }
        if entries.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Contract(
                "SNR schedule epochs must be strictly increasing".into(),
            ));
        }
        Ok(Self { entries })
    }

    pub fn constant(snr_db: f64) -> Self {
        Self {
            entries: vec![(0, snr_db)],
        }
    }

    /// 21 dB for the first 20 epochs, then 3 dB lower every 10 epochs down to 9 dB.
    pub fn drift() -> Self {
        Self {
            entries: vec![(0, 21.0), (20, 18.0), (30, 15.0), (40, 12.0), (50, 9.0)],
        }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn initial_snr_db(&self) -> f64 {
        self.entries[0].1
    }

    pub fn snr_at(&self, epoch: usize) -> f64 {
        self.entries
            .iter()
            .take_while(|(start, _)| *start <= epoch)
            .last()
            .map(|&(_, snr)| snr)
            .expect("schedule starts at epoch 0")
    }

    /// Epochs at which the SNR changes.
    pub fn change_epochs(&self) -> Vec<usize> {
        self.entries.iter().skip(1).map(|&(e, _)| e).collect()
    }
}

/// Peak SNR in dB for pixels in `[0, 1]`.
pub fn psnr(mse: f64) -> Result<f64> {
    if mse.is_nan() || mse < 0.0 {
        return Err(Error::Contract(format!("psnr of negative mse {mse}")));
    }
    if mse < 1e-10 {
        return Ok(PSNR_CAP_DB);
    }
    Ok(10.0 * (1.0 / mse).log10())
}
