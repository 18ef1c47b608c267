//! Multi-link downlink interference network with codebook beamforming.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{complex_normal, gauss_markov_step};
use crate::codec::{QualitySurface, COMPRESSION_CODEBOOK};
use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub links: usize,
    pub antennas: usize,
    pub beams: usize,
    /// Ascending fractions of the maximum transmit power, in `(0, 1]`.
    pub powers: Vec<f64>,
    pub compressions: Vec<f64>,
    /// Median SNR of a single link at full power with a unit-norm beam; the
    /// noise power is derived from it.
    pub median_snr_db: f64,
    /// Average power gain of cross-link (interfering) channels relative to
    /// the direct ones.
    pub cross_gain_db: f64,
    /// Standard deviation of a fixed per-pair log-normal offset on each
    /// cross-link gain.
    pub cross_spread_db: f64,
    /// Rician factor: power ratio of the fixed line-of-sight component to the
    /// fading one. Zero gives pure Rayleigh links.
    pub rician_factor: f64,
    pub frame_slots: usize,
    pub episode_slots: usize,
    /// Per-slot Gauss-Markov coefficient of every channel vector.
    pub slot_correlation: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            links: 4,
            antennas: 4,
            beams: 8,
            powers: vec![0.25, 0.5, 0.75, 1.0],
            compressions: COMPRESSION_CODEBOOK.to_vec(),
            median_snr_db: 10.0,
            cross_gain_db: -15.0,
            cross_spread_db: 0.0,
            rician_factor: 3.0,
            frame_slots: 10,
            episode_slots: 20_000,
            slot_correlation: 0.99,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.links == 0 || self.antennas == 0 || self.beams == 0 {
            return bad("links, antennas and beams must be positive");
        }
        if self.powers.is_empty() || self.compressions.is_empty() {
            return bad("power and compression codebooks must be non-empty");
        }
        if self.powers.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return bad("power levels must lie in (0, 1]");
        }
        if self.powers.windows(2).any(|w| w[1] <= w[0]) {
            return bad("power levels must be ascending");
        }
        if self.frame_slots == 0 || self.episode_slots < self.frame_slots {
            return bad("episode must hold at least one frame");
        }
        if !(self.cross_spread_db >= 0.0 && self.cross_spread_db.is_finite()) {
            return bad("cross spread must be finite and non-negative");
        }
        if !(self.rician_factor >= 0.0 && self.rician_factor.is_finite()) {
            return bad("rician factor must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.slot_correlation) {
            return bad("slot correlation must lie in [0, 1]");
        }
        Ok(())
    }

    /// `σ²` such that `|hᴴw|²/σ²` (an Exp(1) variable for Rayleigh `h` and
    /// unit `w`) has the configured median. With a line-of-sight component
    /// the mean gain over beams is still one.
    pub fn noise_power(&self) -> f64 {
        std::f64::consts::LN_2 * 10f64.powf(-self.median_snr_db / 10.0)
    }

    /// Joint (beam, power) actions of the frame-level agent.
    pub fn frame_actions(&self) -> usize {
        self.beams * self.powers.len()
    }

    pub fn frames(&self) -> usize {
        self.episode_slots / self.frame_slots
    }

    pub fn split_frame_action(&self, action: usize) -> (usize, usize) {
        (action / self.powers.len(), action % self.powers.len())
    }
}

/// `B` DFT beams over `N_t` antennas: `w_b[n] = exp(i·2π·n·b/B)/√N_t`.
pub fn dft_codebook(antennas: usize, beams: usize) -> Vec<Vec<Complex64>> {
    let norm = 1.0 / (antennas as f64).sqrt();
    (0..beams)
        .map(|b| {
            (0..antennas)
                .map(|n| Complex64::from_polar(norm, 2.0 * std::f64::consts::PI * (n * b) as f64 / beams as f64))
                .collect()
        })
        .collect()
}

/// `|hᴴw|²`.
pub fn beam_gain(h: &[Complex64], w: &[Complex64]) -> f64 {
    h.iter().zip(w).map(|(a, b)| a.conj() * b).sum::<Complex64>().norm_sqr()
}

/// Per-link measurements after one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkMeasure {
    /// Received signal power `p_i·|h_iiᴴ w_i|²`.
    pub gain: f64,
    /// `Σ_{j≠i} p_j·|h_ijᴴ w_j|² + σ²`.
    pub interference_noise: f64,
    pub sinr: f64,
}

impl LinkMeasure {
    pub fn sinr_db(&self) -> f64 {
        10.0 * self.sinr.log10()
    }
}

/// SINR of every link. `channels[i][j]` is the vector from transmitter `j`
/// to receiver `i`; `beams[j]` and `powers[j]` are transmitter `j`'s choice.
pub fn compute_sinr(
    channels: &[Vec<Vec<Complex64>>],
    beams: &[&[Complex64]],
    powers: &[f64],
    noise_power: f64,
) -> Vec<LinkMeasure> {
    let links = channels.len();
    (0..links)
        .map(|i| {
            let gain = powers[i] * beam_gain(&channels[i][i], beams[i]);
            let interference: f64 = (0..links)
                .filter(|&j| j != i)
                .map(|j| powers[j] * beam_gain(&channels[i][j], beams[j]))
                .sum();
            let interference_noise = interference + noise_power;
            LinkMeasure {
                gain,
                interference_noise,
                sinr: gain / interference_noise,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QoeParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for QoeParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.3,
        }
    }
}

/// `α·A(ρ, SINR_dB) − β·ρ` with the accuracy read off the surface.
pub fn qoe(sinr: f64, rho_index: usize, surface: &QualitySurface, params: &QoeParams) -> f64 {
    let rho = surface.rhos[rho_index];
    let snr_db = if sinr > 0.0 { 10.0 * sinr.log10() } else { f64::NEG_INFINITY };
    params.alpha * surface.accuracy_at(rho_index, snr_db) - params.beta * rho
}

/// Cooperative shaping: own QoE plus half the mean QoE of the other links.
pub fn shaped_rewards(qoes: &[f64]) -> Vec<f64> {
    let n = qoes.len();
    if n == 1 {
        return qoes.to_vec();
    }
    let total: f64 = qoes.iter().sum();
    qoes.iter()
        .map(|&q| q + 0.5 * (total - q) / (n - 1) as f64)
        .collect()
}

/// The time-varying channel. Its randomness comes only from its own stream,
/// so a run can be replayed from the seed and the logged actions.
///
/// Every transmitter-receiver pair has a fixed line-of-sight direction and a
/// Gauss-Markov scattered part; cross pairs are attenuated by `cross_gain_db`.
#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    noise_power: f64,
    codebook: Vec<Vec<Complex64>>,
    /// `[receiver][transmitter][antenna]`, unit power per entry.
    line_of_sight: Vec<Vec<Vec<Complex64>>>,
    scattered: Vec<Vec<Vec<Complex64>>>,
    /// Large-scale amplitude per `[receiver][transmitter]`.
    amplitude: Vec<Vec<f64>>,
    channels: Vec<Vec<Vec<Complex64>>>,
    rng: Rng,
    slot: usize,
}

/// `exp(i·2π·n·f)` across the array for spatial frequency `f`.
fn steering(antennas: usize, frequency: f64) -> Vec<Complex64> {
    (0..antennas)
        .map(|n| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * n as f64 * frequency))
        .collect()
}

impl Network {
    pub fn new(config: NetworkConfig, rng: Rng) -> Result<Self> {
        config.validate()?;
        let mut rng = rng;
        let (l, n) = (config.links, config.antennas);
        let mut line_of_sight = vec![vec![Vec::new(); l]; l];
        let mut scattered = vec![vec![Vec::new(); l]; l];
        let mut amplitude = vec![vec![1.0; l]; l];
        for i in 0..l {
            for j in 0..l {
                line_of_sight[i][j] = steering(n, rng.uniform());
                scattered[i][j] = (0..n).map(|_| complex_normal(&mut rng, 1.0)).collect();
                if i != j {
                    let db = config.cross_gain_db + config.cross_spread_db * rng.normal();
                    amplitude[i][j] = 10f64.powf(db / 20.0);
                }
            }
        }
        let mut net = Self {
            noise_power: config.noise_power(),
            codebook: dft_codebook(n, config.beams),
            line_of_sight,
            scattered,
            amplitude,
            channels: Vec::new(),
            config,
            rng,
            slot: 0,
        };
        net.compose();
        Ok(net)
    }

    fn compose(&mut self) {
        let k = self.config.rician_factor;
        let los = (k / (k + 1.0)).sqrt();
        let nlos = (1.0 / (k + 1.0)).sqrt();
        self.channels = (0..self.config.links)
            .map(|i| {
                (0..self.config.links)
                    .map(|j| {
                        let amp = self.amplitude[i][j];
                        self.line_of_sight[i][j]
                            .iter()
                            .zip(&self.scattered[i][j])
                            .map(|(a, s)| (a * los + s * nlos) * amp)
                            .collect()
                    })
                    .collect()
            })
            .collect();
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn channels(&self) -> &[Vec<Vec<Complex64>>] {
        &self.channels
    }

    pub fn codebook(&self) -> &[Vec<Complex64>] {
        &self.codebook
    }

    /// Applies one slot of Gauss-Markov innovation to every scattered part.
    pub fn advance(&mut self) {
        let rho = self.config.slot_correlation;
        for h in self.scattered.iter_mut().flatten() {
            for v in h.iter_mut() {
                *v = gauss_markov_step(*v, rho, &mut self.rng);
            }
        }
        self.compose();
        self.slot += 1;
    }

    /// Measurements for frame actions `(beam, power level)` per link.
    pub fn measure(&self, beams: &[usize], power_levels: &[usize]) -> Vec<LinkMeasure> {
        let w: Vec<&[Complex64]> = beams.iter().map(|&b| self.codebook[b].as_slice()).collect();
        let p: Vec<f64> = power_levels.iter().map(|&l| self.config.powers[l]).collect();
        compute_sinr(&self.channels, &w, &p, self.noise_power)
    }

    /// The beam maximizing link `i`'s expected own gain. Only the
    /// line-of-sight part differs between beams in expectation.
    pub fn mean_gain_beam(&self, link: usize) -> usize {
        let h = &self.line_of_sight[link][link];
        (0..self.config.beams)
            .map(|b| (beam_gain(h, &self.codebook[b]), b))
            .fold((f64::NEG_INFINITY, 0), |best, x| if x.0 > best.0 { x } else { best })
            .1
    }

    /// The beam maximizing link `i`'s own gain on the current channel.
    pub fn best_gain_beam(&self, link: usize) -> usize {
        let h = &self.channels[link][link];
        (0..self.config.beams)
            .map(|b| (beam_gain(h, &self.codebook[b]), b))
            .fold((f64::NEG_INFINITY, 0), |best, x| if x.0 > best.0 { x } else { best })
            .1
    }
}
