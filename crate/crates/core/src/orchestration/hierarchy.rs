//! Two-timescale hierarchical agents, the baselines they are compared with,
//! and the episode loop that drives both.

use serde::{Deserialize, Serialize};

use crate::codec::QualitySurface;
use crate::error::{Error, Result};
use crate::numerics::Rng;

use super::dqn::{argmax, one_hot, DqnConfig, EpsilonSchedule, QNetwork, ReplayBuffer, RunningStandardizer, Transition};
use super::network::{qoe, shaped_rewards, LinkMeasure, Network, NetworkConfig, QoeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Hierarchical,
    Random,
    Fixed,
    FlatDqn,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Hierarchical, Scheme::Random, Scheme::Fixed, Scheme::FlatDqn];

    pub fn tag(self) -> &'static str {
        match self {
            Scheme::Hierarchical => "hierarchical",
            Scheme::Random => "random",
            Scheme::Fixed => "fixed",
            Scheme::FlatDqn => "flat_dqn",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme {s:?}")))
    }
}

/// How the fixed baseline picks its beam.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedBeam {
    /// Best beam in expectation, held for the whole episode.
    Mean,
    /// Best beam on the current channel, re-chosen every frame. This needs
    /// full channel knowledge the learners do not get.
    Instantaneous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyConfig {
    pub network: NetworkConfig,
    pub qoe: QoeParams,
    pub gamma_large: f64,
    pub gamma_small: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub target_sync: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Frames per training block; each block trains the frame level for its
    /// first half and the slot level for its second half.
    pub block_frames: usize,
    /// Leading blocks that train only the frame level, with the slot level
    /// pinned to `warmup_rho_index`.
    pub warmup_blocks: usize,
    pub warmup_rho_index: usize,
    /// Frame-level Q updates after each training frame.
    pub large_updates_per_frame: usize,
    /// Fixed-baseline compression index.
    pub fixed_rho_index: usize,
    pub fixed_beam: FixedBeam,
    /// Store rewards minus their running mean. A constant shift leaves the
    /// greedy policy unchanged but spares the Q-nets from bootstrapping up to
    /// `r/(1-γ)` before action differences become visible.
    pub center_rewards: bool,
    /// Double Q-learning targets at both levels.
    pub double_q: bool,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig::default(),
            qoe: QoeParams::default(),
            gamma_large: 0.9,
            gamma_small: 0.5,
            lr: 2e-4,
            batch_size: 64,
            replay_capacity: 10_000,
            target_sync: 200,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            block_frames: 100,
            warmup_blocks: 2,
            warmup_rho_index: 2,
            large_updates_per_frame: 1,
            fixed_rho_index: 2,
            fixed_beam: FixedBeam::Mean,
            center_rewards: true,
            double_q: true,
        }
    }
}

impl HierarchyConfig {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        let n = self.network.compressions.len();
        if self.warmup_rho_index >= n || self.fixed_rho_index >= n {
            return Err(Error::Config("compression index outside the codebook".into()));
        }
        if self.block_frames < 2 || self.batch_size == 0 {
            return Err(Error::Config("block_frames must be ≥ 2 and batch_size positive".into()));
        }
        if self.qoe.alpha < 0.0 || self.qoe.beta < 0.0 {
            return Err(Error::Config("QoE weights must be non-negative".into()));
        }
        Ok(())
    }

    fn dqn(&self, gamma: f64) -> DqnConfig {
        DqnConfig {
            gamma,
            lr: self.lr,
            batch_size: self.batch_size,
            replay_capacity: self.replay_capacity,
            target_sync: self.target_sync,
            double_q: self.double_q,
        }
    }

    /// ε over the first half of the episode, in slots.
    pub fn epsilon(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.epsilon_start,
            end: self.epsilon_end,
            steps: self.network.episode_slots / 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Warmup,
    Large,
    Small,
}

/// Which level learns during `frame`.
pub fn phase_of(frame: usize, config: &HierarchyConfig) -> Phase {
    let block = frame / config.block_frames;
    if block < config.warmup_blocks {
        Phase::Warmup
    } else if frame % config.block_frames < config.block_frames / 2 {
        Phase::Large
    } else {
        Phase::Small
    }
}

/// Local observations of one link in dB, standardised by running statistics.
#[derive(Debug, Clone, Default)]
struct Observer {
    gain: RunningStandardizer,
    interference: RunningStandardizer,
    last: (f64, f64),
}

impl Observer {
    fn observe(&mut self, m: &LinkMeasure) {
        let g = 10.0 * m.gain.max(1e-30).log10();
        let i = 10.0 * m.interference_noise.log10();
        self.gain.observe(g);
        self.interference.observe(i);
        self.last = (g, i);
    }

    fn features(&self) -> [f64; 2] {
        [
            self.gain.standardize(self.last.0),
            self.interference.standardize(self.last.1),
        ]
    }
}

/// Running mean subtracted from stored rewards when centring is enabled.
#[derive(Debug, Clone, Default)]
struct RewardBaseline {
    enabled: bool,
    mean: RunningStandardizer,
}

impl RewardBaseline {
    fn new(enabled: bool) -> Self {
        Self {
            enabled,
            mean: RunningStandardizer::default(),
        }
    }

    fn center(&mut self, reward: f64) -> f64 {
        if !self.enabled {
            return reward;
        }
        self.mean.observe(reward);
        reward - self.mean.mean()
    }
}

/// A link's two-level agent: frame-level (beam, power) and slot-level ρ.
#[derive(Debug, Clone)]
pub struct HierarchicalAgent {
    pub large: QNetwork,
    pub small: QNetwork,
    pub large_replay: ReplayBuffer<Transition>,
    pub small_replay: ReplayBuffer<Transition>,
    observer: Observer,
    large_baseline: RewardBaseline,
    small_baseline: RewardBaseline,
    prev_frame_action: usize,
    prev_rho: usize,
    frame_actions: usize,
    rhos: usize,
}

impl HierarchicalAgent {
    pub fn new(config: &HierarchyConfig, rng: &mut Rng) -> Result<Self> {
        let frame_actions = config.network.frame_actions();
        let rhos = config.network.compressions.len();
        Ok(Self {
            large: QNetwork::new(2 + frame_actions, frame_actions, config.dqn(config.gamma_large), rng)?,
            small: QNetwork::new(rhos + 2, rhos, config.dqn(config.gamma_small), rng)?,
            large_replay: ReplayBuffer::new(config.replay_capacity),
            small_replay: ReplayBuffer::new(config.replay_capacity),
            observer: Observer::default(),
            large_baseline: RewardBaseline::new(config.center_rewards),
            small_baseline: RewardBaseline::new(config.center_rewards),
            prev_frame_action: frame_actions - 1,
            prev_rho: config.warmup_rho_index,
            frame_actions,
            rhos,
        })
    }

    /// `(gain, interference+noise, previous (beam, power) one-hot)`.
    pub fn large_state(&self) -> Vec<f64> {
        let mut s = self.observer.features().to_vec();
        s.extend(one_hot(self.prev_frame_action, self.frame_actions));
        s
    }

    /// `(previous ρ one-hot, gain, interference+noise)`.
    pub fn small_state(&self) -> Vec<f64> {
        let mut s = one_hot(self.prev_rho, self.rhos);
        s.extend(self.observer.features());
        s
    }
}

/// Single-level baseline: one Q-net over joint (beam, power, ρ) per slot.
#[derive(Debug, Clone)]
pub struct FlatAgent {
    pub net: QNetwork,
    pub replay: ReplayBuffer<Transition>,
    observer: Observer,
    baseline: RewardBaseline,
    prev_action: usize,
    actions: usize,
}

impl FlatAgent {
    pub fn new(config: &HierarchyConfig, rng: &mut Rng) -> Result<Self> {
        let actions = config.network.frame_actions() * config.network.compressions.len();
        Ok(Self {
            net: QNetwork::new(2 + actions, actions, config.dqn(config.gamma_small), rng)?,
            replay: ReplayBuffer::new(config.replay_capacity),
            observer: Observer::default(),
            baseline: RewardBaseline::new(config.center_rewards),
            prev_action: actions - 1,
            actions,
        })
    }

    pub fn state(&self) -> Vec<f64> {
        let mut s = self.observer.features().to_vec();
        s.extend(one_hot(self.prev_action, self.actions));
        s
    }
}

/// One link in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub link: usize,
    pub beam: usize,
    pub power_level: usize,
    pub rho_index: usize,
    pub sinr_db: f64,
    pub qoe: f64,
}

#[derive(Debug, Clone)]
pub struct OrchestrationRun {
    pub scheme: Scheme,
    pub seed: u64,
    pub links: usize,
    /// `links` records per slot, slot-major.
    pub records: Vec<SlotRecord>,
    /// Mean QoE over links, per slot.
    pub mean_qoe: Vec<f64>,
    /// Shaped reward per slot and link, slot-major.
    pub rewards: Vec<f64>,
}

impl OrchestrationRun {
    /// Mean of the per-slot mean QoE over the slot range `[from, to)` given
    /// as fractions of the episode.
    pub fn window_mean(&self, from: f64, to: f64) -> f64 {
        let n = self.mean_qoe.len();
        let a = (from * n as f64).round() as usize;
        let b = ((to * n as f64).round() as usize).max(a + 1).min(n);
        self.mean_qoe[a..b].iter().sum::<f64>() / (b - a) as f64
    }

    pub fn first_window(&self) -> f64 {
        self.window_mean(0.0, 0.1)
    }

    pub fn final_window(&self) -> f64 {
        self.window_mean(0.9, 1.0)
    }
}

/// Learned against oracle compression for a single link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SanityOutcome {
    /// Most frequent compression index in the final window.
    pub learned_rho_index: usize,
    /// Most frequent QoE-maximising index over the same slots, found by
    /// enumerating the codebook at each logged SINR.
    pub oracle_rho_index: usize,
    /// Fraction of final-window slots whose choice matches that slot's oracle.
    pub agreement: f64,
}

impl SanityOutcome {
    pub fn converged(&self) -> bool {
        self.learned_rho_index == self.oracle_rho_index
    }
}

/// Trains the hierarchy on one link and compares its late compression choices
/// with exhaustive enumeration at the SINRs it actually experienced.
pub fn single_link_sanity(config: &HierarchyConfig, surface: &QualitySurface, seed: u64) -> Result<SanityOutcome> {
    if config.network.links != 1 {
        return Err(Error::Config("the sanity case needs exactly one link".into()));
    }
    let (run, _) = train_hierarchy(config, surface, seed)?;
    let n = config.network.compressions.len();
    let tail = &run.records[run.records.len() * 9 / 10..];
    let oracle = |r: &SlotRecord| {
        let sinr = 10f64.powf(r.sinr_db / 10.0);
        let q: Vec<f64> = (0..n).map(|k| qoe(sinr, k, surface, &config.qoe)).collect();
        argmax(&q)
    };
    let mode = |counts: Vec<usize>| argmax(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
    let mut learned = vec![0; n];
    let mut best = vec![0; n];
    let mut agree = 0;
    for r in tail {
        let o = oracle(r);
        learned[r.rho_index] += 1;
        best[o] += 1;
        agree += usize::from(o == r.rho_index);
    }
    Ok(SanityOutcome {
        learned_rho_index: mode(learned),
        oracle_rho_index: mode(best),
        agreement: agree as f64 / tail.len() as f64,
    })
}

/// Per-slot quantities shared by every scheme's loop.
struct Episode<'a> {
    network: Network,
    surface: &'a QualitySurface,
    qoe: QoeParams,
    run: OrchestrationRun,
}

impl<'a> Episode<'a> {
    fn new(scheme: Scheme, config: &HierarchyConfig, surface: &'a QualitySurface, seed: u64) -> Result<Self> {
        config.validate()?;
        if surface.rhos.len() != config.network.compressions.len() {
            return Err(Error::Config(
                "quality surface and compression codebook sizes differ".into(),
            ));
        }
        let slots = config.network.episode_slots;
        let links = config.network.links;
        Ok(Self {
            network: Network::new(config.network.clone(), Rng::new(seed, "channel"))?,
            surface,
            qoe: config.qoe,
            run: OrchestrationRun {
                scheme,
                seed,
                links,
                records: Vec::with_capacity(slots * links),
                mean_qoe: Vec::with_capacity(slots),
                rewards: Vec::with_capacity(slots * links),
            },
        })
    }

    /// Advances the channel (except before the first slot), applies the
    /// actions and logs the outcome. Returns measurements and rewards.
    fn slot(&mut self, beams: &[usize], powers: &[usize], rhos: &[usize]) -> (Vec<LinkMeasure>, Vec<f64>) {
        let slot = self.run.mean_qoe.len();
        if slot > 0 {
            self.network.advance();
        }
        let meas = self.network.measure(beams, powers);
        let q: Vec<f64> = meas
            .iter()
            .zip(rhos)
            .map(|(m, &r)| qoe(m.sinr, r, self.surface, &self.qoe))
            .collect();
        let rewards = shaped_rewards(&q);
        for (link, m) in meas.iter().enumerate() {
            self.run.records.push(SlotRecord {
                slot,
                link,
                beam: beams[link],
                power_level: powers[link],
                rho_index: rhos[link],
                sinr_db: m.sinr_db(),
                qoe: q[link],
            });
        }
        self.run.mean_qoe.push(q.iter().sum::<f64>() / q.len() as f64);
        self.run.rewards.extend_from_slice(&rewards);
        (meas, rewards)
    }
}

fn agent_rngs(seed: u64, links: usize) -> Vec<Rng> {
    (0..links).map(|i| Rng::new(seed, &format!("agent/{i}"))).collect()
}

fn learn(net: &mut QNetwork, replay: &ReplayBuffer<Transition>, rng: &mut Rng) -> Result<()> {
    let batch = net.config().batch_size;
    if replay.len() >= batch {
        let sample = replay.sample(batch, rng);
        net.update(&sample)?;
    }
    Ok(())
}

/// Trains one hierarchical agent per link over one episode.
pub fn train_hierarchy(config: &HierarchyConfig, surface: &QualitySurface, seed: u64) -> Result<(OrchestrationRun, Vec<HierarchicalAgent>)> {
    let mut ep = Episode::new(Scheme::Hierarchical, config, surface, seed)?;
    let net_cfg = &config.network;
    let links = net_cfg.links;
    let mut rngs = agent_rngs(seed, links);
    let mut agents = (0..links)
        .map(|i| HierarchicalAgent::new(config, &mut Rng::new(seed, &format!("init/{i}"))))
        .collect::<Result<Vec<_>>>()?;
    let eps = config.epsilon();

    // Probe measurement so the first states are defined.
    let probe = ep.network.measure(&vec![0; links], &vec![net_cfg.powers.len() - 1; links]);
    for (a, m) in agents.iter_mut().zip(&probe) {
        a.observer.observe(m);
    }

    for frame in 0..net_cfg.frames() {
        let phase = phase_of(frame, config);
        let slot0 = frame * net_cfg.frame_slots;
        let eps_large = if phase == Phase::Small { 0.0 } else { eps.at(slot0) };
        let large_states: Vec<Vec<f64>> = agents.iter().map(HierarchicalAgent::large_state).collect();
        let mut large_actions = Vec::with_capacity(links);
        for ((a, s), rng) in agents.iter().zip(&large_states).zip(rngs.iter_mut()) {
            large_actions.push(a.large.act(s, eps_large, rng)?);
        }
        let (beams, powers): (Vec<usize>, Vec<usize>) =
            large_actions.iter().map(|&a| net_cfg.split_frame_action(a)).unzip();

        let mut frame_reward = vec![0.0; links];
        for t in 0..net_cfg.frame_slots {
            let slot = slot0 + t;
            let eps_small = if phase == Phase::Small { eps.at(slot) } else { 0.0 };
            let small_states: Vec<Vec<f64>> = agents.iter().map(HierarchicalAgent::small_state).collect();
            let mut rhos = Vec::with_capacity(links);
            for ((a, s), rng) in agents.iter().zip(&small_states).zip(rngs.iter_mut()) {
                rhos.push(match phase {
                    Phase::Warmup => config.warmup_rho_index,
                    _ => a.small.act(s, eps_small, rng)?,
                });
            }
            let (meas, rewards) = ep.slot(&beams, &powers, &rhos);
            for (i, a) in agents.iter_mut().enumerate() {
                a.observer.observe(&meas[i]);
                a.prev_rho = rhos[i];
                frame_reward[i] += rewards[i];
                if phase != Phase::Warmup {
                    let reward = a.small_baseline.center(rewards[i]);
                    a.small_replay.push(Transition {
                        state: small_states[i].clone(),
                        action: rhos[i],
                        reward,
                        next_state: a.small_state(),
                    });
                }
                if phase == Phase::Small {
                    learn(&mut a.small, &a.small_replay, &mut rngs[i])?;
                }
            }
        }

        for (i, a) in agents.iter_mut().enumerate() {
            a.prev_frame_action = large_actions[i];
            let reward = a.large_baseline.center(frame_reward[i] / net_cfg.frame_slots as f64);
            a.large_replay.push(Transition {
                state: large_states[i].clone(),
                action: large_actions[i],
                reward,
                next_state: a.large_state(),
            });
            if phase != Phase::Small {
                for _ in 0..config.large_updates_per_frame {
                    learn(&mut a.large, &a.large_replay, &mut rngs[i])?;
                }
            }
        }
    }
    Ok((ep.run, agents))
}

/// Single-level DQN baseline over joint actions, chosen every slot.
pub fn train_flat_dqn(config: &HierarchyConfig, surface: &QualitySurface, seed: u64) -> Result<OrchestrationRun> {
    let mut ep = Episode::new(Scheme::FlatDqn, config, surface, seed)?;
    let net_cfg = &config.network;
    let links = net_cfg.links;
    let rhos_n = net_cfg.compressions.len();
    let mut rngs = agent_rngs(seed, links);
    let mut agents = (0..links)
        .map(|i| FlatAgent::new(config, &mut Rng::new(seed, &format!("init/{i}"))))
        .collect::<Result<Vec<_>>>()?;
    let eps = config.epsilon();
    let probe = ep.network.measure(&vec![0; links], &vec![net_cfg.powers.len() - 1; links]);
    for (a, m) in agents.iter_mut().zip(&probe) {
        a.observer.observe(m);
    }
    for slot in 0..net_cfg.frames() * net_cfg.frame_slots {
        let states: Vec<Vec<f64>> = agents.iter().map(FlatAgent::state).collect();
        let mut actions = Vec::with_capacity(links);
        for ((a, s), rng) in agents.iter().zip(&states).zip(rngs.iter_mut()) {
            actions.push(a.net.act(s, eps.at(slot), rng)?);
        }
        let (mut beams, mut powers, mut rhos) = (Vec::new(), Vec::new(), Vec::new());
        for &a in &actions {
            let (b, p) = net_cfg.split_frame_action(a / rhos_n);
            beams.push(b);
            powers.push(p);
            rhos.push(a % rhos_n);
        }
        let (meas, rewards) = ep.slot(&beams, &powers, &rhos);
        for (i, a) in agents.iter_mut().enumerate() {
            a.observer.observe(&meas[i]);
            a.prev_action = actions[i];
            let reward = a.baseline.center(rewards[i]);
            a.replay.push(Transition {
                state: states[i].clone(),
                action: actions[i],
                reward,
                next_state: a.state(),
            });
            learn(&mut a.net, &a.replay, &mut rngs[i])?;
        }
    }
    Ok(ep.run)
}

/// Uniformly random frame and slot actions.
pub fn run_random(config: &HierarchyConfig, surface: &QualitySurface, seed: u64) -> Result<OrchestrationRun> {
    let mut ep = Episode::new(Scheme::Random, config, surface, seed)?;
    let net_cfg = &config.network;
    let mut rng = Rng::new(seed, "agent/random");
    for _ in 0..net_cfg.frames() {
        let beams: Vec<usize> = (0..net_cfg.links).map(|_| rng.below(net_cfg.beams)).collect();
        let powers: Vec<usize> = (0..net_cfg.links).map(|_| rng.below(net_cfg.powers.len())).collect();
        for _ in 0..net_cfg.frame_slots {
            let rhos: Vec<usize> = (0..net_cfg.links)
                .map(|_| rng.below(net_cfg.compressions.len()))
                .collect();
            ep.slot(&beams, &powers, &rhos);
        }
    }
    Ok(ep.run)
}

/// Maximum power, fixed ρ, and the beam picked by `config.fixed_beam`.
pub fn run_fixed(config: &HierarchyConfig, surface: &QualitySurface, seed: u64) -> Result<OrchestrationRun> {
    let mut ep = Episode::new(Scheme::Fixed, config, surface, seed)?;
    let net_cfg = &config.network;
    let powers = vec![net_cfg.powers.len() - 1; net_cfg.links];
    let rhos = vec![config.fixed_rho_index; net_cfg.links];
    let mut beams: Vec<usize> = (0..net_cfg.links).map(|i| ep.network.mean_gain_beam(i)).collect();
    for _ in 0..net_cfg.frames() {
        if config.fixed_beam == FixedBeam::Instantaneous {
            beams = (0..net_cfg.links).map(|i| ep.network.best_gain_beam(i)).collect();
        }
        for _ in 0..net_cfg.frame_slots {
            ep.slot(&beams, &powers, &rhos);
        }
    }
    Ok(ep.run)
}

pub fn run_scheme(scheme: Scheme, config: &HierarchyConfig, surface: &QualitySurface, seed: u64) -> Result<OrchestrationRun> {
    match scheme {
        Scheme::Hierarchical => train_hierarchy(config, surface, seed).map(|(run, _)| run),
        Scheme::Random => run_random(config, surface, seed),
        Scheme::Fixed => run_fixed(config, surface, seed),
        Scheme::FlatDqn => train_flat_dqn(config, surface, seed),
    }
}

/// Recomputes the per-slot mean QoE of a logged run from its seed and
/// actions alone.
pub fn replay_mean_qoe(config: &HierarchyConfig, surface: &QualitySurface, run: &OrchestrationRun) -> Result<Vec<f64>> {
    let mut ep = Episode::new(run.scheme, config, surface, run.seed)?;
    for chunk in run.records.chunks(run.links) {
        let beams: Vec<usize> = chunk.iter().map(|r| r.beam).collect();
        let powers: Vec<usize> = chunk.iter().map(|r| r.power_level).collect();
        let rhos: Vec<usize> = chunk.iter().map(|r| r.rho_index).collect();
        ep.slot(&beams, &powers, &rhos);
    }
    Ok(ep.run.mean_qoe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::SurfaceProvenance;

    pub(crate) fn toy_surface() -> QualitySurface {
        let rhos = crate::codec::COMPRESSION_CODEBOOK.to_vec();
        let snrs = vec![-10.0, 0.0, 10.0, 20.0];
        let acc: Vec<Vec<f64>> = rhos
            .iter()
            .map(|r| snrs.iter().map(|s| (0.5 + 0.02 * s + 0.2 * r).clamp(0.1, 0.99)).collect())
            .collect();
        QualitySurface::new(
            rhos,
            snrs,
            vec![vec![20.0; 4]; 5],
            acc,
            SurfaceProvenance {
                codec_digests: vec![],
                eval_set: "toy".into(),
                samples: 0,
            },
        )
        .unwrap()
    }

    fn small_config() -> HierarchyConfig {
        let mut c = HierarchyConfig::default();
        c.network.episode_slots = 400;
        c.block_frames = 10;
        c.warmup_blocks = 1;
        c
    }

    #[test]
    fn phases_alternate_after_warmup() {
        let c = small_config();
        assert_eq!(phase_of(3, &c), Phase::Warmup);
        assert_eq!(phase_of(10, &c), Phase::Large);
        assert_eq!(phase_of(15, &c), Phase::Small);
        assert_eq!(phase_of(20, &c), Phase::Large);
    }

    #[test]
    fn every_scheme_logs_every_slot() {
        let c = small_config();
        let s = toy_surface();
        for scheme in Scheme::ALL {
            let run = run_scheme(scheme, &c, &s, 5).unwrap();
            assert_eq!(run.mean_qoe.len(), 400);
            assert_eq!(run.records.len(), 1600);
            assert!(run.mean_qoe.iter().all(|q| q.is_finite()));
        }
    }

    #[test]
    fn rewards_sum_to_one_and_a_half_qoe() {
        let mut c = small_config();
        c.network.links = 2;
        let run = run_random(&c, &toy_surface(), 1).unwrap();
        for (slot, r) in run.rewards.chunks(2).enumerate() {
            let q = 2.0 * run.mean_qoe[slot];
            assert!((r.iter().sum::<f64>() - 1.5 * q).abs() < 1e-12);
        }
    }

    #[test]
    fn warmup_pins_the_compression() {
        let c = small_config();
        let (run, agents) = train_hierarchy(&c, &toy_surface(), 2).unwrap();
        assert!(run.records[..100 * 4].iter().all(|r| r.rho_index == c.warmup_rho_index));
        // Frame transitions are stored in every phase, slot transitions outside warm-up.
        assert!(agents.iter().all(|a| a.large_replay.len() == 40 && a.small_replay.len() == 300));
    }

    #[test]
    fn replay_reproduces_the_trace() {
        let c = small_config();
        let s = toy_surface();
        let (run, _) = train_hierarchy(&c, &s, 9).unwrap();
        assert_eq!(replay_mean_qoe(&c, &s, &run).unwrap(), run.mean_qoe);
    }

    #[test]
    fn frame_actions_hold_within_a_frame() {
        let c = small_config();
        let run = run_random(&c, &toy_surface(), 3).unwrap();
        for frame in run.records.chunks(4 * 10) {
            for link in 0..4 {
                let first = frame[link];
                assert!(frame.iter().skip(link).step_by(4).all(|r| r.beam == first.beam && r.power_level == first.power_level));
            }
        }
    }
}
