//! Multi-link orchestration: interference network, Q-learning blocks and the
//! two-timescale hierarchy with its baselines.

pub mod dqn;
pub mod hierarchy;
pub mod network;

pub use dqn::{DqnConfig, EpsilonSchedule, QNetwork, ReplayBuffer, RunningStandardizer, Transition, DIVERGENCE_LIMIT};
pub use hierarchy::{
    phase_of, replay_mean_qoe, run_fixed, run_random, run_scheme, single_link_sanity, train_flat_dqn, train_hierarchy, FixedBeam, FlatAgent,
    HierarchicalAgent, HierarchyConfig, OrchestrationRun, Phase, SanityOutcome, Scheme, SlotRecord,
};
pub use network::{
    beam_gain, compute_sinr, dft_codebook, qoe, shaped_rewards, LinkMeasure, Network, NetworkConfig, QoeParams,
};
