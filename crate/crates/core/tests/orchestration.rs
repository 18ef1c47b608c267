mod common;

use num_complex::Complex64;
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use semnet::numerics::Rng;
use semnet::orchestration::{
    compute_sinr, dft_codebook, qoe, replay_mean_qoe, run_scheme, shaped_rewards, single_link_sanity, train_hierarchy,
    DqnConfig, HierarchyConfig, QNetwork, QoeParams, ReplayBuffer, Scheme, Transition,
};

use common::toy_surface;

fn random_vector(n: usize, rng: &mut Rng) -> Vec<Complex64> {
    (0..n).map(|_| Complex64::new(rng.normal(), rng.normal())).collect()
}

/// SINR written out with scalar real arithmetic only.
fn naive_sinr(channels: &[Vec<Vec<Complex64>>], beams: &[Vec<Complex64>], powers: &[f64], noise: f64) -> Vec<f64> {
    let links = channels.len();
    let gain = |h: &[Complex64], w: &[Complex64]| {
        let (mut re, mut im) = (0.0, 0.0);
        for n in 0..h.len() {
            // conj(h) * w
            re += h[n].re * w[n].re + h[n].im * w[n].im;
            im += h[n].re * w[n].im - h[n].im * w[n].re;
        }
        re * re + im * im
    };
    let mut out = Vec::new();
    for i in 0..links {
        let mut interference = 0.0;
        for j in 0..links {
            if j != i {
                interference += powers[j] * gain(&channels[i][j], &beams[j]);
            }
        }
        out.push(powers[i] * gain(&channels[i][i], &beams[i]) / (interference + noise));
    }
    out
}

#[test]
fn sinr_matches_scalar_loop_on_random_instances() {
    let mut rng = Rng::new(11, "sinr-oracle");
    for _ in 0..100 {
        let links = 1 + rng.below(6);
        let antennas = 1 + rng.below(8);
        let channels: Vec<Vec<Vec<Complex64>>> = (0..links)
            .map(|_| (0..links).map(|_| random_vector(antennas, &mut rng)).collect())
            .collect();
        let beams: Vec<Vec<Complex64>> = (0..links).map(|_| random_vector(antennas, &mut rng)).collect();
        let powers: Vec<f64> = (0..links).map(|_| rng.uniform_range(0.01, 1.0)).collect();
        let noise = rng.uniform_range(1e-3, 1.0);
        let refs: Vec<&[Complex64]> = beams.iter().map(Vec::as_slice).collect();
        let got = compute_sinr(&channels, &refs, &powers, noise);
        let want = naive_sinr(&channels, &beams, &powers, noise);
        for (m, w) in got.iter().zip(&want) {
            assert!(((m.sinr - w) / w).abs() < 1e-9, "{} vs {w}", m.sinr);
            assert!(m.interference_noise >= noise);
        }
    }
}

#[test]
fn orthogonal_dft_beams() {
    let cb = dft_codebook(4, 8);
    let inner: Complex64 = cb[0].iter().zip(&cb[4]).map(|(a, b)| a.conj() * b).sum();
    assert!(inner.norm() < 1e-12);
    for w in &cb {
        let norm: f64 = w.iter().map(|c| c.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }
}

#[test]
fn qoe_matches_hand_bilinear_interpolation() {
    let s = toy_surface();
    let params = QoeParams { alpha: 2.0, beta: 0.3 };
    // Between SNR grid points 0 and 10 dB on the ρ = 1/4 row.
    let snr_db: f64 = 4.0;
    let t = 0.4;
    let want_acc = s.accuracy[2][1] * (1.0 - t) + s.accuracy[2][2] * t;
    let got = qoe(10f64.powf(snr_db / 10.0), 2, &s, &params);
    assert!((got - (2.0 * want_acc - 0.3 * 0.25)).abs() < 1e-12);

    // Interior in both axes, through the surface itself.
    let (rho, snr) = (0.75, 15.0);
    let (tr, ts) = (0.5, 0.5);
    let cell = |r: usize, c: usize| s.accuracy[r][c];
    let lo = cell(3, 2) * (1.0 - ts) + cell(3, 3) * ts;
    let hi = cell(4, 2) * (1.0 - ts) + cell(4, 3) * ts;
    assert!((s.interpolate(rho, snr).1 - (lo * (1.0 - tr) + hi * tr)).abs() < 1e-12);
}

#[test]
fn qoe_boundaries() {
    let s = toy_surface();
    let greedy = QoeParams { alpha: 1.0, beta: 0.0 };
    assert!((qoe(1e30, 4, &s, &greedy) - s.max_accuracy()).abs() < 1e-12);
    let frugal = QoeParams { alpha: 0.0, beta: 0.3 };
    let values: Vec<f64> = (0..5).map(|k| qoe(10.0, k, &s, &frugal)).collect();
    assert!(values.windows(2).all(|w| w[0] > w[1]));
    assert!((values[4] + 0.3).abs() < 1e-12);
}

#[test]
fn exploration_is_uniform_over_joint_actions() {
    let actions = 32;
    let q = QNetwork::new(4, actions, DqnConfig::with_gamma(0.9), &mut Rng::new(1, "init")).unwrap();
    let mut rng = Rng::new(2, "explore");
    let state = [0.3, -0.1, 0.0, 1.0];
    let draws = 100_000;
    let mut counts = vec![0usize; actions];
    for _ in 0..draws {
        counts[q.act(&state, 1.0, &mut rng).unwrap()] += 1;
    }
    let expected = draws as f64 / actions as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((actions - 1) as f64).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2}, p {p}");
}

#[test]
fn greedy_action_ignores_exploration_rng_at_zero_epsilon() {
    let q = QNetwork::new(3, 6, DqnConfig::with_gamma(0.5), &mut Rng::new(4, "init")).unwrap();
    let state = [0.5, 0.5, -1.0];
    let best = q.greedy(&state).unwrap();
    let mut rng = Rng::new(5, "explore");
    assert!((0..200).all(|_| q.act(&state, 0.0, &mut rng).unwrap() == best));
}

#[test]
fn shaping_sums_to_one_and_a_half_qoe() {
    let q = [0.2, 0.9, 0.4, 0.7];
    let r = shaped_rewards(&q);
    assert!((r.iter().sum::<f64>() - 1.5 * q.iter().sum::<f64>()).abs() < 1e-12);
    assert_eq!(shaped_rewards(&[0.3]), vec![0.3]);
}

fn tiny_config() -> HierarchyConfig {
    let mut c = HierarchyConfig::default();
    c.network.links = 2;
    c.network.episode_slots = 600;
    c.block_frames = 10;
    c.warmup_blocks = 1;
    c.batch_size = 16;
    c
}

#[test]
fn frame_reward_is_the_mean_of_its_slot_rewards() {
    let mut c = tiny_config();
    c.center_rewards = false;
    let (run, agents) = train_hierarchy(&c, &toy_surface(), 3).unwrap();
    let (links, slots) = (c.network.links, c.network.frame_slots);
    for (i, agent) in agents.iter().enumerate() {
        let stored = agent.large_replay.ordered();
        assert_eq!(stored.len(), c.network.frames());
        for (f, t) in stored.iter().enumerate() {
            let mean = (0..slots).map(|s| run.rewards[(f * slots + s) * links + i]).sum::<f64>() / slots as f64;
            assert!((t.reward - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn logged_actions_replay_every_scheme() {
    let c = tiny_config();
    let s = toy_surface();
    for scheme in Scheme::ALL {
        let run = run_scheme(scheme, &c, &s, 9).unwrap();
        assert_eq!(run.mean_qoe.len(), c.network.episode_slots);
        assert_eq!(replay_mean_qoe(&c, &s, &run).unwrap(), run.mean_qoe, "{}", scheme.tag());
        let again = run_scheme(scheme, &c, &s, 9).unwrap();
        assert_eq!(again.records, run.records);
    }
}

#[test]
fn sanity_case_needs_one_link() {
    assert!(single_link_sanity(&tiny_config(), &toy_surface(), 1).is_err());
}

fn transition(seed: u64) -> Transition {
    let mut rng = Rng::new(seed, "transition");
    Transition {
        state: (0..3).map(|_| rng.normal()).collect(),
        action: rng.below(4),
        reward: rng.uniform(),
        next_state: (0..3).map(|_| rng.normal()).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn replay_ring_holds_the_last_capacity_items(capacity in 1usize..40, pushes in 0usize..200) {
        let mut ring = ReplayBuffer::new(capacity);
        for i in 0..pushes {
            ring.push(i);
        }
        let kept = pushes.min(capacity);
        prop_assert_eq!(ring.len(), kept);
        prop_assert_eq!(ring.ordered(), (pushes - kept..pushes).collect::<Vec<_>>());
    }

    #[test]
    fn target_equals_online_at_the_last_sync(sync in 1u64..6, updates in 1usize..20, seed in 0u64..1000) {
        let config = DqnConfig { target_sync: sync, batch_size: 4, ..DqnConfig::with_gamma(0.9) };
        let mut q = QNetwork::new(3, 4, config, &mut Rng::new(seed, "init")).unwrap();
        let data: Vec<Transition> = (0..8).map(|i| transition(seed * 8 + i)).collect();
        let batch: Vec<&Transition> = data.iter().collect();
        let mut snapshot = q.online.clone();
        for _ in 0..updates {
            q.update(&batch).unwrap();
            if q.updates() % sync == 0 {
                snapshot = q.online.clone();
            }
            prop_assert_eq!(q.last_sync(), q.updates() - q.updates() % sync);
            let same = q.target.flat_params().iter().zip(snapshot.flat_params()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
        }
    }

    #[test]
    fn shaped_rewards_preserve_the_weighted_total(q in prop::collection::vec(-1.0f64..1.0, 2..8)) {
        let r = shaped_rewards(&q);
        prop_assert!((r.iter().sum::<f64>() - 1.5 * q.iter().sum::<f64>()).abs() < 1e-9);
    }
}
