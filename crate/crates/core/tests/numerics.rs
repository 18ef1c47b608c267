use proptest::prelude::*;

use semnet::numerics::{grad_check, Activation, Adam, AdamConfig, Gradients, Loss, Mlp, Rng, Target, Tensor};

fn smooth_activation(i: u8) -> Activation {
    match i % 3 {
        0 => Activation::Tanh,
        1 => Activation::Sigmoid,
        _ => Activation::Identity,
    }
}

fn batch(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forward_preserves_batch_and_output_width(
        seed in 0u64..10_000,
        widths in prop::collection::vec(1usize..9, 2..5),
        rows in 1usize..7,
    ) {
        let acts = vec![Activation::Relu; widths.len() - 1];
        let mut rng = Rng::new(seed, "init");
        let net = Mlp::new(&widths, &acts, &mut rng).unwrap();
        let y = net.forward(&batch(rows, widths[0], &mut rng)).unwrap();
        prop_assert_eq!(y.shape(), &[rows, *widths.last().unwrap()][..]);
        prop_assert!(y.is_finite());
        prop_assert_eq!(net.parameter_count(), widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum::<usize>());
    }

    #[test]
    fn mse_gradients_match_differences(
        seed in 0u64..10_000,
        hidden in 1usize..8,
        acts in prop::collection::vec(0u8..3, 2),
    ) {
        let mut rng = Rng::new(seed, "init");
        let net = Mlp::new(&[3, hidden, 2], &[smooth_activation(acts[0]), smooth_activation(acts[1])], &mut rng).unwrap();
        let x = batch(4, 3, &mut rng);
        let t = batch(4, 2, &mut rng);
        let err = grad_check(&net, &x, Loss::Mse, Target::Values(&t)).unwrap();
        prop_assert!(err < 1e-4, "{}", err);
    }

    #[test]
    fn cross_entropy_gradients_match_differences(seed in 0u64..10_000, hidden in 1usize..8) {
        let mut rng = Rng::new(seed, "init");
        let net = Mlp::new(&[4, hidden, 5], &[Activation::Tanh, Activation::Identity], &mut rng).unwrap();
        let x = batch(6, 4, &mut rng);
        let classes: Vec<usize> = (0..6).map(|_| rng.below(5)).collect();
        let err = grad_check(&net, &x, Loss::CrossEntropy, Target::Classes(&classes)).unwrap();
        prop_assert!(err < 1e-4, "{}", err);
    }

    #[test]
    fn bce_gradients_match_differences(seed in 0u64..10_000, hidden in 1usize..8) {
        let mut rng = Rng::new(seed, "init");
        let net = Mlp::new(&[3, hidden, 1], &[Activation::Tanh, Activation::Sigmoid], &mut rng).unwrap();
        let x = batch(5, 3, &mut rng);
        let t = Tensor::matrix(5, 1, (0..5).map(|_| rng.uniform()).collect()).unwrap();
        let err = grad_check(&net, &x, Loss::Bce, Target::Values(&t)).unwrap();
        prop_assert!(err < 1e-4, "{}", err);
    }

    #[test]
    fn adam_ignores_zero_gradients(seed in 0u64..10_000, steps in 1usize..5, lr in 1e-4f64..1.0) {
        let mut net = Mlp::new(&[3, 4, 2], &[Activation::Relu, Activation::Identity], &mut Rng::new(seed, "init")).unwrap();
        let before = net.clone();
        let mut adam = Adam::new(AdamConfig::with_lr(lr), &net);
        let zero = Gradients::zeros_like(&net);
        for _ in 0..steps {
            adam.step(&mut net, &zero).unwrap();
        }
        prop_assert_eq!(adam.step_count(), steps as u64);
        prop_assert_eq!(net, before);
    }

    #[test]
    fn named_streams_replay_exactly(seed in any::<u64>(), label in "[a-z/]{1,12}") {
        let draw = |r: &mut Rng| (r.normal(), r.uniform(), r.below(97), r.permutation(10));
        let mut a = Rng::new(seed, &label);
        let mut b = Rng::new(seed, &label);
        prop_assert_eq!(draw(&mut a), draw(&mut b));
        let net_a = Mlp::new(&[4, 3, 2], &[Activation::Relu, Activation::Sigmoid], &mut a).unwrap();
        let net_b = Mlp::new(&[4, 3, 2], &[Activation::Relu, Activation::Sigmoid], &mut b).unwrap();
        prop_assert_eq!(net_a.digest(), net_b.digest());
    }
}

#[test]
fn training_is_bit_stable() {
    let run = || {
        let mut rng = Rng::new(7, "init");
        let mut net = Mlp::new(&[2, 8, 1], &[Activation::Tanh, Activation::Identity], &mut rng).unwrap();
        let x = batch(16, 2, &mut rng);
        let t = x.map(|v| 0.5 * v);
        let t = Tensor::matrix(16, 1, (0..16).map(|r| t.row(r).iter().sum()).collect()).unwrap();
        let mut adam = Adam::new(AdamConfig::with_lr(0.05), &net);
        let mut losses = Vec::new();
        for _ in 0..50 {
            let (loss, g) = net.backward(&x, Loss::Mse, Target::Values(&t)).unwrap();
            adam.step(&mut net, &g).unwrap();
            losses.push(loss);
        }
        (net.flat_params(), losses)
    };
    let (p1, l1) = run();
    let (p2, l2) = run();
    assert!(p1.iter().zip(&p2).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(l1, l2);
    assert!(l1.last().unwrap() < &l1[0]);
}

#[test]
fn non_finite_values_never_enter_a_tensor() {
    assert!(Tensor::matrix(1, 2, vec![f64::NAN, 0.0]).is_err());
    assert!(Tensor::vector(vec![1.0, f64::INFINITY]).is_err());
    assert!(Tensor::matrix(2, 2, vec![0.0; 3]).is_err());
}
