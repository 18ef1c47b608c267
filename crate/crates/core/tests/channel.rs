use proptest::prelude::*;

use semnet::channel::{noise_variance, psnr, transmit, Channel, ChannelModel, SnrSchedule, PSNR_CAP_DB};
use semnet::numerics::{Rng, Tensor};

/// Alternating ±1 symbols: mean square exactly one.
fn unit_symbols(rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect()).unwrap()
}

#[test]
fn awgn_noise_has_zero_mean() {
    let x = unit_symbols(1000, 1000);
    let y = transmit(&ChannelModel::awgn(0.0), &x, &mut Rng::new(1, "channel")).unwrap();
    let n = x.len() as f64;
    let mean = y.received.data().iter().zip(x.data()).map(|(a, b)| a - b).sum::<f64>() / n;
    assert!(mean.abs() <= 0.003, "{mean}");
}

#[test]
fn symbol_counter_accumulates() {
    let mut ch = Channel::new(ChannelModel::awgn(10.0));
    let mut rng = Rng::new(2, "channel");
    ch.transmit(&unit_symbols(3, 4), &mut rng).unwrap();
    ch.transmit(&unit_symbols(2, 4), &mut rng).unwrap();
    assert_eq!(ch.symbols_sent(), 20);
}

#[test]
fn drift_schedule_never_rises() {
    let s = SnrSchedule::drift();
    let snrs: Vec<f64> = (0..100).map(|e| s.snr_at(e)).collect();
    assert!(snrs.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!((s.snr_at(0), s.snr_at(25), s.snr_at(60)), (21.0, 18.0, 9.0));
    assert_eq!(s.change_epochs(), vec![20, 30, 40, 50]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn same_stream_reproduces_the_output(seed in any::<u64>(), snr in -10.0f64..40.0, rows in 1usize..5, fading in any::<bool>()) {
        let x = unit_symbols(rows, 6);
        let model = if fading { ChannelModel::rayleigh_block(snr, 0.9).unwrap() } else { ChannelModel::awgn(snr) };
        let a = transmit(&model, &x, &mut Rng::new(seed, "channel")).unwrap();
        let b = transmit(&model, &x, &mut Rng::new(seed, "channel")).unwrap();
        prop_assert_eq!(a.received, b.received);
        prop_assert_eq!(a.gains, b.gains);
    }

    #[test]
    fn schedule_returns_the_last_started_entry(
        steps in prop::collection::vec((1usize..15, -5.0f64..30.0), 0..6),
        first in -5.0f64..30.0,
        epoch in 0usize..100,
    ) {
        let mut entries = vec![(0, first)];
        for (gap, snr) in steps {
            let start = entries.last().unwrap().0 + gap;
            entries.push((start, snr));
        }
        let s = SnrSchedule::new(entries.clone()).unwrap();
        let want = entries.iter().rev().find(|(start, _)| *start <= epoch).unwrap().1;
        prop_assert_eq!(s.snr_at(epoch), want);
        for &(start, snr) in &entries {
            prop_assert_eq!(s.snr_at(start), snr);
        }
    }

    #[test]
    fn psnr_inverts_mse(mse in 1e-9f64..1.0) {
        let p = psnr(mse).unwrap();
        prop_assert!((10f64.powf(-p / 10.0) - mse).abs() <= 1e-12 * mse.max(1e-3));
        prop_assert!(p < PSNR_CAP_DB);
    }

    #[test]
    fn noise_variance_follows_decibels(snr in -20.0f64..60.0) {
        prop_assert!((10.0 * noise_variance(snr).log10() + snr).abs() < 1e-9);
    }

    #[test]
    fn unnormalised_input_is_refused(scale in prop_oneof![0.01f64..0.7, 1.5f64..10.0]) {
        let x = unit_symbols(2, 4).map(|v| v * scale);
        prop_assert!(transmit(&ChannelModel::awgn(10.0), &x, &mut Rng::new(1, "channel")).is_err());
    }
}
