//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use semnet::codec::{QualitySurface, SurfaceProvenance, COMPRESSION_CODEBOOK};
use semnet::harness::mnist::{load_mnist, Mnist};

/// Smooth synthetic surface over the compression codebook, increasing in
/// both compression ratio and SNR.
pub fn toy_surface() -> QualitySurface {
    let rhos = COMPRESSION_CODEBOOK.to_vec();
    let snrs = vec![-10.0, 0.0, 10.0, 20.0];
    let acc: Vec<Vec<f64>> = rhos
        .iter()
        .map(|r| snrs.iter().map(|s| (0.5 + 0.02 * s + 0.2 * r).clamp(0.1, 0.99)).collect())
        .collect();
    let psnr = rhos.iter().map(|r| snrs.iter().map(|s| 10.0 + 0.5 * s + 5.0 * r).collect()).collect();
    QualitySurface::new(
        rhos,
        snrs,
        psnr,
        acc,
        SurfaceProvenance {
            codec_digests: vec![],
            eval_set: "toy".into(),
            samples: 0,
        },
    )
    .unwrap()
}

/// The bundled MNIST directory.
pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

pub fn mnist() -> Mnist {
    load_mnist(&data_dir()).expect("bundled MNIST")
}
