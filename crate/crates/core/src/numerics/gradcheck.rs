use super::loss::{Loss, Target};
use super::mlp::Mlp;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Largest network `grad_check` accepts.
pub const MAX_CHECKED_PARAMS: usize = 10_000;

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Max relative error between backprop gradients and central differences
/// of the batch loss, over every parameter of `net`.
pub fn grad_check(net: &Mlp, samples: &Tensor, loss: Loss, target: Target<'_>) -> Result<f64> {
    if net.parameter_count() > MAX_CHECKED_PARAMS {
        return Err(Error::Contract(format!(
            "grad_check is limited to {MAX_CHECKED_PARAMS} parameters, network has {}",
            net.parameter_count()
        )));
    }
    let (_, grads) = net.backward(samples, loss, target)?;
    let analytic = grads.flatten();
    let mut probe = net.clone();
    let params = net.flat_params();
    check_against_differences(&params, &analytic, |p| {
        probe.set_flat_params(p)?;
        probe.loss(samples, loss, target)
    })
}

/// Compares `analytic` against central differences of `f` around `params`;
/// returns the max relative error. Used for composite pipelines (codec,
/// GAN chains) whose loss is not a single network's.
pub fn check_against_differences(
    params: &[f64],
    analytic: &[f64],
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<f64> {
    if params.len() != analytic.len() {
        return Err(Error::Shape(format!(
            "{} parameters but {} analytic gradients",
            params.len(),
            analytic.len()
        )));
    }
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + FD_STEP;
        let up = f(&p)?;
        p[i] = orig - FD_STEP;
        let down = f(&p)?;
        p[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Activation, Rng};

    fn batch(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn linear_mse_is_exact() {
        let mut rng = Rng::new(1, "gc");
        let net = Mlp::new(&[4, 3], &[Activation::Identity], &mut rng).unwrap();
        let x = batch(&mut rng, 5, 4);
        let t = batch(&mut rng, 5, 3);
        let err = grad_check(&net, &x, Loss::Mse, Target::Values(&t)).unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn relu_net_matches_differences() {
        let mut rng = Rng::new(2, "gc");
        let net = Mlp::new(
            &[6, 12, 8, 3],
            &[Activation::Relu, Activation::Relu, Activation::Identity],
            &mut rng,
        )
        .unwrap();
        let x = batch(&mut rng, 4, 6);
        let err = grad_check(&net, &x, Loss::CrossEntropy, Target::Classes(&[0, 2, 1, 2])).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn sigmoid_bce_matches_differences() {
        let mut rng = Rng::new(3, "gc");
        let net = Mlp::new(&[5, 7, 2], &[Activation::Tanh, Activation::Sigmoid], &mut rng).unwrap();
        let x = batch(&mut rng, 6, 5);
        let t = Tensor::matrix(6, 2, (0..12).map(|i| (i % 3) as f64 / 2.0).collect()).unwrap();
        let err = grad_check(&net, &x, Loss::Bce, Target::Values(&t)).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn oversized_network_is_refused() {
        let mut rng = Rng::new(4, "gc");
        let net = Mlp::new(&[200, 60], &[Activation::Identity], &mut rng).unwrap();
        let x = batch(&mut rng, 1, 200);
        let t = batch(&mut rng, 1, 60);
        assert!(matches!(
            grad_check(&net, &x, Loss::Mse, Target::Values(&t)),
            Err(Error::Contract(_))
        ));
    }
}
