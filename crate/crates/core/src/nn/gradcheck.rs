//! Central finite-difference gradient checker. Test-oracle plumbing: slow,
//! O(params) forward passes, never used on a training path.

use super::{DenseNet, Gradients};
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckSettings {
    /// Perturbation step for central differences.
    pub step: f64,
    /// Floor in the relative-error denominator, guarding division near zero.
    pub floor: f64,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        GradCheckSettings {
            step: 1e-5,
            floor: 1e-8,
        }
    }
}

/// Compares an analytic gradient of `loss(net)` against central finite
/// differences and returns the max relative error over all parameters:
/// `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
///
/// `loss` must be a deterministic scalar function of the net's parameters.
pub fn gradient_check<F>(
    net: &DenseNet,
    analytic: &Gradients,
    settings: GradCheckSettings,
    mut loss: F,
) -> Result<f64>
where
    F: FnMut(&DenseNet) -> Result<f64>,
{
    let mut probe = net.clone();
    let mut worst = 0.0_f64;
    for idx in 0..net.num_params() {
        let orig = probe.param(idx);
        *probe.param_mut(idx) = orig + settings.step;
        let plus = loss(&probe)?;
        *probe.param_mut(idx) = orig - settings.step;
        let minus = loss(&probe)?;
        *probe.param_mut(idx) = orig;
        let numeric = (plus - minus) / (2.0 * settings.step);
        let a = analytic.param(idx);
        let denom = a.abs().max(numeric.abs()).max(settings.floor);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

/// Convenience wrapper for probes defined on the net's output vector: the
/// analytic gradient is derived from the probe's output-space gradient via
/// one backward pass, then checked against finite differences of the scalar.
pub fn gradient_check_against<F, G>(
    net: &DenseNet,
    state: &[f64],
    settings: GradCheckSettings,
    mut probe: F,
    mut probe_grad: G,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> Vec<f64>,
{
    let out = net.forward(state)?;
    let analytic = net.backward(state, &probe_grad(&out))?;
    gradient_check(net, &analytic, settings, |n| Ok(probe(&n.forward(state)?)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_probe_on_linear_net_is_nearly_exact() {
        // Loss is quadratic in the parameters, so central differences are exact
        // up to rounding.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let net = DenseNet::init(&[3, 2], &mut rng).unwrap();
        let state = [0.7, -0.3, 1.1];
        let target = [0.5, -0.25];
        let err = gradient_check_against(
            &net,
            &state,
            GradCheckSettings::default(),
            |out| {
                out.iter()
                    .zip(&target)
                    .map(|(o, t)| (o - t) * (o - t))
                    .sum()
            },
            |out| out.iter().zip(&target).map(|(o, t)| 2.0 * (o - t)).collect(),
        )
        .unwrap();
        assert!(err < 1e-8, "relative error {err}");
    }

    #[test]
    fn random_mlp_random_probe() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..5 {
            let net = DenseNet::init(&[4, 6, 5, 3], &mut rng).unwrap();
            let state: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let coef: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c = coef.clone();
            let err = gradient_check_against(
                &net,
                &state,
                GradCheckSettings::default(),
                move |out| {
                    out.iter()
                        .zip(&coef)
                        .map(|(o, k)| k * o + 0.5 * o * o)
                        .sum()
                },
                move |out| out.iter().zip(&c).map(|(o, k)| k + o).collect(),
            )
            .unwrap();
            assert!(err < 1e-4, "relative error {err}");
        }
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let net = DenseNet::init(&[2, 4, 2], &mut rng).unwrap();
        let state = [0.9, -0.4];
        let out = net.forward(&state).unwrap();
        let og: Vec<f64> = out.iter().map(|o| 2.0 * o).collect();
        let mut grads = net.backward(&state, &og).unwrap();
        // Double one entry; the checker must notice (rel. error ~0.5 at that
        // coordinate when the true derivative is nonzero).
        let idx = (0..net.num_params())
            .max_by(|&a, &b| {
                grads
                    .param(a)
                    .abs()
                    .partial_cmp(&grads.param(b).abs())
                    .unwrap()
            })
            .unwrap();
        *grads.param_mut(idx) *= 2.0;
        let err = gradient_check(&net, &grads, GradCheckSettings::default(), |n| {
            Ok(n.forward(&state)?.iter().map(|o| o * o).sum())
        })
        .unwrap();
        assert!(err > 0.3, "relative error {err}");
    }
}
