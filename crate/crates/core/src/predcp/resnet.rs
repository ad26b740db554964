use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{McConfig, McEstimate};
use crate::error::{Error, Result};
use crate::nn::{realize_weights, Network, ObservationModel};
use crate::rng::tag;

/// The closed form of a residual block's divergence under Gaussian
/// observations, estimated by Monte Carlo.
///
/// With `Phi_l = 0` and a positively homogeneous activation, the block's
/// contribution to the output scales with `sqrt(tau_l)`, so
///
/// ```text
/// D_l(tau_l) = tau_l / (2 sigma_y^2) * mean_n E || relu(h_{n,l-1} W~) W_out ||^2
/// ```
///
/// where `W~` is the block's weight draw at unit scale. The expectation is
/// taken over `W~` and the blocks below it, using a noise stream independent
/// of [`super::mc_divergence`] so the two estimates can cross-check each other.
/// `W_out` is held fixed.
pub fn resnet_variance_divergence(
    net: &Network,
    x: &DMatrix<f64>,
    sigma_y: f64,
    taus: &[f64],
    layer: usize,
    mc: &McConfig,
) -> Result<McEstimate> {
    let spec = net.spec();
    if !spec.residual {
        return Err(Error::Precondition(
            "the variance identity needs a residual network".into(),
        ));
    }
    super::validate(net, x, &ObservationModel::Gaussian { sigma_y }, taus, layer, mc)?;
    let w = net.weights();
    if w.phi[layer - 1].iter().any(|&v| v != 0.0) {
        return Err(Error::Precondition(
            "the variance identity needs a zero block mean".into(),
        ));
    }
    let tau = taus[layer - 1];
    let d = spec.hidden_dim;
    let per_sample = (0..mc.samples)
        .into_par_iter()
        .map(|s| {
            let blocks = (1..layer)
                .map(|j| {
                    let xi = mc.noise(tag::VARIANCE_NOISE, s, j, d, d);
                    realize_weights(&w.phi[j - 1], &xi, w.sigma[j - 1], taus[j - 1])
                })
                .collect::<Result<Vec<_>>>()?;
            let h = net.hidden(x, &blocks, layer - 1)?;
            let w_tilde = mc.noise(tag::VARIANCE_NOISE, s, layer, d, d) * w.sigma[layer - 1].sqrt();
            let f = (h * w_tilde).map(|z| z.max(0.0)) * &w.w_out;
            Ok(f.norm_squared() / x.nrows() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (m, se) = mc.summarize(&per_sample);
    let slope = m / (2.0 * sigma_y * sigma_y);
    Ok(McEstimate {
        value: tau * slope,
        derivative: slope,
        std_error: tau * se / (2.0 * sigma_y * sigma_y),
    })
}
