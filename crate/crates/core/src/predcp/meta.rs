use nalgebra::DMatrix;

use super::{layer_term, mc_divergence, McConfig, PriorEvalResult};
use crate::error::{Error, Result};
use crate::kld_prior::KldPriorSpec;
use crate::nn::{ModularNet, ObservationModel, Perturbable};

/// Log prior over per-module scales for modular meta-learning.
///
/// Module `m` is perturbed as `theta_m ~ N(phi_m, tau_m I)` with every other
/// module at its global value, and its divergence is the categorical KL
/// averaged over every row of every task in the batch. The per-module log
/// densities are summed.
pub fn meta_modular_log_prior(
    prior: &KldPriorSpec,
    modules: &[DMatrix<f64>],
    taus: &[f64],
    tasks: &[DMatrix<f64>],
    mc: &McConfig,
) -> Result<PriorEvalResult> {
    if tasks.is_empty() || tasks.iter().all(|t| t.nrows() == 0) {
        return Err(Error::Precondition("empty task batch".into()));
    }
    let model = ModularNet::new(modules.to_vec())?;
    let cols = model.input_dim();
    if let Some(t) = tasks.iter().find(|t| t.ncols() != cols) {
        return Err(Error::Shape(format!(
            "task inputs have {} columns, expected {cols}",
            t.ncols()
        )));
    }
    let rows: usize = tasks.iter().map(|t| t.nrows()).sum();
    let mut x = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for t in tasks {
        x.rows_mut(at, t.nrows()).copy_from(t);
        at += t.nrows();
    }
    let obs = ObservationModel::Categorical {
        classes: model.output_dim(),
    };
    let layers = (1..=model.num_blocks())
        .map(|m| layer_term(prior, mc_divergence(&model, &x, &obs, taus, m, mc)?, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(PriorEvalResult::from_terms(layers))
}
