//! Monte-Carlo divergence maps for networks and the priors built on them.
//!
//! For a model with blocks `W_1..W_L` and a target block `l`, the divergence
//! map is
//!
//! ```text
//! D_l(tau) = E_Xi [ mean_n KL( p(y_n | W_l = Phi_l + sqrt(tau) * std * Xi) || p(y_n | W_l = Phi_l) ) ]
//! ```
//!
//! estimated with `S` standardized draws. The derivative is propagated
//! exactly through the forward pass in `s = sqrt(tau)` and converted with
//! `dD/dtau = (dD/ds) / (2s)`. Near `s = 0` the conversion is done at
//! `s = 1e-6` instead, since both numerator and denominator vanish there.
//!
//! Noise for sample `s` and block `j` is drawn from the stream
//! `(master_seed, MC_NOISE, s, j)`, so every estimate is a pure function of
//! its inputs regardless of thread count, and holding the seed fixed gives
//! common random numbers across `tau`.

mod meta;
mod resnet;
mod verify;

pub use meta::meta_modular_log_prior;
pub use resnet::resnet_variance_divergence;
pub use verify::{check_monotone, check_propriety, log_grid, MonotoneReport, ProprietyReport, Violation};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{DivergenceMap, MapPoint};
use crate::dual::Dual;
use crate::error::{domain, Error, Result};
use crate::kld_prior::KldPriorSpec;
use crate::nn::{ObservationModel, Perturbable};
use crate::rng::{normal_matrix, tag};
use crate::EPS_KL;

/// Smallest `s = sqrt(tau)` at which `dD/ds` is converted to `dD/dtau`.
pub const S_FLOOR: f64 = 1e-6;

/// Derivatives below this magnitude are treated as a flat map.
pub const DEGENERACY_THRESHOLD: f64 = 1e-14;

/// Monte-Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub samples: usize,
    pub master_seed: u64,
    /// Pair every odd sample with the negated noise of the sample before it.
    #[serde(default)]
    pub antithetic: bool,
}

impl McConfig {
    pub fn new(samples: usize, master_seed: u64) -> Self {
        McConfig {
            samples,
            master_seed,
            antithetic: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidSpec("Monte-Carlo sample count must be >= 1".into()));
        }
        Ok(())
    }

    /// Standardized noise for sample `sample` and block `layer`.
    pub fn noise(&self, stream_tag: u64, sample: usize, layer: usize, rows: usize, cols: usize) -> DMatrix<f64> {
        if self.antithetic && sample % 2 == 1 {
            -normal_matrix(
                rows,
                cols,
                self.master_seed,
                &[stream_tag, sample as u64 - 1, layer as u64],
            )
        } else {
            normal_matrix(rows, cols, self.master_seed, &[stream_tag, sample as u64, layer as u64])
        }
    }

    /// Mean and standard error of per-sample values; antithetic pairs are
    /// averaged first so the error reflects independent units.
    pub(crate) fn summarize(&self, values: &[f64]) -> (f64, f64) {
        let units: Vec<f64> = if self.antithetic {
            values
                .chunks(2)
                .map(|c| c.iter().sum::<f64>() / c.len() as f64)
                .collect()
        } else {
            values.to_vec()
        };
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let n = units.len();
        if n < 2 {
            return (mean, 0.0);
        }
        let m = units.iter().sum::<f64>() / n as f64;
        let var = units.iter().map(|u| (u - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        (mean, (var / n as f64).sqrt())
    }
}

/// A Monte-Carlo estimate of `D(tau)` and `dD/dtau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub derivative: f64,
    /// Standard error of `value`.
    pub std_error: f64,
}

impl McEstimate {
    pub fn point(&self) -> MapPoint {
        MapPoint::new(self.value, self.derivative)
    }
}

fn validate<M: Perturbable>(
    model: &M,
    x: &DMatrix<f64>,
    obs: &ObservationModel,
    taus: &[f64],
    target: usize,
    mc: &McConfig,
) -> Result<()> {
    mc.validate()?;
    obs.validate(model.output_dim())?;
    if target == 0 || target > model.num_blocks() {
        return Err(domain(format!("layer {target} outside 1..={}", model.num_blocks())));
    }
    if taus.len() != model.num_blocks() {
        return Err(Error::Shape(format!(
            "expected {} scales, got {}",
            model.num_blocks(),
            taus.len()
        )));
    }
    if let Some(t) = taus.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(domain(format!("tau must be finite and >= 0, got {t}")));
    }
    if x.nrows() == 0 {
        return Err(Error::Precondition("empty input batch".into()));
    }
    if x.ncols() != model.input_dim() {
        return Err(Error::Shape(format!(
            "inputs have {} columns, model expects {}",
            x.ncols(),
            model.input_dim()
        )));
    }
    Ok(())
}

/// Batch-mean KL and its `s`-derivative for one perturbed output.
fn batch_kld(obs: &ObservationModel, plus: &crate::dual::DualMatrix, base: &DMatrix<f64>) -> Dual {
    let n = plus.nrows();
    let mut acc = Dual::constant(0.0);
    for i in 0..n {
        let (v, d) = plus.row(i);
        let b: Vec<f64> = base.row(i).iter().copied().collect();
        acc += obs.kld_dual(&v, &d, &b);
    }
    acc * (1.0 / n as f64)
}

/// One Monte-Carlo sample: `(kappa, dkappa/dtau)`.
fn sample_term<M: Perturbable>(
    model: &M,
    x: &DMatrix<f64>,
    obs: &ObservationModel,
    taus: &[f64],
    target: usize,
    mc: &McConfig,
    sample: usize,
) -> Result<(f64, f64)> {
    let mut noise = |j: usize| {
        let (r, c) = model.block_mean(j).shape();
        mc.noise(tag::MC_NOISE, sample, j, r, c)
    };
    let context = model.context(target, taus, &mut noise)?;
    let mean = model.block_mean(target);
    let dir = noise(target) * model.block_std(target);
    let base = model.forward_base(x, &context, target);

    let eval = |s: f64| {
        let w = if s == 0.0 { mean.clone() } else { mean + &dir * s };
        batch_kld(obs, &model.forward_perturbed(x, &context, target, &w, &dir), &base)
    };
    let s = taus[target - 1].sqrt();
    let at = eval(s);
    let slope = if s >= S_FLOOR {
        at.dot / (2.0 * s)
    } else {
        eval(S_FLOOR).dot / (2.0 * S_FLOOR)
    };
    Ok((at.val, slope))
}

/// Monte-Carlo divergence of block `target` at the scales `taus`, with its
/// exact derivative with respect to `taus[target - 1]`.
pub fn mc_divergence<M: Perturbable>(
    model: &M,
    x: &DMatrix<f64>,
    obs: &ObservationModel,
    taus: &[f64],
    target: usize,
    mc: &McConfig,
) -> Result<McEstimate> {
    validate(model, x, obs, taus, target, mc)?;
    let terms = (0..mc.samples)
        .into_par_iter()
        .map(|s| sample_term(model, x, obs, taus, target, mc, s))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = terms.iter().map(|t| t.0).collect();
    let (value, std_error) = mc.summarize(&values);
    let derivative = terms.iter().map(|t| t.1).sum::<f64>() / terms.len() as f64;
    Ok(McEstimate {
        value,
        derivative,
        std_error,
    })
}

/// `log pi_KL(D + eps_KL) + log |D'|`, or [`Error::Degenerate`] if the map is
/// flat.
pub fn log_density_term(prior: &KldPriorSpec, est: &McEstimate, layer: usize) -> Result<f64> {
    if !(est.derivative.abs() >= DEGENERACY_THRESHOLD) {
        return Err(Error::Degenerate {
            layer,
            derivative: est.derivative,
        });
    }
    Ok(prior.log_pdf(est.value.max(0.0) + EPS_KL)? + est.derivative.abs().ln())
}

/// Log PredCP density of one block's scale.
pub fn predcp_log_density<M: Perturbable>(
    prior: &KldPriorSpec,
    model: &M,
    x: &DMatrix<f64>,
    obs: &ObservationModel,
    taus: &[f64],
    target: usize,
    mc: &McConfig,
) -> Result<f64> {
    let est = mc_divergence(model, x, obs, taus, target, mc)?;
    log_density_term(prior, &est, target)
}

/// Per-layer contribution to a depth-wise or modular prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerTerm {
    pub layer: usize,
    pub kappa: f64,
    pub dkappa_dtau: f64,
    #[serde(rename = "logdensity")]
    pub log_density: f64,
    pub std_error: f64,
}

/// Per-layer terms and their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorEvalResult {
    pub layers: Vec<LayerTerm>,
    pub total: f64,
}

impl PriorEvalResult {
    fn from_terms(layers: Vec<LayerTerm>) -> Self {
        let total = layers.iter().map(|t| t.log_density).sum();
        PriorEvalResult { layers, total }
    }
}

fn layer_term(prior: &KldPriorSpec, est: McEstimate, layer: usize) -> Result<LayerTerm> {
    Ok(LayerTerm {
        layer,
        kappa: est.value,
        dkappa_dtau: est.derivative,
        log_density: log_density_term(prior, &est, layer)?,
        std_error: est.std_error,
    })
}

/// Depth-wise log PredCP: the sum over layers of the log density of each
/// `tau_l` given the scales below it.
///
/// Layer `l` compares the network short-circuited after block `l` against the
/// same network with block `l` at its mean. The blocks below are realized
/// from the same per-sample noise at every layer, so for a residual network
/// with zero means the base of layer `l` is exactly the extended output of
/// layer `l - 1` for the same sample.
pub fn depthwise_log_predcp<M: Perturbable>(
    prior: &KldPriorSpec,
    model: &M,
    x: &DMatrix<f64>,
    obs: &ObservationModel,
    taus: &[f64],
    mc: &McConfig,
) -> Result<PriorEvalResult> {
    let layers = (1..=model.num_blocks())
        .map(|l| layer_term(prior, mc_divergence(model, x, obs, taus, l, mc)?, l))
        .collect::<Result<Vec<_>>>()?;
    Ok(PriorEvalResult::from_terms(layers))
}

/// One cell of a joint density grid over `(tau_1, tau_2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub tau1: f64,
    pub tau2: f64,
    pub density: f64,
    pub degenerate: bool,
}

/// `exp(depthwise_log_predcp)` over a grid, for a two-block model. Cells where
/// some layer's map is flat get density 0 and `degenerate = true`. Cells are
/// ordered with `tau1` varying slowest.
pub fn joint_density_grid<M: Perturbable>(
    prior: &KldPriorSpec,
    model: &M,
    x: &DMatrix<f64>,
    obs: &ObservationModel,
    tau1: &[f64],
    tau2: &[f64],
    mc: &McConfig,
) -> Result<Vec<GridCell>> {
    if model.num_blocks() != 2 {
        return Err(domain(format!(
            "joint grid needs exactly 2 blocks, got {}",
            model.num_blocks()
        )));
    }
    let pairs: Vec<(f64, f64)> = tau1.iter().flat_map(|&a| tau2.iter().map(move |&b| (a, b))).collect();
    pairs
        .par_iter()
        .map(
            |&(a, b)| match depthwise_log_predcp(prior, model, x, obs, &[a, b], mc) {
                Ok(r) => Ok(GridCell {
                    tau1: a,
                    tau2: b,
                    density: r.total.exp(),
                    degenerate: false,
                }),
                Err(Error::Degenerate { .. }) => Ok(GridCell {
                    tau1: a,
                    tau2: b,
                    density: 0.0,
                    degenerate: true,
                }),
                Err(e) => Err(e),
            },
        )
        .collect()
}

/// The Monte-Carlo map of one block as a [`DivergenceMap`], with the other
/// scales and the noise seed held fixed.
pub struct McMap<'a, M> {
    pub model: &'a M,
    pub x: &'a DMatrix<f64>,
    pub obs: ObservationModel,
    pub taus: Vec<f64>,
    pub target: usize,
    pub mc: McConfig,
}

impl<'a, M: Perturbable> McMap<'a, M> {
    pub fn new(
        model: &'a M,
        x: &'a DMatrix<f64>,
        obs: ObservationModel,
        taus: Vec<f64>,
        target: usize,
        mc: McConfig,
    ) -> Result<Self> {
        validate(model, x, &obs, &taus, target, &mc)?;
        Ok(McMap {
            model,
            x,
            obs,
            taus,
            target,
            mc,
        })
    }

    pub fn estimate(&self, tau: f64) -> Result<McEstimate> {
        let mut taus = self.taus.clone();
        taus[self.target - 1] = tau;
        mc_divergence(self.model, self.x, &self.obs, &taus, self.target, &self.mc)
    }
}

impl<M: Perturbable> DivergenceMap for McMap<'_, M> {
    fn eval(&self, tau: f64) -> Result<MapPoint> {
        self.estimate(tau).map(|e| e.point())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ModularNet, Network, NetworkSpec};

    fn gauss() -> ObservationModel {
        ObservationModel::Gaussian { sigma_y: 1.0 }
    }

    #[test]
    fn zero_scale_gives_zero_value() {
        let net = Network::from_seed(NetworkSpec::new(2, 4, 1, 2, true), 3).unwrap();
        let x = normal_matrix(6, 2, 1, &[0]);
        let e = mc_divergence(&net, &x, &gauss(), &[0.5, 0.0], 2, &McConfig::new(8, 1)).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(e.derivative > 0.0);
    }

    #[test]
    fn linear_module_matches_closed_form_slope() {
        // f = x theta with theta ~ N(0, tau): D = tau mean(x^2) / 2 per sample
        // up to the sample's xi^2.
        let m = ModularNet::new(vec![DMatrix::zeros(1, 1)]).unwrap();
        let x = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let mc = McConfig::new(1, 9);
        let e = mc_divergence(&m, &x, &gauss(), &[0.7], 1, &mc).unwrap();
        let xi = mc.noise(tag::MC_NOISE, 0, 1, 1, 1)[(0, 0)];
        let msq = (1.0 + 4.0 + 0.25) / 3.0;
        assert!((e.value - 0.7 * xi * xi * msq / 2.0).abs() < 1e-14);
        assert!((e.derivative - xi * xi * msq / 2.0).abs() < 1e-14);
    }

    #[test]
    fn antithetic_pairs_share_noise() {
        let mc = McConfig {
            antithetic: true,
            ..McConfig::new(4, 2)
        };
        assert_eq!(
            mc.noise(tag::MC_NOISE, 1, 1, 2, 2),
            -mc.noise(tag::MC_NOISE, 0, 1, 2, 2)
        );
        assert_ne!(mc.noise(tag::MC_NOISE, 2, 1, 2, 2), mc.noise(tag::MC_NOISE, 0, 1, 2, 2));
    }

    #[test]
    fn validation_errors() {
        let net = Network::from_seed(NetworkSpec::new(2, 4, 1, 2, true), 3).unwrap();
        let x = normal_matrix(6, 2, 1, &[0]);
        let mc = McConfig::new(2, 1);
        assert!(mc_divergence(&net, &x, &gauss(), &[1.0, 1.0], 3, &mc).is_err());
        assert!(mc_divergence(&net, &x, &gauss(), &[1.0, -1.0], 2, &mc).is_err());
        assert!(mc_divergence(&net, &x, &gauss(), &[1.0], 1, &mc).is_err());
        let empty = DMatrix::zeros(0, 2);
        assert!(matches!(
            mc_divergence(&net, &empty, &gauss(), &[1.0, 1.0], 1, &mc),
            Err(Error::Precondition(_))
        ));
        assert!(mc_divergence(&net, &x, &gauss(), &[1.0, 1.0], 1, &McConfig::new(0, 1)).is_err());
    }
}
