//! Bias-free ReLU networks, observation models and per-row predictive KLDs.
//!
//! A [`Network`] maps inputs through fixed input weights, `depth` hidden
//! blocks, and fixed output weights:
//!
//! ```text
//! h_0 = X W_in
//! h_l = h_{l-1} + relu(h_{l-1} W_l)   (residual)
//! h_l = relu(h_{l-1} W_l)             (plain)
//! F_l = h_l W_out                      (short circuit at block l)
//! ```
//!
//! Hidden weights are realized in non-centered form
//! `W_l = Phi_l + sqrt(tau_l * sigma_l) * Xi_l` with standardized noise `Xi_l`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dual::{Dual, DualMatrix};
use crate::error::{domain, invalid, Error, Result};
use crate::rng::{normal_matrix, tag};

/// Architecture of a bias-free ReLU network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    /// Number of hidden blocks `L`.
    pub depth: usize,
    pub residual: bool,
    /// Prior variance scale `sigma_l` shared by every hidden block. Defaults
    /// to `1 / hidden_dim`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_var: Option<f64>,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden_dim: usize, output_dim: usize, depth: usize, residual: bool) -> Self {
        NetworkSpec {
            input_dim,
            hidden_dim,
            output_dim,
            depth,
            residual,
            prior_var: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.output_dim == 0 {
            return Err(invalid("network dimensions must be >= 1"));
        }
        if let Some(v) = self.prior_var {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("prior_var must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn block_var(&self) -> f64 {
        self.prior_var.unwrap_or(1.0 / self.hidden_dim as f64)
    }
}

/// Fixed weights of a network: input and output weights, and the prior mean
/// and variance scale of each hidden block.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightState {
    pub w_in: DMatrix<f64>,
    pub w_out: DMatrix<f64>,
    pub phi: Vec<DMatrix<f64>>,
    pub sigma: Vec<f64>,
}

impl WeightState {
    /// `W_in ~ N(0, 1/input_dim)` and `W_out ~ N(0, 1/hidden_dim)` from the
    /// seed; all block means zero.
    pub fn from_seed(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let d = spec.hidden_dim;
        let w_in = normal_matrix(spec.input_dim, d, seed, &[tag::INPUT_WEIGHTS]) / (spec.input_dim as f64).sqrt();
        let w_out = normal_matrix(d, spec.output_dim, seed, &[tag::OUTPUT_WEIGHTS]) / (d as f64).sqrt();
        Ok(WeightState {
            w_in,
            w_out,
            phi: vec![DMatrix::zeros(d, d); spec.depth],
            sigma: vec![spec.block_var(); spec.depth],
        })
    }

    fn check(&self, spec: &NetworkSpec) -> Result<()> {
        let d = spec.hidden_dim;
        let shape = |m: &DMatrix<f64>| (m.nrows(), m.ncols());
        if shape(&self.w_in) != (spec.input_dim, d) {
            return Err(Error::Shape(format!(
                "W_in is {:?}, expected {:?}",
                shape(&self.w_in),
                (spec.input_dim, d)
            )));
        }
        if shape(&self.w_out) != (d, spec.output_dim) {
            return Err(Error::Shape(format!(
                "W_out is {:?}, expected {:?}",
                shape(&self.w_out),
                (d, spec.output_dim)
            )));
        }
        if self.phi.len() != spec.depth || self.sigma.len() != spec.depth {
            return Err(Error::Shape(format!("expected {} block means and scales", spec.depth)));
        }
        if let Some(p) = self.phi.iter().find(|p| shape(p) != (d, d)) {
            return Err(Error::Shape(format!(
                "block mean is {:?}, expected {:?}",
                shape(p),
                (d, d)
            )));
        }
        if self.sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(invalid("block variance scales must be > 0"));
        }
        Ok(())
    }
}

/// `W = Phi + sqrt(sigma) * Xi * sqrt(tau)`; `tau = 0` returns `Phi` unchanged.
///
/// The operation order matches the perturbed block in the Monte-Carlo
/// estimators, so a block realized here is bit-identical to the same block
/// realized there.
pub fn realize_weights(phi: &DMatrix<f64>, xi: &DMatrix<f64>, sigma: f64, tau: f64) -> Result<DMatrix<f64>> {
    if !(tau >= 0.0) {
        return Err(domain(format!("tau must be >= 0, got {tau}")));
    }
    if phi.shape() != xi.shape() {
        return Err(Error::Shape(format!("Phi {:?} vs Xi {:?}", phi.shape(), xi.shape())));
    }
    if tau == 0.0 {
        return Ok(phi.clone());
    }
    Ok(phi + (xi * sigma.sqrt()) * tau.sqrt())
}

/// How network outputs become predictive distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObservationModel {
    Gaussian { sigma_y: f64 },
    Categorical { classes: usize },
}

impl ObservationModel {
    pub fn validate(&self, output_dim: usize) -> Result<()> {
        match *self {
            ObservationModel::Gaussian { sigma_y } if !(sigma_y.is_finite() && sigma_y > 0.0) => {
                Err(invalid(format!("sigma_y must be > 0, got {sigma_y}")))
            }
            ObservationModel::Categorical { classes } if classes < 2 || classes != output_dim => Err(invalid(format!(
                "categorical model needs output_dim = classes >= 2, got {classes} classes for {output_dim} outputs"
            ))),
            _ => Ok(()),
        }
    }

    /// KL divergence between the predictive distributions of two output rows.
    pub fn kld(&self, f_plus: &[f64], f_zero: &[f64]) -> f64 {
        match *self {
            ObservationModel::Gaussian { sigma_y } => {
                let ss: f64 = f_plus.iter().zip(f_zero).map(|(a, b)| (a - b) * (a - b)).sum();
                ss / (2.0 * sigma_y * sigma_y)
            }
            ObservationModel::Categorical { .. } => {
                let lp = log_softmax(f_plus);
                let lq = log_softmax(f_zero);
                let kl: f64 = lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum();
                kl.max(0.0)
            }
        }
    }

    /// KL divergence and its derivative, where `f_plus` moves with tangent
    /// `f_plus_dot` and `f_zero` is fixed.
    pub fn kld_dual(&self, f_plus: &[f64], f_plus_dot: &[f64], f_zero: &[f64]) -> Dual {
        match *self {
            ObservationModel::Gaussian { sigma_y } => {
                let s2 = sigma_y * sigma_y;
                let mut d = Dual::constant(0.0);
                for ((a, da), b) in f_plus.iter().zip(f_plus_dot).zip(f_zero) {
                    let diff = a - b;
                    d += Dual::new(diff * diff / (2.0 * s2), diff * da / s2);
                }
                d
            }
            ObservationModel::Categorical { .. } => {
                let lp = log_softmax(f_plus);
                let lq = log_softmax(f_zero);
                let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
                let mean_dot: f64 = p.iter().zip(f_plus_dot).map(|(pj, dj)| pj * dj).sum();
                let mut d = Dual::constant(0.0);
                for j in 0..p.len() {
                    let gap = lp[j] - lq[j];
                    let p_dot = p[j] * (f_plus_dot[j] - mean_dot);
                    d += Dual::new(p[j] * gap, p_dot * gap);
                }
                d.val = d.val.max(0.0);
                d
            }
        }
    }
}

/// Log-probabilities of a softmax, with max subtraction.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// `softmax(tau * logits)`; `tau = 0` is uniform.
pub fn softmax_scaled(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau >= 0.0) {
        return Err(domain(format!("tau must be >= 0, got {tau}")));
    }
    let scaled: Vec<f64> = logits.iter().map(|z| tau * z).collect();
    Ok(softmax(&scaled))
}

/// A model whose blocks can be perturbed one at a time around their means.
///
/// Blocks are indexed from 1. `context` fixes every block other than the
/// target for one Monte-Carlo sample; the target block is then supplied as a
/// dual weight for the extended model, or at its mean for the base model.
pub trait Perturbable: Sync {
    fn num_blocks(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn block_mean(&self, layer: usize) -> &DMatrix<f64>;
    /// Prior standard deviation per unit `sqrt(tau)` of a block entry.
    fn block_std(&self, layer: usize) -> f64;
    /// Realized weights of all blocks for one sample; `noise(j)` yields the
    /// standardized draw of block `j`. The entry for `target` is unused.
    fn context(
        &self,
        target: usize,
        taus: &[f64],
        noise: &mut dyn FnMut(usize) -> DMatrix<f64>,
    ) -> Result<Vec<DMatrix<f64>>>;
    /// Output of the extended model, with block `target` equal to `w` and
    /// moving with tangent `w_dot`.
    fn forward_perturbed(
        &self,
        x: &DMatrix<f64>,
        context: &[DMatrix<f64>],
        target: usize,
        w: &DMatrix<f64>,
        w_dot: &DMatrix<f64>,
    ) -> DualMatrix;
    /// Output of the base model: block `target` at its mean.
    fn forward_base(&self, x: &DMatrix<f64>, context: &[DMatrix<f64>], target: usize) -> DMatrix<f64>;
}

/// A bias-free ReLU network with fixed input and output weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    weights: WeightState,
}

impl Network {
    pub fn new(spec: NetworkSpec, weights: WeightState) -> Result<Self> {
        spec.validate()?;
        weights.check(&spec)?;
        Ok(Network { spec, weights })
    }

    pub fn from_seed(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let w = WeightState::from_seed(&spec, seed)?;
        Network::new(spec, w)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn weights(&self) -> &WeightState {
        &self.weights
    }

    pub fn check_input(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.spec.input_dim {
            return Err(Error::Shape(format!(
                "inputs have {} columns, network expects {}",
                x.ncols(),
                self.spec.input_dim
            )));
        }
        Ok(())
    }

    fn block(&self, h: DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
        let a = (&h * w).map(|z| z.max(0.0));
        if self.spec.residual {
            h + a
        } else {
            a
        }
    }

    /// Hidden units after `use_layers` blocks with the given realized weights.
    pub fn hidden(&self, x: &DMatrix<f64>, blocks: &[DMatrix<f64>], use_layers: usize) -> Result<DMatrix<f64>> {
        self.check_input(x)?;
        if use_layers > self.spec.depth || blocks.len() < use_layers {
            return Err(domain(format!(
                "cannot use {use_layers} blocks of a depth-{} network with {} realized",
                self.spec.depth,
                blocks.len()
            )));
        }
        let d = self.spec.hidden_dim;
        if let Some(b) = blocks[..use_layers].iter().find(|b| b.shape() != (d, d)) {
            return Err(Error::Shape(format!(
                "hidden block is {:?}, expected {:?}",
                b.shape(),
                (d, d)
            )));
        }
        let mut h = x * &self.weights.w_in;
        for w in &blocks[..use_layers] {
            h = self.block(h, w);
        }
        Ok(h)
    }

    /// Network output short-circuited after `use_layers` blocks.
    pub fn forward(&self, x: &DMatrix<f64>, blocks: &[DMatrix<f64>], use_layers: usize) -> Result<DMatrix<f64>> {
        Ok(self.hidden(x, blocks, use_layers)? * &self.weights.w_out)
    }

    /// Realize every block at its scale from the given standardized draws.
    pub fn realize(&self, xi: &[DMatrix<f64>], taus: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        if xi.len() != self.spec.depth || taus.len() != self.spec.depth {
            return Err(Error::Shape(format!("expected {} draws and scales", self.spec.depth)));
        }
        (0..self.spec.depth)
            .map(|j| realize_weights(&self.weights.phi[j], &xi[j], self.weights.sigma[j], taus[j]))
            .collect()
    }
}

impl Perturbable for Network {
    fn num_blocks(&self) -> usize {
        self.spec.depth
    }

    fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    fn block_mean(&self, layer: usize) -> &DMatrix<f64> {
        &self.weights.phi[layer - 1]
    }

    fn block_std(&self, layer: usize) -> f64 {
        self.weights.sigma[layer - 1].sqrt()
    }

    /// Blocks before the target are realized at their own scales; later
    /// blocks are never used because the output is short-circuited.
    fn context(
        &self,
        target: usize,
        taus: &[f64],
        noise: &mut dyn FnMut(usize) -> DMatrix<f64>,
    ) -> Result<Vec<DMatrix<f64>>> {
        (1..=self.spec.depth)
            .map(|j| {
                if j < target {
                    realize_weights(
                        &self.weights.phi[j - 1],
                        &noise(j),
                        self.weights.sigma[j - 1],
                        taus[j - 1],
                    )
                } else {
                    Ok(self.weights.phi[j - 1].clone())
                }
            })
            .collect()
    }

    fn forward_perturbed(
        &self,
        x: &DMatrix<f64>,
        context: &[DMatrix<f64>],
        target: usize,
        w: &DMatrix<f64>,
        w_dot: &DMatrix<f64>,
    ) -> DualMatrix {
        let h = self.hidden(x, context, target - 1).expect("validated by caller");
        let a = DualMatrix::constant(h.clone()).mul_dual(w, w_dot).relu();
        let h = if self.spec.residual {
            DualMatrix::constant(h).add(&a)
        } else {
            a
        };
        h.mul_const(&self.weights.w_out)
    }

    fn forward_base(&self, x: &DMatrix<f64>, context: &[DMatrix<f64>], target: usize) -> DMatrix<f64> {
        let h = self.hidden(x, context, target - 1).expect("validated by caller");
        self.block(h, &self.weights.phi[target - 1]) * &self.weights.w_out
    }
}

/// A dense stack of modules `x -> relu(x P_1) -> ... -> (.) P_M`, where each
/// module is perturbed as `theta_m ~ N(phi_m, tau_m I)` with the others held at
/// their means.
#[derive(Debug, Clone, PartialEq)]
pub struct ModularNet {
    modules: Vec<DMatrix<f64>>,
}

impl ModularNet {
    pub fn new(modules: Vec<DMatrix<f64>>) -> Result<Self> {
        if modules.is_empty() {
            return Err(invalid("a modular network needs at least one module"));
        }
        for pair in modules.windows(2) {
            if pair[0].ncols() != pair[1].nrows() {
                return Err(Error::Shape(format!(
                    "module shapes {:?} and {:?} do not chain",
                    pair[0].shape(),
                    pair[1].shape()
                )));
            }
        }
        if modules.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("module parameters must be finite"));
        }
        Ok(ModularNet { modules })
    }

    pub fn modules(&self) -> &[DMatrix<f64>] {
        &self.modules
    }

    pub fn forward(&self, x: &DMatrix<f64>, params: &[DMatrix<f64>]) -> DMatrix<f64> {
        let last = params.len() - 1;
        params.iter().enumerate().fold(x.clone(), |h, (m, p)| {
            let z = h * p;
            if m < last {
                z.map(|v| v.max(0.0))
            } else {
                z
            }
        })
    }
}

impl Perturbable for ModularNet {
    fn num_blocks(&self) -> usize {
        self.modules.len()
    }

    fn input_dim(&self) -> usize {
        self.modules[0].nrows()
    }

    fn output_dim(&self) -> usize {
        self.modules[self.modules.len() - 1].ncols()
    }

    fn block_mean(&self, layer: usize) -> &DMatrix<f64> {
        &self.modules[layer - 1]
    }

    fn block_std(&self, _layer: usize) -> f64 {
        1.0
    }

    fn context(
        &self,
        _target: usize,
        _taus: &[f64],
        _noise: &mut dyn FnMut(usize) -> DMatrix<f64>,
    ) -> Result<Vec<DMatrix<f64>>> {
        Ok(self.modules.clone())
    }

    fn forward_perturbed(
        &self,
        x: &DMatrix<f64>,
        context: &[DMatrix<f64>],
        target: usize,
        w: &DMatrix<f64>,
        w_dot: &DMatrix<f64>,
    ) -> DualMatrix {
        let last = context.len() - 1;
        let mut h = DualMatrix::constant(x.clone());
        for (m, p) in context.iter().enumerate() {
            h = if m + 1 == target {
                h.mul_dual(w, w_dot)
            } else {
                h.mul_const(p)
            };
            if m < last {
                h = h.relu();
            }
        }
        h
    }

    fn forward_base(&self, x: &DMatrix<f64>, context: &[DMatrix<f64>], _target: usize) -> DMatrix<f64> {
        self.forward(x, context)
    }
}
