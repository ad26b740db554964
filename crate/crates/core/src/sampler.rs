//! Sampling scales by inverting a divergence map, and prior function draws.
//!
//! A draw `kappa ~ pi_KL` is mapped back to `tau = D^{-1}(kappa)`. Two
//! inverters are provided: the damped Newton iteration with a fixed step and
//! iteration count (kept verbatim, including its failure to converge with
//! small steps), and a bracketing solver that exploits monotonicity and is
//! the default.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::divergence::DivergenceMap;
use crate::error::{invalid, Error, Result};
use crate::kld_prior::KldPriorSpec;
use crate::nn::{Network, NetworkSpec, ObservationModel};
use crate::predcp::{McConfig, McMap};
use crate::rng::{derive, normal_matrix, stream, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    NewtonPaper,
    BisectionRobust,
}

impl SamplerMode {
    pub fn name(&self) -> &'static str {
        match self {
            SamplerMode::NewtonPaper => "newton_paper",
            SamplerMode::BisectionRobust => "bisection_robust",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    /// Newton step size.
    pub alpha: f64,
    /// Newton iteration count.
    pub iterations: usize,
    pub mode: SamplerMode,
    /// Relative tolerance on `D(tau) - kappa` for the bracketing solver.
    pub tolerance: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            alpha: 5e-5,
            iterations: 20,
            mode: SamplerMode::BisectionRobust,
            tolerance: 1e-10,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.iterations == 0 {
            return Err(invalid("iterations must be >= 1"));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(invalid(format!("tolerance must lie in (0, 1), got {}", self.tolerance)));
        }
        Ok(())
    }
}

/// One inverted draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauDraw {
    pub tau: f64,
    pub kappa: f64,
    /// `D(tau) - kappa` at the returned `tau`.
    pub residual: f64,
    /// The Newton iteration stepped below zero and was clamped.
    pub clamped: bool,
    pub mode: SamplerMode,
}

/// Largest bracket tried before the map is declared bounded.
const BRACKET_LIMIT: f64 = 5.070_602_400_912_918e30; // 2^102

/// Solve `D(tau) = kappa` for `tau >= 0`.
pub fn invert_map<M: DivergenceMap + ?Sized>(map: &M, kappa: f64, cfg: &SamplerConfig) -> Result<TauDraw> {
    cfg.validate()?;
    if !(kappa > 0.0) {
        return Ok(TauDraw {
            tau: 0.0,
            kappa,
            residual: map.eval(0.0)?.value - kappa,
            clamped: false,
            mode: cfg.mode,
        });
    }
    match cfg.mode {
        SamplerMode::NewtonPaper => newton(map, kappa, cfg),
        SamplerMode::BisectionRobust => bracket(map, kappa, cfg),
    }
}

fn newton<M: DivergenceMap + ?Sized>(map: &M, kappa: f64, cfg: &SamplerConfig) -> Result<TauDraw> {
    let mut tau = kappa;
    let mut clamped = false;
    for _ in 0..cfg.iterations {
        let p = map.eval(tau)?;
        if !(p.derivative != 0.0 && p.derivative.is_finite()) {
            break;
        }
        tau -= cfg.alpha * (p.value - kappa) / p.derivative;
        if tau < 0.0 {
            tau = 0.0;
            clamped = true;
        }
    }
    Ok(TauDraw {
        tau,
        kappa,
        residual: map.eval(tau)?.value - kappa,
        clamped,
        mode: SamplerMode::NewtonPaper,
    })
}

fn bracket<M: DivergenceMap + ?Sized>(map: &M, kappa: f64, cfg: &SamplerConfig) -> Result<TauDraw> {
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut p_hi = map.eval(hi)?;
    while p_hi.value < kappa {
        lo = hi;
        hi *= 2.0;
        if hi > BRACKET_LIMIT {
            return Err(Error::UnboundedMap {
                upper: lo,
                value: p_hi.value,
                target: kappa,
            });
        }
        p_hi = map.eval(hi)?;
    }
    let tol = cfg.tolerance * kappa;
    let done = |tau: f64, residual: f64| TauDraw {
        tau,
        kappa,
        residual,
        clamped: false,
        mode: SamplerMode::BisectionRobust,
    };
    let mut tau = hi;
    let mut p = p_hi;
    let mut best = (hi, p_hi.value - kappa);
    for _ in 0..1000 {
        let r = p.value - kappa;
        if r.abs() < best.1.abs() {
            best = (tau, r);
        }
        if r.abs() <= tol {
            return Ok(done(tau, r));
        }
        if r > 0.0 {
            hi = tau;
        } else {
            lo = tau;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        // Newton from the current point if it lands strictly inside the
        // bracket, bisection otherwise.
        let step = tau - r / p.derivative;
        tau = if p.derivative > 0.0 && step > lo && step < hi {
            step
        } else {
            0.5 * (lo + hi)
        };
        p = map.eval(tau)?;
    }
    Ok(done(best.0, best.1))
}

/// Draw `kappa ~ pi_KL` from the stream for `seed` and invert it.
pub fn sample_tau<M: DivergenceMap + ?Sized>(
    prior: &KldPriorSpec,
    map: &M,
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<TauDraw> {
    let kappa = prior.sample(&mut stream(seed, &[tag::KAPPA_DRAW]));
    invert_map(map, kappa, cfg)
}

/// Prior over hidden-block scales used for function draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    /// `tau_l = 1`, so every weight is `N(0, 1/fan_in)`.
    StandardNormal,
    /// `tau_l ~ C+(0, 1)`.
    Horseshoe,
    /// `tau_l` drawn layer by layer from the depth-wise PredCP.
    Predcp,
}

/// Settings for [`sample_function_draws`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionDrawConfig {
    /// `pi_KL` for the PredCP draws.
    pub prior: KldPriorSpec,
    /// Monte-Carlo samples for each layer's map.
    pub mc_samples: usize,
    pub sampler: SamplerConfig,
}

impl Default for FunctionDrawConfig {
    fn default() -> Self {
        FunctionDrawConfig {
            prior: KldPriorSpec::log_cauchy(1.0).expect("valid"),
            mc_samples: 5,
            sampler: SamplerConfig::default(),
        }
    }
}

/// One prior function draw on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionDraw {
    pub taus: Vec<f64>,
    pub y: Vec<f64>,
}

/// The design used for function draws: the grid plus a constant column, so
/// that the bias-free network is not forced through the origin.
pub fn grid_design(x_grid: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x_grid.len(), 2, |i, j| if j == 0 { x_grid[i] } else { 1.0 })
}

/// Ancestral prior draws of the network function on a one-dimensional grid.
///
/// `spec.input_dim` must be 2 (the grid and a constant column) and
/// `output_dim` 1. Draw `d` uses the same input/output weights and the same
/// standardized block noise under every prior kind, so kinds differ only
/// through their scales. PredCP scales are drawn bottom-up: the map for block
/// `l` is estimated on the grid with the scales of the blocks below fixed at
/// their draws, under Gaussian observations with `sigma_y = 1`. A `kappa`
/// draw beyond the map's value at the bracket limit sets that layer's scale
/// to the limit, so PredCP scales are truncated at `2^102`.
pub fn sample_function_draws(
    kind: PriorKind,
    spec: &NetworkSpec,
    x_grid: &[f64],
    n_draws: usize,
    seed: u64,
    cfg: &FunctionDrawConfig,
) -> Result<Vec<FunctionDraw>> {
    if spec.input_dim != 2 || spec.output_dim != 1 {
        return Err(invalid(
            "function draws need input_dim = 2 (grid and constant) and output_dim = 1",
        ));
    }
    if x_grid.is_empty() && n_draws > 0 {
        return Err(Error::Precondition("empty input grid".into()));
    }
    let x = grid_design(x_grid);
    let obs = ObservationModel::Gaussian { sigma_y: 1.0 };
    let d = spec.hidden_dim;
    (0..n_draws)
        .map(|draw| {
            let draw_seed = derive(seed, &[tag::ANCESTRAL, draw as u64]);
            let net = Network::from_seed(spec.clone(), draw_seed)?;
            let mut taus = vec![0.0; spec.depth];
            for l in 1..=spec.depth {
                taus[l - 1] = match kind {
                    PriorKind::StandardNormal => 1.0,
                    PriorKind::Horseshoe => {
                        let mut rng = stream(seed, &[tag::TAU_DRAW, draw as u64, l as u64]);
                        let c: f64 = rng.sample(rand_distr::Cauchy::new(0.0, 1.0).expect("valid"));
                        c.abs()
                    }
                    PriorKind::Predcp => {
                        let mc = McConfig::new(cfg.mc_samples, derive(seed, &[tag::MC_NOISE, draw as u64]));
                        let map = McMap::new(&net, &x, obs, taus.clone(), l, mc)?;
                        let layer_seed = derive(seed, &[tag::KAPPA_DRAW, draw as u64, l as u64]);
                        match sample_tau(&cfg.prior, &map, &cfg.sampler, layer_seed) {
                            // The target lies beyond the largest certifiable
                            // scale; the draw keeps that scale.
                            Err(Error::UnboundedMap { upper, .. }) => upper,
                            r => r?.tau,
                        }
                    }
                };
            }
            let xi: Vec<DMatrix<f64>> = (1..=spec.depth)
                .map(|l| normal_matrix(d, d, draw_seed, &[tag::ANCESTRAL, l as u64]))
                .collect();
            let blocks = net.realize(&xi, &taus)?;
            let y = net
                .forward(&x, &blocks, spec.depth)?
                .column(0)
                .iter()
                .copied()
                .collect();
            Ok(FunctionDraw { taus, y })
        })
        .collect()
}
