//! Closed-form divergence maps for Bayesian linear regression.
//!
//! With `beta ~ N(0, tau)` and the base model `beta = 0`, the KL divergence
//! between the marginal evidences is available in closed form, as is the
//! Jensen upper bound that averages the divergence over `beta` instead. Both
//! are exposed as [`DivergenceMap`]s, together with the quantities built from
//! the induced prior on `tau`: marginal priors on `beta`, shrinkage profiles,
//! and tail probabilities.
//!
//! `sigma_y` defaults to 1.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::divergence::{cov_density, DivergenceMap, MapPoint};
use crate::error::{domain, invalid, Error, Result};
use crate::kld_prior::KldPriorSpec;
use crate::quadrature::{integrate, integrate_fallible, integrate_semi_infinite, Integral, QuadConfig};
use crate::EPS_KL;

/// Either a single scalar feature or a full design matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    Scalar(f64),
    Matrix(DMatrix<f64>),
}

/// A linear regression model `E[y | x, beta] = x beta` with Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLinear", into = "RawLinear")]
pub struct LinearModelSpec {
    pub design: Design,
    pub noise_sd: f64,
    /// Prior scale of the intercept; only used by the direct prior on the slope.
    pub intercept_sd: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLinear {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    design: Option<Vec<Vec<f64>>>,
    #[serde(default = "one")]
    sigma_y: f64,
    #[serde(default)]
    sigma_beta0: f64,
}

fn one() -> f64 {
    1.0
}

impl From<LinearModelSpec> for RawLinear {
    fn from(s: LinearModelSpec) -> Self {
        let (x, design) = match s.design {
            Design::Scalar(x) => (Some(x), None),
            Design::Matrix(m) => (None, Some(m.row_iter().map(|r| r.iter().copied().collect()).collect())),
        };
        RawLinear {
            x,
            design,
            sigma_y: s.noise_sd,
            sigma_beta0: s.intercept_sd,
        }
    }
}

impl TryFrom<RawLinear> for LinearModelSpec {
    type Error = Error;
    fn try_from(r: RawLinear) -> Result<Self> {
        let design = match (r.x, r.design) {
            (Some(x), None) => Design::Scalar(x),
            (None, Some(rows)) => {
                let n = rows.len();
                let d = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|row| row.len() != d) {
                    return Err(invalid("design rows have unequal lengths"));
                }
                Design::Matrix(DMatrix::from_row_iterator(n, d, rows.into_iter().flatten()))
            }
            _ => return Err(invalid("linear model needs exactly one of 'x' or 'design'")),
        };
        let spec = LinearModelSpec {
            design,
            noise_sd: r.sigma_y,
            intercept_sd: r.sigma_beta0,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl LinearModelSpec {
    pub fn scalar(x: f64, noise_sd: f64) -> Result<Self> {
        let s = LinearModelSpec {
            design: Design::Scalar(x),
            noise_sd,
            intercept_sd: 0.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn matrix(design: DMatrix<f64>, noise_sd: f64) -> Result<Self> {
        let s = LinearModelSpec {
            design: Design::Matrix(design),
            noise_sd,
            intercept_sd: 0.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_intercept_sd(mut self, sd: f64) -> Result<Self> {
        self.intercept_sd = sd;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sd.is_finite() && self.noise_sd > 0.0) {
            return Err(invalid(format!("sigma_y must be > 0, got {}", self.noise_sd)));
        }
        if !(self.intercept_sd.is_finite() && self.intercept_sd >= 0.0) {
            return Err(invalid(format!("sigma_beta0 must be >= 0, got {}", self.intercept_sd)));
        }
        match &self.design {
            Design::Scalar(x) if !x.is_finite() => Err(invalid("x must be finite")),
            Design::Matrix(m) if m.nrows() == 0 || m.ncols() == 0 => Err(invalid("design matrix must be at least 1x1")),
            Design::Matrix(m) if m.iter().any(|v| !v.is_finite()) => Err(invalid("design matrix must be finite")),
            _ => Ok(()),
        }
    }

    /// The evidence-divergence map for this design.
    pub fn ecp_map(&self) -> EcpMap {
        match &self.design {
            Design::Scalar(x) => EcpMap::Scalar {
                x: *x,
                sigma_y: self.noise_sd,
            },
            Design::Matrix(m) => EcpMap::Multivariate(MultivariateEcp::new(m, self.noise_sd)),
        }
    }

    /// The Jensen-bound (point-mass base) map for this design.
    pub fn predcp_map(&self) -> PredcpLinearMap {
        let trace = match &self.design {
            Design::Scalar(x) => x * x,
            Design::Matrix(m) => m.iter().map(|v| v * v).sum(),
        };
        PredcpLinearMap {
            trace,
            sigma_y: self.noise_sd,
        }
    }
}

/// `a/2 - ln(1 + a)/2` without cancellation for small `a`.
fn half_excess(a: f64) -> f64 {
    if a.abs() < 1e-2 {
        // a²/4 - a³/6 + a⁴/8 - ...
        let mut term = a * a;
        let mut sum = 0.0;
        for k in 2..=12 {
            sum += term / k as f64 * if k % 2 == 0 { 1.0 } else { -1.0 };
            term *= a;
        }
        0.5 * sum
    } else {
        0.5 * (a - a.ln_1p())
    }
}

/// Evidence KL divergence for a scalar feature.
pub fn kld_linear(x: f64, sigma_y: f64, tau: f64) -> MapPoint {
    let c = x * x / (sigma_y * sigma_y);
    let a = c * tau;
    MapPoint::new(half_excess(a), 0.5 * c * a / (1.0 + a))
}

/// Jensen upper bound `E_beta KL = x² tau / (2 sigma_y²)`.
pub fn predcp_divergence_linear(x: f64, sigma_y: f64, tau: f64) -> MapPoint {
    let c = x * x / (2.0 * sigma_y * sigma_y);
    MapPoint::new(c * tau, c)
}

/// Evidence divergence for a design matrix, via the eigenvalues of `XᵀX`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateEcp {
    eigenvalues: Vec<f64>,
    sigma_y: f64,
}

impl MultivariateEcp {
    pub fn new(design: &DMatrix<f64>, sigma_y: f64) -> Self {
        let gram = design.transpose() * design;
        let eig = SymmetricEigen::new(gram);
        let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        MultivariateEcp { eigenvalues, sigma_y }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
}

impl DivergenceMap for MultivariateEcp {
    fn eval(&self, tau: f64) -> Result<MapPoint> {
        let s2 = self.sigma_y * self.sigma_y;
        let mut value = 0.0;
        let mut derivative = 0.0;
        for &l in &self.eigenvalues {
            let c = l / s2;
            let a = c * tau;
            value += half_excess(a);
            derivative += 0.5 * c * a / (1.0 + a);
        }
        Ok(MapPoint::new(value, derivative))
    }
}

/// `-½ ln|I + tau XᵀX/σ²| + tau tr(XᵀX)/(2σ²)` and its derivative.
pub fn kld_multivariate(design: &DMatrix<f64>, sigma_y: f64, tau: f64) -> MapPoint {
    MultivariateEcp::new(design, sigma_y).eval(tau).expect("closed form")
}

/// The evidence-divergence map of a [`LinearModelSpec`].
#[derive(Debug, Clone, PartialEq)]
pub enum EcpMap {
    Scalar { x: f64, sigma_y: f64 },
    Multivariate(MultivariateEcp),
}

impl DivergenceMap for EcpMap {
    fn eval(&self, tau: f64) -> Result<MapPoint> {
        if !(tau >= 0.0) {
            return Err(domain(format!("tau must be >= 0, got {tau}")));
        }
        match self {
            EcpMap::Scalar { x, sigma_y } => Ok(kld_linear(*x, *sigma_y, tau)),
            EcpMap::Multivariate(m) => m.eval(tau),
        }
    }
}

/// The Jensen-bound map `tau tr(XᵀX) / (2 sigma_y²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredcpLinearMap {
    pub trace: f64,
    pub sigma_y: f64,
}

impl DivergenceMap for PredcpLinearMap {
    fn eval(&self, tau: f64) -> Result<MapPoint> {
        if !(tau >= 0.0) {
            return Err(domain(format!("tau must be >= 0, got {tau}")));
        }
        let c = self.trace / (2.0 * self.sigma_y * self.sigma_y);
        Ok(MapPoint::new(c * tau, c))
    }
}

fn normal_pdf_var(x: f64, var: f64) -> f64 {
    (-0.5 * x * x / var).exp() / (2.0 * PI * var).sqrt()
}

/// Marginal prior on the coefficient: `∫ N(beta; 0, tau) pi(tau) dtau`.
pub fn marginal_beta_density<M: DivergenceMap + ?Sized>(
    prior: &KldPriorSpec,
    map: &M,
    beta: f64,
    cfg: &QuadConfig,
) -> Result<Integral> {
    if !beta.is_finite() {
        return Err(domain("beta must be finite"));
    }
    integrate_fallible(
        |tau: f64| {
            if tau <= 0.0 {
                return Ok(0.0);
            }
            let n = normal_pdf_var(beta, tau);
            if n == 0.0 {
                return Ok(0.0);
            }
            Ok(n * cov_density(prior, map, tau)?)
        },
        |g| integrate_semi_infinite(g, 0.0, cfg),
    )
}

/// Density of the shrinkage coefficient `kappa = 1 / (1 + tau)`.
pub fn shrinkage_profile<M: DivergenceMap + ?Sized>(prior: &KldPriorSpec, map: &M, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(domain(format!("kappa must lie in (0, 1), got {kappa}")));
    }
    let tau = 1.0 / kappa - 1.0;
    if !tau.is_finite() {
        return Ok(0.0);
    }
    Ok(cov_density(prior, map, tau)? / kappa / kappa)
}

/// `P(kappa > k)` for the shrinkage profile, by quadrature over `(k, 1)`.
pub fn shrinkage_upper_mass<M: DivergenceMap + ?Sized>(
    prior: &KldPriorSpec,
    map: &M,
    k: f64,
    cfg: &QuadConfig,
) -> Result<Integral> {
    if !(k > 0.0 && k < 1.0) {
        return Err(domain(format!("kappa must lie in (0, 1), got {k}")));
    }
    integrate_fallible(
        |kappa| {
            if kappa >= 1.0 {
                return Ok(0.0);
            }
            shrinkage_profile(prior, map, kappa)
        },
        |g| integrate(g, k, 1.0, cfg),
    )
}

/// `P(tau > t)` under the pulled-back density, by quadrature.
pub fn tail_probability<M: DivergenceMap + ?Sized>(
    prior: &KldPriorSpec,
    map: &M,
    t: f64,
    cfg: &QuadConfig,
) -> Result<Integral> {
    if !(t >= 0.0) {
        return Err(domain(format!("threshold must be >= 0, got {t}")));
    }
    integrate_fallible(
        |tau| cov_density(prior, map, tau),
        |g| integrate_semi_infinite(g, t, cfg),
    )
    .map(|mut r| {
        r.value = r.value.clamp(0.0, 1.0);
        r
    })
}

/// Direct prior on the slope `beta1` of `y = beta0 + beta1 x`, with
/// `beta0 ~ N(0, sigma_beta0²)` and base model `beta1 = 0`:
///
/// `½ pi_KL(beta1² x² / (2(σ_y² + σ_β0²))) |beta1 x² / (σ_y² + σ_β0²)|`.
///
/// The factor ½ accounts for the two-to-one map `beta1 -> KL`.
pub fn ecp_beta1_density(prior: &KldPriorSpec, spec: &LinearModelSpec, beta1: f64) -> Result<f64> {
    let x = match spec.design {
        Design::Scalar(x) => x,
        Design::Matrix(_) => return Err(invalid("the slope prior needs a scalar feature")),
    };
    if !beta1.is_finite() {
        return Err(domain("beta1 must be finite"));
    }
    let v = spec.noise_sd.powi(2) + spec.intercept_sd.powi(2);
    let kl = beta1 * beta1 * x * x / (2.0 * v);
    let volume = (beta1 * x * x / v).abs();
    if volume == 0.0 {
        return Ok(0.0);
    }
    Ok(0.5 * prior.pdf(kl + EPS_KL)? * volume)
}

/// Product second-moment non-local density `(beta²/σ) N(beta; 0, σ)`, where
/// `σ` is the variance of the normal factor.
pub fn nonlocal_pdf(sigma: f64, beta: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(domain(format!("non-local scale must be > 0, got {sigma}")));
    }
    Ok(beta * beta / sigma * normal_pdf_var(beta, sigma))
}

/// An `rows x cols` design with unit-norm rows spanning exactly `rank`
/// coordinate directions, with rows spread as evenly as possible across them.
pub fn unit_row_design(rows: usize, cols: usize, rank: usize) -> Result<DMatrix<f64>> {
    if rank == 0 || rank > cols || rank > rows {
        return Err(domain(format!(
            "rank must lie in 1..=min(rows, cols), got {rank} for {rows}x{cols}"
        )));
    }
    Ok(DMatrix::from_fn(
        rows,
        cols,
        |i, j| if i % rank == j { 1.0 } else { 0.0 },
    ))
}
