//! Divergence maps and the change-of-variables density built on them.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::kld_prior::KldPriorSpec;
use crate::EPS_KL;

/// `D(tau)` and `dD/dtau` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapPoint {
    pub value: f64,
    pub derivative: f64,
}

impl MapPoint {
    pub fn new(value: f64, derivative: f64) -> Self {
        MapPoint { value, derivative }
    }
}

/// A scalar divergence map `tau -> (D(tau), D'(tau))` on `tau >= 0`.
///
/// For the pulled-back density to be proper the map must start at zero,
/// increase strictly and be unbounded.
pub trait DivergenceMap {
    fn eval(&self, tau: f64) -> Result<MapPoint>;
}

impl<F> DivergenceMap for F
where
    F: Fn(f64) -> Result<MapPoint>,
{
    fn eval(&self, tau: f64) -> Result<MapPoint> {
        self(tau)
    }
}

/// `pi_KL(D(tau) + eps_KL) * |D'(tau)|`.
pub fn cov_density<M: DivergenceMap + ?Sized>(prior: &KldPriorSpec, map: &M, tau: f64) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(domain(format!("tau must be >= 0, got {tau}")));
    }
    let p = map.eval(tau)?;
    Ok(prior.pdf(p.value.max(0.0) + EPS_KL)? * p.derivative.abs())
}

/// `ln pi_KL(D(tau) + eps_KL) + ln |D'(tau)|`; `-inf` when the map is flat.
pub fn cov_log_density<M: DivergenceMap + ?Sized>(prior: &KldPriorSpec, map: &M, tau: f64) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(domain(format!("tau must be >= 0, got {tau}")));
    }
    let p = map.eval(tau)?;
    Ok(prior.log_pdf(p.value.max(0.0) + EPS_KL)? + p.derivative.abs().ln())
}

/// A map with its derivative rescaled; used to build deliberately broken
/// maps when testing the propriety check.
pub struct ScaledDerivative<M> {
    pub inner: M,
    pub factor: f64,
}

impl<M: DivergenceMap> DivergenceMap for ScaledDerivative<M> {
    fn eval(&self, tau: f64) -> Result<MapPoint> {
        let p = self.inner.eval(tau)?;
        Ok(MapPoint::new(p.value, p.derivative * self.factor))
    }
}
