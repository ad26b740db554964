use serde::{Deserialize, Serialize};

use crate::divergence::{cov_density, DivergenceMap};
use crate::error::{domain, Result};
use crate::kld_prior::KldPriorSpec;
use crate::quadrature::{integrate_fallible, integrate_semi_infinite, QuadConfig};

/// `n` points spaced evenly in `log10` from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)
            }
        })
        .collect()
}

/// The first grid point where a map fails to be strictly increasing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub tau: f64,
    pub value: f64,
    pub derivative: f64,
    /// The value at the previous grid point, when the failure is a
    /// non-increasing step.
    pub previous_value: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotoneReport {
    pub passed: bool,
    pub points: usize,
    pub first_violation: Option<Violation>,
}

/// Checks that values increase strictly along `grid` and that every
/// derivative is strictly positive. Monte-Carlo maps should hold their seed
/// fixed so the check sees one realization of the map.
pub fn check_monotone<M: DivergenceMap + ?Sized>(map: &M, grid: &[f64]) -> Result<MonotoneReport> {
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(domain("monotonicity grid must be strictly ascending"));
    }
    let mut prev: Option<f64> = None;
    for (index, &tau) in grid.iter().enumerate() {
        let p = map.eval(tau)?;
        let step_ok = prev.map_or(true, |v| p.value > v);
        if !(p.derivative > 0.0) || !step_ok {
            return Ok(MonotoneReport {
                passed: false,
                points: grid.len(),
                first_violation: Some(Violation {
                    index,
                    tau,
                    value: p.value,
                    derivative: p.derivative,
                    previous_value: if step_ok { None } else { prev },
                }),
            });
        }
        prev = Some(p.value);
    }
    Ok(MonotoneReport {
        passed: true,
        points: grid.len(),
        first_violation: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProprietyReport {
    pub integral: f64,
    pub abs_error: f64,
    pub converged: bool,
    pub monotone: MonotoneReport,
}

impl ProprietyReport {
    /// Monotone, converged, and integrating to one within `tol`.
    pub fn is_proper(&self, tol: f64) -> bool {
        self.monotone.passed && self.converged && (self.integral - 1.0).abs() <= tol
    }
}

/// Integrates the pulled-back density over `(0, inf)`, after checking the map
/// for monotonicity on a log grid over `[1e-6, 1e4]`.
pub fn check_propriety<M: DivergenceMap + ?Sized>(
    prior: &KldPriorSpec,
    map: &M,
    cfg: &QuadConfig,
) -> Result<ProprietyReport> {
    let monotone = check_monotone(map, &log_grid(1e-6, 1e4, 41))?;
    let r = integrate_fallible(|t| cov_density(prior, map, t), |g| integrate_semi_infinite(g, 0.0, cfg))?;
    Ok(ProprietyReport {
        integral: r.value,
        abs_error: r.abs_error,
        converged: r.converged,
        monotone,
    })
}
