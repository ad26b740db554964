//! Density families placed on the divergence value.
//!
//! Parameterization registry (the JSON keys accepted by [`KldPriorSpec`]):
//!
//! | family              | keys                                               | density |
//! |---------------------|----------------------------------------------------|---------|
//! | `exponential`       | `scale` (λ)                                        | e^{-x/λ}/λ |
//! | `gamma`             | `shape` (k), `scale` (θ)                           | x^{k-1} e^{-x/θ} / (Γ(k) θ^k) |
//! | `log_cauchy`        | `scale` (λ)                                        | λ / (π x ((ln x)² + λ²)) |
//! | `half_cauchy`       | `scale` (s)                                        | 2 / (π s (1 + (x/s)²)) |
//! | `gamma_exp_mixture` | `weight`, `gamma_shape`, `gamma_scale`, `exp_scale` | w·Gamma + (1-w)·Exponential |
//!
//! All scales are scales, never rates. The gamma density carries the full
//! `θ^k` normalizer; dropping it gives a function that integrates to one only
//! when `k = 1`.

use std::collections::BTreeMap;
use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_distr::{Cauchy, Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, invalid, Result};
use crate::rng;

/// A density family with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Exponential {
        scale: f64,
    },
    Gamma {
        shape: f64,
        scale: f64,
    },
    LogCauchy {
        scale: f64,
    },
    HalfCauchy {
        scale: f64,
    },
    GammaExpMixture {
        weight: f64,
        gamma_shape: f64,
        gamma_scale: f64,
        exp_scale: f64,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Exponential { .. } => "exponential",
            Family::Gamma { .. } => "gamma",
            Family::LogCauchy { .. } => "log_cauchy",
            Family::HalfCauchy { .. } => "half_cauchy",
            Family::GammaExpMixture { .. } => "gamma_exp_mixture",
        }
    }

    fn params(&self) -> BTreeMap<String, f64> {
        let pairs: Vec<(&str, f64)> = match *self {
            Family::Exponential { scale } => vec![("scale", scale)],
            Family::Gamma { shape, scale } => vec![("shape", shape), ("scale", scale)],
            Family::LogCauchy { scale } => vec![("scale", scale)],
            Family::HalfCauchy { scale } => vec![("scale", scale)],
            Family::GammaExpMixture {
                weight,
                gamma_shape,
                gamma_scale,
                exp_scale,
            } => vec![
                ("weight", weight),
                ("gamma_shape", gamma_shape),
                ("gamma_scale", gamma_scale),
                ("exp_scale", exp_scale),
            ],
        };
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

/// A validated `pi_KL` specification.
///
/// Serialized as `{"family": "<name>", "params": {"<key>": <number>, ...}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct KldPriorSpec {
    family: Family,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    family: String,
    #[serde(default)]
    params: BTreeMap<String, f64>,
}

impl From<KldPriorSpec> for RawSpec {
    fn from(spec: KldPriorSpec) -> Self {
        RawSpec {
            family: spec.family.name().to_string(),
            params: spec.family.params(),
        }
    }
}

impl TryFrom<RawSpec> for KldPriorSpec {
    type Error = crate::Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let name =
            canonical_name(&raw.family).ok_or_else(|| invalid(format!("unknown pi_KL family '{}'", raw.family)))?;
        let keys: &[&str] = match name {
            "exponential" | "log_cauchy" | "half_cauchy" => &["scale"],
            "gamma" => &["shape", "scale"],
            _ => &["weight", "gamma_shape", "gamma_scale", "exp_scale"],
        };
        if let Some(extra) = raw.params.keys().find(|k| !keys.contains(&k.as_str())) {
            return Err(invalid(format!(
                "unknown parameter '{extra}' for family '{name}' (expected {keys:?})"
            )));
        }
        let get = |k: &str| {
            raw.params
                .get(k)
                .copied()
                .ok_or_else(|| invalid(format!("family '{name}' requires parameter '{k}'")))
        };
        let family = match name {
            "exponential" => Family::Exponential { scale: get("scale")? },
            "gamma" => Family::Gamma {
                shape: get("shape")?,
                scale: get("scale")?,
            },
            "log_cauchy" => Family::LogCauchy { scale: get("scale")? },
            "half_cauchy" => Family::HalfCauchy { scale: get("scale")? },
            _ => Family::GammaExpMixture {
                weight: get("weight")?,
                gamma_shape: get("gamma_shape")?,
                gamma_scale: get("gamma_scale")?,
                exp_scale: get("exp_scale")?,
            },
        };
        KldPriorSpec::new(family)
    }
}

fn canonical_name(name: &str) -> Option<&'static str> {
    let folded: String = name
        .trim()
        .to_ascii_lowercase()
        .chars()
        .filter(|c| !matches!(c, '_' | '-' | ' '))
        .collect();
    match folded.as_str() {
        "exponential" | "exp" => Some("exponential"),
        "gamma" => Some("gamma"),
        "logcauchy" => Some("log_cauchy"),
        "halfcauchy" => Some("half_cauchy"),
        "gammaexpmixture" | "mixture" | "gem" => Some("gamma_exp_mixture"),
        _ => None,
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite and > 0, got {v}")))
    }
}

impl KldPriorSpec {
    pub fn new(family: Family) -> Result<Self> {
        match family {
            Family::Exponential { scale } | Family::LogCauchy { scale } | Family::HalfCauchy { scale } => {
                check_positive("scale", scale)?
            }
            Family::Gamma { shape, scale } => {
                check_positive("shape", shape)?;
                check_positive("scale", scale)?;
            }
            Family::GammaExpMixture {
                weight,
                gamma_shape,
                gamma_scale,
                exp_scale,
            } => {
                if !(0.0..=1.0).contains(&weight) {
                    return Err(invalid(format!("mixture weight must lie in [0, 1], got {weight}")));
                }
                check_positive("gamma_shape", gamma_shape)?;
                check_positive("gamma_scale", gamma_scale)?;
                check_positive("exp_scale", exp_scale)?;
            }
        }
        Ok(KldPriorSpec { family })
    }

    pub fn exponential(scale: f64) -> Result<Self> {
        Self::new(Family::Exponential { scale })
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        Self::new(Family::Gamma { shape, scale })
    }

    pub fn log_cauchy(scale: f64) -> Result<Self> {
        Self::new(Family::LogCauchy { scale })
    }

    pub fn half_cauchy(scale: f64) -> Result<Self> {
        Self::new(Family::HalfCauchy { scale })
    }

    pub fn mixture(weight: f64, gamma_shape: f64, gamma_scale: f64, exp_scale: f64) -> Result<Self> {
        Self::new(Family::GammaExpMixture {
            weight,
            gamma_shape,
            gamma_scale,
            exp_scale,
        })
    }

    /// The family with the parameter values used throughout the linear
    /// regression figures: exponential(0.5), gamma(0.2, 2), log-Cauchy(1),
    /// half-Cauchy(1), and the 0.5 gamma/exponential mixture of those.
    pub fn default_for(name: &str) -> Result<Self> {
        let family = match canonical_name(name) {
            Some("exponential") => Family::Exponential { scale: 0.5 },
            Some("gamma") => Family::Gamma { shape: 0.2, scale: 2.0 },
            Some("log_cauchy") => Family::LogCauchy { scale: 1.0 },
            Some("half_cauchy") => Family::HalfCauchy { scale: 1.0 },
            Some(_) => Family::GammaExpMixture {
                weight: 0.5,
                gamma_shape: 0.2,
                gamma_scale: 2.0,
                exp_scale: 0.5,
            },
            None => return Err(invalid(format!("unknown pi_KL family '{name}'"))),
        };
        Self::new(family)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Density at `x >= 0`.
    pub fn pdf(&self, x: f64) -> Result<f64> {
        if x.is_nan() || x < 0.0 {
            return Err(domain(format!("pi_KL evaluated at negative or NaN x = {x}")));
        }
        Ok(match self.family {
            Family::Exponential { scale } => exponential_pdf(scale, x),
            Family::Gamma { shape, scale } => gamma_pdf(shape, scale, x),
            Family::LogCauchy { scale } => {
                if x == 0.0 {
                    return Err(domain("log-Cauchy density is undefined at x = 0"));
                }
                let l = x.ln();
                scale / (PI * x * (l * l + scale * scale))
            }
            Family::HalfCauchy { scale } => {
                let z = x / scale;
                2.0 / (PI * scale * (1.0 + z * z))
            }
            Family::GammaExpMixture {
                weight,
                gamma_shape,
                gamma_scale,
                exp_scale,
            } => {
                let g = if weight > 0.0 {
                    weight * gamma_pdf(gamma_shape, gamma_scale, x)
                } else {
                    0.0
                };
                let e = if weight < 1.0 {
                    (1.0 - weight) * exponential_pdf(exp_scale, x)
                } else {
                    0.0
                };
                g + e
            }
        })
    }

    /// Natural log of the density, computed without forming the density so it
    /// stays finite where `pdf` underflows.
    pub fn log_pdf(&self, x: f64) -> Result<f64> {
        if x.is_nan() || x < 0.0 {
            return Err(domain(format!("pi_KL evaluated at negative or NaN x = {x}")));
        }
        let value = match self.family {
            Family::Exponential { scale } => -scale.ln() - x / scale,
            Family::Gamma { shape, scale } => gamma_log_pdf(shape, scale, x),
            Family::LogCauchy { scale } => {
                if x == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    let l = x.ln();
                    scale.ln() - PI.ln() - l - (l * l + scale * scale).ln()
                }
            }
            Family::HalfCauchy { scale } => {
                let z = x / scale;
                let tail = if z > 1e150 { 2.0 * z.ln() } else { (z * z).ln_1p() };
                LN_2 - PI.ln() - scale.ln() - tail
            }
            Family::GammaExpMixture {
                weight,
                gamma_shape,
                gamma_scale,
                exp_scale,
            } => {
                let lg = if weight > 0.0 {
                    weight.ln() + gamma_log_pdf(gamma_shape, gamma_scale, x)
                } else {
                    f64::NEG_INFINITY
                };
                let le = if weight < 1.0 {
                    (1.0 - weight).ln() - exp_scale.ln() - x / exp_scale
                } else {
                    f64::NEG_INFINITY
                };
                log_add_exp(lg, le)
            }
        };
        if value == f64::NEG_INFINITY {
            return Err(domain(format!(
                "{} density is exactly zero at x = {x}",
                self.family.name()
            )));
        }
        Ok(value)
    }

    /// One draw using the supplied generator.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            Family::Exponential { scale } => sample_exponential(scale, rng),
            Family::Gamma { shape, scale } => sample_gamma(shape, scale, rng),
            Family::LogCauchy { scale } => Cauchy::new(0.0, scale).expect("validated").sample(rng).exp(),
            Family::HalfCauchy { scale } => Cauchy::new(0.0, scale).expect("validated").sample(rng).abs(),
            Family::GammaExpMixture {
                weight,
                gamma_shape,
                gamma_scale,
                exp_scale,
            } => {
                let u: f64 = rng.random();
                if u < weight {
                    sample_gamma(gamma_shape, gamma_scale, rng)
                } else {
                    sample_exponential(exp_scale, rng)
                }
            }
        }
    }

    /// `n` draws from the stream identified by `seed`.
    pub fn sample_n(&self, seed: u64, n: usize) -> Vec<f64> {
        let mut rng = rng::stream(seed, &[rng::tag::KLD_PRIOR]);
        (0..n).map(|_| self.sample(&mut rng)).collect()
    }

    /// A single draw that is a pure function of `seed`.
    pub fn sample_seeded(&self, seed: u64) -> f64 {
        self.sample_n(seed, 1)[0]
    }
}

fn exponential_pdf(scale: f64, x: f64) -> f64 {
    (-x / scale).exp() / scale
}

fn gamma_pdf(shape: f64, scale: f64, x: f64) -> f64 {
    if x == 0.0 {
        return if shape < 1.0 {
            f64::INFINITY
        } else if shape == 1.0 {
            1.0 / scale
        } else {
            0.0
        };
    }
    gamma_log_pdf(shape, scale, x).exp()
}

fn gamma_log_pdf(shape: f64, scale: f64, x: f64) -> f64 {
    if x == 0.0 {
        return gamma_pdf(shape, scale, 0.0).ln();
    }
    (shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln()
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    if hi == f64::INFINITY {
        return hi;
    }
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

fn sample_exponential<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    Exp::new(1.0 / scale).expect("validated").sample(rng)
}

fn sample_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, scale).expect("validated").sample(rng)
}
