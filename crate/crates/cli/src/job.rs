//! Fully resolved runs. A [`Job`] is what `manifest.json` records and what
//! `replay` executes, so it carries every value that affects the output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use predcp::divergence::{cov_density, DivergenceMap};
use predcp::linear::{
    ecp_beta1_density, marginal_beta_density, nonlocal_pdf, shrinkage_profile, tail_probability, unit_row_design,
};
use predcp::predcp::{
    check_monotone, check_propriety, depthwise_log_predcp, joint_density_grid, meta_modular_log_prior,
};
use predcp::quadrature::QuadConfig;
use predcp::rng::derive;
use predcp::sampler::{sample_function_draws, sample_tau, FunctionDrawConfig, PriorKind};
use predcp::{KldPriorSpec, LinearModelSpec, McConfig, McMap, NetworkSpec, PriorEvalResult, SamplerConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::model::{MetaModel, Model, NetworkModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    /// Exact expected KL of the marginal likelihood (linear models only).
    Ecp,
    /// Predictive divergence from the point-mass base model.
    Predcp,
}

/// Which block of a network is perturbed, and the scales of the others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetTarget {
    pub layer: usize,
    pub taus: Vec<f64>,
    pub mc: McConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "by", rename_all = "snake_case")]
pub enum Sweep {
    Threshold {
        thresholds: Vec<f64>,
    },
    Rank {
        threshold: f64,
        rows: usize,
        max_rank: usize,
    },
    Scale {
        threshold: f64,
        alphas: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Job {
    EcpDensity {
        prior: KldPriorSpec,
        model: LinearModelSpec,
        tau: Vec<f64>,
    },
    PredcpDensity {
        prior: KldPriorSpec,
        model: Model,
        target: Option<NetTarget>,
        tau: Vec<f64>,
    },
    Marginal {
        prior: KldPriorSpec,
        model: LinearModelSpec,
        map: MapKind,
        beta: Vec<f64>,
    },
    Shrinkage {
        prior: KldPriorSpec,
        model: LinearModelSpec,
        map: MapKind,
        kappa: Vec<f64>,
    },
    TailProb {
        prior: KldPriorSpec,
        model: LinearModelSpec,
        map: MapKind,
        sweep: Sweep,
    },
    Beta1Density {
        prior: KldPriorSpec,
        model: LinearModelSpec,
        beta1: Vec<f64>,
    },
    Nonlocal {
        scale: f64,
        beta: Vec<f64>,
    },
    Depthwise {
        prior: KldPriorSpec,
        model: NetworkModel,
        taus: Vec<f64>,
        mc: McConfig,
    },
    JointGrid {
        prior: KldPriorSpec,
        model: NetworkModel,
        tau1: Vec<f64>,
        tau2: Vec<f64>,
        mc: McConfig,
    },
    MetaPrior {
        prior: KldPriorSpec,
        model: MetaModel,
        taus: Vec<f64>,
        mc: McConfig,
    },
    SampleTau {
        prior: KldPriorSpec,
        model: Model,
        map: MapKind,
        target: Option<NetTarget>,
        draws: usize,
        seed: u64,
        sampler: SamplerConfig,
    },
    SampleFunctions {
        kind: PriorKind,
        network: NetworkSpec,
        x: Vec<f64>,
        draws: usize,
        seed: u64,
        config: FunctionDrawConfig,
    },
    CheckPropriety {
        prior: KldPriorSpec,
        model: Model,
        map: MapKind,
        target: Option<NetTarget>,
        tolerance: f64,
    },
    CheckMonotone {
        model: Model,
        map: MapKind,
        target: Option<NetTarget>,
        tau: Vec<f64>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub job: Job,
}

impl Manifest {
    pub fn new(job: Job) -> Self {
        Manifest {
            tool: "predcp".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            job,
        }
    }
}

/// Rows of a CSV file with a fixed header. Floats keep 17 significant digits.
struct Csv(String);

enum Cell<'a> {
    F(f64),
    U(usize),
    B(bool),
    S(&'a str),
}

impl Csv {
    fn new(header: &str) -> Self {
        Csv(format!("{header}\n"))
    }

    fn row(&mut self, cells: &[Cell]) {
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.0.push(',');
            }
            let _ = match c {
                Cell::F(v) => write!(self.0, "{v:.16e}"),
                Cell::U(v) => write!(self.0, "{v}"),
                Cell::B(v) => write!(self.0, "{v}"),
                Cell::S(v) => write!(self.0, "{v}"),
            };
        }
        self.0.push('\n');
    }
}

pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Output { dir: dir.to_path_buf() })
    }

    fn write(&self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|source| CliError::Io { path, source })
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.write(name, &text)
    }

    pub fn manifest(&self, m: &Manifest) -> CliResult<()> {
        self.json("manifest.json", m)
    }
}

/// Calls `f` with the divergence map described by `model`, `map` and `target`.
fn with_map<R>(
    model: &Model,
    map: MapKind,
    target: Option<&NetTarget>,
    f: impl FnOnce(&dyn DivergenceMap) -> CliResult<R>,
) -> CliResult<R> {
    match model {
        Model::Linear(spec) => match map {
            MapKind::Ecp => f(&spec.ecp_map()),
            MapKind::Predcp => f(&spec.predcp_map()),
        },
        Model::Network(nm) => {
            if map == MapKind::Ecp {
                return Err(CliError::Input("the closed-form ECP needs a linear model".into()));
            }
            let target = target.ok_or_else(|| CliError::Input("network maps need a target layer".into()))?;
            let (net, x) = nm.build()?;
            let m = McMap::new(&net, &x, nm.observation, target.taus.clone(), target.layer, target.mc)?;
            f(&m)
        }
    }
}

fn linear_map<R>(
    spec: &LinearModelSpec,
    map: MapKind,
    f: impl FnOnce(&dyn DivergenceMap) -> CliResult<R>,
) -> CliResult<R> {
    with_map(&Model::Linear(spec.clone()), map, None, f)
}

fn density_csv(prior: &KldPriorSpec, map: &dyn DivergenceMap, taus: &[f64]) -> CliResult<String> {
    let mut csv = Csv::new("tau,divergence,derivative,density");
    for &t in taus {
        let p = map.eval(t)?;
        let d = cov_density(prior, map, t)?;
        csv.row(&[Cell::F(t), Cell::F(p.value), Cell::F(p.derivative), Cell::F(d)]);
    }
    Ok(csv.0)
}

fn layers_csv(r: &PriorEvalResult) -> String {
    let mut csv = Csv::new("layer,kappa,dkappa_dtau,logdensity,std_error");
    for t in &r.layers {
        csv.row(&[
            Cell::U(t.layer),
            Cell::F(t.kappa),
            Cell::F(t.dkappa_dtau),
            Cell::F(t.log_density),
            Cell::F(t.std_error),
        ]);
    }
    csv.0
}

impl Job {
    pub fn run(&self, out: &Output) -> CliResult<()> {
        let quad = QuadConfig::default();
        match self {
            Job::EcpDensity { prior, model, tau } => {
                let csv = linear_map(model, MapKind::Ecp, |m| density_csv(prior, m, tau))?;
                out.write("ecp_density.csv", &csv)
            }
            Job::PredcpDensity {
                prior,
                model,
                target,
                tau,
            } => {
                let csv = with_map(model, MapKind::Predcp, target.as_ref(), |m| density_csv(prior, m, tau))?;
                out.write("predcp_density.csv", &csv)
            }
            Job::Marginal {
                prior,
                model,
                map,
                beta,
            } => {
                let mut csv = Csv::new("beta,density,abs_error");
                linear_map(model, *map, |m| {
                    for &b in beta {
                        let r = marginal_beta_density(prior, m, b, &quad)?;
                        csv.row(&[Cell::F(b), Cell::F(r.value), Cell::F(r.abs_error)]);
                    }
                    Ok(())
                })?;
                out.write("marginal.csv", &csv.0)
            }
            Job::Shrinkage {
                prior,
                model,
                map,
                kappa,
            } => {
                let mut csv = Csv::new("kappa,density");
                linear_map(model, *map, |m| {
                    for &k in kappa {
                        csv.row(&[Cell::F(k), Cell::F(shrinkage_profile(prior, m, k)?)]);
                    }
                    Ok(())
                })?;
                out.write("shrinkage.csv", &csv.0)
            }
            Job::TailProb {
                prior,
                model,
                map,
                sweep,
            } => {
                let mut csv = Csv::new("sweep,parameter,threshold,probability,abs_error");
                let mut row = |name: &str, param: f64, t: f64, spec: &LinearModelSpec| -> CliResult<()> {
                    let r = linear_map(spec, *map, |m| Ok(tail_probability(prior, m, t, &quad)?))?;
                    csv.row(&[
                        Cell::S(name),
                        Cell::F(param),
                        Cell::F(t),
                        Cell::F(r.value),
                        Cell::F(r.abs_error),
                    ]);
                    Ok(())
                };
                match sweep {
                    Sweep::Threshold { thresholds } => {
                        for &t in thresholds {
                            row("threshold", t, t, model)?;
                        }
                    }
                    Sweep::Rank {
                        threshold,
                        rows,
                        max_rank,
                    } => {
                        for r in 1..=*max_rank {
                            let spec = LinearModelSpec::matrix(unit_row_design(*rows, *max_rank, r)?, model.noise_sd)?;
                            row("rank", r as f64, *threshold, &spec)?;
                        }
                    }
                    Sweep::Scale { threshold, alphas } => {
                        for &a in alphas {
                            let design = match &model.design {
                                predcp::linear::Design::Scalar(x) => predcp::linear::Design::Scalar(a * x),
                                predcp::linear::Design::Matrix(x) => predcp::linear::Design::Matrix(x * a),
                            };
                            let spec = LinearModelSpec {
                                design,
                                ..model.clone()
                            };
                            spec.validate()?;
                            row("scale", a, *threshold, &spec)?;
                        }
                    }
                }
                out.write("tail_prob.csv", &csv.0)
            }
            Job::Beta1Density { prior, model, beta1 } => {
                let mut csv = Csv::new("beta1,density");
                for &b in beta1 {
                    csv.row(&[Cell::F(b), Cell::F(ecp_beta1_density(prior, model, b)?)]);
                }
                out.write("beta1_density.csv", &csv.0)
            }
            Job::Nonlocal { scale, beta } => {
                let mut csv = Csv::new("beta,density");
                for &b in beta {
                    csv.row(&[Cell::F(b), Cell::F(nonlocal_pdf(*scale, b)?)]);
                }
                out.write("nonlocal.csv", &csv.0)
            }
            Job::Depthwise { prior, model, taus, mc } => {
                let (net, x) = model.build()?;
                let r = depthwise_log_predcp(prior, &net, &x, &model.observation, taus, mc)?;
                out.write("depthwise.csv", &layers_csv(&r))?;
                out.json("depthwise.json", &r)
            }
            Job::JointGrid {
                prior,
                model,
                tau1,
                tau2,
                mc,
            } => {
                let (net, x) = model.build()?;
                let cells = joint_density_grid(prior, &net, &x, &model.observation, tau1, tau2, mc)?;
                let mut csv = Csv::new("tau1,tau2,density,degenerate");
                for c in &cells {
                    csv.row(&[
                        Cell::F(c.tau1),
                        Cell::F(c.tau2),
                        Cell::F(c.density),
                        Cell::B(c.degenerate),
                    ]);
                }
                out.write("joint_grid.csv", &csv.0)
            }
            Job::MetaPrior { prior, model, taus, mc } => {
                let (modules, tasks) = model.build()?;
                let r = meta_modular_log_prior(prior, &modules, taus, &tasks, mc)?;
                out.write("meta_prior.csv", &layers_csv(&r))?;
                out.json("meta_prior.json", &r)
            }
            Job::SampleTau {
                prior,
                model,
                map,
                target,
                draws,
                seed,
                sampler,
            } => {
                let mut csv = Csv::new("draw_id,tau,residual,mode");
                with_map(model, *map, target.as_ref(), |m| {
                    for i in 0..*draws {
                        let d = sample_tau(prior, m, sampler, derive(*seed, &[i as u64]))?;
                        csv.row(&[Cell::U(i), Cell::F(d.tau), Cell::F(d.residual), Cell::S(d.mode.name())]);
                    }
                    Ok(())
                })?;
                out.write("tau_draws.csv", &csv.0)
            }
            Job::SampleFunctions {
                kind,
                network,
                x,
                draws,
                seed,
                config,
            } => {
                let curves = sample_function_draws(*kind, network, x, *draws, *seed, config)?;
                let mut ys = Csv::new("draw_id,x,y");
                let mut ts = Csv::new("draw_id,layer,tau");
                for (i, c) in curves.iter().enumerate() {
                    for (xv, y) in x.iter().zip(&c.y) {
                        ys.row(&[Cell::U(i), Cell::F(*xv), Cell::F(*y)]);
                    }
                    for (l, t) in c.taus.iter().enumerate() {
                        ts.row(&[Cell::U(i), Cell::U(l + 1), Cell::F(*t)]);
                    }
                }
                out.write("functions.csv", &ys.0)?;
                out.write("function_taus.csv", &ts.0)
            }
            Job::CheckPropriety {
                prior,
                model,
                map,
                target,
                tolerance,
            } => {
                let report = with_map(model, *map, target.as_ref(), |m| Ok(check_propriety(prior, m, &quad)?))?;
                let proper = report.is_proper(*tolerance);
                out.json(
                    "propriety.json",
                    &serde_json::json!({ "report": report, "tolerance": tolerance, "proper": proper }),
                )?;
                if proper {
                    Ok(())
                } else {
                    Err(CliError::Verification(format!(
                        "integral {} (converged: {}, monotone: {}) is not within 1 +/- {tolerance}",
                        report.integral, report.converged, report.monotone.passed
                    )))
                }
            }
            Job::CheckMonotone {
                model,
                map,
                target,
                tau,
            } => {
                let report = with_map(model, *map, target.as_ref(), |m| Ok(check_monotone(m, tau)?))?;
                out.json("monotone.json", &report)?;
                match (report.passed, report.first_violation) {
                    (true, _) => Ok(()),
                    (false, Some(v)) => Err(CliError::Verification(format!(
                        "map not strictly increasing at tau = {} (grid index {})",
                        v.tau, v.index
                    ))),
                    (false, None) => Err(CliError::Verification("monotonicity check failed".into())),
                }
            }
        }
    }
}
