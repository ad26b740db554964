//! `predcp`: complexity-prior densities, samplers and checks from the command line.

// `!(lo <= hi)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
mod job;
mod model;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use predcp::nn::NetworkSpec;
use predcp::predcp::log_grid;
use predcp::sampler::{FunctionDrawConfig, PriorKind};
use predcp::{Family, KldPriorSpec, LinearModelSpec, McConfig, SamplerConfig, SamplerMode};

use error::{CliError, CliResult};
use job::{Job, Manifest, MapKind, NetTarget, Output, Sweep};
use model::{read_json, MetaModel, Model, NetworkModel};

const EXIT_CODES: &str = "\
Exit codes: 0 success, 2 invalid input or domain error, 3 numerical failure \
(degenerate or bounded map, failed verification), 64 usage error.
Every run writes manifest.json to --out; `predcp replay` re-runs it.
Floats are written with 17 significant digits.
Set PREDCP_THREADS to cap the worker pool.";

#[derive(Parser)]
#[command(name = "predcp", version, about = "Evidence and predictive complexity priors", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PriorArgs {
    /// pi_KL as JSON (`{"family": ..., "params": {...}}`), a family name with
    /// default parameters, or `name(p1,p2,...)`. Families: exponential(scale),
    /// gamma(shape,scale), log_cauchy(scale), half_cauchy(scale),
    /// mixture(weight,gamma_shape,gamma_scale,exp_scale).
    #[arg(long = "pi-kl", default_value = "exponential")]
    pi_kl: String,
}

#[derive(Args)]
struct LinearArgs {
    /// Linear model JSON: `{"x": 1.0}` or `{"design": [[...], ...]}`, with
    /// optional `sigma_y` and `sigma_beta0`.
    #[arg(long, conflicts_with = "x")]
    model: Option<PathBuf>,
    /// Scalar feature value (shorthand for a one-coefficient model).
    #[arg(long, allow_hyphen_values = true)]
    x: Option<f64>,
    #[arg(long)]
    sigma_y: Option<f64>,
}

#[derive(Args)]
struct AnyModelArgs {
    #[command(flatten)]
    linear: LinearArgs,
    /// Map for linear models.
    #[arg(long, value_enum, default_value = "predcp")]
    map: MapKind,
    /// Perturbed block of a network model (1-based).
    #[arg(long, default_value_t = 1)]
    layer: usize,
    /// Comma-separated scales of all network blocks; the target's entry is
    /// ignored. Defaults to 1 for every block.
    #[arg(long, value_delimiter = ',')]
    taus: Option<Vec<f64>>,
    #[command(flatten)]
    mc: McArgs,
}

#[derive(Args)]
struct NetworkArgs {
    /// Network model JSON: `{"network": {...}, "weights_seed": n,
    /// "observation": {...}, "inputs": [[...]] | {"rows": n, "seed": s}}`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    sigma_y: Option<f64>,
}

#[derive(Args)]
struct McArgs {
    #[arg(long, default_value_t = 100)]
    mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pair each odd sample with the negated noise of the one before.
    #[arg(long)]
    antithetic: bool,
}

impl McArgs {
    fn config(&self) -> McConfig {
        McConfig {
            samples: self.mc_samples,
            master_seed: self.seed,
            antithetic: self.antithetic,
        }
    }
}

/// Abscissa values: one value, an explicit list, or a generated grid.
#[derive(Args)]
struct GridArgs {
    #[arg(long = "tau", visible_aliases = ["beta", "kappa", "at"], allow_hyphen_values = true,
          conflicts_with_all = ["list", "min", "max", "points", "log_scale"])]
    at: Option<f64>,
    /// Comma-separated values.
    #[arg(long = "tau-grid", visible_aliases = ["grid", "beta-grid", "kappa-grid"], value_delimiter = ',',
          allow_hyphen_values = true, conflicts_with_all = ["min", "max", "points", "log_scale"])]
    list: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    max: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    /// Space points geometrically.
    #[arg(long)]
    log_scale: bool,
}

#[derive(Clone, Copy)]
struct GridDefault(f64, f64, usize, bool);

impl GridArgs {
    fn resolve(&self, d: GridDefault) -> CliResult<Vec<f64>> {
        if let Some(v) = self.at {
            return Ok(vec![v]);
        }
        if let Some(v) = &self.list {
            return Ok(v.clone());
        }
        let custom = self.min.is_some() || self.max.is_some() || self.points.is_some() || self.log_scale;
        let log = if custom { self.log_scale } else { d.3 };
        let (lo, hi, n) = (
            self.min.unwrap_or(d.0),
            self.max.unwrap_or(d.1),
            self.points.unwrap_or(d.2),
        );
        if n == 0 || !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(CliError::Input(format!("bad grid: min {lo}, max {hi}, points {n}")));
        }
        if log {
            if lo <= 0.0 {
                return Err(CliError::Input("a log-scale grid needs min > 0".into()));
            }
            return Ok(if n == 1 { vec![lo] } else { log_grid(lo, hi, n) });
        }
        if n == 1 {
            return Ok(vec![lo]);
        }
        Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
    }
}

#[derive(Args)]
struct SamplerArgs {
    #[arg(long, value_enum, default_value = "bisection-robust")]
    mode: ModeArg,
    /// Newton step size.
    #[arg(long, default_value_t = 5e-5)]
    alpha: f64,
    /// Newton iterations.
    #[arg(long, default_value_t = 20)]
    iterations: usize,
    /// Relative tolerance of the robust mode.
    #[arg(long, default_value_t = 1e-10)]
    tolerance: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    NewtonPaper,
    BisectionRobust,
}

impl SamplerArgs {
    fn config(&self) -> CliResult<SamplerConfig> {
        let cfg = SamplerConfig {
            alpha: self.alpha,
            iterations: self.iterations,
            mode: match self.mode {
                ModeArg::NewtonPaper => SamplerMode::NewtonPaper,
                ModeArg::BisectionRobust => SamplerMode::BisectionRobust,
            },
            tolerance: self.tolerance,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    StandardNormal,
    Horseshoe,
    Predcp,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Threshold,
    Rank,
    Scale,
}

#[derive(Args)]
struct OutArgs {
    /// Output directory; nothing is written outside it.
    #[arg(long, default_value = "predcp-out")]
    out: PathBuf,
}

const TAU: GridDefault = GridDefault(1e-3, 1e2, 200, true);
const BETA: GridDefault = GridDefault(-5.0, 5.0, 201, false);

#[derive(Subcommand)]
enum Command {
    /// Closed-form ECP density of a linear model's scale.
    /// Writes ecp_density.csv: tau,divergence,derivative,density
    EcpDensity {
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        model: LinearArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// PredCP density of a linear model's scale, or of one network block.
    /// Writes predcp_density.csv: tau,divergence,derivative,density
    PredcpDensity {
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        model: AnyModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Marginal prior on the coefficient.
    /// Writes marginal.csv: beta,density,abs_error
    Marginal {
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        model: LinearArgs,
        #[arg(long, value_enum, default_value = "ecp")]
        map: MapKind,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Density of the shrinkage coefficient kappa = 1/(1+tau).
    /// Writes shrinkage.csv: kappa,density
    Shrinkage {
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        model: LinearArgs,
        #[arg(long, value_enum, default_value = "ecp")]
        map: MapKind,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// P(tau > t), swept over thresholds, design rank or design scale.
    /// Writes tail_prob.csv: sweep,parameter,threshold,probability,abs_error
    TailProb {
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        model: LinearArgs,
        #[arg(long, value_enum, default_value = "ecp")]
        map: MapKind,
        #[arg(long, value_enum, default_value = "threshold")]
        sweep: SweepArg,
        /// Threshold for rank and scale sweeps.
        #[arg(long, default_value_t = 1.0)]
        threshold: f64,
        /// Largest rank of the unit-row designs (rank sweep).
        #[arg(long, default_value_t = 20)]
        max_rank: usize,
        /// Rows of the unit-row designs; defaults to --max-rank.
        #[arg(long)]
        rows: Option<usize>,
        /// Thresholds (threshold sweep) or design scales (scale sweep).
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Direct ECP on the slope of a regression with a Gaussian intercept.
    /// Writes beta1_density.csv: beta1,density
    Beta1Density {
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        model: LinearArgs,
        #[arg(long)]
        sigma_beta0: Option<f64>,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Product second-moment non-local density.
    /// Writes nonlocal.csv: beta,density
    Nonlocal {
        /// Variance of the normal factor.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Depth-wise log-PredCP of a network at given block scales.
    /// Writes depthwise.csv: layer,kappa,dkappa_dtau,logdensity,std_error and depthwise.json
    Depthwise {
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        model: NetworkArgs,
        /// Comma-separated block scales, one per block.
        #[arg(long, value_delimiter = ',', required = true)]
        taus: Vec<f64>,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Joint PredCP density of a two-block network over a (tau1, tau2) grid.
    /// Writes joint_grid.csv: tau1,tau2,density,degenerate (tau1 varies slowest)
    JointGrid {
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        model: NetworkArgs,
        /// Values for tau1; otherwise the grid flags.
        #[arg(long, value_delimiter = ',')]
        tau1_grid: Option<Vec<f64>>,
        /// Values for tau2; otherwise the grid flags.
        #[arg(long, value_delimiter = ',')]
        tau2_grid: Option<Vec<f64>>,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Modular meta-learning log-prior over module scales.
    /// Writes meta_prior.csv: layer,kappa,dkappa_dtau,logdensity,std_error and meta_prior.json
    MetaPrior {
        #[command(flatten)]
        prior: PriorArgs,
        /// Modular model JSON: `{"modules": [[[...]]] | {"dims": [...], "seed": s},
        /// "tasks": [[[...]] | {"rows": n, "seed": s}, ...]}`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        taus: Vec<f64>,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Draw scales by inverting the divergence map.
    /// Writes tau_draws.csv: draw_id,tau,residual,mode
    SampleTau {
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        model: AnyModelArgs,
        #[arg(long, default_value_t = 100)]
        draws: usize,
        /// Seed for the kappa draws.
        #[arg(long = "draw-seed", default_value_t = 0)]
        draw_seed: u64,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Prior function draws of a network on a one-dimensional grid.
    /// Writes functions.csv: draw_id,x,y and function_taus.csv: draw_id,layer,tau
    SampleFunctions {
        #[arg(long, value_enum, default_value = "predcp")]
        kind: KindArg,
        /// pi_KL for PredCP draws.
        #[arg(long = "pi-kl", default_value = "log_cauchy(1)")]
        pi_kl: String,
        /// Network JSON (`NetworkSpec` or a network model, whose spec is used).
        #[arg(long, conflicts_with_all = ["depth", "width", "plain"])]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        depth: usize,
        #[arg(long, default_value_t = 50)]
        width: usize,
        /// Drop the skip connections.
        #[arg(long)]
        plain: bool,
        #[arg(long, default_value_t = 5)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Monte-Carlo samples per layer map.
        #[arg(long, default_value_t = 5)]
        mc_samples: usize,
        #[command(flatten)]
        sampler: SamplerArgs,
        /// The input grid.
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Integrate the density and check the map is increasing.
    /// Writes propriety.json; exits 3 if the integral is not 1 within --tolerance.
    CheckPropriety {
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        model: AnyModelArgs,
        #[arg(long, default_value_t = 0.02)]
        tolerance: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Check the divergence map is strictly increasing on a grid.
    /// Writes monotone.json; exits 3 on the first violation.
    CheckMonotone {
        #[command(flatten)]
        model: AnyModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Re-run the job recorded in a manifest.json.
    Replay {
        manifest: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
}

fn parse_prior(s: &str) -> CliResult<KldPriorSpec> {
    let s = s.trim();
    if s.starts_with('{') {
        return serde_json::from_str(s).map_err(|e| CliError::Input(format!("--pi-kl: {e}")));
    }
    let Some((name, rest)) = s.split_once('(') else {
        return Ok(KldPriorSpec::default_for(s)?);
    };
    let args = rest
        .strip_suffix(')')
        .ok_or_else(|| CliError::Input(format!("--pi-kl: missing ')' in '{s}'")))?;
    let p: Vec<f64> = args
        .split(',')
        .map(|a| a.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Input(format!("--pi-kl: {e}")))?;
    let family = match (KldPriorSpec::default_for(name)?.family(), p.as_slice()) {
        (Family::Exponential { .. }, &[scale]) => Family::Exponential { scale },
        (Family::Gamma { .. }, &[shape, scale]) => Family::Gamma { shape, scale },
        (Family::LogCauchy { .. }, &[scale]) => Family::LogCauchy { scale },
        (Family::HalfCauchy { .. }, &[scale]) => Family::HalfCauchy { scale },
        (Family::GammaExpMixture { .. }, &[weight, gamma_shape, gamma_scale, exp_scale]) => Family::GammaExpMixture {
            weight,
            gamma_shape,
            gamma_scale,
            exp_scale,
        },
        (f, _) => {
            return Err(CliError::Input(format!(
                "--pi-kl: wrong number of parameters for {}",
                f.name()
            )))
        }
    };
    Ok(KldPriorSpec::new(family)?)
}

impl PriorArgs {
    fn resolve(&self) -> CliResult<KldPriorSpec> {
        parse_prior(&self.pi_kl)
    }
}

impl LinearArgs {
    fn resolve(&self) -> CliResult<LinearModelSpec> {
        let mut spec = match &self.model {
            Some(p) => read_json::<LinearModelSpec>(p)?,
            None => LinearModelSpec::scalar(self.x.unwrap_or(1.0), 1.0)?,
        };
        if let Some(s) = self.sigma_y {
            spec.noise_sd = s;
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl NetworkArgs {
    fn resolve(&self) -> CliResult<NetworkModel> {
        let mut m: NetworkModel = read_json(&self.model)?;
        if let Some(s) = self.sigma_y {
            m.set_sigma_y(s)?;
        }
        Ok(m)
    }
}

impl AnyModelArgs {
    fn resolve(&self) -> CliResult<(Model, Option<NetTarget>)> {
        let model = match (&self.linear.model, self.linear.x) {
            (Some(p), _) => read_json::<Model>(p)?,
            (None, x) => Model::Linear(LinearModelSpec::scalar(x.unwrap_or(1.0), 1.0)?),
        };
        match model {
            Model::Linear(_) => Ok((Model::Linear(self.linear.resolve()?), None)),
            Model::Network(mut nm) => {
                if let Some(s) = self.linear.sigma_y {
                    nm.set_sigma_y(s)?;
                }
                let taus = self.taus.clone().unwrap_or_else(|| vec![1.0; nm.network.depth]);
                let target = NetTarget {
                    layer: self.layer,
                    taus,
                    mc: self.mc.config(),
                };
                Ok((Model::Network(nm), Some(target)))
            }
        }
    }
}

fn resolve(command: Command) -> CliResult<(Job, PathBuf)> {
    Ok(match command {
        Command::EcpDensity {
            prior,
            model,
            grid,
            out,
        } => (
            Job::EcpDensity {
                prior: prior.resolve()?,
                model: model.resolve()?,
                tau: grid.resolve(TAU)?,
            },
            out.out,
        ),
        Command::PredcpDensity {
            prior,
            model,
            grid,
            out,
        } => {
            let (model, target) = model.resolve()?;
            (
                Job::PredcpDensity {
                    prior: prior.resolve()?,
                    model,
                    target,
                    tau: grid.resolve(TAU)?,
                },
                out.out,
            )
        }
        Command::Marginal {
            prior,
            model,
            map,
            grid,
            out,
        } => (
            Job::Marginal {
                prior: prior.resolve()?,
                model: model.resolve()?,
                map,
                beta: grid.resolve(BETA)?,
            },
            out.out,
        ),
        Command::Shrinkage {
            prior,
            model,
            map,
            grid,
            out,
        } => (
            Job::Shrinkage {
                prior: prior.resolve()?,
                model: model.resolve()?,
                map,
                kappa: grid.resolve(GridDefault(0.005, 0.995, 199, false))?,
            },
            out.out,
        ),
        Command::TailProb {
            prior,
            model,
            map,
            sweep,
            threshold,
            max_rank,
            rows,
            grid,
            out,
        } => {
            let sweep = match sweep {
                SweepArg::Threshold => Sweep::Threshold {
                    thresholds: grid.resolve(GridDefault(1e-2, 1e2, 41, true))?,
                },
                SweepArg::Rank => Sweep::Rank {
                    threshold,
                    rows: rows.unwrap_or(max_rank),
                    max_rank,
                },
                SweepArg::Scale => Sweep::Scale {
                    threshold,
                    alphas: grid.resolve(GridDefault(0.05, 5.0, 21, true))?,
                },
            };
            (
                Job::TailProb {
                    prior: prior.resolve()?,
                    model: model.resolve()?,
                    map,
                    sweep,
                },
                out.out,
            )
        }
        Command::Beta1Density {
            prior,
            model,
            sigma_beta0,
            grid,
            out,
        } => {
            let mut spec = model.resolve()?;
            if let Some(s) = sigma_beta0 {
                spec = spec.with_intercept_sd(s)?;
            }
            (
                Job::Beta1Density {
                    prior: prior.resolve()?,
                    model: spec,
                    beta1: grid.resolve(BETA)?,
                },
                out.out,
            )
        }
        Command::Nonlocal { scale, grid, out } => (
            Job::Nonlocal {
                scale,
                beta: grid.resolve(BETA)?,
            },
            out.out,
        ),
        Command::Depthwise {
            prior,
            model,
            taus,
            mc,
            out,
        } => (
            Job::Depthwise {
                prior: prior.resolve()?,
                model: model.resolve()?,
                taus,
                mc: mc.config(),
            },
            out.out,
        ),
        Command::JointGrid {
            prior,
            model,
            tau1_grid,
            tau2_grid,
            grid,
            mc,
            out,
        } => {
            let shared = GridDefault(0.0, 4.0, 40, false);
            let tau1 = match tau1_grid {
                Some(v) => v,
                None => grid.resolve(shared)?,
            };
            let tau2 = match tau2_grid {
                Some(v) => v,
                None => grid.resolve(shared)?,
            };
            (
                Job::JointGrid {
                    prior: prior.resolve()?,
                    model: model.resolve()?,
                    tau1,
                    tau2,
                    mc: mc.config(),
                },
                out.out,
            )
        }
        Command::MetaPrior {
            prior,
            model,
            taus,
            mc,
            out,
        } => (
            Job::MetaPrior {
                prior: prior.resolve()?,
                model: read_json::<MetaModel>(&model)?,
                taus,
                mc: mc.config(),
            },
            out.out,
        ),
        Command::SampleTau {
            prior,
            model,
            draws,
            draw_seed,
            sampler,
            out,
        } => {
            let map = model.map;
            let (model, target) = model.resolve()?;
            (
                Job::SampleTau {
                    prior: prior.resolve()?,
                    model,
                    map,
                    target,
                    draws,
                    seed: draw_seed,
                    sampler: sampler.config()?,
                },
                out.out,
            )
        }
        Command::SampleFunctions {
            kind,
            pi_kl,
            model,
            depth,
            width,
            plain,
            draws,
            seed,
            mc_samples,
            sampler,
            grid,
            out,
        } => {
            let network = match model {
                Some(p) => match read_json::<Model>(&p) {
                    Ok(Model::Network(nm)) => nm.network,
                    _ => read_json::<NetworkSpec>(&p)?,
                },
                None => NetworkSpec::new(2, width, 1, depth, !plain),
            };
            (
                Job::SampleFunctions {
                    kind: match kind {
                        KindArg::StandardNormal => PriorKind::StandardNormal,
                        KindArg::Horseshoe => PriorKind::Horseshoe,
                        KindArg::Predcp => PriorKind::Predcp,
                    },
                    network,
                    x: grid.resolve(GridDefault(-5.0, 5.0, 101, false))?,
                    draws,
                    seed,
                    config: FunctionDrawConfig {
                        prior: parse_prior(&pi_kl)?,
                        mc_samples,
                        sampler: sampler.config()?,
                    },
                },
                out.out,
            )
        }
        Command::CheckPropriety {
            prior,
            model,
            tolerance,
            out,
        } => {
            let map = model.map;
            let (model, target) = model.resolve()?;
            (
                Job::CheckPropriety {
                    prior: prior.resolve()?,
                    model,
                    map,
                    target,
                    tolerance,
                },
                out.out,
            )
        }
        Command::CheckMonotone { model, grid, out } => {
            let map = model.map;
            let (model, target) = model.resolve()?;
            (
                Job::CheckMonotone {
                    model,
                    map,
                    target,
                    tau: grid.resolve(GridDefault(1e-4, 1e2, 41, true))?,
                },
                out.out,
            )
        }
        Command::Replay { manifest, out } => (read_json::<Manifest>(&manifest)?.job, out.out),
    })
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("PREDCP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Input(format!("PREDCP_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Input(e.to_string()))
}

fn execute(command: Command) -> CliResult<()> {
    configure_threads()?;
    let (job, dir) = resolve(command)?;
    let out = Output::create(&dir)?;
    out.manifest(&Manifest::new(job.clone()))?;
    job.run(&out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(64)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            ExitCode::from(e.exit_code())
        }
    }
}
