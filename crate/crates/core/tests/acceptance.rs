//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use predcp::divergence::{cov_density, DivergenceMap};
use predcp::kld_prior::KldPriorSpec;
use predcp::linear::*;
use predcp::nn::{ModularNet, Network, NetworkSpec, ObservationModel, Perturbable};
use predcp::predcp::*;
use predcp::quadrature::{integrate, QuadConfig};
use predcp::rng::{derive, normal_matrix, stream};
use predcp::sampler::*;
use predcp::Error;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn priors() -> Vec<(&'static str, KldPriorSpec)> {
    vec![
        ("exponential(0.5)", KldPriorSpec::exponential(0.5).unwrap()),
        ("gamma(0.2,2)", KldPriorSpec::gamma(0.2, 2.0).unwrap()),
        ("log-cauchy(1)", KldPriorSpec::log_cauchy(1.0).unwrap()),
        ("half-cauchy(1)", KldPriorSpec::half_cauchy(1.0).unwrap()),
        ("mixture(0.5)", KldPriorSpec::mixture(0.5, 0.2, 2.0, 0.5).unwrap()),
    ]
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.2?}, limit {limit:?}"))
}

fn inputs(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    normal_matrix(n, d, seed, &[0xacc])
}

fn err(e: Error) -> String {
    e.to_string()
}

fn propriety_linear() -> Outcome {
    let start = Instant::now();
    let cfg = QuadConfig::default();
    let mut worst: f64 = 0.0;
    for (name, prior) in priors() {
        for x in [0.25, 1.0] {
            let spec = LinearModelSpec::scalar(x, 1.0).map_err(err)?;
            let ecp = check_propriety(&prior, &spec.ecp_map(), &cfg).map_err(err)?;
            let pcp = check_propriety(&prior, &spec.predcp_map(), &cfg).map_err(err)?;
            for (kind, r) in [("ecp", ecp), ("predcp", pcp)] {
                worst = worst.max((r.integral - 1.0).abs());
                ensure(r.is_proper(0.02), || format!("{kind} {name} x={x}: {r:?}"))?;
            }
        }
    }
    within(Duration::from_secs(10), start)?;
    Ok(format!(
        "20 integrals, max |I - 1| = {worst:.4}, {:.2?}",
        start.elapsed()
    ))
}

fn propriety_network() -> Outcome {
    let start = Instant::now();
    let net = Network::from_seed(NetworkSpec::new(3, 4, 1, 1, true), 1).map_err(err)?;
    let x = inputs(8, 3, 1);
    let obs = ObservationModel::Gaussian { sigma_y: 1.0 };
    let map = McMap::new(&net, &x, obs, vec![0.0], 1, McConfig::new(200, 2)).map_err(err)?;
    let mut out = Vec::new();
    for (name, prior) in [&priors()[0], &priors()[2]] {
        let r = check_propriety(prior, &map, &QuadConfig::default()).map_err(err)?;
        ensure(r.is_proper(0.05), || format!("{name}: {r:?}"))?;
        out.push(format!("{name} {:.4}", r.integral));
    }
    within(Duration::from_secs(60), start)?;
    Ok(format!("{}, {:.2?}", out.join(", "), start.elapsed()))
}

fn bijectivity() -> Outcome {
    let grid = log_grid(1e-4, 1e2, 41);
    let x = inputs(16, 3, 2);
    let mc = McConfig::new(16, 3);
    let mut checked = 0;
    for residual in [true, false] {
        let net = Network::from_seed(NetworkSpec::new(3, 8, 3, 2, residual), 5).map_err(err)?;
        for obs in [
            ObservationModel::Gaussian { sigma_y: 1.0 },
            ObservationModel::Categorical { classes: 3 },
        ] {
            for target in 1..=2 {
                let map = McMap::new(&net, &x, obs, vec![1.0, 1.0], target, mc).map_err(err)?;
                let r = check_monotone(&map, &grid).map_err(err)?;
                ensure(r.passed, || {
                    format!("residual={residual} {obs:?} layer {target}: {:?}", r.first_violation)
                })?;
                checked += 1;
            }
        }
    }
    let plain = Network::from_seed(NetworkSpec::new(3, 8, 1, 2, false), 5).map_err(err)?;
    let dead = McMap::new(
        &plain,
        &x,
        ObservationModel::Gaussian { sigma_y: 1.0 },
        vec![0.0, 1.0],
        2,
        mc,
    )
    .map_err(err)?;
    let r = check_monotone(&dead, &grid).map_err(err)?;
    ensure(!r.passed, || "plain net with tau1 = 0 unexpectedly monotone".into())?;
    Ok(format!("{checked} maps monotone; plain tau1=0 flat as predicted"))
}

fn central_difference<M: Perturbable>(
    m: &M,
    x: &DMatrix<f64>,
    obs: &ObservationModel,
    taus: &[f64],
    l: usize,
    mc: &McConfig,
) -> f64 {
    let t = taus[l - 1];
    let h = 1e-4 * t;
    let at = |v: f64| {
        let mut tt = taus.to_vec();
        tt[l - 1] = v;
        mc_divergence(m, x, obs, &tt, l, mc).unwrap().value
    };
    (at(t + h) - at(t - h)) / (2.0 * h)
}

fn gradient_checks() -> Outcome {
    let mut rng = stream(2024, &[0x6772]);
    let x = inputs(16, 3, 3);
    let (mut worst_g, mut worst_c) = (0.0f64, 0.0f64);
    for i in 0..50u64 {
        let residual = rng.random_bool(0.5);
        let categorical = i % 2 == 1;
        let taus = [
            10f64.powf(rng.random_range(-1.5..1.0)),
            10f64.powf(rng.random_range(-1.5..1.0)),
        ];
        let target = rng.random_range(1..=2);
        let net = Network::from_seed(NetworkSpec::new(3, 8, 3, 2, residual), derive(7, &[i])).map_err(err)?;
        let obs = if categorical {
            ObservationModel::Categorical { classes: 3 }
        } else {
            ObservationModel::Gaussian { sigma_y: 1.0 }
        };
        let mc = McConfig::new(8, derive(8, &[i]));
        let an = mc_divergence(&net, &x, &obs, &taus, target, &mc)
            .map_err(err)?
            .derivative;
        let fd = central_difference(&net, &x, &obs, &taus, target, &mc);
        let rel = (an - fd).abs() / fd.abs();
        let (worst, tol) = if categorical {
            (&mut worst_c, 1e-3)
        } else {
            (&mut worst_g, 1e-4)
        };
        *worst = worst.max(rel);
        ensure(rel < tol, || format!("config {i}: analytic {an}, fd {fd}, rel {rel:e}"))?;
    }
    Ok(format!(
        "50 configs, max rel error gaussian {worst_g:.1e}, categorical {worst_c:.1e}"
    ))
}

fn oracle_agreement() -> Outcome {
    let mc = McConfig::new(10_000, 11);
    let single = ModularNet::new(vec![DMatrix::zeros(1, 1)]).map_err(err)?;
    let mut z = Vec::new();
    for (xv, sigma, tau) in [(1.0, 1.0, 1.0), (1.5, 0.7, 0.3), (0.25, 1.0, 4.0)] {
        let x = DMatrix::from_element(1, 1, xv);
        let e = mc_divergence(
            &single,
            &x,
            &ObservationModel::Gaussian { sigma_y: sigma },
            &[tau],
            1,
            &mc,
        )
        .map_err(err)?;
        let exact = xv * xv * tau / (2.0 * sigma * sigma);
        let zs = (e.value - exact).abs() / e.std_error;
        ensure(zs < 3.0, || {
            format!("linear x={xv}: {} vs {exact} ({zs:.2} SE)", e.value)
        })?;
        z.push(zs);
    }
    let net = Network::from_seed(NetworkSpec::new(3, 8, 1, 2, true), 12).map_err(err)?;
    let x = inputs(16, 3, 4);
    for (taus, l) in [([1.0, 0.5], 2usize), ([2.0, 1.0], 1)] {
        let a = mc_divergence(&net, &x, &ObservationModel::Gaussian { sigma_y: 1.0 }, &taus, l, &mc).map_err(err)?;
        let b = resnet_variance_divergence(&net, &x, 1.0, &taus, l, &mc).map_err(err)?;
        let zs = (a.value - b.value).abs() / (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        ensure(zs < 3.0, || {
            format!("resnet layer {l}: {} vs {} ({zs:.2} SE)", a.value, b.value)
        })?;
        z.push(zs);
    }
    let max = z.iter().cloned().fold(0.0, f64::max);
    Ok(format!("5 comparisons at S=1e4, max {max:.2} SE"))
}

fn jensen_dominance() -> Outcome {
    let mut n = 0;
    for xv in [0.05, 0.25, 1.0, 3.0, 10.0] {
        for sigma in [0.5, 1.0, 2.0] {
            for tau in log_grid(1e-8, 1e6, 141) {
                let ecp = kld_linear(xv, sigma, tau).value;
                let pcp = predcp_divergence_linear(xv, sigma, tau).value;
                ensure(pcp >= ecp, || format!("x={xv} sigma={sigma} tau={tau}: {pcp} < {ecp}"))?;
                n += 1;
            }
        }
    }
    Ok(format!("{n} grid points"))
}

fn fig2b_mode() -> Outcome {
    let prior = KldPriorSpec::log_cauchy(1.0).unwrap();
    let map = LinearModelSpec::scalar(1.0, 1.0).map_err(err)?.ecp_map();
    let grid = log_grid(1e-4, 1e2, 6001);
    let dens: Vec<f64> = grid
        .iter()
        .map(|&t| cov_density(&prior, &map, t))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let modes: Vec<(f64, f64)> = (1..grid.len() - 1)
        .filter(|&i| dens[i] > dens[i - 1] && dens[i] > dens[i + 1])
        .map(|i| (grid[i], dens[i]))
        .collect();
    let rising_to_origin = dens[..200].windows(2).all(|w| w[0] > w[1]);
    ensure(rising_to_origin, || "no divergence toward the origin".into())?;
    let found = modes
        .iter()
        .map(|(t, d)| format!("tau={t:.3} (density {d:.3})"))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(modes.iter().any(|&(t, _)| (t - 0.15).abs() <= 0.10), || {
        format!("interior mode(s) at {found}; expected tau = 0.15 +/- 0.10")
    })?;
    Ok(format!("mass diverges at origin; interior mode at {found}"))
}

fn origin_shape() -> Outcome {
    let prior = KldPriorSpec::exponential(0.5).unwrap();
    let spec = LinearModelSpec::scalar(1.0, 1.0).map_err(err)?;
    let (ecp, pcp) = (spec.ecp_map(), spec.predcp_map());
    let near = log_grid(1e-8, 1e-2, 25);
    let e: Vec<f64> = near.iter().map(|&t| cov_density(&prior, &ecp, t).unwrap()).collect();
    ensure(e.windows(2).all(|w| w[0] < w[1]) && e[0] < 1e-7, || {
        format!("ECP not vanishing at origin: {e:?}")
    })?;
    let grid = log_grid(1e-8, 1e2, 81);
    let p: Vec<f64> = grid.iter().map(|&t| cov_density(&prior, &pcp, t).unwrap()).collect();
    ensure(p.windows(2).all(|w| w[0] >= w[1]), || {
        "PredCP density not decreasing".into()
    })?;
    let at0 = cov_density(&prior, &pcp, 0.0).map_err(err)?;
    ensure(at0 >= p[0], || format!("PredCP density at 0 ({at0}) below interior"))?;
    Ok(format!(
        "ECP({:.0e}) = {:.2e}; PredCP max at 0 = {at0:.4}",
        near[0], e[0]
    ))
}

fn tail_trend() -> Outcome {
    let prior = KldPriorSpec::mixture(0.5, 0.2, 2.0, 0.5).unwrap();
    let cfg = QuadConfig::default();
    let mut by_rank = Vec::new();
    for rank in 1..=20 {
        let map = MultivariateEcp::new(&unit_row_design(20, 20, rank).map_err(err)?, 1.0);
        by_rank.push(tail_probability(&prior, &map, 1.0, &cfg).map_err(err)?.value);
    }
    ensure(by_rank.windows(2).all(|w| w[1] >= w[0] - 1e-9), || {
        format!("not non-decreasing in rank: {by_rank:?}")
    })?;
    let full = normal_matrix(20, 20, 5, &[0x7a11]);
    let mut by_scale = Vec::new();
    for alpha in [0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0] {
        let map = MultivariateEcp::new(&(&full * alpha), 1.0);
        by_scale.push(tail_probability(&prior, &map, 1.0, &cfg).map_err(err)?.value);
    }
    let inc = by_scale.windows(2).all(|w| w[1] >= w[0]);
    let dec = by_scale.windows(2).all(|w| w[1] <= w[0]);
    ensure(inc || dec, || format!("not monotone in scale: {by_scale:?}"))?;
    Ok(format!(
        "rank 1..20: {:.3} -> {:.3}; scale 0.05..5: {:.3} -> {:.3}",
        by_rank[0], by_rank[19], by_scale[0], by_scale[6]
    ))
}

fn sampler_round_trip() -> Outcome {
    let map = LinearModelSpec::scalar(1.0, 1.0).map_err(err)?.ecp_map();
    let cfg = SamplerConfig::default();
    let quad = QuadConfig::inner();
    let mut worst_rt = 0.0f64;
    let mut worst_ks = 0.0f64;
    for (name, prior) in priors() {
        for seed in 0..100 {
            let d = sample_tau(&prior, &map, &cfg, seed).map_err(|e| format!("{name} seed {seed}: {e}"))?;
            let rel = (map.eval(d.tau).map_err(err)?.value - d.kappa).abs() / d.kappa;
            worst_rt = worst_rt.max(rel);
            ensure(rel < 1e-3, || format!("{name} seed {seed}: relative error {rel:e}"))?;
        }
        let mut taus: Vec<f64> = (0..10_000)
            .map(|s| match sample_tau(&prior, &map, &cfg, 1_000_000 + s) {
                Err(Error::UnboundedMap { .. }) => Ok(f64::INFINITY),
                r => r.map(|d| d.tau),
            })
            .collect::<Result<_, _>>()
            .map_err(err)?;
        taus.sort_by(f64::total_cmp);
        let n = taus.len() as f64;
        let (mut cdf, mut prev, mut ks) = (0.0, 0.0, 0.0f64);
        for (k, &t) in taus.iter().enumerate() {
            if t > prev && t.is_finite() {
                cdf += integrate(|u| cov_density(&prior, &map, u).unwrap(), prev, t, &quad).value;
                prev = t;
            }
            ks = ks.max((cdf - k as f64 / n).abs()).max((cdf - (k + 1) as f64 / n).abs());
        }
        worst_ks = worst_ks.max(ks);
        ensure(ks < 0.02, || format!("{name}: Kolmogorov distance {ks:.4}"))?;
    }
    Ok(format!(
        "max round-trip error {worst_rt:.1e}, max Kolmogorov distance {worst_ks:.4}"
    ))
}

fn mean_abs_deviation(y: &[f64]) -> f64 {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - m).abs()).sum::<f64>() / y.len() as f64
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    0.5 * (v[(n - 1) / 2] + v[n / 2])
}

fn function_dispersion() -> Outcome {
    let spec = NetworkSpec::new(2, 50, 1, 5, true);
    let grid: Vec<f64> = (0..101).map(|i| -5.0 + 0.1 * i as f64).collect();
    let cfg = FunctionDrawConfig::default();
    let mut reversed = 0;
    let mut rows = Vec::new();
    for batch in 0..5u64 {
        let seed = derive(31, &[batch]);
        let mad = |kind| -> Result<f64, String> {
            let draws = sample_function_draws(kind, &spec, &grid, 20, seed, &cfg).map_err(err)?;
            Ok(median(draws.iter().map(|d| mean_abs_deviation(&d.y)).collect()))
        };
        let (p, h) = (mad(PriorKind::Predcp)?, mad(PriorKind::Horseshoe)?);
        if p >= h {
            reversed += 1;
        }
        rows.push(format!("{p:.3}/{h:.3}"));
    }
    let detail = format!(
        "median MAD predcp/horseshoe per batch: {}; reversed in {reversed}/5",
        rows.join(", ")
    );
    ensure(reversed < 4, || detail.clone())?;
    Ok(detail)
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("propriety (linear)", propriety_linear),
        ("propriety (network)", propriety_network),
        ("bijectivity", bijectivity),
        ("gradient checks", gradient_checks),
        ("oracle agreement", oracle_agreement),
        ("jensen dominance", jensen_dominance),
        ("log-cauchy ECP interior mode", fig2b_mode),
        ("shape at the origin", origin_shape),
        ("tail-probability trend", tail_trend),
        ("sampler round trip", sampler_round_trip),
        ("function-draw dispersion", function_dispersion),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
