use nalgebra::DMatrix;
use predcp::divergence::{cov_density, DivergenceMap, MapPoint};
use predcp::kld_prior::KldPriorSpec;
use predcp::linear::*;
use predcp::predcp::{check_monotone, check_propriety, log_grid};
use predcp::quadrature::{integrate, integrate_semi_infinite, QuadConfig};
use predcp::EPS_KL;
use proptest::prelude::*;

fn priors() -> Vec<KldPriorSpec> {
    vec![
        KldPriorSpec::exponential(0.5).unwrap(),
        KldPriorSpec::gamma(0.2, 2.0).unwrap(),
        KldPriorSpec::log_cauchy(1.0).unwrap(),
        KldPriorSpec::half_cauchy(1.0).unwrap(),
        KldPriorSpec::mixture(0.5, 0.2, 2.0, 0.5).unwrap(),
    ]
}

fn ecp(x: f64) -> EcpMap {
    LinearModelSpec::scalar(x, 1.0).unwrap().ecp_map()
}

fn pcp(x: f64) -> PredcpLinearMap {
    LinearModelSpec::scalar(x, 1.0).unwrap().predcp_map()
}

fn central_difference<M: DivergenceMap>(m: &M, tau: f64) -> f64 {
    let h = 1e-5 * tau;
    (m.eval(tau + h).unwrap().value - m.eval(tau - h).unwrap().value) / (2.0 * h)
}

#[test]
fn cov_density_worked_values() {
    let prior = KldPriorSpec::exponential(0.5).unwrap();
    let d = cov_density(&prior, &ecp(1.0), 1.0).unwrap();
    // 2 exp(-2 * 0.153426) * 0.25
    let kl = 0.5 - 0.5 * 2f64.ln();
    assert!((d - 2.0 * (-(kl + EPS_KL) / 0.5).exp() * 0.25).abs() < 1e-15);
    assert!((d - 0.367879).abs() < 1e-5, "{d}");
    assert_eq!(cov_density(&prior, &ecp(1.0), 0.0).unwrap(), 0.0);
    let at0 = cov_density(&prior, &pcp(1.0), 0.0).unwrap();
    assert!((at0 - 0.5 / 0.5).abs() < 1e-10);
}

#[test]
fn analytic_derivatives_match_finite_differences() {
    let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.3, -0.5, 2.0, 0.7, 0.7]);
    let multi = MultivariateEcp::new(&x, 1.3);
    for tau in log_grid(1e-6, 1e4, 61) {
        for xv in [0.1, 0.25, 1.0, 3.0] {
            for (name, fd, an) in [
                (
                    "ecp",
                    central_difference(&ecp(xv), tau),
                    ecp(xv).eval(tau).unwrap().derivative,
                ),
                (
                    "pcp",
                    central_difference(&pcp(xv), tau),
                    pcp(xv).eval(tau).unwrap().derivative,
                ),
            ] {
                assert!(
                    (fd - an).abs() <= 1e-8 * an.abs().max(1e-300) + 1e-13,
                    "{name} x={xv} tau={tau}: {fd} vs {an}"
                );
            }
        }
        let an = multi.eval(tau).unwrap().derivative;
        let fd = central_difference(&multi, tau);
        assert!((fd - an).abs() <= 1e-8 * an + 1e-13, "multi tau={tau}: {fd} vs {an}");
    }
}

#[test]
fn scalar_and_matrix_forms_agree() {
    for xv in [0.25, 1.0, -2.5] {
        let m = MultivariateEcp::new(&DMatrix::from_element(1, 1, xv), 0.8);
        for tau in log_grid(1e-6, 1e4, 41) {
            let a = kld_linear(xv, 0.8, tau);
            let b = m.eval(tau).unwrap();
            assert!((a.value - b.value).abs() <= 1e-12 * a.value.max(1e-300));
            assert!((a.derivative - b.derivative).abs() <= 1e-12 * a.derivative);
        }
    }
}

#[test]
fn maps_are_monotone_on_wide_grids() {
    let grid = log_grid(1e-6, 1e4, 101);
    let x = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, 0.0, 0.0]);
    let multi = MultivariateEcp::new(&x, 1.0);
    for xv in [0.1, 1.0, 3.0] {
        assert!(check_monotone(&ecp(xv), &grid).unwrap().passed);
        assert!(check_monotone(&pcp(xv), &grid).unwrap().passed);
    }
    assert!(check_monotone(&multi, &grid).unwrap().passed);
}

#[test]
fn every_prior_map_pair_is_proper() {
    for p in priors() {
        for xv in [0.25, 1.0] {
            let a = check_propriety(&p, &ecp(xv), &QuadConfig::default()).unwrap();
            let b = check_propriety(&p, &pcp(xv), &QuadConfig::default()).unwrap();
            assert!(a.is_proper(0.02), "ecp {p:?} x={xv}: {a:?}");
            assert!(b.is_proper(0.02), "pcp {p:?} x={xv}: {b:?}");
        }
    }
}

#[test]
fn ecp_vanishes_at_origin_while_pcp_peaks() {
    let prior = KldPriorSpec::exponential(0.5).unwrap();
    let grid = log_grid(1e-8, 1e-1, 30);
    let e: Vec<f64> = grid
        .iter()
        .map(|&t| cov_density(&prior, &ecp(1.0), t).unwrap())
        .collect();
    let p: Vec<f64> = grid
        .iter()
        .map(|&t| cov_density(&prior, &pcp(1.0), t).unwrap())
        .collect();
    assert!(e[0] < 1e-7);
    assert!(e.windows(2).all(|w| w[1] > w[0]));
    assert!(p.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn marginal_is_symmetric_and_normalized() {
    let prior = KldPriorSpec::exponential(0.5).unwrap();
    let map = ecp(1.0);
    let inner = QuadConfig::inner();
    for b in [0.1, 0.7, 2.0, 5.0] {
        let a = marginal_beta_density(&prior, &map, b, &inner).unwrap().value;
        let c = marginal_beta_density(&prior, &map, -b, &inner).unwrap().value;
        assert!((a - c).abs() <= 1e-8 * a.max(1e-300));
    }
    let half = integrate_semi_infinite(
        |b| marginal_beta_density(&prior, &map, b, &inner).unwrap().value,
        0.0,
        &QuadConfig {
            global_tol: 1e-5,
            panel_tol: 1e-8,
            max_panels: 200,
        },
    );
    assert!((2.0 * half.value - 1.0).abs() < 1e-2, "{half:?}");
}

#[test]
fn small_features_give_heavier_marginal_tails() {
    let prior = KldPriorSpec::log_cauchy(1.0).unwrap();
    let inner = QuadConfig::inner();
    let small = marginal_beta_density(&prior, &ecp(0.25), 3.0, &inner).unwrap().value;
    let unit = marginal_beta_density(&prior, &ecp(1.0), 3.0, &inner).unwrap().value;
    assert!(small > unit, "{small} vs {unit}");
}

#[test]
fn feature_scale_orders_mass_near_zero() {
    // P(tau <= t0) increases with |x| for every pair of priors and thresholds.
    let cfg = QuadConfig::default();
    for p in priors() {
        for t0 in [0.1, 1.0, 10.0] {
            let below = |xv: f64| 1.0 - tail_probability(&p, &ecp(xv), t0, &cfg).unwrap().value;
            let (a, b, c) = (below(0.25), below(1.0), below(3.0));
            assert!(a < b && b < c, "{p:?} t0={t0}: {a} {b} {c}");
        }
    }
}

#[test]
fn shrinkage_profile_mass_and_feature_dependence() {
    let cfg = QuadConfig::default();
    let exp = KldPriorSpec::exponential(0.5).unwrap();
    let total = integrate(|k| shrinkage_profile(&exp, &ecp(1.0), k).unwrap(), 0.0, 1.0, &cfg);
    assert!((total.value - 1.0).abs() < 1e-2, "{total:?}");
    // The log-Cauchy keeps about 1.2% of its mass below eps_KL, which no
    // value of tau reaches; the profile carries the rest.
    let prior = KldPriorSpec::log_cauchy(1.0).unwrap();
    let reachable = 0.5 - EPS_KL.ln().atan() / std::f64::consts::PI;
    let total = integrate(|k| shrinkage_profile(&prior, &ecp(1.0), k).unwrap(), 0.0, 1.0, &cfg);
    assert!((total.value - reachable).abs() < 1e-3, "{total:?} vs {reachable}");
    let strong = shrinkage_upper_mass(&prior, &ecp(3.0), 0.5, &cfg).unwrap().value;
    let weak = shrinkage_upper_mass(&prior, &ecp(0.1), 0.5, &cfg).unwrap().value;
    assert!(strong > weak, "{strong} vs {weak}");
}

#[test]
fn tail_probability_limits() {
    let prior = KldPriorSpec::exponential(0.5).unwrap();
    let cfg = QuadConfig::default();
    let all = tail_probability(&prior, &ecp(1.0), 0.0, &cfg).unwrap().value;
    assert!((all - 1.0).abs() < 1e-3, "{all}");
    let far = tail_probability(&prior, &ecp(1.0), 1e6, &cfg).unwrap().value;
    assert!(far < 0.05);
    assert!(tail_probability(&prior, &ecp(1.0), -1.0, &cfg).is_err());
}

#[test]
fn multivariate_identity_value() {
    let p = kld_multivariate(&DMatrix::identity(2, 2), 1.0, 1.0);
    assert!((p.value - 0.306853).abs() < 1e-6);
    assert_eq!(
        kld_multivariate(&DMatrix::identity(2, 2), 1.0, 0.0),
        MapPoint::new(0.0, 0.0)
    );
}

#[test]
fn beta1_prior_normalizes_and_has_separated_modes() {
    let spec = LinearModelSpec::scalar(1.0, 1.0)
        .unwrap()
        .with_intercept_sd(1.0)
        .unwrap();
    let exp = KldPriorSpec::exponential(0.5).unwrap();
    let cfg = QuadConfig::default();
    let half = integrate_semi_infinite(|b| ecp_beta1_density(&exp, &spec, b).unwrap(), 0.0, &cfg);
    assert!((2.0 * half.value - 1.0).abs() < 1e-2, "{half:?}");

    let lc = KldPriorSpec::log_cauchy(1.0).unwrap();
    let spec1 = LinearModelSpec::scalar(1.0, 1.0).unwrap();
    let f = |b: f64| ecp_beta1_density(&lc, &spec1, b).unwrap();
    let grid: Vec<f64> = (1..400).map(|i| i as f64 * 0.01).collect();
    let interior_max = grid.windows(3).any(|w| f(w[1]) > f(w[0]) && f(w[1]) > f(w[2]));
    assert!(interior_max);
    assert_eq!(f(0.0), 0.0);
    assert!(f(1e-6) > f(0.5), "spike near the origin");
}

#[test]
fn nonlocal_density_normalizes() {
    for sigma in [0.3, 1.0, 4.0] {
        let half = integrate_semi_infinite(|b| nonlocal_pdf(sigma, b).unwrap(), 0.0, &QuadConfig::default());
        assert!((2.0 * half.value - 1.0).abs() < 1e-6, "{half:?}");
    }
}

proptest! {
    #[test]
    fn jensen_dominance(xv in -5.0f64..5.0, sigma in 0.1f64..4.0, lt in -6.0f64..4.0) {
        let tau = 10f64.powf(lt);
        let e = kld_linear(xv, sigma, tau);
        let p = predcp_divergence_linear(xv, sigma, tau);
        prop_assert!(p.value >= e.value);
        prop_assert!(e.value >= 0.0);
        prop_assert!(p.derivative >= e.derivative);
    }

    #[test]
    fn jensen_gap_vanishes_at_origin(xv in 0.1f64..5.0) {
        // gap = ln(1 + a) / 2 with a = x² tau, increasing from 0
        let gap = |tau: f64| predcp_divergence_linear(xv, 1.0, tau).value - kld_linear(xv, 1.0, tau).value;
        let mut prev = 0.0;
        for tau in log_grid(1e-12, 1.0, 25) {
            let g = gap(tau);
            prop_assert!(g > prev);
            prev = g;
        }
        prop_assert!(gap(1e-12) <= xv * xv * 1e-12);
    }

    #[test]
    fn marginal_is_even(b in 0.01f64..6.0) {
        let prior = KldPriorSpec::log_cauchy(1.0).unwrap();
        let inner = QuadConfig::inner();
        let a = marginal_beta_density(&prior, &ecp(1.0), b, &inner).unwrap().value;
        let c = marginal_beta_density(&prior, &ecp(1.0), -b, &inner).unwrap().value;
        prop_assert!((a - c).abs() <= 1e-8 * a);
    }

    #[test]
    fn rank_deficient_designs_evaluate(rank in 1usize..5, lt in -4.0f64..3.0) {
        let x = unit_row_design(8, 5, rank).unwrap();
        let p = kld_multivariate(&x, 1.0, 10f64.powf(lt));
        prop_assert!(p.value.is_finite() && p.value >= 0.0 && p.derivative > 0.0);
    }
}
