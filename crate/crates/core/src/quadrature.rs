//! Adaptive 21-point Gauss-Kronrod quadrature.
//!
//! Panels are kept in a priority queue keyed on their error estimate and the
//! worst one is bisected until the summed error meets the global target.
//! Panels whose own error is already below the per-panel tolerance are never
//! split again. Semi-infinite ranges are mapped onto `(0, 1]` with
//! `x = a + (1 - u) / u`.
//!
//! Non-convergence is not an error: the best estimate is returned with
//! `converged = false` and the achieved error estimate.

use std::cell::Cell;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Tolerances and budget for adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    /// Target for the summed absolute error over all panels.
    pub global_tol: f64,
    /// Panels at or below this error are not subdivided further.
    pub panel_tol: f64,
    /// Maximum number of panels.
    pub max_panels: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            global_tol: 1e-6,
            panel_tol: 1e-8,
            max_panels: 2000,
        }
    }
}

impl QuadConfig {
    /// A cheaper budget for integrals nested inside other integrals.
    pub fn inner() -> Self {
        QuadConfig {
            global_tol: 1e-7,
            panel_tol: 1e-10,
            max_panels: 400,
        }
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integral {
    pub value: f64,
    pub abs_error: f64,
    pub converged: bool,
    pub evaluations: usize,
    pub panels: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One 21-point Kronrod estimate with the embedded 10-point Gauss error
/// estimate, rescaled as in QUADPACK.
fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let abs_half = half.abs();
    let fc = f(center);
    let mut res_g = 0.0;
    let mut res_k = fc * WGK[10];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for (j, wg) in WG.iter().enumerate().take(5) {
        let jtw = 2 * j + 1;
        let dx = half * XGK[jtw];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        res_g += wg * (f1 + f2);
        res_k += WGK[jtw] * (f1 + f2);
        res_abs += WGK[jtw] * (f1.abs() + f2.abs());
    }
    for j in 0..5 {
        let jtwm1 = 2 * j;
        let dx = half * XGK[jtwm1];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[jtwm1] = f1;
        fv2[jtwm1] = f2;
        res_k += WGK[jtwm1] * (f1 + f2);
        res_abs += WGK[jtwm1] * (f1.abs() + f2.abs());
    }
    let mean = res_k * 0.5;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let result = res_k * half;
    let res_abs = res_abs * abs_half;
    let res_asc = res_asc * abs_half;
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    if !result.is_finite() {
        err = f64::INFINITY;
    }
    (result, err)
}

/// Integrate `f` over the finite interval `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cfg: &QuadConfig) -> Integral {
    integrate_with_breaks(f, &[a, b], cfg)
}

/// Integrate over `[points[0], points[last]]`, starting from one panel per
/// consecutive pair of `points`.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(f: F, points: &[f64], cfg: &QuadConfig) -> Integral {
    assert!(points.len() >= 2, "need at least one interval");
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    let mut retired_value = 0.0;
    let mut retired_error = 0.0;
    for w in points.windows(2) {
        let (v, e) = gk21(&f, w[0], w[1]);
        evaluations += 21;
        heap.push(Panel {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
        });
    }
    let mut panels = heap.len();
    loop {
        let (active_value, active_error) = heap.iter().fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
        let total_error = active_error + retired_error;
        let total = active_value + retired_value;
        let done = total_error <= cfg.global_tol;
        let worst_small = heap.peek().map_or(true, |p| p.error <= cfg.panel_tol);
        if done || worst_small || panels >= cfg.max_panels || !total.is_finite() {
            return Integral {
                value: sum_in_order(&heap, retired_value),
                abs_error: total_error,
                converged: (done || worst_small) && total.is_finite(),
                evaluations,
                panels,
            };
        }
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a.min(worst.b) || mid >= worst.a.max(worst.b) {
            // Cannot split further in floating point.
            retired_value += worst.value;
            retired_error += worst.error;
            continue;
        }
        let (v1, e1) = gk21(&f, worst.a, mid);
        let (v2, e2) = gk21(&f, mid, worst.b);
        evaluations += 42;
        panels += 1;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
}

/// Sum panel values ordered by position, so the result does not depend on the
/// heap layout.
fn sum_in_order(heap: &BinaryHeap<Panel>, retired: f64) -> f64 {
    let mut ps: Vec<(f64, f64)> = heap.iter().map(|p| (p.a, p.value)).collect();
    ps.sort_by(|x, y| x.0.total_cmp(&y.0));
    ps.iter().map(|p| p.1).sum::<f64>() + retired
}

/// Integrate `f` over `[a, inf)` through `x = a + (1 - u) / u`, `dx = du / u^2`.
pub fn integrate_semi_infinite<F: Fn(f64) -> f64>(f: F, a: f64, cfg: &QuadConfig) -> Integral {
    let g = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let x = a + (1.0 - u) / u;
        if !x.is_finite() {
            return 0.0;
        }
        let v = f(x);
        if v == 0.0 {
            0.0
        } else {
            // Two divisions: u * u underflows long before v / u / u overflows.
            v / u / u
        }
    };
    // Extra break points spread the initial panels over several decades of x.
    integrate_with_breaks(g, &[0.0, 1e-6, 1e-3, 0.1, 0.5, 0.9, 0.999, 1.0], cfg)
}

/// Integrates a fallible integrand, surfacing the first error raised inside.
pub(crate) fn integrate_fallible<F>(f: F, run: impl FnOnce(&dyn Fn(f64) -> f64) -> Integral) -> crate::Result<Integral>
where
    F: Fn(f64) -> crate::Result<f64>,
{
    let failure: Cell<Option<crate::Error>> = Cell::new(None);
    let g = |t: f64| match f(t) {
        Ok(v) => v,
        Err(e) => {
            let prev = failure.take();
            failure.set(prev.or(Some(e)));
            0.0
        }
    };
    let r = run(&g);
    match failure.take() {
        Some(e) => Err(e),
        None => Ok(r),
    }
}
