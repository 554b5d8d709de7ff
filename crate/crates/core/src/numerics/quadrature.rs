//! Adaptive Gauss–Kronrod (10/21 point) quadrature with global error control.
//!
//! Infinite endpoints are mapped to a bounded interval with `x = c + tan(w)`,
//! the Jacobian `sec²(w)` being folded into the integrand.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::FRAC_PI_2;

use crate::error::{Result, SuzzError};

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
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_600_525_452_012,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the nodes XGK[1], XGK[3], ..., XGK[9].
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Tolerances and work limits for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub epsabs: f64,
    pub epsrel: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            epsabs: 1e-10,
            epsrel: 1e-10,
            max_intervals: 2000,
        }
    }
}

impl QuadOptions {
    pub fn new(epsabs: f64, epsrel: f64) -> Self {
        Self {
            epsabs,
            epsrel,
            ..Self::default()
        }
    }

    pub fn with_max_intervals(mut self, n: usize) -> Self {
        self.max_intervals = n;
        self
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub abs_err: f64,
    pub evaluations: usize,
    pub intervals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Single 21-point Kronrod evaluation with the QUADPACK error heuristic.
pub(crate) fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc * WGK[10];
    let mut gauss = 0.0;
    let mut resabs = kron.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        kron += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kron;
    let mut resasc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = kron * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut err = ((kron - gauss) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    let eps = f64::EPSILON;
    if resabs > f64::MIN_POSITIVE / (50.0 * eps) {
        err = err.max(50.0 * eps * resabs);
    }
    (value, err)
}

/// Adaptive bisection starting from the given partition of a finite interval.
fn adapt<F: Fn(f64) -> f64>(f: &F, edges: &[f64], opts: &QuadOptions) -> Integral {
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for w in edges.windows(2) {
        if w[1] > w[0] {
            let (value, err) = gk21(f, w[0], w[1]);
            evaluations += 21;
            heap.push(Piece {
                a: w[0],
                b: w[1],
                value,
                err,
            });
        }
    }
    let totals = |heap: &BinaryHeap<Piece>| {
        heap.iter()
            .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.err))
    };
    let (mut value, mut err) = totals(&heap);
    let mut converged = false;
    loop {
        if !value.is_finite() || !err.is_finite() {
            break;
        }
        if err <= opts.epsabs.max(opts.epsrel * value.abs()) {
            converged = true;
            break;
        }
        if heap.len() >= opts.max_intervals {
            break;
        }
        let worst = match heap.pop() {
            Some(p) => p,
            None => {
                converged = true;
                break;
            }
        };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval exhausted at machine resolution.
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk21(f, worst.a, mid);
        let (v2, e2) = gk21(f, mid, worst.b);
        evaluations += 42;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: v1,
            err: e1,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: v2,
            err: e2,
        });
        value += v1 + v2 - worst.value;
        err += e1 + e2 - worst.err;
        if heap.len() % 64 == 0 {
            // Resum periodically to avoid drift in the running totals.
            let t = totals(&heap);
            value = t.0;
            err = t.1;
        }
    }
    let (value, err) = totals(&heap);
    Integral {
        value,
        abs_err: err,
        evaluations,
        intervals: heap.len(),
        converged: converged || err <= opts.epsabs.max(opts.epsrel * value.abs()),
    }
}

fn finite_or_zero(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

/// Integrates `f` over `[a, b]` (either endpoint may be infinite), splitting at
/// the interior `breaks`. Always returns the best estimate; check `converged`.
pub fn integrate_raw<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    opts: &QuadOptions,
) -> Integral {
    if a == b {
        return Integral {
            value: 0.0,
            abs_err: 0.0,
            evaluations: 0,
            intervals: 0,
            converged: true,
        };
    }
    if a > b {
        let mut r = integrate_raw(f, b, a, breaks, opts);
        r.value = -r.value;
        return r;
    }
    let inner: Vec<f64> = {
        let mut v: Vec<f64> = breaks
            .iter()
            .copied()
            .filter(|p| p.is_finite() && *p > a && *p < b)
            .collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    match (a.is_finite(), b.is_finite()) {
        (true, true) => {
            let mut edges = Vec::with_capacity(inner.len() + 2);
            edges.push(a);
            edges.extend(inner);
            edges.push(b);
            adapt(&f, &edges, opts)
        }
        (true, false) => {
            let g = |w: f64| {
                let t = w.tan();
                let c = 1.0 / w.cos();
                finite_or_zero(f(a + t) * c * c)
            };
            let mut edges = vec![0.0];
            edges.extend(inner.iter().map(|p| (p - a).atan()));
            edges.push(FRAC_PI_2);
            adapt(&g, &edges, opts)
        }
        (false, true) => {
            let g = |w: f64| {
                let t = w.tan();
                let c = 1.0 / w.cos();
                finite_or_zero(f(b + t) * c * c)
            };
            let mut edges = vec![-FRAC_PI_2];
            edges.extend(inner.iter().map(|p| (p - b).atan()));
            edges.push(0.0);
            adapt(&g, &edges, opts)
        }
        (false, false) => {
            let g = |w: f64| {
                let t = w.tan();
                let c = 1.0 / w.cos();
                finite_or_zero(f(t) * c * c)
            };
            let mut edges = vec![-FRAC_PI_2];
            edges.extend(inner.iter().map(|p| p.atan()));
            edges.push(FRAC_PI_2);
            adapt(&g, &edges, opts)
        }
    }
}

/// Like [`integrate_raw`] but fails when the tolerance is not met.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    opts: &QuadOptions,
) -> Result<Integral> {
    let r = integrate_raw(f, a, b, breaks, opts);
    if r.converged && r.value.is_finite() {
        Ok(r)
    } else {
        Err(SuzzError::QuadratureNonConvergence {
            a,
            b,
            value: r.value,
            abs_err: r.abs_err,
        })
    }
}
