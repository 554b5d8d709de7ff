//! Output-analysis tools: effective sample size, Kolmogorov–Smirnov tests,
//! quantile–quantile data and cube-occupation probabilities.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::Serialize;

use crate::error::{Result, SuzzError};
use crate::sampler::{EventChain, Skeleton};

const MIN_ESS_LEN: usize = 100;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EssReport {
    pub n: usize,
    pub ess: f64,
    /// Integrated autocorrelation time `n / ess`.
    pub tau: f64,
    /// Number of autocorrelation lags summed before truncation.
    pub lags: usize,
    pub method: &'static str,
    /// ESS exceeds the sample size (antithetic series).
    pub super_efficient: bool,
}

/// `sgn(x) ln(1 + |x|)`, the tail-compressing transform used for heavy-tailed
/// targets.
pub fn sgn_log(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

pub fn transform_series(series: &[f64]) -> Vec<f64> {
    series.iter().map(|x| sgn_log(*x)).collect()
}

/// Biased sample autocovariances `γ_k = (1/n) Σ (y_t − ȳ)(y_{t+k} − ȳ)` for
/// all lags, through a zero-padded FFT.
pub fn autocovariance(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let m = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|x| Complex::new(x - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(m)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex::new(z.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    buf[..n]
        .iter()
        .map(|z| z.re / (m as f64 * n as f64))
        .collect()
}

/// Effective sample size by Geyer's initial positive sequence: pairs
/// `ρ_{2m} + ρ_{2m+1}` are summed until the first non-positive pair. The
/// autocorrelation time is floored at `1 / log10 n`, so the ESS never exceeds
/// `n log10 n`.
pub fn ess(series: &[f64]) -> Result<EssReport> {
    let n = series.len();
    if n < MIN_ESS_LEN {
        return Err(SuzzError::DegenerateSeries(format!(
            "ESS needs at least {MIN_ESS_LEN} values, got {n}"
        )));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(SuzzError::DegenerateSeries("series has non-finite values".into()));
    }
    let acov = autocovariance(series);
    let var = acov[0];
    let scale = series.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if !(var > (f64::EPSILON * scale).powi(2) * 16.0) {
        return Err(SuzzError::DegenerateSeries("series has zero variance".into()));
    }
    let rho = |k: usize| if k < n { acov[k] / var } else { 0.0 };
    let mut sum = 0.0;
    let mut m = 0;
    while 2 * m < n {
        let pair = rho(2 * m) + rho(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        m += 1;
    }
    let tau_floor = 1.0 / (n as f64).log10();
    let tau = (2.0 * sum - 1.0).max(tau_floor);
    let ess = n as f64 / tau;
    Ok(EssReport {
        n,
        ess,
        tau,
        lags: 2 * m,
        method: "initial-positive-sequence",
        super_efficient: ess > n as f64,
    })
}

/// Kolmogorov distribution tail `P(K > λ)`.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Small-λ series for the CDF.
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut cdf = 0.0;
        for k in 0..50 {
            let j = (2 * k + 1) as f64;
            let term = (-j * j * c).exp();
            cdf += term;
            if term < 1e-17 * cdf {
                break;
            }
        }
        let cdf = cdf * (2.0 * std::f64::consts::PI).sqrt() / lambda;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut q = 0.0;
    let mut sign = 1.0;
    for k in 1..100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        q += sign * term;
        if term < 1e-17 {
            break;
        }
        sign = -sign;
    }
    (2.0 * q).clamp(0.0, 1.0)
}

/// Asymptotic KS p-value for statistic `d` with effective size `n_eff`,
/// using Stephens' small-sample correction.
pub fn ks_pvalue(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_tail((s + 0.12 + 0.11 / s) * d)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub n: usize,
    /// Sample size used for the p-value (ESS for the deflated variant).
    pub n_eff: f64,
    pub p_value: f64,
}

pub fn ks_statistic<F: Fn(f64) -> f64>(series: &[f64], cdf: F) -> Result<f64> {
    if series.is_empty() {
        return Err(SuzzError::DegenerateSeries("KS test on an empty series".into()));
    }
    let mut xs = series.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    Ok(xs.iter().enumerate().fold(0.0f64, |d, (i, x)| {
        let f = cdf(*x);
        d.max((i + 1) as f64 / n - f).max(f - i as f64 / n)
    }))
}

pub fn ks_one_sample<F: Fn(f64) -> f64>(series: &[f64], cdf: F) -> Result<KsResult> {
    let d = ks_statistic(series, cdf)?;
    let n = series.len();
    Ok(KsResult {
        statistic: d,
        n,
        n_eff: n as f64,
        p_value: ks_pvalue(d, n as f64),
    })
}

/// One-sample KS test whose p-value uses the effective sample size of the
/// (autocorrelated) series in place of its length.
pub fn ks_ess_deflated<F: Fn(f64) -> f64>(series: &[f64], cdf: F) -> Result<KsResult> {
    let d = ks_statistic(series, cdf)?;
    let n = series.len();
    let n_eff = ess(series)?.ess.min(n as f64);
    Ok(KsResult {
        statistic: d,
        n,
        n_eff,
        p_value: ks_pvalue(d, n_eff),
    })
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(SuzzError::DegenerateSeries("KS test on an empty series".into()));
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let v = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= v {
            i += 1;
        }
        while j < xb.len() && xb[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let n_eff = na * nb / (na + nb);
    Ok(KsResult {
        statistic: d,
        n: xa.len() + xb.len(),
        n_eff,
        p_value: ks_pvalue(d, n_eff),
    })
}

/// Sample quantile with linear interpolation between order statistics.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct QqPoint {
    pub p: f64,
    pub empirical: f64,
    pub reference: f64,
}

/// Empirical against reference quantiles at levels `j / (points + 1)`.
pub fn qq_data<Q: Fn(f64) -> f64>(series: &[f64], quantile: Q, points: usize) -> Result<Vec<QqPoint>> {
    if series.is_empty() {
        return Err(SuzzError::DegenerateSeries("QQ data for an empty series".into()));
    }
    let mut xs = series.to_vec();
    xs.sort_by(f64::total_cmp);
    Ok((1..=points)
        .map(|j| {
            let p = j as f64 / (points + 1) as f64;
            QqPoint {
                p,
                empirical: empirical_quantile(&xs, p),
                reference: quantile(p),
            }
        })
        .collect())
}

/// Fraction of time a continuous-time trajectory spends in `[-l, l]^d`.
pub fn cube_probability(chain: &EventChain, l: f64) -> f64 {
    if chain.t_end == 0.0 {
        let inside = chain.events[0].x.iter().all(|x| x.abs() <= l);
        return f64::from(u8::from(inside));
    }
    chain.time_in_cube(l) / chain.t_end
}

/// Fraction of skeleton points inside `[-l, l]^d`.
pub fn cube_probability_skeleton(skeleton: &Skeleton, l: f64) -> f64 {
    let inside = skeleton
        .x
        .iter()
        .filter(|x| x.iter().all(|v| v.abs() <= l))
        .count();
    inside as f64 / skeleton.len() as f64
}

/// Summary for one skeleton series.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub ess: Vec<EssReport>,
    pub ks: Option<KsResult>,
    pub ks_deflated: Option<KsResult>,
    pub qq: Vec<QqPoint>,
    pub cube: Vec<(f64, f64)>,
}
