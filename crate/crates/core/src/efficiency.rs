//! Inverse algorithmic efficiency of 1-D speed-up Zig-Zag processes.
//!
//! For `r(x) = s(x) e^{−U(x)}` the product of the expected switching rate and
//! the asymptotic variance of an ergodic average is
//!
//! ```text
//! J[r] = ∫ |r′| dx · ∫ |r′| k² / r² dx,   k(x) = ∫ₓ^∞ ḡ(y) e^{−U(y)} dy,
//! ```
//!
//! where `ḡ = (g(·,+1) + g(·,−1)) / 2` is centered under the target. All
//! integrals are computed in log space through the scaled function
//! `κ(x) = k(x) e^{U(x)}`, which stays O(1) where `e^{−U}` underflows.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::sgn_log;
use crate::error::{Result, SuzzError};
use crate::numerics::{integrate_raw, Integral, QuadOptions};
use crate::speed::{audit_assumptions, RateSpec, SpeedFamily, SpeedFunction};
use crate::targets::Target;

/// Normalisation of `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KConvention {
    /// `ḡ = (g(y,+1) + g(y,−1)) / 2`. Reproduces the Zig-Zag normal and
    /// exponential benchmarks (J = 4 and 20) and the simulated variance.
    Symmetrized,
    /// `g(y,+1) + g(y,−1)` without the ½, which multiplies J by 4.
    AsPrinted,
}

impl KConvention {
    fn factor(self) -> f64 {
        match self {
            Self::Symmetrized => 1.0,
            Self::AsPrinted => 2.0,
        }
    }
}

type ObsFn = Arc<dyn Fn(f64, i8) -> f64 + Send + Sync>;

/// A test function `g(x, θ)` on the 1-D state space.
#[derive(Clone)]
pub struct Observable {
    id: String,
    f: ObsFn,
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Observable").field(&self.id).finish()
    }
}

impl Observable {
    pub fn identity() -> Self {
        Self::custom("x", Arc::new(|x, _| x))
    }

    pub fn sgn_log() -> Self {
        Self::custom("sgnlog", Arc::new(|x, _| sgn_log(x)))
    }

    pub fn zero() -> Self {
        Self::custom("zero", Arc::new(|_, _| 0.0))
    }

    pub fn custom(id: impl Into<String>, f: ObsFn) -> Self {
        Self { id: id.into(), f }
    }

    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "x" => Ok(Self::identity()),
            "sgnlog" => Ok(Self::sgn_log()),
            "zero" => Ok(Self::zero()),
            _ => Err(SuzzError::InvalidParameter(format!(
                "unknown observable '{id}' (expected x, sgnlog or zero)"
            ))),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn eval(&self, x: f64, theta: i8) -> f64 {
        (self.f)(x, theta)
    }

    pub fn symmetrized(&self, x: f64) -> f64 {
        0.5 * (self.eval(x, 1) + self.eval(x, -1))
    }
}

/// The observable used for a target in the benchmark table: `sgn(x) log(1+|x|)`
/// for the Cauchy target, `x` otherwise.
pub fn default_observable_for(target: &Target) -> Observable {
    if target.id() == "student:1" {
        Observable::sgn_log()
    } else {
        Observable::identity()
    }
}

type LineFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `r` described by `log r` and `(log r)′`, with optional breakpoints for the
/// quadrature.
#[derive(Clone)]
pub struct RProfile {
    pub id: String,
    log_r: LineFn,
    dlog_r: LineFn,
    breaks: Vec<f64>,
}

impl fmt::Debug for RProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RProfile")
            .field("id", &self.id)
            .field("breaks", &self.breaks)
            .finish()
    }
}

impl RProfile {
    pub fn custom(id: impl Into<String>, log_r: LineFn, dlog_r: LineFn, breaks: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            log_r,
            dlog_r,
            breaks,
        }
    }

    /// `r = s e^{−U}`, so `(log r)′ = −A / s`.
    pub fn from_speed(target: &Target, speed: &SpeedFunction) -> Result<Self> {
        if target.dim() != 1 {
            return Err(SuzzError::InvalidParameter("efficiency needs a 1-D target".into()));
        }
        let rs = RateSpec::new(target.clone(), speed.clone());
        let (t, s) = (target.clone(), speed.clone());
        Ok(Self {
            id: speed.id().to_string(),
            log_r: Arc::new(move |x| s.value(&[x]).ln() - t.potential(&[x])),
            dlog_r: Arc::new(move |x| -rs.a(&[x])[0] / rs.speed.value(&[x])),
            breaks: vec![0.0],
        })
    }

    /// `r_n(x) = r(0)` on `[−n, n]` and `r(x ∓ n)` outside: the profile
    /// shifted apart and flattened at its mode (assumed at 0).
    pub fn flattened(&self, n: f64) -> Self {
        let (lr, dlr) = (self.log_r.clone(), self.dlog_r.clone());
        let shift = move |x: f64| {
            if x > n {
                Some(x - n)
            } else if x < -n {
                Some(x + n)
            } else {
                None
            }
        };
        let lr0 = lr(0.0);
        Self {
            id: format!("{}-flat{n}", self.id),
            log_r: Arc::new(move |x| shift(x).map_or(lr0, |z| lr(z))),
            dlog_r: Arc::new(move |x| shift(x).map_or(0.0, |z| dlr(z))),
            breaks: vec![-n, 0.0, n],
        }
    }

    pub fn log_r(&self, x: f64) -> f64 {
        (self.log_r)(x)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QuadDiagnostics {
    pub mean_abs_err: f64,
    pub z_abs_err: f64,
    pub factor1_abs_err: f64,
    pub factor2_abs_err: f64,
    pub factor1_intervals: usize,
    pub factor2_intervals: usize,
    /// Largest relative error estimate among the inner tail integrals
    /// defining `k`.
    pub max_inner_rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EfficiencyReport {
    pub target_id: String,
    pub speed_id: String,
    pub observable_id: String,
    pub convention: KConvention,
    /// Target mean of the symmetrized observable (subtracted before forming k).
    pub mean: f64,
    /// `∫ |r′|`.
    pub factor1: f64,
    /// `∫ |r′| k² / r²`.
    pub factor2: f64,
    pub j: f64,
    /// `∫ |r′| / 2`, the switching rate against the unnormalised density.
    pub n0: f64,
    /// `J / N₀`.
    pub gamma2: f64,
    /// `Z = ∫ e^{−U}`.
    pub z: f64,
    /// Switching rate under the normalised target, `N₀ / Z`.
    pub n0_normalized: f64,
    /// Asymptotic variance of the ergodic average under the normalised target,
    /// `J / (Z² N₀/Z)`.
    pub gamma2_normalized: f64,
    pub diagnostics: QuadDiagnostics,
}

const INNER_MAX_INTERVALS: usize = 400;
const OUTER_MAX_INTERVALS: usize = 4000;

fn outer_opts() -> QuadOptions {
    QuadOptions::new(0.0, 1e-10).with_max_intervals(OUTER_MAX_INTERVALS)
}

fn inner_opts() -> QuadOptions {
    QuadOptions::new(0.0, 1e-12).with_max_intervals(INNER_MAX_INTERVALS)
}

/// `∫_ℝ f` split as `[−1, 1]` plus two tails in log coordinates
/// (`x = ±e^v`), which turns power-law tails into exponential ones.
fn line_integral<F: Fn(f64) -> f64>(f: F, breaks: &[f64], opts: &QuadOptions) -> Integral {
    let core = integrate_raw(&f, -1.0, 1.0, breaks, opts);
    let right_breaks: Vec<f64> = breaks.iter().filter(|p| **p > 1.0).map(|p| p.ln()).collect();
    let left_breaks: Vec<f64> = breaks.iter().filter(|p| **p < -1.0).map(|p| (-p).ln()).collect();
    let right = integrate_raw(|v| f(v.exp()) * v.exp(), 0.0, f64::INFINITY, &right_breaks, opts);
    let left = integrate_raw(|v| f(-v.exp()) * v.exp(), 0.0, f64::INFINITY, &left_breaks, opts);
    Integral {
        value: core.value + right.value + left.value,
        abs_err: core.abs_err + right.abs_err + left.abs_err,
        evaluations: core.evaluations + right.evaluations + left.evaluations,
        intervals: core.intervals + right.intervals + left.intervals,
        converged: core.converged && right.converged && left.converged,
    }
}

/// Mass per decade of a nonnegative integrand over `[10⁴, 10⁸]` and
/// `[10⁸, 10¹⁶]` on the side `sign`. A non-decreasing per-decade mass means
/// the integral diverges (at least logarithmically), which finite precision
/// quadrature cannot otherwise detect.
fn tail_grows<F: Fn(f64) -> f64>(f: F, sign: f64, total: f64) -> bool {
    let opts = QuadOptions::new(0.0, 1e-8).with_max_intervals(200);
    let ln10 = std::f64::consts::LN_10;
    let mass = |a: f64, b: f64| {
        integrate_raw(|v| f(sign * v.exp()) * v.exp(), a * ln10, b * ln10, &[], &opts).value
    };
    let near = mass(4.0, 8.0) / 4.0;
    let far = mass(8.0, 16.0) / 8.0;
    far > 1e-12 * total.abs() && far >= near
}

/// Mean of the symmetrized observable and `Z`, by quadrature.
fn centre(target: &Target, g: &Observable) -> Result<(f64, f64, f64, f64)> {
    let u = |x: f64| target.potential(&[x]);
    let zq = line_integral(|x| (-u(x)).exp(), &[0.0], &outer_opts());
    let z = match target.log_norm_const() {
        Some(lz) => lz.exp(),
        None => zq.value,
    };
    let mq = line_integral(
        |x| g.symmetrized(x) * (-u(x)).exp(),
        &[0.0],
        &outer_opts(),
    );
    let abs_q = line_integral(
        |x| g.symmetrized(x).abs() * (-u(x)).exp(),
        &[0.0],
        &outer_opts(),
    );
    let abs_g = |x: f64| g.symmetrized(x).abs() * (-u(x)).exp();
    let diverges = tail_grows(abs_g, 1.0, abs_q.value) || tail_grows(abs_g, -1.0, abs_q.value);
    if diverges || !abs_q.converged && abs_q.abs_err > 1e-8 * abs_q.value.abs().max(1.0) {
        return Err(SuzzError::Divergent(format!(
            "observable {} is not integrable under target {}",
            g.id(),
            target.id()
        )));
    }
    let mut mean = mq.value / z;
    // Symmetric cancellation leaves round-off, not a genuine mean.
    if mean.abs() <= 1e-12 * abs_q.value / z {
        mean = 0.0;
    }
    Ok((mean, z, mq.abs_err, zq.abs_err))
}

struct KernelK<'a> {
    target: &'a Target,
    g: &'a Observable,
    mean: f64,
    factor: f64,
}

impl KernelK<'_> {
    /// `κ(x) = k(x) e^{U(x)}` and the quadrature error estimate.
    fn kappa(&self, x: f64) -> (f64, f64) {
        let ux = self.target.potential(&[x]);
        let h = |y: f64| {
            let w = (ux - self.target.potential(&[y])).exp();
            if w == 0.0 {
                0.0
            } else {
                (self.g.symmetrized(y) - self.mean) * w
            }
        };
        // Rescale by the local length scale 1/|U′(x)| so the tail map resolves
        // both light tails (scale 1/x) and heavy tails (scale x).
        let slope = self.target.gradient(&[x])[0].abs();
        let sigma = if slope > 0.0 { (1.0 / slope).clamp(1e-150, 1e150) } else { 1.0 };
        let dir = if x >= 0.0 { 1.0 } else { -1.0 };
        let q = integrate_raw(|v| h(x + dir * sigma * v) * sigma, 0.0, f64::INFINITY, &[], &inner_opts());
        let q = Integral {
            value: dir * q.value,
            ..q
        };
        (self.factor * q.value, self.factor * q.abs_err)
    }
}

/// `k(x)` for a 1-D target and observable under the given convention.
pub fn k_of(target: &Target, g: &Observable, x: f64, convention: KConvention) -> Result<f64> {
    let (mean, ..) = centre(target, g)?;
    let kk = KernelK {
        target,
        g,
        mean,
        factor: convention.factor(),
    };
    Ok(kk.kappa(x).0 * (-target.potential(&[x])).exp())
}

fn check_speed_assumption(target: &Target, speed: &SpeedFunction) -> Result<()> {
    let rs = RateSpec::new(target.clone(), speed.clone());
    let radii: Vec<f64> = (1..=8).map(|k| 10f64.powi(k)).collect();
    let audit = audit_assumptions(&rs, &[vec![1.0], vec![-1.0]], &radii)?;
    if audit.rays.iter().any(|r| r.growth_flag) {
        return Err(SuzzError::InvalidParameter(format!(
            "s e^(-U) does not vanish at infinity for target {} and speed {}",
            target.id(),
            speed.id()
        )));
    }
    Ok(())
}

pub fn inverse_efficiency(
    target: &Target,
    speed: &SpeedFunction,
    g: &Observable,
    convention: KConvention,
) -> Result<EfficiencyReport> {
    check_speed_assumption(target, speed)?;
    let profile = RProfile::from_speed(target, speed)?;
    inverse_efficiency_profile(target, &profile, g, convention)
}

/// `J[r]` for an arbitrary profile `r` (not necessarily induced by a speed).
pub fn inverse_efficiency_profile(
    target: &Target,
    r: &RProfile,
    g: &Observable,
    convention: KConvention,
) -> Result<EfficiencyReport> {
    if target.dim() != 1 {
        return Err(SuzzError::InvalidParameter(format!(
            "efficiency needs a 1-D target, got d = {}",
            target.dim()
        )));
    }
    let (mean, z, mean_err, z_err) = centre(target, g)?;
    let kk = KernelK {
        target,
        g,
        mean,
        factor: convention.factor(),
    };

    let f1 = line_integral(
        |x| {
            let lr = r.log_r(x);
            if lr == f64::NEG_INFINITY {
                0.0
            } else {
                (r.dlog_r)(x).abs() * lr.exp()
            }
        },
        &r.breaks,
        &outer_opts(),
    );
    if !f1.converged && f1.abs_err > 1e-8 * f1.value.abs() {
        return Err(SuzzError::QuadratureNonConvergence {
            a: f64::NEG_INFINITY,
            b: f64::INFINITY,
            value: f1.value,
            abs_err: f1.abs_err,
        });
    }

    let inner_err = std::sync::Mutex::new(0.0f64);
    let integrand = |x: f64| {
        let rho = (r.dlog_r)(x).abs();
        let log_w = -2.0 * target.potential(&[x]) - r.log_r(x);
        if rho == 0.0 || !log_w.is_finite() && log_w < 0.0 {
            return 0.0;
        }
        let w = log_w.exp();
        if w == 0.0 {
            return 0.0;
        }
        let (kappa, err) = kk.kappa(x);
        let mut m = inner_err.lock().unwrap();
        if kappa != 0.0 {
            *m = m.max(err / kappa.abs());
        }
        rho * kappa * kappa * w
    };
    for side in [1.0, -1.0] {
        if tail_grows(integrand, side, 0.0) {
            return Err(SuzzError::Divergent(format!(
                "second factor for observable {} under target {} with {} diverges \
                 (tail mass per decade does not decay as x -> {}inf)",
                g.id(),
                target.id(),
                r.id,
                if side > 0.0 { "+" } else { "-" }
            )));
        }
    }
    let f2 = line_integral(integrand, &r.breaks, &outer_opts());
    if !f2.value.is_finite() || !f2.converged && f2.abs_err > 1e-6 * f2.value.abs() {
        return Err(SuzzError::Divergent(format!(
            "second factor for observable {} under target {} with {} did not converge \
             (value {:.6e}, error estimate {:.3e} after {} intervals)",
            g.id(),
            target.id(),
            r.id,
            f2.value,
            f2.abs_err,
            f2.intervals
        )));
    }

    let j = f1.value * f2.value;
    let n0 = 0.5 * f1.value;
    let n0_normalized = n0 / z;
    Ok(EfficiencyReport {
        target_id: target.id().to_string(),
        speed_id: r.id.clone(),
        observable_id: g.id().to_string(),
        convention,
        mean,
        factor1: f1.value,
        factor2: f2.value,
        j,
        n0,
        gamma2: j / n0,
        z,
        n0_normalized,
        gamma2_normalized: j / (z * z * n0_normalized),
        diagnostics: QuadDiagnostics {
            mean_abs_err: mean_err,
            z_abs_err: z_err,
            factor1_abs_err: f1.abs_err,
            factor2_abs_err: f2.abs_err,
            factor1_intervals: f1.intervals,
            factor2_intervals: f2.intervals,
            max_inner_rel_err: inner_err.into_inner().unwrap(),
        },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TableCell {
    pub target_id: String,
    pub speed_id: String,
    pub observable_id: String,
    /// `J`, or `+∞` when the cell failed.
    pub value: f64,
    pub reason: Option<String>,
    pub report: Option<EfficiencyReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EfficiencyTable {
    pub targets: Vec<String>,
    pub speeds: Vec<String>,
    /// Row-major: one row per speed.
    pub cells: Vec<TableCell>,
}

/// Row label: `Zig-Zag` for unit speed, `SUZZ(ε)` for polynomial speeds.
pub fn speed_label(speed: &SpeedFunction) -> String {
    match speed.family() {
        SpeedFamily::Constant { c: 1.0 } => "Zig-Zag".into(),
        SpeedFamily::PolyRadial { epsilon, .. } => format!("SUZZ({epsilon})"),
        _ => speed.id().to_string(),
    }
}

/// Evaluates every (speed, target) cell in parallel.
pub fn efficiency_table<O>(
    targets: &[Target],
    speeds: &[SpeedFunction],
    observable_for: O,
    convention: KConvention,
) -> EfficiencyTable
where
    O: Fn(&Target) -> Observable + Sync,
{
    let jobs: Vec<(&SpeedFunction, &Target)> = speeds
        .iter()
        .flat_map(|s| targets.iter().map(move |t| (s, t)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|(s, t)| {
            let g = observable_for(t);
            match inverse_efficiency(t, s, &g, convention) {
                Ok(rep) => TableCell {
                    target_id: t.id().to_string(),
                    speed_id: s.id().to_string(),
                    observable_id: g.id().to_string(),
                    value: rep.j,
                    reason: None,
                    report: Some(rep),
                },
                Err(e) => TableCell {
                    target_id: t.id().to_string(),
                    speed_id: s.id().to_string(),
                    observable_id: g.id().to_string(),
                    value: f64::INFINITY,
                    reason: Some(e.to_string()),
                    report: None,
                },
            }
        })
        .collect();
    EfficiencyTable {
        targets: targets.iter().map(|t| t.id().to_string()).collect(),
        speeds: speeds.iter().map(speed_label).collect(),
        cells,
    }
}

impl EfficiencyTable {
    pub fn get(&self, speed_row: usize, target_col: usize) -> &TableCell {
        &self.cells[speed_row * self.targets.len() + target_col]
    }

    /// CSV with one row per speed and one column per target; failed cells
    /// print as `+inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("algorithm");
        for t in &self.targets {
            out.push(',');
            out.push_str(t);
        }
        out.push('\n');
        for (i, label) in self.speeds.iter().enumerate() {
            out.push_str(label);
            for j in 0..self.targets.len() {
                let v = self.get(i, j).value;
                out.push(',');
                if v.is_finite() {
                    out.push_str(&format!("{v:.6}"));
                } else {
                    out.push_str("+inf");
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{make_std_normal_1d, make_symmetric_exponential_1d, make_student_t_1d};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn k_examples() {
        let n = make_std_normal_1d();
        for x in [-2.0, 0.0, 0.7, 3.0] {
            let k = k_of(&n, &Observable::identity(), x, KConvention::Symmetrized).unwrap();
            assert!(rel(k, (-x * x / 2.0f64).exp()) < 1e-10, "{x}: {k}");
        }
        let e = make_symmetric_exponential_1d();
        for x in [0.0, 0.5, 4.0] {
            let k = k_of(&e, &Observable::identity(), x, KConvention::Symmetrized).unwrap();
            assert!(rel(k, (x + 1.0) * (-x).exp()) < 1e-10);
        }
        let k = k_of(&e, &Observable::zero(), 1.3, KConvention::Symmetrized).unwrap();
        assert_eq!(k, 0.0);
    }

    #[test]
    fn zig_zag_benchmarks() {
        let r = inverse_efficiency(
            &make_std_normal_1d(),
            &SpeedFunction::unit(),
            &Observable::identity(),
            KConvention::Symmetrized,
        )
        .unwrap();
        assert!(rel(r.j, 4.0) < 1e-8, "{r:?}");
        assert!(rel(r.factor1, 2.0) < 1e-10);
        assert!(rel(r.gamma2_normalized, 2.0 * (2.0 / std::f64::consts::PI).sqrt()) < 1e-8);
        let r = inverse_efficiency(
            &make_symmetric_exponential_1d(),
            &SpeedFunction::unit(),
            &Observable::identity(),
            KConvention::Symmetrized,
        )
        .unwrap();
        assert!(rel(r.j, 20.0) < 1e-8, "{r:?}");
    }

    #[test]
    fn as_printed_is_four_times() {
        let t = make_std_normal_1d();
        let s = SpeedFunction::poly_radial(0.5).unwrap();
        let a = inverse_efficiency(&t, &s, &Observable::identity(), KConvention::Symmetrized).unwrap();
        let b = inverse_efficiency(&t, &s, &Observable::identity(), KConvention::AsPrinted).unwrap();
        assert!(rel(b.j, 4.0 * a.j) < 1e-12);
    }

    #[test]
    fn zero_observable() {
        let r = inverse_efficiency(
            &make_std_normal_1d(),
            &SpeedFunction::unit(),
            &Observable::zero(),
            KConvention::Symmetrized,
        )
        .unwrap();
        assert_eq!(r.j, 0.0);
    }

    #[test]
    fn cauchy_zig_zag_diverges() {
        let r = inverse_efficiency(
            &make_student_t_1d(1.0).unwrap(),
            &SpeedFunction::unit(),
            &Observable::sgn_log(),
            KConvention::Symmetrized,
        );
        assert!(matches!(r, Err(SuzzError::Divergent(_))), "{r:?}");
    }

    #[test]
    fn audit_failure_is_an_error() {
        let r = inverse_efficiency(
            &make_student_t_1d(1.0).unwrap(),
            &SpeedFunction::poly_radial(1.0).unwrap(),
            &Observable::sgn_log(),
            KConvention::Symmetrized,
        );
        assert!(matches!(r, Err(SuzzError::InvalidParameter(_))));
    }

    #[test]
    fn csv_layout() {
        let t = efficiency_table(
            &[make_std_normal_1d(), make_student_t_1d(1.0).unwrap()],
            &[SpeedFunction::unit()],
            default_observable_for,
            KConvention::Symmetrized,
        );
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "algorithm,normal1d,student:1");
        assert!(lines[1].starts_with("Zig-Zag,4.0000"));
        assert!(lines[1].ends_with(",+inf"));
        assert!(t.get(0, 1).reason.is_some());
    }
}
