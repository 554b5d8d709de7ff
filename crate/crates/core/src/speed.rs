//! Speed functions and the switching-rate ingredients
//! `A_i(x) = s(x) ∂_i U(x) − ∂_i s(x)` and `λ_i = [θ_i A_i]^+ + γ_i`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Result, SuzzError};
use crate::numerics::gradient_mismatch;
use crate::targets::{GradientFn, ScalarFn, Target, FD_STEP, FD_TOL};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpeedFamily {
    /// `s ≡ c`.
    Constant { c: f64 },
    /// `s(x) = scale · (1 + ‖x‖²)^{(1+ε)/2}`.
    PolyRadial { epsilon: f64, scale: f64 },
    Custom,
}

#[derive(Clone)]
pub struct SpeedFunction {
    id: String,
    family: SpeedFamily,
    custom: Option<(ScalarFn, GradientFn)>,
}

impl fmt::Debug for SpeedFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpeedFunction")
            .field("id", &self.id)
            .field("family", &self.family)
            .finish()
    }
}

impl SpeedFunction {
    /// Classical Zig-Zag, `s ≡ 1`.
    pub fn unit() -> Self {
        Self {
            id: "unit".into(),
            family: SpeedFamily::Constant { c: 1.0 },
            custom: None,
        }
    }

    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(SuzzError::InvalidParameter(format!(
                "constant speed must be positive, got {c}"
            )));
        }
        Ok(Self {
            id: format!("const:{c}"),
            family: SpeedFamily::Constant { c },
            custom: None,
        })
    }

    pub fn poly_radial(epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= -1.0 {
            return Err(SuzzError::InvalidParameter(format!(
                "poly speed exponent must be finite and > -1, got {epsilon}"
            )));
        }
        Ok(Self {
            id: format!("poly:{epsilon}"),
            family: SpeedFamily::PolyRadial {
                epsilon,
                scale: 1.0,
            },
            custom: None,
        })
    }

    pub fn custom(id: impl Into<String>, value: ScalarFn, gradient: GradientFn) -> Self {
        Self {
            id: id.into(),
            family: SpeedFamily::Custom,
            custom: Some((value, gradient)),
        }
    }

    /// Parses `unit`, `poly:<epsilon>` or `const:<c>`.
    pub fn from_id(id: &str) -> Result<Self> {
        let id = id.trim();
        if id == "unit" {
            return Ok(Self::unit());
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| {
                SuzzError::InvalidParameter(format!("speed: cannot parse number in {id:?}"))
            })
        };
        if let Some(e) = id.strip_prefix("poly:") {
            return Self::poly_radial(parse(e)?);
        }
        if let Some(c) = id.strip_prefix("const:") {
            return Self::constant(parse(c)?);
        }
        Err(SuzzError::InvalidParameter(format!(
            "speed: unknown id {id:?} (expected unit or poly:<epsilon>)"
        )))
    }

    /// The same speed multiplied by a positive constant.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(SuzzError::InvalidParameter(format!(
                "speed scale must be positive, got {c}"
            )));
        }
        let id = format!("{}*{c}", self.id);
        Ok(match (&self.family, &self.custom) {
            (SpeedFamily::Constant { c: c0 }, _) => Self {
                id,
                family: SpeedFamily::Constant { c: c0 * c },
                custom: None,
            },
            (SpeedFamily::PolyRadial { epsilon, scale }, _) => Self {
                id,
                family: SpeedFamily::PolyRadial {
                    epsilon: *epsilon,
                    scale: scale * c,
                },
                custom: None,
            },
            (SpeedFamily::Custom, Some((v, g))) => {
                let (v, g) = (v.clone(), g.clone());
                Self::custom(
                    id,
                    Arc::new(move |x| c * v(x)),
                    Arc::new(move |x, out| {
                        g(x, out);
                        out.iter_mut().for_each(|o| *o *= c);
                    }),
                )
            }
            (SpeedFamily::Custom, None) => unreachable!("custom speed without callbacks"),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn family(&self) -> SpeedFamily {
        self.family
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.family, SpeedFamily::Constant { .. })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self.family {
            SpeedFamily::Constant { c } => c,
            SpeedFamily::PolyRadial { epsilon, scale } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                scale * (1.0 + r2).powf(0.5 * (1.0 + epsilon))
            }
            SpeedFamily::Custom => (self.custom.as_ref().expect("custom callbacks").0)(x),
        }
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match self.family {
            SpeedFamily::Constant { .. } => out.iter_mut().for_each(|o| *o = 0.0),
            SpeedFamily::PolyRadial { epsilon, scale } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let k = scale * (1.0 + epsilon) * (1.0 + r2).powf(0.5 * (epsilon - 1.0));
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = k * xi;
                }
            }
            SpeedFamily::Custom => (self.custom.as_ref().expect("custom callbacks").1)(x, out),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.gradient_into(x, &mut g);
        g
    }

    /// Finite-difference audit of the gradient plus positivity at `x`.
    pub fn check_at(&self, x: &[f64]) -> Result<()> {
        let s = self.value(x);
        if !(s > 0.0) {
            return Err(SuzzError::InvalidParameter(format!(
                "speed must be positive, got s({x:?}) = {s}"
            )));
        }
        let g = self.gradient(x);
        match gradient_mismatch(|p| self.value(p), &g, x, FD_STEP, FD_TOL) {
            None => Ok(()),
            Some((coordinate, analytic, numeric)) => Err(SuzzError::GradientMismatch {
                point: x.to_vec(),
                coordinate,
                analytic,
                numeric,
            }),
        }
    }
}

/// Target, speed and constant refresh rates: everything that defines the
/// switching intensities.
#[derive(Debug, Clone)]
pub struct RateSpec {
    pub target: Target,
    pub speed: SpeedFunction,
    refresh: Vec<f64>,
}

impl RateSpec {
    /// Canonical rates (`γ ≡ 0`).
    pub fn new(target: Target, speed: SpeedFunction) -> Self {
        let d = target.dim();
        Self {
            target,
            speed,
            refresh: vec![0.0; d],
        }
    }

    pub fn with_refresh(mut self, refresh: Vec<f64>) -> Result<Self> {
        if refresh.len() != self.dim() {
            return Err(SuzzError::DimensionMismatch {
                expected: self.dim(),
                got: refresh.len(),
            });
        }
        if let Some(g) = refresh.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
            return Err(SuzzError::InvalidParameter(format!(
                "refresh rates must be finite and nonnegative, got {g}"
            )));
        }
        self.refresh = refresh;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn refresh(&self) -> &[f64] {
        &self.refresh
    }

    pub fn has_refresh(&self) -> bool {
        self.refresh.iter().any(|g| *g > 0.0)
    }

    /// Writes `A(x)` into `out`, using `scratch` (length d) for `∇s`.
    pub fn a_into(&self, x: &[f64], out: &mut [f64], scratch: &mut [f64]) -> f64 {
        self.target.gradient_into(x, out);
        let s = self.speed.value(x);
        if self.speed.is_constant() {
            out.iter_mut().for_each(|o| *o *= s);
        } else {
            self.speed.gradient_into(x, scratch);
            for (o, ds) in out.iter_mut().zip(scratch.iter()) {
                *o = s * *o - ds;
            }
        }
        s
    }

    /// `A_i(x) = s(x) ∂_i U(x) − ∂_i s(x)`.
    pub fn a(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d];
        let mut scratch = vec![0.0; d];
        self.a_into(x, &mut out, &mut scratch);
        out
    }

    /// Switching intensity of coordinate `i` at `(x, θ)`.
    pub fn rate(&self, x: &[f64], theta: &[i8], i: usize) -> f64 {
        let a = self.a(x);
        (f64::from(theta[i]) * a[i]).max(0.0) + self.refresh[i]
    }

    pub fn rates(&self, x: &[f64], theta: &[i8]) -> Vec<f64> {
        let a = self.a(x);
        a.iter()
            .zip(theta)
            .zip(&self.refresh)
            .map(|((ai, ti), g)| (f64::from(*ti) * ai).max(0.0) + g)
            .collect()
    }

    pub fn total_rate(&self, x: &[f64], theta: &[i8]) -> f64 {
        self.rates(x, theta).iter().sum()
    }
}

/// Reusable buffers for allocation-free rate evaluation along a ray.
#[derive(Debug, Clone)]
pub(crate) struct RateScratch {
    pub pos: Vec<f64>,
    pub a: Vec<f64>,
    pub ds: Vec<f64>,
}

impl RateScratch {
    pub fn new(d: usize) -> Self {
        Self {
            pos: vec![0.0; d],
            a: vec![0.0; d],
            ds: vec![0.0; d],
        }
    }
}

impl RateSpec {
    /// Total rate divided by speed at `x0 + θ u`: the intensity per unit arc length.
    pub(crate) fn arc_intensity(&self, x0: &[f64], theta: &[i8], u: f64, sc: &mut RateScratch) -> f64 {
        for ((p, x), t) in sc.pos.iter_mut().zip(x0).zip(theta) {
            *p = x + f64::from(*t) * u;
        }
        let s = self.a_into(&sc.pos, &mut sc.a, &mut sc.ds);
        let total: f64 = sc
            .a
            .iter()
            .zip(theta)
            .zip(&self.refresh)
            .map(|((ai, ti), g)| (f64::from(*ti) * ai).max(0.0) + g)
            .sum();
        total / s
    }
}

/// Tail behaviour of `e^{-U} s` and `r^{d-1} e^{-U} s` along one ray.
#[derive(Debug, Clone, Serialize)]
pub struct RayAudit {
    pub direction: Vec<f64>,
    pub radii: Vec<f64>,
    /// `log(e^{-U(rω)} s(rω))`.
    pub log_growth: Vec<f64>,
    /// `log(r^{d-1} e^{-U(rω)} s(rω))`.
    pub log_non_evanescence: Vec<f64>,
    pub growth_flag: bool,
    pub non_evanescence_flag: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub rays: Vec<RayAudit>,
    /// No ray flagged for either condition.
    pub passed: bool,
}

fn tail_not_decreasing(values: &[f64]) -> bool {
    let tail = &values[values.len() / 2..];
    tail.windows(2)
        .any(|w| !(w[1] < w[0] - 1e-9 * (1.0 + w[0].abs())))
}

/// Advisory numeric check that `e^{-U}s → 0` (speed growth) and
/// `‖x‖^{d−1} s e^{-U} → 0` (non-evanescence) along the given rays. The
/// second half of the radii grid is treated as the tail; a tail that is not
/// strictly decreasing is flagged.
pub fn audit_assumptions(rs: &RateSpec, rays: &[Vec<f64>], radii: &[f64]) -> Result<AuditReport> {
    if radii.len() < 2 || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SuzzError::InvalidParameter(
            "audit radii must be strictly increasing with at least two entries".into(),
        ));
    }
    let d = rs.dim();
    let mut out = Vec::with_capacity(rays.len());
    for ray in rays {
        if ray.len() != d {
            return Err(SuzzError::DimensionMismatch {
                expected: d,
                got: ray.len(),
            });
        }
        let norm = ray.iter().map(|v| v * v).sum::<f64>().sqrt();
        let omega: Vec<f64> = ray.iter().map(|v| v / norm).collect();
        let mut log_growth = Vec::with_capacity(radii.len());
        let mut log_ne = Vec::with_capacity(radii.len());
        for &r in radii {
            let x: Vec<f64> = omega.iter().map(|w| w * r).collect();
            let lg = -rs.target.potential(&x) + rs.speed.value(&x).ln();
            log_growth.push(lg);
            log_ne.push(lg + (d as f64 - 1.0) * r.ln());
        }
        out.push(RayAudit {
            growth_flag: tail_not_decreasing(&log_growth),
            non_evanescence_flag: tail_not_decreasing(&log_ne),
            direction: omega,
            radii: radii.to_vec(),
            log_growth,
            log_non_evanescence: log_ne,
        });
    }
    let passed = out
        .iter()
        .all(|r| !r.growth_flag && !r.non_evanescence_flag);
    Ok(AuditReport { rays: out, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{make_cauchy_5d, make_std_normal_1d, make_student_t_1d};

    fn cauchy() -> Target {
        make_student_t_1d(1.0).unwrap()
    }

    #[test]
    fn a_examples() {
        let rs = RateSpec::new(make_std_normal_1d(), SpeedFunction::unit());
        assert_eq!(rs.a(&[2.0]), vec![2.0]);
        let rs = RateSpec::new(cauchy(), SpeedFunction::poly_radial(0.0).unwrap());
        assert!((rs.a(&[1.0])[0] - 0.5f64.sqrt()).abs() < 1e-12);
        let rs = RateSpec::new(cauchy(), SpeedFunction::poly_radial(1.0).unwrap());
        for x in [-7.0, -0.3, 0.0, 2.0, 40.0] {
            assert!(rs.a(&[x])[0].abs() < 1e-12);
        }
    }

    #[test]
    fn rate_examples() {
        let rs = RateSpec::new(make_std_normal_1d(), SpeedFunction::unit());
        assert_eq!(rs.rate(&[2.0], &[1], 0), 2.0);
        assert_eq!(rs.rate(&[2.0], &[-1], 0), 0.0);
        let rs = rs.with_refresh(vec![0.5]).unwrap();
        assert_eq!(rs.rate(&[2.0], &[-1], 0), 0.5);
    }

    #[test]
    fn total_rate_examples() {
        let rs = RateSpec::new(make_cauchy_5d(), SpeedFunction::unit());
        let e1 = [1.0, 0.0, 0.0, 0.0, 0.0];
        assert!((rs.total_rate(&e1, &[1; 5]) - 3.0).abs() < 1e-15);
        assert_eq!(rs.total_rate(&[0.0; 5], &[1; 5]), 0.0);
        let rs = RateSpec::new(make_std_normal_1d(), SpeedFunction::poly_radial(0.5).unwrap());
        assert_eq!(rs.total_rate(&[0.0], &[-1]), 0.0);
        assert_eq!(rs.total_rate(&[3.0], &[1]), rs.rate(&[3.0], &[1], 0));
    }

    #[test]
    fn refresh_validation() {
        let rs = RateSpec::new(make_std_normal_1d(), SpeedFunction::unit());
        assert!(rs.clone().with_refresh(vec![-0.1]).is_err());
        assert!(rs.with_refresh(vec![0.1, 0.2]).is_err());
    }

    #[test]
    fn speed_ids() {
        assert!(SpeedFunction::from_id("poly:abc").is_err());
        assert!(SpeedFunction::from_id("fast").is_err());
        assert_eq!(
            SpeedFunction::from_id("poly:0.5").unwrap().family(),
            SpeedFamily::PolyRadial {
                epsilon: 0.5,
                scale: 1.0
            }
        );
        assert!(SpeedFunction::from_id("unit").unwrap().is_constant());
    }

    #[test]
    fn audit_examples() {
        let radii: Vec<f64> = (1..=40).map(|k| 0.5 * k as f64).collect();
        let rays = vec![vec![1.0], vec![-1.0]];
        let rs = RateSpec::new(make_std_normal_1d(), SpeedFunction::poly_radial(0.5).unwrap());
        assert!(audit_assumptions(&rs, &rays, &radii).unwrap().passed);
        let rs = RateSpec::new(cauchy(), SpeedFunction::poly_radial(1.0).unwrap());
        let rep = audit_assumptions(&rs, &rays, &radii).unwrap();
        assert!(!rep.passed);
        assert!(rep.rays[0].growth_flag);
        assert!(rep.rays[0].log_growth.iter().all(|v| v.abs() < 1e-12));
        let rs = RateSpec::new(cauchy(), SpeedFunction::poly_radial(0.5).unwrap());
        let rep = audit_assumptions(&rs, &rays, &radii).unwrap();
        assert!(rep.passed);
        // Decays like r^{-1/2}.
        let n = radii.len();
        let slope = (rep.rays[0].log_growth[n - 1] - rep.rays[0].log_growth[n - 2])
            / (radii[n - 1].ln() - radii[n - 2].ln());
        assert!((slope + 0.5).abs() < 0.01);
        assert!(audit_assumptions(&rs, &rays, &[2.0, 1.0]).is_err());
    }
}
