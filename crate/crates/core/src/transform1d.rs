//! One-dimensional space transformation.
//!
//! With `f(x) = ∫₀ˣ du / s(u)`, the image `Y = f(X)` of a 1-D speed-up Zig-Zag
//! process is a classical Zig-Zag process on `(−M⁻, M⁺)` with potential
//! `V(y) = U(f⁻¹(y)) − log s(f⁻¹(y))`. `M^±` are the explosion times of the
//! flow started at the origin, so the interval is bounded exactly when the
//! flow explodes.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::error::{Result, SuzzError};
use crate::flow::LineFlow;
use crate::sampler::{EventChain, Sampler};
use crate::speed::{RateSpec, SpeedFunction};
use crate::targets::Target;

/// Distance from a finite boundary below which `y` is treated as having hit it.
const BOUNDARY_GUARD: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SpaceTransform {
    rs: RateSpec,
    plus: Arc<LineFlow>,
    minus: Arc<LineFlow>,
}

impl SpaceTransform {
    pub fn new(rs: &RateSpec) -> Result<Self> {
        if rs.dim() != 1 {
            return Err(SuzzError::InvalidParameter(format!(
                "space transformation needs d = 1, got d = {}",
                rs.dim()
            )));
        }
        Ok(Self {
            rs: rs.clone(),
            plus: Arc::new(LineFlow::new(&[0.0], &[1], &rs.speed)),
            minus: Arc::new(LineFlow::new(&[0.0], &[-1], &rs.speed)),
        })
    }

    pub fn m_plus(&self) -> f64 {
        self.plus.explosion_time()
    }

    pub fn m_minus(&self) -> f64 {
        self.minus.explosion_time()
    }

    pub fn f(&self, x: f64) -> f64 {
        if x >= 0.0 {
            self.plus.time_of_arc(x)
        } else {
            -self.minus.time_of_arc(-x)
        }
    }

    pub fn f_inv(&self, y: f64) -> Result<f64> {
        self.check_inside(y)?;
        if y >= 0.0 {
            self.plus.arc_of_time(y)
        } else {
            Ok(-self.minus.arc_of_time(-y)?)
        }
    }

    fn check_inside(&self, y: f64) -> Result<()> {
        let (lo, hi) = (-self.m_minus(), self.m_plus());
        let near = |m: f64| m.is_finite() && (m - y.abs()) <= BOUNDARY_GUARD * m.max(1.0);
        if !(y > lo && y < hi) || (y > 0.0 && near(hi)) || (y < 0.0 && near(-lo)) {
            return Err(SuzzError::ExplosionDomain(format!(
                "y = {y} outside or at the boundary of ({lo}, {hi})"
            )));
        }
        Ok(())
    }

    /// `V(y) = U(x) − log s(x)` at `x = f⁻¹(y)`.
    pub fn potential(&self, y: f64) -> Result<f64> {
        let x = [self.f_inv(y)?];
        Ok(self.rs.target.potential(&x) - self.rs.speed.value(&x).ln())
    }

    /// `V′(y) = s(x) U′(x) − s′(x) = A(x)` at `x = f⁻¹(y)`.
    pub fn potential_grad(&self, y: f64) -> Result<f64> {
        let x = self.f_inv(y)?;
        Ok(self.rs.a(&[x])[0])
    }

    /// The transformed process as a unit-speed rate specification on
    /// `(−M⁻, M⁺)`.
    pub fn transformed_spec(&self) -> Result<RateSpec> {
        if self.rs.has_refresh() {
            return Err(SuzzError::InvalidParameter(
                "the transformed process is a Zig-Zag process only without refreshment".into(),
            ));
        }
        let (pot_tr, grad_tr) = (self.clone(), self.clone());
        let target = Target::from_parts(
            format!("transformed({},{})", self.rs.target.id(), self.rs.speed.id()),
            1,
            Arc::new(move |y: &[f64]| pot_tr.potential(y[0]).unwrap_or(f64::INFINITY)),
            Arc::new(move |y: &[f64], g: &mut [f64]| {
                g[0] = grad_tr.potential_grad(y[0]).unwrap_or(f64::NAN)
            }),
        );
        let target = if self.m_plus().is_finite() || self.m_minus().is_finite() {
            target.with_domain(vec![(-self.m_minus(), self.m_plus())])
        } else {
            target
        };
        Ok(RateSpec::new(target, SpeedFunction::unit()))
    }
}

pub fn make_transform(rs: &RateSpec) -> Result<SpaceTransform> {
    SpaceTransform::new(rs)
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub target_id: String,
    pub speed_id: String,
    pub n_events: usize,
    pub seed: u64,
    pub m_minus: f64,
    pub m_plus: f64,
    pub max_abs_time_diff: f64,
    pub max_rel_time_diff: f64,
    pub max_abs_position_diff: f64,
    /// Position differences relative to `max(1, |x|)`.
    pub max_rel_position_diff: f64,
    /// Smallest distance of the transformed chain's events to a finite
    /// boundary; `None` when both sides are unbounded.
    pub min_boundary_distance: Option<f64>,
    pub bit_identical: bool,
}

/// Runs the speed-up process and the transformed Zig-Zag process with the
/// same seed (hence the same exponential and uniform draws) and compares the
/// events after mapping the transformed chain back through `f⁻¹`.
pub fn equivalence_check(
    rs: &RateSpec,
    x0: f64,
    theta0: i8,
    n_events: usize,
    seed: u64,
) -> Result<EquivalenceReport> {
    let tr = SpaceTransform::new(rs)?;
    let direct: EventChain = Sampler::new(rs.clone()).run_until_switches(
        &[x0],
        &[theta0],
        n_events,
        &mut ChaCha20Rng::seed_from_u64(seed),
    )?;
    let y0 = tr.f(x0);
    let transformed = Sampler::new(tr.transformed_spec()?).run_until_switches(
        &[y0],
        &[theta0],
        n_events,
        &mut ChaCha20Rng::seed_from_u64(seed),
    )?;

    let mut report = EquivalenceReport {
        target_id: rs.target.id().to_string(),
        speed_id: rs.speed.id().to_string(),
        n_events,
        seed,
        m_minus: tr.m_minus(),
        m_plus: tr.m_plus(),
        max_abs_time_diff: 0.0,
        max_rel_time_diff: 0.0,
        max_abs_position_diff: 0.0,
        max_rel_position_diff: 0.0,
        min_boundary_distance: None,
        bit_identical: true,
    };
    let bounded = tr.m_plus().is_finite() || tr.m_minus().is_finite();
    for (a, b) in direct.events.iter().zip(&transformed.events) {
        let y = b.x[0];
        let xb = tr.f_inv(y)?;
        let xa = a.x[0];
        report.bit_identical &= a.t == b.t && xa == xb && a.theta == b.theta;
        let dt = (a.t - b.t).abs();
        report.max_abs_time_diff = report.max_abs_time_diff.max(dt);
        if a.t > 0.0 {
            report.max_rel_time_diff = report.max_rel_time_diff.max(dt / a.t);
        }
        let dx = (xa - xb).abs();
        report.max_abs_position_diff = report.max_abs_position_diff.max(dx);
        report.max_rel_position_diff = report.max_rel_position_diff.max(dx / xa.abs().max(1.0));
        if bounded {
            let dist = (tr.m_plus() - y).min(y + tr.m_minus());
            report.min_boundary_distance =
                Some(report.min_boundary_distance.map_or(dist, |m: f64| m.min(dist)));
        }
    }
    if direct.events.len() != transformed.events.len() {
        report.bit_identical = false;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{make_std_normal_1d, make_student_t_1d};
    use std::f64::consts::FRAC_PI_2;

    fn spec(target: Target, eps: Option<f64>) -> RateSpec {
        let speed = eps.map_or_else(SpeedFunction::unit, |e| SpeedFunction::poly_radial(e).unwrap());
        RateSpec::new(target, speed)
    }

    #[test]
    fn unit_speed_is_identity() {
        let tr = SpaceTransform::new(&spec(make_std_normal_1d(), None)).unwrap();
        assert_eq!(tr.m_plus(), f64::INFINITY);
        for x in [-3.0, 0.0, 0.5, 10.0] {
            assert_eq!(tr.f(x), x);
            assert_eq!(tr.f_inv(x).unwrap(), x);
            assert_eq!(tr.potential_grad(x).unwrap(), x);
        }
    }

    #[test]
    fn poly0_is_asinh_and_poly1_is_atan() {
        let tr = SpaceTransform::new(&spec(make_std_normal_1d(), Some(0.0))).unwrap();
        assert_eq!(tr.m_minus(), f64::INFINITY);
        for x in [-5.0, -0.1, 0.0, 2.0, 40.0] {
            assert!((tr.f(x) - f64::asinh(x)).abs() < 1e-13 * x.abs().max(1.0));
        }
        let tr = SpaceTransform::new(&spec(make_std_normal_1d(), Some(1.0))).unwrap();
        assert!((tr.m_plus() - FRAC_PI_2).abs() < 1e-15);
        assert!((tr.m_minus() - FRAC_PI_2).abs() < 1e-15);
        for x in [-5.0, -0.1, 0.0, 2.0, 40.0] {
            assert!((tr.f(x) - x.atan()).abs() < 1e-14);
        }
        assert!(tr.f_inv(FRAC_PI_2).is_err());
    }

    #[test]
    fn round_trip_on_grid() {
        let tr = SpaceTransform::new(&spec(make_student_t_1d(1.0).unwrap(), Some(0.5))).unwrap();
        for i in -20..=20 {
            let x = f64::from(i) * 0.75;
            let back = tr.f_inv(tr.f(x)).unwrap();
            assert!((back - x).abs() <= 1e-9 * x.abs().max(1.0), "{x} -> {back}");
        }
    }

    #[test]
    fn transformed_gradient_example() {
        let tr = SpaceTransform::new(&spec(make_student_t_1d(1.0).unwrap(), Some(0.5))).unwrap();
        let v = tr.potential_grad(tr.f(1.0)).unwrap();
        assert!((v - 0.5 * 2f64.powf(-0.25)).abs() < 1e-9);
        let tr = SpaceTransform::new(&spec(make_std_normal_1d(), Some(0.0))).unwrap();
        assert_eq!(tr.potential_grad(0.0).unwrap(), 0.0);
    }

    #[test]
    fn refreshment_is_rejected() {
        let rs = spec(make_std_normal_1d(), None).with_refresh(vec![0.5]).unwrap();
        assert!(SpaceTransform::new(&rs).unwrap().transformed_spec().is_err());
    }

    #[test]
    fn unit_speed_runs_coincide() {
        let r = equivalence_check(&spec(make_std_normal_1d(), None), 0.0, 1, 200, 3).unwrap();
        assert!(r.bit_identical, "{r:?}");
    }
}
