//! First arrival of the inhomogeneous Poisson process with intensity
//! `m(t) = λ(Φ(t), θ)` along a flow.
//!
//! Both strategies work in arc-length coordinates, where the intensity per unit
//! arc is `λ/s`: `Λ(t) = ∫₀^{u(t)} λ(x+θv)/s(x+θv) dv`. Arc length never
//! explodes, so explosive flows need no special treatment here; the event time
//! is recovered with `t = time_of_arc(u) < t*`.

use std::cell::{Cell, RefCell};

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Result, SuzzError};
use crate::flow::LineFlow;
use crate::numerics::{brent, integrate_raw, newton_bracketed, QuadOptions, RootOptions};
use crate::speed::{RateScratch, RateSpec};

/// Integrated rate below which a doubling horizon counts as stalled.
const STALL_INCREMENT: f64 = 1e-12;
/// Time beyond which a stalled integrated rate is reported as an escape.
const ESCAPE_TIME: f64 = 1e6;
const MAX_ARC: f64 = 1e300;
const MAX_WINDOWS: usize = 20_000;
/// Grid used to locate sign changes of the directional rates in a window.
const SIGN_GRID: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Solve `Λ(u) = E` for `E ~ Exp(1)` by quadrature and bracketed inversion.
    ExactInversion,
    /// Thinning against `safety ×` the maximum of the intensity over a grid of
    /// `grid_points` equally spaced points in each window.
    GridThinning { grid_points: usize, safety: f64 },
}

/// Counts proposed events against a hard budget.
#[derive(Debug, Clone, Copy)]
pub struct EventBudget {
    pub used: u64,
    pub max: u64,
}

impl EventBudget {
    pub fn new(max: u64) -> Self {
        Self { used: 0, max }
    }

    pub fn tick(&mut self) -> Result<()> {
        self.used += 1;
        if self.used > self.max {
            Err(SuzzError::EventBudgetExceeded(self.max))
        } else {
            Ok(())
        }
    }
}

/// A simulated switching event.
#[derive(Debug, Clone, PartialEq)]
pub struct Arrival {
    /// Time since the start of the flow.
    pub tau: f64,
    /// Arc distance travelled.
    pub arc: f64,
    pub position: Vec<f64>,
    /// Index of the coordinate whose velocity flips.
    pub coordinate: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct ArrivalSampler {
    pub strategy: Strategy,
    /// Initial window length, in time units at the starting speed.
    pub horizon: f64,
    pub quad: QuadOptions,
}

impl Default for ArrivalSampler {
    fn default() -> Self {
        Self::exact()
    }
}

impl ArrivalSampler {
    pub fn exact() -> Self {
        Self {
            strategy: Strategy::ExactInversion,
            horizon: 1.0,
            quad: QuadOptions::new(1e-14, 1e-12).with_max_intervals(400),
        }
    }

    /// 64-point grid with safety factor 1.5.
    pub fn thinning() -> Self {
        Self::grid_thinning(64, 1.5).expect("valid default thinning")
    }

    pub fn grid_thinning(grid_points: usize, safety: f64) -> Result<Self> {
        if safety < 1.2 {
            return Err(SuzzError::InvalidParameter(format!(
                "thinning safety factor must be at least 1.2, got {safety}"
            )));
        }
        if grid_points < 2 {
            return Err(SuzzError::InvalidParameter(
                "thinning grid needs at least two points".into(),
            ));
        }
        Ok(Self {
            strategy: Strategy::GridThinning {
                grid_points,
                safety,
            },
            ..Self::exact()
        })
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    /// Simulates the first switching event along `flow`.
    pub fn first_arrival<R: Rng + ?Sized>(
        &self,
        rs: &RateSpec,
        flow: &LineFlow,
        rng: &mut R,
        budget: &mut EventBudget,
    ) -> Result<Arrival> {
        let ray = Ray::new(rs, flow)?;
        let arc = match self.strategy {
            Strategy::ExactInversion => {
                budget.tick()?;
                let e: f64 = rng.sample(Exp1);
                self.invert(&ray, e)?
            }
            Strategy::GridThinning {
                grid_points,
                safety,
            } => self.thin(&ray, grid_points, safety, rng, budget)?,
        };
        let tau = flow.time_of_arc(arc);
        let t_star = flow.explosion_time();
        if !(tau < t_star) {
            return Err(SuzzError::ExplosionDomain(format!(
                "event time {tau} not before explosion time {t_star}"
            )));
        }
        let position = flow.position_at_arc(arc);
        for (i, xi) in position.iter().enumerate() {
            if !xi.is_finite() || xi.abs() > MAX_ARC {
                return Err(SuzzError::CoordinateOverflow {
                    coordinate: i,
                    value: *xi,
                });
            }
        }
        let rates = rs.rates(&position, flow.theta());
        let total: f64 = rates.iter().sum();
        let v: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut coordinate = rates.len() - 1;
        for (i, r) in rates.iter().enumerate() {
            acc += r;
            if v < acc {
                coordinate = i;
                break;
            }
        }
        Ok(Arrival {
            tau,
            arc,
            position,
            coordinate,
        })
    }

    fn next_window(&self, ray: &Ray, u: f64, h: f64) -> Result<f64> {
        match ray.limit {
            Some(limit) => {
                let gap = limit - u;
                if gap <= 1e-12 * limit.abs().max(1.0) {
                    return Err(SuzzError::ExplosionDomain(format!(
                        "bounded state space boundary reached (arc {u}, limit {limit})"
                    )));
                }
                Ok((u + h).min(u + 0.5 * gap))
            }
            None => Ok(u + h),
        }
    }

    fn check_stall(&self, ray: &Ray, u: f64, increment: f64, integrated: f64) -> Result<()> {
        if increment <= STALL_INCREMENT {
            let t = ray.flow.time_of_arc(u);
            if t >= ESCAPE_TIME || u >= MAX_ARC {
                return Err(SuzzError::NoEventEscape {
                    integrated,
                    time: t,
                });
            }
        }
        if u >= MAX_ARC {
            return Err(SuzzError::CoordinateOverflow {
                coordinate: 0,
                value: u,
            });
        }
        Ok(())
    }

    fn invert(&self, ray: &Ray, e: f64) -> Result<f64> {
        let mut need = e;
        let mut u = 0.0;
        let mut h = self.horizon * ray.flow.speed_at_arc(0.0);
        for _ in 0..MAX_WINDOWS {
            let end = self.next_window(ray, u, h)?;
            let breaks = ray.breaks(u, end);
            let piece = ray.integrate_with(u, end, &breaks, &self.quad);
            if piece >= need {
                let start = u;
                let target = need;
                // Largest point known to lie below the target, with its
                // integral from `start`; later integrals start there.
                let anchor = Cell::new((start, 0.0));
                return newton_bracketed(
                    |v| {
                        let (p, base) = anchor.get();
                        let (from, base) = if v >= p { (p, base) } else { (start, 0.0) };
                        let f = base + ray.integrate_with(from, v, &breaks, &self.quad);
                        if f < target && v > p {
                            anchor.set((v, f));
                        }
                        f - target
                    },
                    |v| ray.intensity(v),
                    start,
                    end,
                    &RootOptions {
                        xtol_abs: 1e-300,
                        xtol_rel: 1e-15,
                        max_iter: 200,
                    },
                );
            }
            need -= piece;
            u = end;
            self.check_stall(ray, u, piece, e - need)?;
            h *= 2.0;
        }
        Err(SuzzError::NoEventEscape {
            integrated: e - need,
            time: ray.flow.time_of_arc(u),
        })
    }

    fn thin<R: Rng + ?Sized>(
        &self,
        ray: &Ray,
        grid_points: usize,
        safety: f64,
        rng: &mut R,
        budget: &mut EventBudget,
    ) -> Result<f64> {
        let mut u0 = 0.0;
        let mut h = self.horizon * ray.flow.speed_at_arc(0.0);
        let mut integrated_bound = 0.0;
        for _ in 0..MAX_WINDOWS {
            let end = self.next_window(ray, u0, h)?;
            let step = (end - u0) / (grid_points - 1) as f64;
            let grid_max = (0..grid_points)
                .map(|j| ray.intensity(u0 + j as f64 * step))
                .fold(0.0, f64::max);
            let bound = safety * grid_max;
            if bound > 0.0 {
                let mut v = u0;
                loop {
                    let gap: f64 = rng.sample(Exp1);
                    v += gap / bound;
                    if v > end {
                        break;
                    }
                    budget.tick()?;
                    let m = ray.intensity(v);
                    if m > bound {
                        return Err(SuzzError::ThinningBoundViolated {
                            start: u0,
                            end,
                            rate: m,
                            bound,
                        });
                    }
                    if rng.random::<f64>() * bound <= m {
                        return Ok(v);
                    }
                }
            }
            let increment = bound * (end - u0);
            integrated_bound += increment;
            u0 = end;
            self.check_stall(ray, u0, increment, integrated_bound)?;
            h *= 2.0;
        }
        Err(SuzzError::NoEventEscape {
            integrated: integrated_bound,
            time: ray.flow.time_of_arc(u0),
        })
    }
}

/// Arc-parametrised intensity along one flow line.
struct Ray<'a> {
    rs: &'a RateSpec,
    flow: &'a LineFlow,
    scratch: RefCell<RateScratch>,
    /// Arc distance to the boundary of a bounded state space.
    limit: Option<f64>,
    /// Arc distances where some coordinate crosses zero (kinks of `[·]^+`
    /// for symmetric targets).
    kinks: Vec<f64>,
}

impl<'a> Ray<'a> {
    fn new(rs: &'a RateSpec, flow: &'a LineFlow) -> Result<Self> {
        let d = rs.dim();
        if flow.origin().len() != d {
            return Err(SuzzError::DimensionMismatch {
                expected: d,
                got: flow.origin().len(),
            });
        }
        let limit = rs.target.domain().map(|dom| {
            flow.origin()
                .iter()
                .zip(flow.theta())
                .zip(dom)
                .map(|((x, t), (lo, hi))| if *t > 0 { hi - x } else { x - lo })
                .fold(f64::INFINITY, f64::min)
        });
        let limit = limit.filter(|l| l.is_finite());
        let mut kinks: Vec<f64> = flow
            .origin()
            .iter()
            .zip(flow.theta())
            .map(|(x, t)| -f64::from(*t) * x)
            .filter(|v| *v > 0.0)
            .collect();
        kinks.sort_by(f64::total_cmp);
        Ok(Self {
            rs,
            flow,
            scratch: RefCell::new(RateScratch::new(d)),
            limit,
            kinks,
        })
    }

    fn intensity(&self, u: f64) -> f64 {
        let mut sc = self.scratch.borrow_mut();
        self.rs
            .arc_intensity(self.flow.origin(), self.flow.theta(), u, &mut sc)
    }

    fn integrate(&self, a: f64, b: f64, opts: &QuadOptions) -> f64 {
        let breaks = self.breaks(a, b);
        self.integrate_with(a, b, &breaks, opts)
    }

    fn integrate_with(&self, a: f64, b: f64, breaks: &[f64], opts: &QuadOptions) -> f64 {
        integrate_raw(|v| self.intensity(v), a, b, breaks, opts).value
    }

    /// `θ_i A_i` at arc `u` for coordinate `i`.
    fn signed_component(&self, u: f64, i: usize) -> f64 {
        let mut sc = self.scratch.borrow_mut();
        let RateScratch { pos, a, ds } = &mut *sc;
        for ((p, x), t) in pos.iter_mut().zip(self.flow.origin()).zip(self.flow.theta()) {
            *p = x + f64::from(*t) * u;
        }
        self.rs.a_into(pos, a, ds);
        f64::from(self.flow.theta()[i]) * a[i]
    }

    /// Kinks of the intensity inside `(a, b)`: coordinate crossings of zero
    /// plus sign changes of any `θ_i A_i` detected on a coarse grid.
    fn breaks(&self, a: f64, b: f64) -> Vec<f64> {
        let d = self.rs.dim();
        let mut out: Vec<f64> = self
            .kinks
            .iter()
            .copied()
            .filter(|k| *k > a && *k < b)
            .collect();
        if b.is_finite() && b > a {
            let grid = |j: usize| {
                if j == SIGN_GRID {
                    b
                } else {
                    a + (b - a) * j as f64 / SIGN_GRID as f64
                }
            };
            for i in 0..d {
                let mut prev = self.signed_component(a, i);
                for j in 1..=SIGN_GRID {
                    let (lo, hi) = (grid(j - 1), grid(j));
                    let cur = self.signed_component(hi, i);
                    if prev * cur < 0.0 {
                        if let Ok(z) = brent(|v| self.signed_component(v, i), lo, hi, &RootOptions::default()) {
                            out.push(z);
                        }
                    }
                    prev = cur;
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out
    }
}

/// `Λ(t) = ∫₀ᵗ λ(Φ(s), θ) ds`, computed in arc coordinates.
pub fn integrated_rate(rs: &RateSpec, flow: &LineFlow, t: f64) -> Result<f64> {
    let u = flow.arc_of_time(t)?;
    integrated_rate_arc(rs, flow, u)
}

/// `∫₀ᵘ λ/s dv` along the flow line.
pub fn integrated_rate_arc(rs: &RateSpec, flow: &LineFlow, u: f64) -> Result<f64> {
    let ray = Ray::new(rs, flow)?;
    let opts = QuadOptions::new(1e-14, 1e-12).with_max_intervals(4000);
    Ok(ray.integrate(0.0, u, &opts))
}

/// The same integral computed directly in the time domain,
/// `∫₀ᵗ λ(Φ(s), θ) ds`, evaluating the flow at every node. For explosive
/// flows the integral runs over `w = −ln(t* − s)`, which keeps the
/// integrand bounded as `s → t*`.
pub fn integrated_rate_by_time(rs: &RateSpec, flow: &LineFlow, t: f64) -> Result<f64> {
    let u_end = flow.arc_of_time(t)?;
    // Kinks of the rate, moved to the time axis by the forward map only.
    let kink_times: Vec<f64> = Ray::new(rs, flow)?
        .breaks(0.0, u_end)
        .into_iter()
        .map(|u| flow.time_of_arc(u))
        .collect();
    let err = RefCell::new(None);
    let f = |s: f64| match flow.position_at(s) {
        Ok(x) => rs.total_rate(&x, flow.theta()),
        Err(e) => {
            err.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    // Positions far from the origin carry absolute rounding of order
    // ulp(|x₀|), so a tighter tolerance is not attainable on long segments.
    let opts = QuadOptions::new(1e-12, 1e-9).with_max_intervals(4000);
    let t_star = flow.explosion_time();
    let r = if t_star.is_finite() {
        let g = |w: f64| {
            let rem = (-w).exp();
            f((t_star - rem).max(0.0)) * rem
        };
        let breaks: Vec<f64> = kink_times.iter().map(|s| -(t_star - s).ln()).collect();
        integrate_raw(g, -t_star.ln(), -(t_star - t).ln(), &breaks, &opts)
    } else {
        integrate_raw(f, 0.0, t, &kink_times, &opts)
    };
    match err.into_inner() {
        Some(e) => Err(e),
        None => Ok(r.value),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::make_flow;
    use crate::speed::SpeedFunction;
    use crate::targets::{make_custom, make_std_normal_1d, make_student_t_1d, Marginal1d};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::sync::Arc;

    #[test]
    fn integrated_rate_examples() {
        let rs = RateSpec::new(make_std_normal_1d(), SpeedFunction::unit());
        let flow = make_flow(&[0.0], &[1], &rs.speed);
        for t in [0.5, 1.0, 3.0] {
            let v = integrated_rate(&rs, &flow, t).unwrap();
            assert!((v - t * t / 2.0).abs() < 1e-12);
        }
        // Constant refresh only.
        let flat = make_custom(
            1,
            Arc::new(|_| 0.0),
            Arc::new(|_, g| g[0] = 0.0),
            Marginal1d::default(),
        )
        .unwrap();
        let rs = RateSpec::new(flat, SpeedFunction::unit())
            .with_refresh(vec![0.7])
            .unwrap();
        let flow = make_flow(&[0.0], &[1], &rs.speed);
        assert!((integrated_rate(&rs, &flow, 2.0).unwrap() - 1.4).abs() < 1e-12);
        // Cauchy with poly(0): Λ(t) = log cosh t.
        let rs = RateSpec::new(
            make_student_t_1d(1.0).unwrap(),
            SpeedFunction::poly_radial(0.0).unwrap(),
        );
        let flow = make_flow(&[0.0], &[1], &rs.speed);
        for t in [0.3, 1.0, 4.0] {
            let v = integrated_rate(&rs, &flow, t).unwrap();
            assert!((v - t.cosh().ln()).abs() < 1e-11);
        }
    }

    #[test]
    fn zero_rate_escapes() {
        let flat = make_custom(
            1,
            Arc::new(|_| 0.0),
            Arc::new(|_, g| g[0] = 0.0),
            Marginal1d::default(),
        )
        .unwrap();
        let rs = RateSpec::new(flat, SpeedFunction::unit());
        let flow = make_flow(&[0.0], &[1], &rs.speed);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for sampler in [ArrivalSampler::exact(), ArrivalSampler::thinning()] {
            let r = sampler.first_arrival(&rs, &flow, &mut rng, &mut EventBudget::new(1000));
            assert!(matches!(r, Err(SuzzError::NoEventEscape { .. })), "{r:?}");
        }
    }

    #[test]
    fn degenerate_coordinate_selection() {
        // U = 2 x_1 with θ = (+1, +1): λ = (2, 0) everywhere.
        let t = make_custom(
            2,
            Arc::new(|x| 2.0 * x[0]),
            Arc::new(|_, g| {
                g[0] = 2.0;
                g[1] = 0.0;
            }),
            Marginal1d::default(),
        )
        .unwrap();
        let rs = RateSpec::new(t, SpeedFunction::unit());
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let flow = make_flow(&[0.0, 0.0], &[1, 1], &rs.speed);
        for _ in 0..200 {
            let a = ArrivalSampler::exact()
                .first_arrival(&rs, &flow, &mut rng, &mut EventBudget::new(10))
                .unwrap();
            assert_eq!(a.coordinate, 0);
        }
    }

    #[test]
    fn median_of_normal_first_arrival() {
        let rs = RateSpec::new(make_std_normal_1d(), SpeedFunction::unit());
        let flow = make_flow(&[0.0], &[1], &rs.speed);
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let mut taus: Vec<f64> = (0..10_000)
            .map(|_| {
                ArrivalSampler::exact()
                    .first_arrival(&rs, &flow, &mut rng, &mut EventBudget::new(10))
                    .unwrap()
                    .tau
            })
            .collect();
        taus.sort_by(f64::total_cmp);
        let median = 0.5 * (taus[4999] + taus[5000]);
        assert!((median - (2.0 * 2f64.ln()).sqrt()).abs() < 0.03, "{median}");
    }

    #[test]
    fn exact_inversion_reproduces_closed_form() {
        // Λ(t) = t²/2 so τ = sqrt(2E) with E the first exponential drawn.
        let rs = RateSpec::new(make_std_normal_1d(), SpeedFunction::unit());
        let flow = make_flow(&[0.0], &[1], &rs.speed);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let a = ArrivalSampler::exact()
            .first_arrival(&rs, &flow, &mut rng, &mut EventBudget::new(10))
            .unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let e: f64 = rng.sample(Exp1);
        assert!((a.tau - (2.0 * e).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn thinning_safety_validated() {
        assert!(ArrivalSampler::grid_thinning(64, 1.1).is_err());
        assert!(ArrivalSampler::grid_thinning(1, 1.5).is_err());
    }

    #[test]
    fn thinning_detects_bound_violation() {
        // A narrow spike in U' that falls between grid points of the first
        // window, on top of a unit refresh rate so that proposals do happen.
        let spike = |x: f64| 50.0 * (-(x - 0.5037).powi(2) / 1e-5).exp();
        let t = crate::targets::Target::from_parts(
            "spike",
            1,
            Arc::new(|_| 0.0),
            Arc::new(move |x, g| g[0] = spike(x[0])),
        );
        let rs = RateSpec::new(t, SpeedFunction::unit())
            .with_refresh(vec![1.0])
            .unwrap();
        let flow = make_flow(&[0.0], &[1], &rs.speed);
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let mut violated = false;
        for _ in 0..500 {
            match ArrivalSampler::thinning().first_arrival(
                &rs,
                &flow,
                &mut rng,
                &mut EventBudget::new(1_000_000),
            ) {
                Err(SuzzError::ThinningBoundViolated { rate, bound, .. }) => {
                    assert!(rate > bound);
                    violated = true;
                    break;
                }
                Ok(_) => {}
                Err(e) => panic!("unexpected error {e}"),
            }
        }
        assert!(violated);
    }
}
