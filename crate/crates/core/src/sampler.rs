//! The speed-up Zig-Zag event loop. Classical Zig-Zag is the `s ≡ 1` case.
//!
//! From state `(x, θ)` the process follows the flow `Φ_{(x,θ)}` until the first
//! arrival of the Poisson process with intensity `λ(Φ(t), θ)`, where the
//! velocity of one coordinate, chosen with probability `λ_i / λ`, flips.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SuzzError};
use crate::events::{ArrivalSampler, EventBudget};
use crate::flow::LineFlow;
use crate::numerics::{integrate_raw, QuadOptions};
use crate::speed::RateSpec;
use crate::targets::Target;

/// One switching event; `flip` is the 1-based flipped coordinate, 0 for the
/// initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub x: Vec<f64>,
    pub theta: Vec<i8>,
    pub flip: usize,
}

/// Runtime guards against configurations that violate the non-explosion
/// assumptions.
#[derive(Debug, Clone, Copy)]
pub struct Guards {
    pub max_proposals: u64,
    pub max_abs_coordinate: f64,
}

impl Default for Guards {
    fn default() -> Self {
        Self {
            max_proposals: 100_000_000,
            max_abs_coordinate: 1e300,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    Switches(usize),
    Time(f64),
}

/// A simulated trajectory: the events plus the final (possibly mid-segment)
/// state.
#[derive(Debug, Clone)]
pub struct EventChain {
    pub spec: RateSpec,
    pub events: Vec<Event>,
    pub t_end: f64,
    pub x_end: Vec<f64>,
    pub theta_end: Vec<i8>,
    /// Proposed events consumed, including rejected thinning proposals.
    pub proposals: u64,
}

/// A piece of trajectory between consecutive events.
pub struct Segment<'a> {
    pub t_start: f64,
    pub t_stop: f64,
    /// Arc distance covered by the segment.
    pub arc: f64,
    pub start: &'a Event,
    pub flow: LineFlow,
}

/// The δ-skeleton of a chain: states at times `jδ`, `j = 0..=floor(t_end/δ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub delta: f64,
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub theta: Vec<Vec<i8>>,
}

impl Skeleton {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// Values of coordinate `i` as a series.
    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.x.iter().map(|x| x[i]).collect()
    }
}

/// Derives the seed of chain `k` from a master seed: `splitmix64(master ⊕ k)`.
pub fn chain_seed(master: u64, k: u64) -> u64 {
    let mut z = (master ^ k).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn chain_rng(master: u64, k: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(chain_seed(master, k))
}

/// Default initial state: the origin with all velocities `+1`.
pub fn default_start(dim: usize) -> (Vec<f64>, Vec<i8>) {
    (vec![0.0; dim], vec![1; dim])
}

/// Draws `x0` from a 1-D target through its quantile function and a uniform
/// velocity.
pub fn stationary_start<R: Rng + ?Sized>(target: &Target, rng: &mut R) -> Result<(Vec<f64>, Vec<i8>)> {
    if target.dim() != 1 {
        return Err(SuzzError::InvalidParameter(
            "stationary initialisation needs a one-dimensional target with a quantile".into(),
        ));
    }
    let p: f64 = rng.random();
    let x = target.quantile_1d(p).ok_or_else(|| {
        SuzzError::InvalidParameter(format!("target {} has no quantile function", target.id()))
    })?;
    let theta = if rng.random::<bool>() { 1 } else { -1 };
    Ok((vec![x], vec![theta]))
}

/// Simulates chains for one rate specification.
#[derive(Debug, Clone)]
pub struct Sampler {
    pub spec: RateSpec,
    pub arrivals: ArrivalSampler,
    pub guards: Guards,
}

impl Sampler {
    pub fn new(spec: RateSpec) -> Self {
        Self {
            spec,
            arrivals: ArrivalSampler::exact(),
            guards: Guards::default(),
        }
    }

    pub fn with_arrivals(mut self, arrivals: ArrivalSampler) -> Self {
        self.arrivals = arrivals;
        self
    }

    pub fn with_guards(mut self, guards: Guards) -> Self {
        self.guards = guards;
        self
    }

    pub fn run_until_switches<R: Rng + ?Sized>(
        &self,
        x0: &[f64],
        theta0: &[i8],
        n_switches: usize,
        rng: &mut R,
    ) -> Result<EventChain> {
        self.run(x0, theta0, StopRule::Switches(n_switches), rng)
    }

    pub fn run_until_time<R: Rng + ?Sized>(
        &self,
        x0: &[f64],
        theta0: &[i8],
        t_end: f64,
        rng: &mut R,
    ) -> Result<EventChain> {
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(SuzzError::InvalidParameter(format!(
                "time horizon must be finite and nonnegative, got {t_end}"
            )));
        }
        self.run(x0, theta0, StopRule::Time(t_end), rng)
    }

    fn validate_start(&self, x0: &[f64], theta0: &[i8]) -> Result<()> {
        let d = self.spec.dim();
        if x0.len() != d {
            return Err(SuzzError::DimensionMismatch {
                expected: d,
                got: x0.len(),
            });
        }
        if theta0.len() != d {
            return Err(SuzzError::DimensionMismatch {
                expected: d,
                got: theta0.len(),
            });
        }
        if theta0.iter().any(|t| *t != 1 && *t != -1) {
            return Err(SuzzError::InvalidParameter(
                "velocities must be +1 or -1".into(),
            ));
        }
        if !self.spec.target.potential(x0).is_finite() || !(self.spec.speed.value(x0) > 0.0) {
            return Err(SuzzError::InvalidParameter(format!(
                "potential or speed not evaluable at the initial point {x0:?}"
            )));
        }
        Ok(())
    }

    pub fn run<R: Rng + ?Sized>(
        &self,
        x0: &[f64],
        theta0: &[i8],
        stop: StopRule,
        rng: &mut R,
    ) -> Result<EventChain> {
        self.validate_start(x0, theta0)?;
        let mut events = vec![Event {
            t: 0.0,
            x: x0.to_vec(),
            theta: theta0.to_vec(),
            flip: 0,
        }];
        let mut budget = EventBudget::new(self.guards.max_proposals);
        let mut t = 0.0;
        let mut x = x0.to_vec();
        let mut theta = theta0.to_vec();
        let (t_end, x_end) = loop {
            match stop {
                StopRule::Switches(n) if events.len() > n => break (t, x.clone()),
                StopRule::Time(horizon) if t >= horizon => break (t, x.clone()),
                _ => {}
            }
            let flow = LineFlow::new(&x, &theta, &self.spec.speed);
            let arrival = self
                .arrivals
                .first_arrival(&self.spec, &flow, rng, &mut budget)?;
            if let StopRule::Time(horizon) = stop {
                if t + arrival.tau > horizon {
                    break (horizon, flow.position_at(horizon - t)?);
                }
            }
            if let Some((i, v)) = arrival
                .position
                .iter()
                .enumerate()
                .find(|(_, v)| v.abs() > self.guards.max_abs_coordinate)
            {
                return Err(SuzzError::CoordinateOverflow {
                    coordinate: i,
                    value: *v,
                });
            }
            t += arrival.tau;
            x = arrival.position;
            theta[arrival.coordinate] = -theta[arrival.coordinate];
            events.push(Event {
                t,
                x: x.clone(),
                theta: theta.clone(),
                flip: arrival.coordinate + 1,
            });
        };
        Ok(EventChain {
            spec: self.spec.clone(),
            events,
            t_end,
            x_end,
            theta_end: theta,
            proposals: budget.used,
        })
    }
}

pub fn run_until_switches<R: Rng + ?Sized>(
    rs: &RateSpec,
    x0: &[f64],
    theta0: &[i8],
    n_switches: usize,
    rng: &mut R,
    guards: Guards,
) -> Result<EventChain> {
    Sampler::new(rs.clone())
        .with_guards(guards)
        .run_until_switches(x0, theta0, n_switches, rng)
}

pub fn run_until_time<R: Rng + ?Sized>(
    rs: &RateSpec,
    x0: &[f64],
    theta0: &[i8],
    t_end: f64,
    rng: &mut R,
    guards: Guards,
) -> Result<EventChain> {
    Sampler::new(rs.clone())
        .with_guards(guards)
        .run_until_time(x0, theta0, t_end, rng)
}

fn arc_between(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (q - p).abs())
        .fold(0.0, f64::max)
}

impl EventChain {
    /// Rebuilds a chain from stored events; the final state is the last event
    /// unless `t_end` extends past it.
    pub fn from_events(spec: RateSpec, events: Vec<Event>, t_end: Option<f64>) -> Result<Self> {
        let last = events
            .last()
            .ok_or_else(|| SuzzError::InvalidParameter("chain has no events".into()))?
            .clone();
        let t_end = t_end.unwrap_or(last.t);
        if t_end < last.t {
            return Err(SuzzError::InvalidParameter(format!(
                "t_end {t_end} precedes the last event at {}",
                last.t
            )));
        }
        let x_end = if t_end > last.t {
            LineFlow::new(&last.x, &last.theta, &spec.speed).position_at(t_end - last.t)?
        } else {
            last.x.clone()
        };
        Ok(Self {
            spec,
            events,
            t_end,
            x_end,
            theta_end: last.theta,
            proposals: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// Number of velocity flips (the initial marker is not counted).
    pub fn switches(&self) -> usize {
        self.events.len() - 1
    }

    /// The trajectory pieces, including the final partial segment when
    /// `t_end` lies past the last event.
    pub fn segments(&self) -> impl Iterator<Item = Segment<'_>> + '_ {
        let n = self.events.len();
        (0..n).filter_map(move |k| {
            let start = &self.events[k];
            let (t_stop, arc) = if k + 1 < n {
                let next = &self.events[k + 1];
                (next.t, arc_between(&start.x, &next.x))
            } else if self.t_end > start.t {
                (self.t_end, arc_between(&start.x, &self.x_end))
            } else {
                return None;
            };
            Some(Segment {
                t_start: start.t,
                t_stop,
                arc,
                start,
                flow: LineFlow::new(&start.x, &start.theta, &self.spec.speed),
            })
        })
    }

    /// Largest relative mismatch between stored event positions and the flow
    /// reconstructed from the previous event.
    pub fn reconstruction_error(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for w in self.events.windows(2) {
            let flow = LineFlow::new(&w[0].x, &w[0].theta, &self.spec.speed);
            let x = flow.position_at(w[1].t - w[0].t)?;
            for (a, b) in x.iter().zip(&w[1].x) {
                worst = worst.max((a - b).abs() / b.abs().max(1.0));
            }
        }
        Ok(worst)
    }

    /// State at time `t ∈ [0, t_end]`, by flow reconstruction.
    pub fn state_at(&self, t: f64) -> Result<(Vec<f64>, Vec<i8>)> {
        if !(0.0..=self.t_end).contains(&t) {
            return Err(SuzzError::InvalidParameter(format!(
                "time {t} outside [0, {}]",
                self.t_end
            )));
        }
        let k = self.events.partition_point(|e| e.t <= t).saturating_sub(1);
        let e = &self.events[k];
        let flow = LineFlow::new(&e.x, &e.theta, &self.spec.speed);
        Ok((flow.position_at(t - e.t)?, e.theta.clone()))
    }

    /// δ-skeleton; positions come from the exact flow on each segment.
    pub fn skeleton(&self, delta: f64) -> Result<Skeleton> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(SuzzError::InvalidParameter(format!(
                "skeleton spacing must be positive, got {delta}"
            )));
        }
        let count = (self.t_end / delta).floor() as usize + 1;
        let mut sk = Skeleton {
            delta,
            t: Vec::with_capacity(count),
            x: Vec::with_capacity(count),
            theta: Vec::with_capacity(count),
        };
        let n = self.events.len();
        let mut j = 0;
        for (k, e) in self.events.iter().enumerate() {
            let seg_end = if k + 1 < n { self.events[k + 1].t } else { f64::INFINITY };
            let first = j;
            let mut offsets = Vec::new();
            while j < count && (j as f64 * delta) < seg_end {
                offsets.push(j as f64 * delta - e.t);
                j += 1;
            }
            if offsets.is_empty() {
                continue;
            }
            let flow = LineFlow::new(&e.x, &e.theta, &self.spec.speed);
            let arcs = flow.arcs_of_times(&offsets)?;
            for (i, (dt, u)) in offsets.iter().zip(arcs).enumerate() {
                sk.t.push((first + i) as f64 * delta);
                sk.x.push(if *dt == 0.0 {
                    e.x.clone()
                } else {
                    flow.position_at_arc(u)
                });
                sk.theta.push(e.theta.clone());
            }
        }
        Ok(sk)
    }

    /// `∫_a^b g(Z_s) ds` over `[a, b] ⊆ [0, t_end]`, segment by segment in
    /// arc coordinates (`∫ g dt = ∫ g / s du`).
    pub fn integrate_window<G>(&self, g: &G, a: f64, b: f64) -> Result<f64>
    where
        G: Fn(&[f64], &[i8]) -> f64 + ?Sized,
    {
        let opts = QuadOptions::new(1e-13, 1e-11).with_max_intervals(200);
        let mut total = 0.0;
        for seg in self.segments() {
            if seg.t_stop <= a || seg.t_start >= b {
                continue;
            }
            let u0 = if a > seg.t_start {
                seg.flow.arc_of_time(a - seg.t_start)?
            } else {
                0.0
            };
            let u1 = if b < seg.t_stop {
                seg.flow.arc_of_time(b - seg.t_start)?
            } else {
                seg.arc
            };
            if u1 <= u0 {
                continue;
            }
            let theta = &seg.start.theta;
            let f = |u: f64| {
                let x = seg.flow.position_at_arc(u);
                g(&x, theta) / self.spec.speed.value(&x)
            };
            total += integrate_raw(f, u0, u1, &[], &opts).value;
        }
        Ok(total)
    }

    /// `(1/T) ∫₀ᵀ g(Z_s) ds`. For `T = 0` returns `g` at the initial state.
    pub fn time_average<G>(&self, g: &G) -> Result<f64>
    where
        G: Fn(&[f64], &[i8]) -> f64 + ?Sized,
    {
        if self.t_end == 0.0 {
            let e = &self.events[0];
            return Ok(g(&e.x, &e.theta));
        }
        Ok(self.integrate_window(g, 0.0, self.t_end)? / self.t_end)
    }

    /// Time spent inside the box `[-l, l]^d`, from exact boundary crossings.
    pub fn time_in_cube(&self, l: f64) -> f64 {
        let mut total = 0.0;
        for seg in self.segments() {
            let mut lo: f64 = 0.0;
            let mut hi = seg.arc;
            for (x, t) in seg.start.x.iter().zip(&seg.start.theta) {
                // x + θ v ∈ [-l, l]
                let (a, b) = if *t > 0 {
                    (-l - x, l - x)
                } else {
                    (x - l, x + l)
                };
                lo = lo.max(a);
                hi = hi.min(b);
            }
            if hi > lo {
                let dt = if hi >= seg.arc && lo <= 0.0 {
                    seg.t_stop - seg.t_start
                } else {
                    seg.flow.time_of_arc(hi) - seg.flow.time_of_arc(lo)
                };
                total += dt;
            }
        }
        total
    }
}
