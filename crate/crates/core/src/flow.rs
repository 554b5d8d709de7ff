//! Deterministic dynamics `dX/dt = θ s(X)`.
//!
//! Every coordinate moves with the same absolute velocity `s(X)`, so the
//! trajectory is the straight line `x + θ u` parametrised by the common arc
//! distance `u`, and time is `t(u) = ∫₀ᵘ dv / s(x + θ v)`. The flow may reach
//! infinity in finite time `t* = t(∞)`.
//!
//! Poly-radial speeds have closed forms: along the line
//! `1 + ‖x + θu‖² = d((u + b)² + c²)`, so
//! `t(u) = K ∫_b^{b+u} (w² + c²)^{-(1+ε)/2} dw` with `K = 1/(scale · d^{(1+ε)/2})`,
//! which is an `asinh` for `ε = 0`, an `atan` for `ε = 1` and a regularised
//! incomplete beta function otherwise. Custom speeds fall back to adaptive
//! quadrature with a dyadic memo of cumulative times.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::{Mutex, OnceLock};

use statrs::function::beta::{beta_reg, ln_beta};

use crate::error::{Result, SuzzError};
use crate::numerics::quadrature::gk21;
use crate::numerics::{brent, integrate_raw, newton_bracketed, newton_bracketed_from, QuadOptions, RootOptions};
use crate::speed::{SpeedFamily, SpeedFunction};

/// Time queries closer than this (relative to `max(1, t*)`) to the explosion
/// time are rejected.
pub const EXPLOSION_GUARD: f64 = 1e-12;
const MAX_DOUBLINGS: usize = 1100;

enum FlowKind {
    Constant {
        c: f64,
    },
    /// `ε = 0`: `t(u) = K (asinh((b+u)/c) − asinh(b/c))`.
    Asinh {
        k: f64,
        b: f64,
        c: f64,
    },
    /// `ε = 1`: `t(u) = (K/c)(atan((b+u)/c) − atan(b/c))`.
    Atan {
        k: f64,
        b: f64,
        c: f64,
    },
    /// Other `ε > 0` (and `-1 < ε < 0`, non-explosive) via incomplete beta.
    Beta {
        k: f64,
        b: f64,
        c: f64,
        /// `ε / 2`.
        a: f64,
        /// `∫₀^∞ (w² + c²)^{-(1+ε)/2} dw`, infinite when `ε ≤ 0`.
        gfull: f64,
        /// [`beta_parts`] at `|b|`.
        parts_b: (f64, f64),
    },
    /// Cumulative times at arc distances `2^j`, `j = 0, 1, ...`.
    Quadrature { memo: Mutex<Vec<f64>> },
}

/// The flow line started at `(origin, theta)`.
pub struct LineFlow {
    origin: Vec<f64>,
    theta: Vec<i8>,
    speed: SpeedFunction,
    kind: FlowKind,
    explosion: OnceLock<f64>,
}

impl fmt::Debug for LineFlow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LineFlow")
            .field("origin", &self.origin)
            .field("theta", &self.theta)
            .field("speed", &self.speed.id())
            .finish()
    }
}

/// `asinh(a2) − asinh(a1)` without cancellation when both are large and close.
fn asinh_diff(a1: f64, a2: f64) -> f64 {
    if a1 < 0.0 && a2 < 0.0 {
        return -asinh_diff(-a1, -a2);
    }
    if a1 >= 0.0 && a2 >= 0.0 {
        let r1 = (1.0 + a1 * a1).sqrt();
        let r2 = (1.0 + a2 * a2).sqrt();
        let num = (a2 - a1) + (a2 - a1) * (a2 + a1) / (r1 + r2);
        return (num / (a1 + r1)).ln_1p();
    }
    a2.asinh() - a1.asinh()
}

/// `atan(a2) − atan(a1)` computed from the smaller angle when possible.
fn atan_diff(a1: f64, a2: f64) -> f64 {
    if a1 * a2 > -1.0 {
        ((a2 - a1) / (1.0 + a1 * a2)).atan()
    } else {
        a2.atan() - a1.atan()
    }
}

/// `∫_w^∞ (v² + 1)^{-1}`-style tail for the atan branch: `π/2 − atan(z)`.
fn atan_tail(z: f64) -> f64 {
    if z > 0.0 {
        (1.0 / z).atan()
    } else {
        FRAC_PI_2 - z.atan()
    }
}

/// For `w ≥ 0` returns `(∫₀ʷ, ∫_w^∞)` of `(v² + c²)^{-p}`, `p = a + 1/2`,
/// each from the numerically favourable side.
fn beta_parts(w: f64, c: f64, a: f64, gfull: f64) -> (f64, f64) {
    let w2 = w * w;
    let c2 = c * c;
    let x = w2 / (w2 + c2);
    if x <= 0.5 {
        let head = gfull * beta_reg(0.5, a, x);
        (head, gfull - head)
    } else {
        let tail = gfull * beta_reg(a, 0.5, c2 / (w2 + c2));
        (gfull - tail, tail)
    }
}

/// Starting point for inverting the incomplete-beta time map. With
/// `G(w) = ∫₀ʷ (v² + c²)^{-p} dv` the target is `G(w) = G(b) + t/K`; `G` is
/// linear for `|w| ≪ c` and `G∞ − |w|^{-ε}/ε` for `|w| ≫ c`.
#[allow(clippy::too_many_arguments)]
fn beta_arc_guess(k: f64, b: f64, c: f64, a: f64, gfull: f64, head_b: f64, t: f64, t_star: f64) -> f64 {
    let eps = 2.0 * a;
    let g_b = b.signum() * head_b;
    let g = g_b + t / k;
    // Distance of the target from the asymptote on its side.
    let rem = if g >= 0.0 {
        if t > 0.5 * t_star { (t_star - t) / k } else { gfull - g }
    } else {
        gfull + g
    };
    let linear = g.abs() * c.powf(eps + 1.0);
    let w = if linear < c {
        linear
    } else {
        (eps * rem).powf(-1.0 / eps).max(c)
    };
    let u = g.signum() * w - b;
    if u > 0.0 && u.is_finite() {
        u
    } else {
        t / k * c.powf(eps + 1.0)
    }
}

/// Expands geometrically from `guess` until `f(lo) < 0 <= f(hi)`, with `lo`
/// falling back to 0.
fn bracket_around<F: Fn(f64) -> f64>(f: F, guess: f64) -> Result<(f64, f64)> {
    if f(guess) >= 0.0 {
        let mut hi = guess;
        for _ in 0..8 {
            let lo = 0.5 * hi;
            if f(lo) < 0.0 {
                return Ok((lo, hi));
            }
            hi = lo;
        }
        return Ok((0.0, hi));
    }
    let mut lo = guess;
    for _ in 0..MAX_DOUBLINGS {
        let hi = 2.0 * lo;
        if !hi.is_finite() {
            break;
        }
        if f(hi) >= 0.0 {
            return Ok((lo, hi));
        }
        lo = hi;
    }
    Err(SuzzError::ExplosionDomain(format!(
        "could not bracket arc distance beyond {lo}"
    )))
}

impl LineFlow {
    pub fn new(origin: &[f64], theta: &[i8], speed: &SpeedFunction) -> Self {
        let d = origin.len() as f64;
        let kind = match speed.family() {
            SpeedFamily::Constant { c } => FlowKind::Constant { c },
            SpeedFamily::PolyRadial { epsilon, scale } => {
                let dot: f64 = origin
                    .iter()
                    .zip(theta)
                    .map(|(x, t)| x * f64::from(*t))
                    .sum();
                let r2: f64 = origin.iter().map(|x| x * x).sum();
                let b = dot / d;
                // c² ≥ 1/d by Cauchy–Schwarz.
                let c = ((1.0 + r2) / d - b * b).max(1.0 / d).sqrt();
                let p = 0.5 * (1.0 + epsilon);
                let k = 1.0 / (scale * d.powf(p));
                if epsilon == 0.0 {
                    FlowKind::Asinh { k, b, c }
                } else if epsilon == 1.0 {
                    FlowKind::Atan { k, b, c }
                } else {
                    let a = 0.5 * epsilon;
                    let gfull = if a > 0.0 {
                        c.powf(-epsilon) * 0.5 * ln_beta(0.5, a).exp()
                    } else {
                        f64::INFINITY
                    };
                    let parts_b = if a > 0.0 {
                        beta_parts(b.abs(), c, a, gfull)
                    } else {
                        (f64::NAN, f64::NAN)
                    };
                    FlowKind::Beta { k, b, c, a, gfull, parts_b }
                }
            }
            SpeedFamily::Custom => FlowKind::Quadrature {
                memo: Mutex::new(Vec::new()),
            },
        };
        Self {
            origin: origin.to_vec(),
            theta: theta.to_vec(),
            speed: speed.clone(),
            kind,
            explosion: OnceLock::new(),
        }
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn theta(&self) -> &[i8] {
        &self.theta
    }

    pub fn speed(&self) -> &SpeedFunction {
        &self.speed
    }

    pub fn is_unit_speed(&self) -> bool {
        matches!(self.kind, FlowKind::Constant { c } if c == 1.0)
    }

    /// Position after travelling arc distance `u`.
    pub fn position_at_arc(&self, u: f64) -> Vec<f64> {
        self.origin
            .iter()
            .zip(&self.theta)
            .map(|(x, t)| x + f64::from(*t) * u)
            .collect()
    }

    pub fn speed_at_arc(&self, u: f64) -> f64 {
        self.speed.value(&self.position_at_arc(u))
    }

    /// Explosion time `t*`, `+∞` when the flow is defined for all times.
    pub fn explosion_time(&self) -> f64 {
        *self.explosion.get_or_init(|| self.time_of_arc(f64::INFINITY))
    }

    /// Time needed to travel arc distance `u ≥ 0`; `u = ∞` gives `t*`.
    pub fn time_of_arc(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            FlowKind::Constant { c } => u / c,
            FlowKind::Asinh { k, b, c } => {
                if u.is_infinite() {
                    f64::INFINITY
                } else {
                    k * asinh_diff(b / c, (b + u) / c)
                }
            }
            FlowKind::Atan { k, b, c } => {
                if u.is_infinite() {
                    k / c * atan_tail(b / c)
                } else {
                    k / c * atan_diff(b / c, (b + u) / c)
                }
            }
            FlowKind::Beta { k, b, c, a, gfull, parts_b } => {
                if *a <= 0.0 {
                    return if u.is_infinite() {
                        f64::INFINITY
                    } else {
                        self.quadrature_piece(0.0, u)
                    };
                }
                let (b, w1) = (*b, *b + u);
                let span = if b >= 0.0 {
                    let t0 = parts_b.1;
                    let t1 = if u.is_infinite() {
                        0.0
                    } else {
                        beta_parts(w1, *c, *a, *gfull).1
                    };
                    t0 - t1
                } else if w1 <= 0.0 {
                    parts_b.0 - beta_parts(-w1, *c, *a, *gfull).0
                } else {
                    let head = parts_b.0;
                    let rest = if u.is_infinite() {
                        *gfull
                    } else {
                        beta_parts(w1, *c, *a, *gfull).0
                    };
                    head + rest
                };
                k * span
            }
            FlowKind::Quadrature { .. } => self.quadrature_time(u),
        }
    }

    /// Alias of [`time_of_arc`](Self::time_of_arc).
    pub fn time_to_reach(&self, u: f64) -> f64 {
        self.time_of_arc(u)
    }

    /// Remaining time to explosion after travelling arc distance `u`.
    fn remaining_time(&self, u: f64) -> f64 {
        match &self.kind {
            FlowKind::Atan { k, b, c } => k / c * atan_tail((b + u) / c),
            FlowKind::Beta { k, b, c, a, gfull, .. } if *a > 0.0 => {
                let w = b + u;
                if w >= 0.0 {
                    k * beta_parts(w, *c, *a, *gfull).1
                } else {
                    k * (gfull + beta_parts(-w, *c, *a, *gfull).0)
                }
            }
            _ => self.explosion_time() - self.time_of_arc(u),
        }
    }

    fn check_time(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(SuzzError::InvalidParameter(format!(
                "flow time must be nonnegative, got {t}"
            )));
        }
        let t_star = match self.kind {
            FlowKind::Quadrature { .. } | FlowKind::Constant { .. } | FlowKind::Asinh { .. } => {
                f64::INFINITY
            }
            _ => self.explosion_time(),
        };
        if t_star.is_finite() && t_star - t <= EXPLOSION_GUARD * t_star.max(1.0) {
            return Err(SuzzError::ExplosionDomain(format!(
                "time {t} is at or beyond the explosion time {t_star}"
            )));
        }
        Ok(t_star)
    }

    /// Arc distance travelled after time `t`. Fails at or past explosion.
    pub fn arc_of_time(&self, t: f64) -> Result<f64> {
        let t_star = self.check_time(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        match &self.kind {
            FlowKind::Constant { c } => Ok(c * t),
            FlowKind::Asinh { k, b, c } => {
                // u = c (sinh(B + t/K) − sinh(B)) = 2c cosh(B + t/2K) sinh(t/2K).
                let bb = (b / c).asinh();
                let h = 0.5 * t / k;
                let u = 2.0 * c * (bb + h).cosh() * h.sinh();
                if u.is_finite() {
                    Ok(u)
                } else {
                    Err(SuzzError::CoordinateOverflow {
                        coordinate: 0,
                        value: u,
                    })
                }
            }
            FlowKind::Atan { k, b, c } => {
                let bb = (b / c).atan();
                let phi = t * c / k;
                let rem = (t_star - t) * c / k;
                let u = if rem < 0.5 {
                    c / rem.tan() - b
                } else {
                    c * phi.sin() / (bb.cos() * (bb + phi).cos())
                };
                Ok(u)
            }
            FlowKind::Beta { k, b, c, a, gfull, parts_b } if *a > 0.0 => {
                // dt/du = 1/s along the line.
                let p = a + 0.5;
                let rate = |u: f64| {
                    let w = b + u;
                    k * (w * w + c * c).powf(-p)
                };
                let guess = beta_arc_guess(*k, *b, *c, *a, *gfull, parts_b.0, t, t_star);
                let opts = RootOptions::default();
                if t <= 0.5 * t_star {
                    let f = |u: f64| self.time_of_arc(u) - t;
                    let (lo, hi) = bracket_around(f, guess)?;
                    newton_bracketed_from(f, rate, guess, lo, hi, &opts)
                } else {
                    let target = t_star - t;
                    let f = |u: f64| target - self.remaining_time(u);
                    let (lo, hi) = bracket_around(f, guess)?;
                    newton_bracketed_from(f, rate, guess, lo, hi, &opts)
                }
            }
            FlowKind::Beta { .. } => self.solve_increasing(|u| self.time_of_arc(u), t),
            FlowKind::Quadrature { .. } => self.quadrature_arc(t),
        }
    }

    /// Solves `f(u) = level` for nondecreasing `f` on `u ≥ 0`.
    fn solve_increasing<F: Fn(f64) -> f64>(&self, f: F, level: f64) -> Result<f64> {
        let (lo, hi) = self.bracket_level(&f, level)?;
        brent(|u| f(u) - level, lo, hi, &RootOptions::default())
    }

    /// Doubling bracket `[lo, hi]` with `f(lo) < level <= f(hi)`.
    fn bracket_level<F: Fn(f64) -> f64>(&self, f: F, level: f64) -> Result<(f64, f64)> {
        let s0 = self.speed_at_arc(0.0);
        let mut lo = 0.0;
        let mut hi = (level.abs().max(1e-3) * s0).max(1e-12);
        let mut found = false;
        for _ in 0..MAX_DOUBLINGS {
            if f(hi) >= level {
                found = true;
                break;
            }
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                break;
            }
        }
        if !found {
            return Err(SuzzError::ExplosionDomain(format!(
                "could not bracket arc distance for level {level}"
            )));
        }
        Ok((lo, hi))
    }

    /// Arc distances for nondecreasing times `ts`, warm-starting each solve
    /// from the previous one. Equivalent to mapping
    /// [`arc_of_time`](Self::arc_of_time) over `ts`.
    pub fn arcs_of_times(&self, ts: &[f64]) -> Result<Vec<f64>> {
        let FlowKind::Beta { k, b, c, a, .. } = &self.kind else {
            return ts.iter().map(|t| self.arc_of_time(*t)).collect();
        };
        if *a <= 0.0 {
            return ts.iter().map(|t| self.arc_of_time(*t)).collect();
        }
        let p = a + 0.5;
        let rate = |u: f64| {
            let w = b + u;
            k * (w * w + c * c).powf(-p)
        };
        let t_star = self.explosion_time();
        let mut out = Vec::with_capacity(ts.len());
        let (mut t_prev, mut u_prev) = (0.0, 0.0);
        for &t in ts {
            self.check_time(t)?;
            if t < t_prev || t > 0.5 * t_star {
                out.push(self.arc_of_time(t)?);
                continue;
            }
            if t == t_prev {
                out.push(u_prev);
                continue;
            }
            // Time increments from the previous solution by one Kronrod rule
            // when its error estimate is negligible, else by the closed form.
            let (t0, u0) = (t_prev, u_prev);
            let f = |u: f64| {
                let (dt, err) = gk21(&rate, u0, u);
                if err <= 1e-13 * dt {
                    t0 + dt - t
                } else {
                    self.time_of_arc(u) - t
                }
            };
            let mut lo = u_prev;
            let mut step = (t - t_prev) / rate(lo);
            let mut hi = lo + step;
            while f(hi) < 0.0 {
                lo = hi;
                step *= 2.0;
                hi = lo + step;
                if !hi.is_finite() {
                    return Err(SuzzError::ExplosionDomain(format!(
                        "could not bracket arc distance for time {t}"
                    )));
                }
            }
            let u = newton_bracketed(f, rate, lo, hi, &RootOptions::default())?;
            out.push(u);
            t_prev = t;
            u_prev = u;
        }
        Ok(out)
    }

    /// Position `Φ(t)`.
    pub fn position_at(&self, t: f64) -> Result<Vec<f64>> {
        let u = self.arc_of_time(t)?;
        Ok(self.position_at_arc(u))
    }

    fn quadrature_piece(&self, u0: f64, u1: f64) -> f64 {
        let opts = QuadOptions::new(0.0, 1e-13).with_max_intervals(500);
        integrate_raw(|v| 1.0 / self.speed_at_arc(v), u0, u1, &[], &opts).value
    }

    /// Ensures the memo covers index `j`, returning `T(2^j)`.
    fn memo_time(&self, j: usize) -> f64 {
        let FlowKind::Quadrature { memo } = &self.kind else {
            unreachable!("memo on closed-form flow")
        };
        let mut m = memo.lock().expect("flow memo poisoned");
        while m.len() <= j {
            let next = if m.is_empty() {
                self.quadrature_piece(0.0, 1.0)
            } else {
                let i = m.len() as i32;
                m[m.len() - 1] + self.quadrature_piece(2f64.powi(i - 1), 2f64.powi(i))
            };
            m.push(next);
        }
        m[j]
    }

    fn quadrature_time(&self, u: f64) -> f64 {
        if u.is_infinite() {
            return self.quadrature_explosion();
        }
        if u <= 1.0 {
            return self.quadrature_piece(0.0, u);
        }
        let j = u.log2().ceil() as usize;
        let j = j.min(MAX_DOUBLINGS);
        let base = self.memo_time(j - 1);
        base + self.quadrature_piece(2f64.powi(j as i32 - 1), u)
    }

    /// Sums dyadic pieces until they stop contributing; a geometric tail is
    /// added when pieces shrink at a steady ratio.
    fn quadrature_explosion(&self) -> f64 {
        let mut prev_piece = f64::NAN;
        let mut ratio = f64::NAN;
        for j in 1..1020 {
            let total = self.memo_time(j);
            let piece = total - self.memo_time(j - 1);
            if piece <= 1e-15 * total {
                return total;
            }
            if prev_piece.is_finite() && prev_piece > 0.0 {
                ratio = piece / prev_piece;
            }
            prev_piece = piece;
        }
        let total = self.memo_time(1019);
        if ratio.is_finite() && ratio < 1.0 {
            total + prev_piece * ratio / (1.0 - ratio)
        } else {
            f64::INFINITY
        }
    }

    fn quadrature_arc(&self, t: f64) -> Result<f64> {
        if self.memo_time(0) >= t {
            return brent(
                |u| self.quadrature_piece(0.0, u) - t,
                0.0,
                1.0,
                &RootOptions::default(),
            );
        }
        for j in 1..MAX_DOUBLINGS {
            if self.memo_time(j) >= t {
                let lo = 2f64.powi(j as i32 - 1);
                let hi = 2f64.powi(j as i32);
                let base = self.memo_time(j - 1);
                return brent(
                    |u| base + self.quadrature_piece(lo, u) - t,
                    lo,
                    hi,
                    &RootOptions::default(),
                );
            }
        }
        Err(SuzzError::ExplosionDomain(format!(
            "time {t} not reached by the flow"
        )))
    }
}

/// Convenience constructor matching the builder-style API of the other modules.
pub fn make_flow(x: &[f64], theta: &[i8], speed: &SpeedFunction) -> LineFlow {
    LineFlow::new(x, theta, speed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, PI};
    use std::sync::Arc;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn unit_speed_is_identity() {
        let f = make_flow(&[0.0], &[1], &SpeedFunction::unit());
        assert_eq!(f.explosion_time(), f64::INFINITY);
        assert_eq!(f.arc_of_time(2.0).unwrap(), 2.0);
        assert_eq!(f.position_at(2.0).unwrap(), vec![2.0]);
    }

    #[test]
    fn tan_flow() {
        let f = make_flow(&[0.0], &[1], &SpeedFunction::poly_radial(1.0).unwrap());
        assert!(rel(f.explosion_time(), FRAC_PI_2) < 1e-15);
        let x = f.position_at(FRAC_PI_4).unwrap()[0];
        assert!((x - 1.0).abs() < 1e-14);
        for t in [0.1, 0.7, 1.2, 1.5, 1.57] {
            assert!(rel(f.position_at(t).unwrap()[0], t.tan()) < 1e-12);
        }
        assert!(matches!(
            f.position_at(FRAC_PI_2),
            Err(SuzzError::ExplosionDomain(_))
        ));
        assert!(f.position_at(2.0).is_err());
    }

    #[test]
    fn sinh_flow() {
        let f = make_flow(&[0.0], &[1], &SpeedFunction::poly_radial(0.0).unwrap());
        assert_eq!(f.explosion_time(), f64::INFINITY);
        for t in [0.01, 1.0, 5.0, 20.0] {
            assert!(rel(f.position_at(t).unwrap()[0], t.sinh()) < 1e-13);
        }
    }

    #[test]
    fn five_dim_sinh_flow() {
        let f = make_flow(&[0.0; 5], &[1; 5], &SpeedFunction::poly_radial(0.0).unwrap());
        let x = f.position_at(1.0).unwrap();
        let expected = (5f64.sqrt()).sinh() / 5f64.sqrt();
        for xi in x {
            assert!(rel(xi, expected) < 1e-13);
            assert!((xi - 2.068271444341998).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_branch_matches_atan_limit() {
        // ε = 1 through the generic branch must agree with the atan closed form.
        let eps = 1.0 - 1e-9;
        let f = make_flow(&[0.3], &[-1], &SpeedFunction::poly_radial(eps).unwrap());
        let g = make_flow(&[0.3], &[-1], &SpeedFunction::poly_radial(1.0).unwrap());
        assert!(rel(f.explosion_time(), g.explosion_time()) < 1e-7);
        assert!(rel(f.time_of_arc(2.5), g.time_of_arc(2.5)) < 1e-7);
    }

    #[test]
    fn explosion_time_half() {
        // ∫_0^∞ (1+v²)^{-3/4} dv = B(1/2, 1/4)/2.
        let f = make_flow(&[0.0], &[1], &SpeedFunction::poly_radial(0.5).unwrap());
        let expected = 0.5 * ln_beta(0.5, 0.25).exp();
        assert!(rel(f.explosion_time(), expected) < 1e-13);
        let u = f.arc_of_time(0.999 * expected).unwrap();
        assert!(rel(f.time_of_arc(u), 0.999 * expected) < 1e-12);
    }

    #[test]
    fn custom_speed_matches_closed_form() {
        let speed = SpeedFunction::custom(
            "tan-custom",
            Arc::new(|x| 1.0 + x[0] * x[0]),
            Arc::new(|x, g| g[0] = 2.0 * x[0]),
        );
        let f = make_flow(&[0.0], &[1], &speed);
        assert!(rel(f.position_at(1.0).unwrap()[0], 1f64.tan()) < 1e-10);
        assert!(rel(f.explosion_time(), PI / 2.0) < 1e-8);
        let g = make_flow(&[-2.0], &[1], &speed);
        assert!(rel(g.time_of_arc(3.0), 1f64.atan() + 2f64.atan()) < 1e-12);
    }

    #[test]
    fn negative_time_rejected() {
        let f = make_flow(&[0.0], &[1], &SpeedFunction::unit());
        assert!(f.position_at(-1.0).is_err());
    }

    #[test]
    fn batched_arcs_match_single_solves() {
        for eps in [0.3, 0.5, 1.7] {
            let speed = SpeedFunction::poly_radial(eps).unwrap();
            let f = make_flow(&[0.4, -1.1], &[1, 1], &speed);
            let t_star = f.explosion_time();
            let ts: Vec<f64> = (0..200).map(|i| t_star * f64::from(i) / 201.0).collect();
            let batch = f.arcs_of_times(&ts).unwrap();
            for (t, u) in ts.iter().zip(&batch) {
                let single = f.arc_of_time(*t).unwrap();
                assert!((u - single).abs() <= 1e-10 * single.max(1.0), "eps {eps} t {t}: {u} vs {single}");
            }
        }
    }
}
