#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Helpers shared by the integration suites.
#![allow(dead_code)]

use std::sync::Arc;

use rand::Rng;
use suzz::flow::LineFlow;
use suzz::SpeedFunction;

/// `∫₀^∞ du / s(x + θu)` by tanh-sinh: directly up to `U₀` past the point
/// of closest approach, then in log coordinates `u = U₀ eᶻ` on unit-length
/// chunks until the geometric decay of the chunk integrals makes the
/// remainder negligible.
pub fn explosion_oracle(speed: &SpeedFunction, x: &[f64], theta: &[i8]) -> f64 {
    let g = |u: f64| {
        let p: Vec<f64> = x.iter().zip(theta).map(|(a, t)| a + f64::from(*t) * u).collect();
        1.0 / speed.value(&p)
    };
    let d = x.len() as f64;
    let b: f64 = x.iter().zip(theta).map(|(a, t)| a * f64::from(*t)).sum::<f64>() / d;
    let u_min = (-b).max(0.0);
    let u0 = u_min + x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut total = quadrature::integrate(g, 0.0, u_min, 1e-15).integral
        + quadrature::integrate(g, u_min, u0, 1e-15).integral;
    let h = |z: f64| u0 * z.exp() * g(u0 * z.exp());
    let (mut prev, mut z) = (f64::NAN, 0.0);
    loop {
        let chunk = quadrature::integrate(h, z, z + 1.0, 1e-16).integral;
        total += chunk;
        z += 1.0;
        let q = chunk / prev;
        prev = chunk;
        if q > 0.0 && q < 1.0 && chunk < 1e-6 * total {
            return total + chunk * q / (1.0 - q);
        }
        assert!(z < 5000.0, "explosion oracle: tail does not decay");
    }
}

pub fn tan_speed() -> SpeedFunction {
    SpeedFunction::custom(
        "one-plus-square",
        Arc::new(|x| 1.0 + x.iter().map(|v| v * v).sum::<f64>()),
        Arc::new(|x, g| {
            for (gi, xi) in g.iter_mut().zip(x) {
                *gi = 2.0 * xi;
            }
        }),
    )
}

/// A random speed: unit, scaled constant, polynomial with `ε` drawn from a
/// fixed menu plus a continuous range, or a custom quadrature speed.
pub fn random_speed<R: Rng>(rng: &mut R) -> SpeedFunction {
    match rng.random_range(0..10) {
        0 => SpeedFunction::unit(),
        1 => SpeedFunction::constant(rng.random_range(0.1..5.0)).unwrap(),
        2 => SpeedFunction::poly_radial(0.0).unwrap(),
        3 | 4 => SpeedFunction::poly_radial(1.0).unwrap(),
        5 => SpeedFunction::poly_radial(0.5)
            .unwrap()
            .scaled(rng.random_range(0.2..5.0))
            .unwrap(),
        6 => tan_speed(),
        _ => SpeedFunction::poly_radial(rng.random_range(0.3..2.0)).unwrap(),
    }
}

pub fn random_state<R: Rng>(rng: &mut R, d: usize) -> (Vec<f64>, Vec<i8>) {
    let spread = if rng.random_bool(0.2) { 50.0 } else { 3.0 };
    let x = (0..d).map(|_| rng.random_range(-spread..spread)).collect();
    let theta = (0..d).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
    (x, theta)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Checks the flow ODE `dΦ/dt = θ s(Φ)` by central differences, the
/// semigroup property, and (for explosive flows) the explosion time against
/// [`explosion_oracle`].
pub fn check_flow(speed: &SpeedFunction, x: &[f64], theta: &[i8]) -> Result<(), String> {
    let flow = LineFlow::new(x, theta, speed);
    let t_star = flow.explosion_time();
    let horizon = if t_star.is_finite() { t_star } else { 5.0 / speed.value(x).max(1e-3) };
    if !(horizon > 0.0) {
        return Err(format!("non-positive explosion time {t_star}"));
    }
    for frac in [0.1, 0.37, 0.6, 0.9] {
        let t = frac * horizon;
        let h = 1e-4 * t.min(horizon - t);
        let p = flow.position_at(t).map_err(|e| e.to_string())?;
        let fwd = flow.position_at(t + h).map_err(|e| e.to_string())?;
        let back = flow.position_at(t - h).map_err(|e| e.to_string())?;
        let s = speed.value(&p);
        for i in 0..x.len() {
            let deriv = (fwd[i] - back[i]) / (2.0 * h);
            let expected = f64::from(theta[i]) * s;
            if (deriv - expected).abs() > 1e-5 * expected.abs() {
                return Err(format!("ODE residual at t = {t}: {deriv} vs {expected}"));
            }
        }
        // Φ_{Φ(t), θ}(τ) = Φ(t + τ)
        let tau = 0.5 * (horizon - t);
        let restart = LineFlow::new(&p, theta, speed);
        let a = restart.position_at(tau).map_err(|e| e.to_string())?;
        let b = flow.position_at(t + tau).map_err(|e| e.to_string())?;
        for (ai, bi) in a.iter().zip(&b) {
            if rel(*ai, *bi) > 1e-8 {
                return Err(format!("semigroup at t = {t}, tau = {tau}: {ai} vs {bi}"));
            }
        }
    }
    if t_star.is_finite() {
        let oracle = explosion_oracle(speed, x, theta);
        if (t_star - oracle).abs() > 1e-7 * oracle {
            return Err(format!("explosion time {t_star} vs quadrature {oracle}"));
        }
    }
    Ok(())
}
