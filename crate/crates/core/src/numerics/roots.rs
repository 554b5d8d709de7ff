//! Bracketed root finding (Brent's method).

use crate::error::{Result, SuzzError};

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    pub xtol_abs: f64,
    pub xtol_rel: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            xtol_abs: 1e-300,
            xtol_rel: 4.0 * f64::EPSILON,
            max_iter: 200,
        }
    }
}

/// Finds a root of `f` in `[a, b]` given a sign change. Exact zeros at the
/// endpoints are returned immediately.
pub fn brent<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    opts: &RootOptions,
) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.is_nan() || fb.is_nan() || fa.signum() == fb.signum() {
        return Err(SuzzError::RootNotFound(format!(
            "no sign change on [{a}, {b}]: f(a)={fa}, f(b)={fb}"
        )));
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..opts.max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * opts.xtol_rel * b.abs() + 0.5 * opts.xtol_abs;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
        if fb.is_nan() {
            return Err(SuzzError::RootNotFound(format!("NaN at {b}")));
        }
    }
    Err(SuzzError::RootNotFound(format!(
        "no convergence after {} iterations, last iterate {b}",
        opts.max_iter
    )))
}

/// For a nondecreasing `f` with `f(lo) < target`, doubles the step until
/// `f(hi) >= target`. Returns `(lo, hi)` bracketing the crossing.
pub fn bracket_upward<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    step: f64,
    target: f64,
    max_doublings: usize,
) -> Result<(f64, f64)> {
    let mut a = lo;
    let mut h = step;
    for _ in 0..max_doublings {
        let b = a + h;
        if !b.is_finite() {
            break;
        }
        if f(b) >= target {
            return Ok((a, b));
        }
        a = b;
        h *= 2.0;
    }
    Err(SuzzError::RootNotFound(format!(
        "could not bracket level {target} above {lo}"
    )))
}

/// Safeguarded Newton iteration for a nondecreasing `f` with derivative `df`
/// on a bracket `[lo, hi]` where `f(lo) <= 0 <= f(hi)`. Falls back to
/// bisection whenever the Newton step leaves the bracket or stalls.
pub fn newton_bracketed<F, D>(
    mut f: F,
    mut df: D,
    lo: f64,
    hi: f64,
    opts: &RootOptions,
) -> Result<f64>
where
    F: FnMut(f64) -> f64,
    D: FnMut(f64) -> f64,
{
    newton_bracketed_from(&mut f, &mut df, 0.5 * (lo + hi), lo, hi, opts)
}

/// [`newton_bracketed`] started from `x0 ∈ [lo, hi]` instead of the midpoint.
pub fn newton_bracketed_from<F, D>(
    mut f: F,
    mut df: D,
    x0: f64,
    lo: f64,
    hi: f64,
    opts: &RootOptions,
) -> Result<f64>
where
    F: FnMut(f64) -> f64,
    D: FnMut(f64) -> f64,
{
    let (mut lo, mut hi) = (lo, hi);
    let mut x = x0.clamp(lo, hi);
    let mut fx = f(x);
    let mut dx_old = hi - lo;
    for _ in 0..opts.max_iter {
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let tol = opts.xtol_abs + opts.xtol_rel * x.abs();
        if hi - lo <= tol {
            return Ok(x);
        }
        let d = df(x);
        let newton = if d > 0.0 && d.is_finite() { x - fx / d } else { f64::NAN };
        // Bisect when Newton leaves the bracket or its step is not shrinking
        // at least geometrically.
        let slow = (2.0 * fx).abs() > (dx_old * d).abs();
        let next = if newton > lo && newton < hi && !slow {
            newton
        } else {
            0.5 * (lo + hi)
        };
        dx_old = next - x;
        if (next - x).abs() <= tol {
            return Ok(next);
        }
        x = next;
        fx = f(x);
        if fx.is_nan() {
            return Err(SuzzError::RootNotFound(format!("NaN at {x}")));
        }
    }
    Err(SuzzError::RootNotFound(format!(
        "safeguarded Newton did not converge on [{lo}, {hi}]"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_cube_root() {
        let r = brent(|x| x * x * x - 2.0, 0.0, 2.0, &RootOptions::default()).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_missing_sign_change() {
        assert!(brent(|x| x * x + 1.0, -1.0, 1.0, &RootOptions::default()).is_err());
    }

    #[test]
    fn newton_on_monotone_function() {
        let r = newton_bracketed(
            |x: f64| x.exp() - 3.0,
            |x: f64| x.exp(),
            0.0,
            5.0,
            &RootOptions::default(),
        )
        .unwrap();
        assert!((r - 3f64.ln()).abs() < 1e-15);
        // Flat region: derivative zero on the left part.
        let r = newton_bracketed(
            |x: f64| (x - 1.0).max(0.0) - 0.5,
            |x: f64| if x > 1.0 { 1.0 } else { 0.0 },
            0.0,
            4.0,
            &RootOptions::default(),
        )
        .unwrap();
        assert!((r - 1.5).abs() < 1e-14);
    }

    #[test]
    fn brackets_monotone_level() {
        let (a, b) = bracket_upward(|x| x.ln_1p(), 0.0, 1.0, 5.0, 100).unwrap();
        assert!(a.ln_1p() < 5.0 && b.ln_1p() >= 5.0);
    }
}
