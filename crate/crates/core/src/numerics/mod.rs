//! Numerical building blocks: adaptive quadrature, bracketed root finding and
//! finite-difference checks.

pub mod quadrature;
pub mod roots;

pub use quadrature::{integrate, integrate_raw, Integral, QuadOptions};
pub use roots::{bracket_upward, brent, newton_bracketed, newton_bracketed_from, RootOptions};

/// Central finite difference of `f` along coordinate `i` at `x`.
pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], i: usize, h: f64) -> f64 {
    let mut p = x.to_vec();
    p[i] = x[i] + h;
    let up = f(&p);
    p[i] = x[i] - h;
    let down = f(&p);
    (up - down) / (2.0 * h)
}

/// Returns the first coordinate where `grad` disagrees with a central
/// difference of `f` beyond `tol * (1 + |grad_i|)`, as `(i, analytic, numeric)`.
pub fn gradient_mismatch<F: Fn(&[f64]) -> f64>(
    f: F,
    grad: &[f64],
    x: &[f64],
    h: f64,
    tol: f64,
) -> Option<(usize, f64, f64)> {
    (0..x.len()).find_map(|i| {
        let numeric = central_difference(&f, x, i, h);
        let analytic = grad[i];
        let ok = (numeric - analytic).abs() <= tol * (1.0 + analytic.abs());
        (!ok).then_some((i, analytic, numeric))
    })
}
