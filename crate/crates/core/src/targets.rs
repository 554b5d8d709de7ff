//! Target distributions described by their negative log-density `U` and its
//! gradient. Additive constants in `U` are dropped so that built-in modes sit
//! at `U = 0`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use statrs::function::beta::ln_beta;

use crate::error::{Result, SuzzError};
use crate::numerics::{brent, gradient_mismatch, RootOptions};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type UnivariateFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Step used for the finite-difference gradient audit.
pub const FD_STEP: f64 = 1e-5;
/// Relative tolerance of the gradient audit, scaled by `1 + |grad_i|`.
pub const FD_TOL: f64 = 1e-5;
const CUSTOM_CHECK_POINTS: usize = 16;

/// A target measure with density proportional to `exp(-U(x))` on `R^d`.
#[derive(Clone)]
pub struct Target {
    id: String,
    dim: usize,
    potential: ScalarFn,
    gradient: GradientFn,
    cdf_1d: Option<UnivariateFn>,
    quantile_1d: Option<UnivariateFn>,
    log_norm_const: Option<f64>,
    domain: Option<Vec<(f64, f64)>>,
}

impl fmt::Debug for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Target")
            .field("id", &self.id)
            .field("dim", &self.dim)
            .field("has_cdf", &self.cdf_1d.is_some())
            .field("log_norm_const", &self.log_norm_const)
            .field("domain", &self.domain)
            .finish()
    }
}

impl Target {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn potential(&self, x: &[f64]) -> f64 {
        (self.potential)(x)
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        (self.gradient)(x, out)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        self.gradient_into(x, &mut g);
        g
    }

    pub fn cdf_1d(&self, x: f64) -> Option<f64> {
        self.cdf_1d.as_ref().map(|f| f(x))
    }

    pub fn quantile_1d(&self, p: f64) -> Option<f64> {
        self.quantile_1d.as_ref().map(|f| f(p))
    }

    pub fn has_cdf(&self) -> bool {
        self.cdf_1d.is_some()
    }

    /// `log Z` with `Z = ∫ exp(-U)`, when known in closed form.
    pub fn log_norm_const(&self) -> Option<f64> {
        self.log_norm_const
    }

    /// Open box the state space is restricted to, if any (used by the
    /// transformed 1-D process, whose state space is a bounded interval).
    pub fn domain(&self) -> Option<&[(f64, f64)]> {
        self.domain.as_deref()
    }

    pub(crate) fn with_domain(mut self, domain: Vec<(f64, f64)>) -> Self {
        self.domain = Some(domain);
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Wraps callbacks without auditing them.
    pub(crate) fn from_parts(
        id: impl Into<String>,
        dim: usize,
        potential: ScalarFn,
        gradient: GradientFn,
    ) -> Self {
        Self {
            id: id.into(),
            dim,
            potential,
            gradient,
            cdf_1d: None,
            quantile_1d: None,
            log_norm_const: None,
            domain: None,
        }
    }

    /// Checks the gradient against central finite differences at `x`.
    pub fn check_gradient_at(&self, x: &[f64]) -> Result<()> {
        let g = self.gradient(x);
        match gradient_mismatch(|p| self.potential(p), &g, x, FD_STEP, FD_TOL) {
            None => Ok(()),
            Some((coordinate, analytic, numeric)) => Err(SuzzError::GradientMismatch {
                point: x.to_vec(),
                coordinate,
                analytic,
                numeric,
            }),
        }
    }

    /// Parses a built-in target id: `normal1d`, `exp1d`, `student:<nu>`, `cauchy5d`.
    pub fn from_id(id: &str) -> Result<Self> {
        let id = id.trim();
        match id {
            "normal1d" => Ok(make_std_normal_1d()),
            "exp1d" => Ok(make_symmetric_exponential_1d()),
            "cauchy5d" => Ok(make_cauchy_5d()),
            _ => {
                if let Some(nu) = id.strip_prefix("student:") {
                    let nu: f64 = nu.trim().parse().map_err(|_| {
                        SuzzError::InvalidParameter(format!(
                            "target: cannot parse degrees of freedom in {id:?}"
                        ))
                    })?;
                    make_student_t_1d(nu)
                } else {
                    Err(SuzzError::InvalidParameter(format!(
                        "target: unknown id {id:?} (expected normal1d, exp1d, student:<nu>, cauchy5d)"
                    )))
                }
            }
        }
    }
}

pub fn make_std_normal_1d() -> Target {
    let normal = Normal::standard();
    Target {
        id: "normal1d".into(),
        dim: 1,
        potential: Arc::new(|x| 0.5 * x[0] * x[0]),
        gradient: Arc::new(|x, g| g[0] = x[0]),
        cdf_1d: Some(Arc::new(move |x| normal.cdf(x))),
        quantile_1d: Some(Arc::new(move |p| normal.inverse_cdf(p))),
        log_norm_const: Some(0.5 * (2.0 * PI).ln()),
        domain: None,
    }
}

/// Laplace density `exp(-|x|)/2`; the gradient at the kink is taken to be 0.
pub fn make_symmetric_exponential_1d() -> Target {
    Target {
        id: "exp1d".into(),
        dim: 1,
        potential: Arc::new(|x| x[0].abs()),
        gradient: Arc::new(|x, g| {
            g[0] = if x[0] > 0.0 {
                1.0
            } else if x[0] < 0.0 {
                -1.0
            } else {
                0.0
            }
        }),
        cdf_1d: Some(Arc::new(|x| {
            if x < 0.0 {
                0.5 * x.exp()
            } else {
                1.0 - 0.5 * (-x).exp()
            }
        })),
        quantile_1d: Some(Arc::new(|p| {
            if p < 0.5 {
                (2.0 * p).ln()
            } else {
                -(2.0 * (1.0 - p)).ln()
            }
        })),
        log_norm_const: Some(2f64.ln()),
        domain: None,
    }
}

/// Student-t with `nu` degrees of freedom; `nu = 1` is the Cauchy distribution.
pub fn make_student_t_1d(nu: f64) -> Result<Target> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(SuzzError::InvalidParameter(format!(
            "student-t degrees of freedom must be positive, got {nu}"
        )));
    }
    let half = 0.5 * (nu + 1.0);
    let (cdf, quantile): (UnivariateFn, UnivariateFn) = if nu == 1.0 {
        (
            Arc::new(|x: f64| 0.5 + x.atan() / PI),
            Arc::new(|p: f64| (PI * (p - 0.5)).tan()),
        )
    } else {
        let dist = StudentsT::new(0.0, 1.0, nu)
            .map_err(|e| SuzzError::InvalidParameter(format!("student-t: {e}")))?;
        let q = dist;
        (
            Arc::new(move |x| dist.cdf(x)),
            Arc::new(move |p| student_quantile(&q, p)),
        )
    };
    Ok(Target {
        id: format!("student:{nu}"),
        dim: 1,
        potential: Arc::new(move |x| half * (x[0] * x[0] / nu).ln_1p()),
        gradient: Arc::new(move |x, g| g[0] = (nu + 1.0) * x[0] / (nu + x[0] * x[0])),
        cdf_1d: Some(cdf),
        quantile_1d: Some(quantile),
        log_norm_const: Some(0.5 * nu.ln() + ln_beta(0.5, 0.5 * nu)),
        domain: None,
    })
}

/// Polishes the incomplete-beta based quantile with a bracketed solve so that
/// `quantile(cdf(x))` round-trips tightly.
fn student_quantile(dist: &StudentsT, p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let guess = dist.inverse_cdf(p);
    if !guess.is_finite() {
        return guess;
    }
    let width = 1e-6 * (1.0 + guess.abs());
    let f = |x: f64| dist.cdf(x) - p;
    let mut lo = guess - width;
    let mut hi = guess + width;
    for _ in 0..60 {
        if f(lo) <= 0.0 {
            break;
        }
        lo -= 2.0 * (hi - lo);
    }
    for _ in 0..60 {
        if f(hi) >= 0.0 {
            break;
        }
        hi += 2.0 * (hi - lo);
    }
    brent(f, lo, hi, &RootOptions::default()).unwrap_or(guess)
}

/// Isotropic 5-dimensional Cauchy (multivariate t with one degree of freedom).
pub fn make_cauchy_5d() -> Target {
    Target {
        id: "cauchy5d".into(),
        dim: 5,
        potential: Arc::new(|x| 3.0 * x.iter().map(|v| v * v).sum::<f64>().ln_1p()),
        gradient: Arc::new(|x, g| {
            let denom = 1.0 + x.iter().map(|v| v * v).sum::<f64>();
            for (gi, xi) in g.iter_mut().zip(x) {
                *gi = 6.0 * xi / denom;
            }
        }),
        cdf_1d: None,
        quantile_1d: None,
        log_norm_const: Some(PI.powi(3).ln() - 2f64.ln()),
        domain: None,
    }
}

/// Optional exact 1-D distribution functions for a custom target.
#[derive(Clone, Default)]
pub struct Marginal1d {
    pub cdf: Option<UnivariateFn>,
    pub quantile: Option<UnivariateFn>,
}

/// Wraps user callbacks, spot-checking the gradient at 16 pseudo-random points
/// drawn uniformly from `[-10, 10]^d`.
pub fn make_custom(
    dim: usize,
    potential: ScalarFn,
    gradient: GradientFn,
    marginal: Marginal1d,
) -> Result<Target> {
    if dim == 0 {
        return Err(SuzzError::InvalidParameter("dimension must be positive".into()));
    }
    if dim != 1 && (marginal.cdf.is_some() || marginal.quantile.is_some()) {
        return Err(SuzzError::InvalidParameter(
            "cdf/quantile are only supported for one-dimensional targets".into(),
        ));
    }
    let mut target = Target::from_parts("custom", dim, potential, gradient);
    target.cdf_1d = marginal.cdf;
    target.quantile_1d = marginal.quantile;
    let mut rng = ChaCha20Rng::seed_from_u64(0x5eed_cafe);
    for _ in 0..CUSTOM_CHECK_POINTS {
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect();
        target.check_gradient_at(&x)?;
    }
    Ok(target)
}
