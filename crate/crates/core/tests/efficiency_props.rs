use statrs::distribution::{ContinuousCDF, Normal};
use suzz::diagnostics::qq_data;
use suzz::efficiency::{default_observable_for, inverse_efficiency_profile, k_of, RProfile};
use suzz::targets::{make_std_normal_1d, make_student_t_1d, make_symmetric_exponential_1d};
use suzz::{inverse_efficiency, KConvention, Observable, SpeedFunction};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn j_is_invariant_under_constant_speed_scaling() {
    let targets = [
        make_std_normal_1d(),
        make_symmetric_exponential_1d(),
        make_student_t_1d(10.0).unwrap(),
        make_student_t_1d(1.0).unwrap(),
    ];
    for target in &targets {
        let g = default_observable_for(target);
        for id in ["poly:0.5", "poly:0.9"] {
            let speed = SpeedFunction::from_id(id).unwrap();
            let base = inverse_efficiency(target, &speed, &g, KConvention::Symmetrized).unwrap().j;
            for c in [0.1, 7.0, 1000.0] {
                let j = inverse_efficiency(target, &speed.scaled(c).unwrap(), &g, KConvention::Symmetrized)
                    .unwrap()
                    .j;
                assert!(rel(j, base) < 1e-9, "{} {id} c={c}: {j} vs {base}", target.id());
            }
        }
    }
}

#[test]
fn first_factor_is_twice_the_mode() {
    let rep = inverse_efficiency(
        &make_std_normal_1d(),
        &SpeedFunction::unit(),
        &Observable::identity(),
        KConvention::Symmetrized,
    )
    .unwrap();
    assert!(rel(rep.factor1, 2.0) < 1e-10);
    assert!(rel(rep.n0, 1.0) < 1e-10);
}

#[test]
fn flattening_decreases_j() {
    let target = make_std_normal_1d();
    let base = RProfile::from_speed(&target, &SpeedFunction::unit()).unwrap();
    let js: Vec<f64> = [1.0, 2.0, 4.0, 8.0]
        .iter()
        .map(|n| {
            inverse_efficiency_profile(&target, &base.flattened(*n), &Observable::identity(), KConvention::Symmetrized)
                .unwrap()
                .j
        })
        .collect();
    assert!(js.windows(2).all(|w| w[1] < w[0]), "{js:?}");
    assert!(js[0] < 4.0);
}

#[test]
fn k_matches_closed_forms() {
    let normal = make_std_normal_1d();
    let laplace = make_symmetric_exponential_1d();
    let g = Observable::identity();
    for x in [-3.0, -0.4, 0.0, 0.7, 2.5, 6.0] {
        let k = k_of(&normal, &g, x, KConvention::Symmetrized).unwrap();
        assert!((k - (-0.5 * x * x).exp()).abs() < 1e-10, "normal x={x}: {k}");
        if x >= 0.0 {
            let k = k_of(&laplace, &g, x, KConvention::Symmetrized).unwrap();
            assert!((k - (x + 1.0) * (-x).exp()).abs() < 1e-10, "laplace x={x}: {k}");
        }
        assert_eq!(k_of(&normal, &Observable::zero(), x, KConvention::Symmetrized).unwrap(), 0.0);
    }
}

/// Independent evaluation for the normal target with `g = x`, where
/// `k = e^{−x²/2}` and hence `k²/r² = 1/s²`.
#[test]
fn normal_poly_cell_matches_direct_quadrature() {
    let eps = 0.5;
    let speed = SpeedFunction::poly_radial(eps).unwrap();
    let s = |x: f64| speed.value(&[x]);
    let ds = |x: f64| speed.gradient(&[x])[0];
    let abs_dr = |x: f64| ((-0.5 * x * x).exp() * (ds(x) - s(x) * x)).abs();
    let kink = eps.sqrt();
    let pieces = [(-40.0, -kink), (-kink, 0.0), (0.0, kink), (kink, 40.0)];
    let integrate = |f: &dyn Fn(f64) -> f64| -> f64 {
        pieces.iter().map(|(a, b)| quadrature::integrate(f, *a, *b, 1e-14).integral).sum()
    };
    let f1 = integrate(&abs_dr);
    let f2 = integrate(&|x| abs_dr(x) / (s(x) * s(x)));
    let rep = inverse_efficiency(&make_std_normal_1d(), &speed, &Observable::identity(), KConvention::Symmetrized)
        .unwrap();
    assert!(rel(rep.factor1, f1) < 1e-9, "{} vs {f1}", rep.factor1);
    assert!(rel(rep.factor2, f2) < 1e-9, "{} vs {f2}", rep.factor2);
    assert!(rel(rep.j, f1 * f2) < 1e-9);
}

#[test]
fn uniform_against_normal_quantiles_bends() {
    let uniform: Vec<f64> = (0..10_000).map(|i| (f64::from(i) + 0.5) / 10_000.0).collect();
    let n = Normal::standard();
    let qq = qq_data(&uniform, |p| n.inverse_cdf(p), 99).unwrap();
    let dev: Vec<f64> = qq.iter().map(|q| q.empirical - q.reference).collect();
    // Light empirical tails: above the diagonal on the left, below on the right.
    assert!(dev[0] > 0.5 && dev[98] < -0.5, "{} {}", dev[0], dev[98]);
    assert!(qq.windows(2).all(|w| w[1].p > w[0].p && w[1].empirical >= w[0].empirical));

    let normal: Vec<f64> = uniform.iter().map(|p| n.inverse_cdf(*p)).collect();
    let qq = qq_data(&normal, |p| n.inverse_cdf(p), 99).unwrap();
    assert!(qq.iter().all(|q| (q.empirical - q.reference).abs() < 0.02));
}
