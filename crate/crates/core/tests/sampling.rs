use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use suzz::diagnostics::{cube_probability, cube_probability_skeleton, ess, ks_two_sample};
use suzz::events::EventBudget;
use suzz::io::{read_events_jsonl, read_skeleton_csv, write_events_jsonl, write_skeleton_csv};
use suzz::sampler::{chain_rng, stationary_start};
use suzz::targets::{make_cauchy_5d, make_std_normal_1d, make_student_t_1d};
use suzz::{ArrivalSampler, EventChain, LineFlow, RateSpec, Sampler, SpeedFunction};

fn normal(speed: &str) -> RateSpec {
    RateSpec::new(make_std_normal_1d(), SpeedFunction::from_id(speed).unwrap())
}

fn first_times(rs: &RateSpec, arrivals: ArrivalSampler, x: &[f64], theta: &[i8], n: usize, seed: u64) -> Vec<f64> {
    let flow = LineFlow::new(x, theta, &rs.speed);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut budget = EventBudget::new(u64::MAX);
    (0..n)
        .map(|_| arrivals.first_arrival(rs, &flow, &mut rng, &mut budget).unwrap().tau)
        .collect()
}

#[test]
fn thinning_and_inversion_agree_in_law() {
    for (rs, x) in [
        (normal("poly:0.5"), vec![-1.3]),
        (RateSpec::new(make_student_t_1d(1.0).unwrap(), SpeedFunction::poly_radial(0.5).unwrap()), vec![-4.0]),
    ] {
        let exact = first_times(&rs, ArrivalSampler::exact(), &x, &[1], 20_000, 1);
        let thin = first_times(&rs, ArrivalSampler::thinning(), &x, &[1], 20_000, 2);
        let ks = ks_two_sample(&exact, &thin).unwrap();
        assert!(ks.statistic < 0.02, "{}: {ks:?}", rs.speed.id());
    }
}

#[test]
fn thinning_chain_runs_on_five_dims() {
    let rs = RateSpec::new(make_cauchy_5d(), SpeedFunction::poly_radial(0.0).unwrap());
    let chain = Sampler::new(rs)
        .with_arrivals(ArrivalSampler::thinning())
        .run_until_switches(&[0.0; 5], &[1; 5], 500, &mut chain_rng(5, 0))
        .unwrap();
    assert_eq!(chain.switches(), 500);
    assert!(chain.proposals >= 500);
    assert!(chain.reconstruction_error().unwrap() < 1e-9);
}

#[test]
fn cube_probability_is_monotone() {
    let rs = RateSpec::new(make_cauchy_5d(), SpeedFunction::poly_radial(0.0).unwrap());
    let chain = Sampler::new(rs)
        .run_until_switches(&[0.0; 5], &[1; 5], 2000, &mut chain_rng(8, 0))
        .unwrap();
    let ls = [0.0, 0.1, 0.5, 1.0, 2.2577, 5.0, 12.4788, 100.0, 1e308];
    let ps: Vec<f64> = ls.iter().map(|l| cube_probability(&chain, *l)).collect();
    assert!(ps.windows(2).all(|w| w[1] >= w[0]), "{ps:?}");
    assert_eq!(ps[8], 1.0);
    assert!(ps[0] <= 1e-12);
}

#[test]
fn exact_cube_time_matches_skeleton_frequency() {
    let delta = 0.01;
    for speed in ["unit", "poly:0.5"] {
        let chain = Sampler::new(normal(speed))
            .run_until_switches(&[0.0], &[1], 3000, &mut chain_rng(21, 0))
            .unwrap();
        let sk = chain.skeleton(delta).unwrap();
        for l in [0.3, 1.0, 1.96] {
            let diff = (cube_probability(&chain, l) - cube_probability_skeleton(&sk, l)).abs();
            assert!(diff <= 5.0 * delta, "{speed} l={l}: {diff}");
        }
    }
}

#[test]
fn unit_speed_never_outruns_time() {
    let rs = RateSpec::new(make_student_t_1d(1.0).unwrap(), SpeedFunction::unit());
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    for _ in 0..20 {
        let t_end = rng.random_range(1.0..500.0);
        let chain = Sampler::new(rs.clone()).run_until_time(&[0.0], &[1], t_end, &mut rng).unwrap();
        let sup = chain.events.iter().map(|e| e.x[0].abs()).fold(chain.x_end[0].abs(), f64::max);
        assert!(sup <= t_end);
    }
}

#[test]
fn same_seed_same_chain() {
    let run = || {
        Sampler::new(normal("poly:0.5"))
            .run_until_switches(&[0.3], &[-1], 200, &mut chain_rng(3, 4))
            .unwrap()
    };
    assert_eq!(run().events, run().events);
    let other = Sampler::new(normal("poly:0.5"))
        .run_until_switches(&[0.3], &[-1], 200, &mut chain_rng(3, 5))
        .unwrap();
    assert_ne!(run().events, other.events);
}

#[test]
fn artifacts_round_trip() {
    let chain = Sampler::new(normal("poly:0.5"))
        .run_until_switches(&[0.0], &[1], 2000, &mut chain_rng(4, 0))
        .unwrap();
    let mut buf = Vec::new();
    write_events_jsonl(&chain.events, &mut buf).unwrap();
    let events = read_events_jsonl(buf.as_slice()).unwrap();
    assert_eq!(events, chain.events);

    let rebuilt = EventChain::from_events(chain.spec.clone(), events, Some(chain.t_end)).unwrap();
    let sk = chain.skeleton(0.1).unwrap();
    assert_eq!(rebuilt.skeleton(0.1).unwrap().x, sk.x);

    let mut csv = Vec::new();
    write_skeleton_csv(&sk, &mut csv).unwrap();
    let back = read_skeleton_csv(csv.as_slice(), 0.1).unwrap();
    assert_eq!(back.x, sk.x);
    assert_eq!(ess(&back.coordinate(0)).unwrap(), ess(&sk.coordinate(0)).unwrap());
}

#[test]
fn stationary_start_targets_the_marginal() {
    let target = make_std_normal_1d();
    let mut rng = chain_rng(1, 1);
    let draws: Vec<f64> = (0..4000).map(|_| stationary_start(&target, &mut rng).unwrap().0[0]).collect();
    let ks = suzz::diagnostics::ks_one_sample(&draws, |x| target.cdf_1d(x).unwrap()).unwrap();
    assert!(ks.p_value > 0.001, "{ks:?}");
}
