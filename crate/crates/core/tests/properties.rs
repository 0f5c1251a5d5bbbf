use proptest::prelude::*;
use tvstab::boosting::{smooth_boost, BoostParams, BoostState};
use tvstab::coupling::{disagreement_bound, Coupler, Provenance, ReferenceMeasure};
use tvstab::dp::{approx_dp_delta, exp_mechanism_distribution, max_log_ratio, stable_histogram};
use tvstab::fixtures::{make_weak_stump_learner, DataSpec};
use tvstab::replicable::{replicable_sq, SqParams};
use tvstab::rule::LearningRule;
use tvstab::sampling::DistSampler;
use tvstab::{tv_distance, Dataset, Dist, Example, Hypothesis, HypothesisClass, Seed, Tape};

fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.01f64..1.0, k).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.iter().map(|x| x / s).collect()
    })
}

fn dist(w: &[f64]) -> Dist<u32> {
    Dist::new((0..w.len() as u32).collect(), w.to_vec()).unwrap()
}

fn reference(k: u32) -> ReferenceMeasure<u32> {
    ReferenceMeasure::new(Dist::uniform(0..k).unwrap(), Provenance::DataIndependent)
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 24,
        rng_seed: proptest::test_runner::RngSeed::Fixed(20_240_601),
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn same_target_same_tape_same_output(w in simplex(4), seed in any::<u64>()) {
        let r = reference(4);
        let p = dist(&w);
        let a = Coupler::new(&r, Tape::from_u128(seed as u128)).draw(&p).unwrap();
        let b = Coupler::new(&r, Tape::from_u128(seed as u128)).draw(&p.clone()).unwrap();
        prop_assert_eq!(a.index, b.index);
        prop_assert_eq!(a.t, b.t);
    }

    #[test]
    fn coupled_disagreement_between_tv_and_bound(a in simplex(3), b in simplex(3), seed in any::<u64>()) {
        let r = reference(3);
        let (p, q) = (dist(&a), dist(&b));
        let trials = 2000;
        let base = Tape::from_u128(seed as u128);
        let differ = (0..trials)
            .filter(|&i| {
                let c = Coupler::new(&r, base.derive(i as u64));
                c.draw(&p).unwrap().index != c.draw(&q).unwrap().index
            })
            .count() as f64
            / trials as f64;
        let tv = tv_distance(&p, &q);
        let ci = 3.0 * (0.25f64 / trials as f64).sqrt();
        prop_assert!(differ >= tv - ci, "differ {differ} < tv {tv}");
        prop_assert!(differ <= disagreement_bound(tv).unwrap() + ci, "differ {differ} above bound at tv {tv}");
    }

    #[test]
    fn approx_delta_at_zero_is_tv(a in simplex(5), b in simplex(5)) {
        let (p, q) = (dist(&a), dist(&b));
        prop_assert!((approx_dp_delta(&p, &q, 0.0) - tv_distance(&p, &q)).abs() < 1e-12);
    }

    #[test]
    fn approx_delta_decreases_in_eps(a in simplex(5), b in simplex(5), e in 0.0f64..2.0) {
        let (p, q) = (dist(&a), dist(&b));
        prop_assert!(approx_dp_delta(&p, &q, e + 0.1) <= approx_dp_delta(&p, &q, e) + 1e-12);
    }

    #[test]
    fn distribution_json_round_trip(w in simplex(6)) {
        let p = dist(&w);
        let text = serde_json::to_string(&p).unwrap();
        let back: Dist<u32> = serde_json::from_str(&text).unwrap();
        prop_assert!(tv_distance(&p, &back) < 1e-12);
    }

    #[test]
    fn seed_hex_round_trip(x in any::<u128>()) {
        let s = Seed(x);
        prop_assert_eq!(s.to_string().parse::<Seed>().unwrap(), s);
    }

    #[test]
    fn smooth_measure_stays_in_unit_interval(bits in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 6), 1..30), gamma in 0.05f64..0.45) {
        let mut state = BoostState::new(6, gamma);
        prop_assert!(state.measure().values().iter().all(|&v| v == 1.0));
        for b in bits {
            state.push(Hypothesis::new(b));
            prop_assert!(state.measure().in_range());
        }
    }

    #[test]
    fn exp_mechanism_is_pure_dp_on_random_swaps(
        points in proptest::collection::vec((0u32..5, any::<bool>()), 1..8),
        pos in any::<prop::sample::Index>(),
        swap in (0u32..5, any::<bool>()),
        eps in 0.1f64..2.0,
    ) {
        let class = HypothesisClass::new(5, (0..=5).map(|c| Hypothesis::threshold(5, c)).collect()).unwrap();
        let s: Dataset = points.iter().map(|&(x, y)| Example::new(x, y)).collect();
        let mut t = points.clone();
        t[pos.index(points.len())] = swap;
        let t: Dataset = t.iter().map(|&(x, y)| Example::new(x, y)).collect();
        let p = exp_mechanism_distribution(&class, &s, eps).unwrap();
        let q = exp_mechanism_distribution(&class, &t, eps).unwrap();
        prop_assert!(max_log_ratio(&p, &q) <= eps + 1e-9);
        prop_assert!(max_log_ratio(&q, &p) <= eps + 1e-9);
    }

    #[test]
    fn histogram_releases_only_present_items(counts in proptest::collection::vec(0usize..800, 4), seed in any::<u64>()) {
        let items: Vec<u8> = counts.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i as u8, c)).collect();
        prop_assume!(items.len() >= 1000);
        let out = stable_histogram(&items, 0.2, 0.1, 1.0, 1e-4, &Tape::from_u128(seed as u128)).unwrap();
        for r in &out {
            prop_assert!(counts[r.item as usize] > 0);
            prop_assert!((0.0..=1.0).contains(&r.estimate));
        }
    }

    #[test]
    fn sq_output_within_tolerance(mean in 0.05f64..0.95, seed in any::<u64>()) {
        let coin = Dist::new(vec![0u32, 1], vec![1.0 - mean, mean]).unwrap();
        let p = SqParams::new(0.2, 0.5, 0.01).unwrap();
        let t = Tape::from_u128(seed as u128);
        let v = replicable_sq(|x: &u32| *x as f64, &mut DistSampler::from_tape(&coin, &t.derive("data")), &p, &t.derive("shared")).unwrap();
        prop_assert!((v - mean).abs() <= p.tau);
    }
}

#[test]
fn majority_error_falls_across_rounds() {
    let domain = 32;
    let weak = make_weak_stump_learner(domain, 16).unwrap();
    let r = tvstab::coupling::uniform_reference(weak.reachable()).unwrap();
    let weak: std::sync::Arc<dyn LearningRule> = std::sync::Arc::new(weak);
    let params = BoostParams { eps: 0.1, gamma: 0.25, rho_prime: 0.1, beta_prime: 0.1, c_t: 4.0 };
    let mut first = 0.0;
    let mut last = 0.0;
    let runs = 20;
    for i in 0..runs {
        let target = Hypothesis::threshold(domain, 3 + i % 27);
        let d = DataSpec::realizable(target).build().unwrap();
        let t = Tape::from_u128(900 + i as u128);
        let o = smooth_boost(weak.clone(), r.clone(), &d, &params, &t.derive("shared"), &t.derive("data")).unwrap();
        first += o.log.first().unwrap().majority_error;
        last += o.log.last().unwrap().majority_error;
    }
    assert!(last <= first, "mean majority error rose from {} to {}", first / runs as f64, last / runs as f64);
}
