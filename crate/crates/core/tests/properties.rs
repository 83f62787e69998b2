use proptest::prelude::*;

use crn::aggregation::{ewa_distributions, prescribed_eta, regret, regret_bound, softmax_stable, LearningRate};
use crn::kinetics::{flux, relax_linear, FeatureSubset, RateConstants, RenormTime, Schedule};
use crn::learner::{init_learner, renorm_and_decay, train, Mode, TraceOptions};
use crn::selection::{max_fluxes, run_selection_threshold, run_selection_topk, SelectionOutcome, SelectionSample, SigmoidSpec};

fn samples(n_features: usize) -> impl Strategy<Value = Vec<SelectionSample>> {
    prop::collection::vec(
        (prop::collection::vec(prop_oneof![Just(0.0), 0.0..1.5f64], n_features), 0.1..2.0f64),
        1..5,
    )
    .prop_map(|v| v.into_iter().map(|(x, d)| SelectionSample::new(x, d)).collect())
}

/// Each index goes to the first subset, the second, or neither.
fn disjoint_pair(n: usize) -> impl Strategy<Value = (FeatureSubset, FeatureSubset)> {
    prop::collection::vec(0u8..3, n)
        .prop_filter("both sides nonempty", |v| v.contains(&1) && v.contains(&2))
        .prop_map(|v| {
            let side = |t: u8| FeatureSubset::new((0..v.len()).filter(|&i| v[i] == t).collect()).unwrap();
            (side(1), side(2))
        })
}

proptest! {
    #[test]
    fn topk_equals_threshold_at_implied_theta(
        s in samples(5),
        depth in 1usize..=2,
        k in 1usize..10,
        rho in 0.01..0.5f64,
    ) {
        let ranked: Vec<f64> = {
            let mut v: Vec<f64> = max_fluxes(&s, depth).unwrap().into_values().collect();
            v.sort_by(|a, b| b.total_cmp(a));
            v
        };
        // Only compare when the cut is strict and every chosen subset was active.
        prop_assume!(k < ranked.len() && ranked[k - 1] > ranked[k]);
        let top = run_selection_topk(&s, depth, k, &SigmoidSpec::new(0.0, rho, 1.0).unwrap()).unwrap();
        let theta = top.implied_theta.unwrap();
        let thr = run_selection_threshold(&s, depth, &SigmoidSpec::new(theta, rho, 1.0).unwrap()).unwrap();
        prop_assert_eq!(&top.subsets, &thr.subsets);
        for (a, b) in top.weights.iter().zip(&thr.weights) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn threshold_selection_shrinks_with_theta(s in samples(5), depth in 1usize..=2, t1 in 0.0..0.5f64, dt in 0.0..0.5f64) {
        let lo = run_selection_threshold(&s, depth, &SigmoidSpec::new(t1, 0.1, 1.0).unwrap()).unwrap();
        let hi = run_selection_threshold(&s, depth, &SigmoidSpec::new(t1 + dt, 0.1, 1.0).unwrap()).unwrap();
        prop_assert!(hi.subsets.iter().all(|x| lo.subsets.contains(x)));
        for x in &hi.subsets {
            prop_assert!(hi.weight(x).unwrap() <= lo.weight(x).unwrap() + 1e-12);
        }
    }

    #[test]
    fn relax_moves_monotonically_to_equilibrium(y0 in 0.0..10.0f64, p in 0.1..3.0f64, d in 0.1..3.0f64, t in 0.0..5.0f64, dt in 0.0..5.0f64) {
        let eq = p / d;
        let a = relax_linear(y0, p, d, RenormTime::Finite(t)).unwrap();
        let b = relax_linear(y0, p, d, RenormTime::Finite(t + dt)).unwrap();
        prop_assert!((b - eq).abs() <= (a - eq).abs() + 1e-12);
        prop_assert!((a - eq) * (y0 - eq) >= 0.0);
        prop_assert_eq!(relax_linear(y0, p, d, RenormTime::Equilibrium).unwrap(), eq);
    }

    #[test]
    fn flux_is_multiplicative_over_disjoint_subsets(
        x in prop::collection::vec(0.0..2.0f64, 6),
        (a, b) in disjoint_pair(6),
    ) {
        prop_assert!(a.is_disjoint(&b));
        let joint = flux(&a.union(&b), &x).unwrap();
        let split = flux(&a, &x).unwrap() * flux(&b, &x).unwrap();
        prop_assert!((joint - split).abs() <= 1e-12 * joint.abs().max(1e-300));
    }

    #[test]
    fn ewa_regret_within_bound(
        m in 1usize..60,
        e in 2usize..8,
        a in -5.0..5.0f64,
        width in 0.1..10.0f64,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b = a + width;
        let gains: Vec<Vec<f64>> = (0..m).map(|_| (0..e).map(|_| rng.random_range(a..=b)).collect()).collect();
        let eta = prescribed_eta(a, b, m, e).unwrap();
        let played = ewa_distributions(&gains, e, LearningRate::Fixed(eta)).unwrap();
        prop_assert!(regret(&gains, &played).unwrap() <= regret_bound(a, b, m, e, false).unwrap());
    }

    #[test]
    fn softmax_is_a_shift_invariant_distribution(v in prop::collection::vec(-50.0..50.0f64, 1..10), c in -500.0..500.0f64) {
        let p = softmax_stable(&v).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|x| *x >= 0.0));
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        for (x, y) in p.iter().zip(softmax_stable(&shifted).unwrap()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_is_one_lipschitz_in_sup_norm(
        v in prop::collection::vec(-5.0..5.0f64, 2..8),
        d in prop::collection::vec(-0.1..0.1f64, 8),
    ) {
        let w: Vec<f64> = v.iter().zip(&d).map(|(a, b)| a + b).collect();
        let sup = v.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let p = softmax_stable(&v).unwrap();
        let q = softmax_stable(&w).unwrap();
        let l1: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
        prop_assert!(l1 <= 2.0 * sup + 1e-12);
    }

    #[test]
    fn renorm_concentrates_on_the_largest_log_weight(v in prop::collection::vec(-3.0..3.0f64, 2..6), boost in 1.0..4.0f64) {
        let n = v.len();
        let sel = selection(n);
        let rates = RateConstants::default();
        let mut st = init_learner(&sel, &[0], 1, &rates).unwrap();
        let mut last = 0.0;
        for step in 1..=4 {
            st.columns[0].log_h = v.iter().enumerate().map(|(j, x)| if j == 0 { x + boost * step as f64 * 10.0 } else { *x }).collect();
            renorm_and_decay(&mut st, RenormTime::Equilibrium, &rates).unwrap();
            let w0 = st.columns[0].w_out[0];
            prop_assert!(w0 >= last - 1e-15);
            last = w0;
        }
        prop_assert!((last - rates.weight_scale()).abs() < 1e-6);
    }

    #[test]
    fn class_columns_learn_independently(
        xs in prop::collection::vec((prop::collection::vec(0.0..0.9f64, 3), 0usize..2), 2..8),
        eta in 0.001..0.1f64,
    ) {
        let mut xs = xs;
        xs[0].1 = 0;
        xs[1].1 = 1;
        let labels: Vec<usize> = xs.iter().map(|s| s.1).collect();
        let rates = RateConstants { eta, ..Default::default() };
        let sel = selection(3);
        let schedule = Schedule::default();
        let mut full = init_learner(&sel, &labels, 2, &rates).unwrap();
        train(&mut full, &xs, Mode::Full, &rates, &schedule, TraceOptions::default()).unwrap();
        for k in 0..2 {
            let mut alone = init_learner(&sel, &labels, 2, &rates).unwrap().restrict_to_class(k).unwrap();
            train(&mut alone, &xs, Mode::Full, &rates, &schedule, TraceOptions::default()).unwrap();
            prop_assert_eq!(&alone.columns[0], &full.columns[k]);
        }
    }
}

fn selection(n: usize) -> SelectionOutcome {
    SelectionOutcome {
        depth: 1,
        n_features: n,
        subsets: (0..n).map(FeatureSubset::singleton).collect(),
        weights: vec![1.0; n],
        implied_theta: None,
        t_sel: 1.0,
    }
}
