use flsvi_core::agent::{act, plan_episode, AgentConfig, ReplayBuffer, Transition};
use flsvi_core::bonus::{BetaParams, BonusConfig};
use flsvi_core::domain::{set_norm, sq_set_distance, ConfidenceRegion, HorizonParams, PairMultiset, StateActionPair};
use flsvi_core::function_class::{FiniteClass, FunctionClass, LinearClass, LinearFunction, TabularClass, TabularFunction};
use flsvi_core::sensitivity::{copies_for, estimate_sensitivity, exact_sensitivities, round_probability};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pairs(states: usize, actions: usize, max: usize) -> impl Strategy<Value = Vec<StateActionPair>> {
    prop::collection::vec((0..states, 0..actions), 0..max)
        .prop_map(|v| v.into_iter().map(|(s, a)| StateActionPair::new(s, a)).collect())
}

proptest! {
    #[test]
    fn round_probability_is_reciprocal_of_integer(b in 1e-6f64..=1.0) {
        let p = round_probability(b).unwrap();
        let n = copies_for(b).unwrap();
        prop_assert!(p >= b * (1.0 - 1e-12));
        prop_assert!(p <= 1.0);
        prop_assert!((p * n as f64 - 1.0).abs() < 1e-12);
        prop_assert!(1.0 / (n as f64 + 1.0) < b * (1.0 + 1e-12));
    }

    #[test]
    fn set_norm_is_symmetric_and_multiplicity_weighted(
        f in prop::collection::vec(0.0f64..4.0, 6),
        g in prop::collection::vec(0.0f64..4.0, 6),
        zs in pairs(3, 2, 20),
    ) {
        let class = TabularClass::new(3, 2, 3).unwrap();
        let f = TabularFunction::from_values(&class, f).unwrap();
        let g = TabularFunction::from_values(&class, g).unwrap();
        let ms: PairMultiset = zs.iter().copied().collect();
        let a = sq_set_distance(&class, &f, &g, &ms).unwrap();
        let b = sq_set_distance(&class, &g, &f, &ms).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        let agg = sq_set_distance(&class, &f, &g, &ms.aggregated()).unwrap();
        prop_assert!((a - agg).abs() < 1e-9);
        prop_assert!((set_norm(&class, &f, &g, &ms).unwrap() - a.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn tabular_width_is_bounded(
        center in prop::collection::vec(0.0f64..5.0, 4),
        zs in pairs(2, 2, 12),
        r in 0.0f64..50.0,
    ) {
        let class = TabularClass::new(2, 2, 4).unwrap();
        let center = TabularFunction::from_values(&class, center).unwrap();
        let region = ConfidenceRegion::new(center, zs.into_iter().collect(), r).unwrap();
        for z in class.all_pairs() {
            let w = class.width_at(&region, z).unwrap();
            prop_assert!((0.0..=5.0).contains(&w));
        }
    }

    #[test]
    fn linear_width_is_bounded_and_monotone_in_radius(
        theta in prop::collection::vec(-1.0f64..1.0, 2),
        zs in pairs(2, 2, 10),
        r in 0.0f64..10.0,
    ) {
        let class = LinearClass::new(2, 2, 2, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.8], vec![0.8, -0.6]], 2.0, 1.0).unwrap();
        let ms: PairMultiset = zs.into_iter().collect();
        let small = ConfidenceRegion::new(LinearFunction::new(theta.clone()), ms.clone(), r).unwrap();
        let big = ConfidenceRegion::new(LinearFunction::new(theta), ms, 2.0 * r + 0.1).unwrap();
        for z in class.all_pairs() {
            let ws = class.width_at(&small, z).unwrap();
            let wb = class.width_at(&big, z).unwrap();
            prop_assert!((0.0..=3.0).contains(&ws));
            prop_assert!(wb + 1e-12 >= ws);
        }
    }

    #[test]
    fn tabular_estimate_dominates_exact(zs in pairs(3, 2, 30), lambda_exp in -6i32..1) {
        let class = TabularClass::new(3, 2, 2).unwrap();
        let ms: PairMultiset = zs.into_iter().collect();
        let lambda = 10f64.powi(lambda_exp);
        let est = estimate_sensitivity(&class, &ms, lambda).unwrap();
        let exact = exact_sensitivities(&class, &ms, lambda).unwrap();
        prop_assert_eq!(est.scores.len(), exact.len());
        for (e, x) in est.scores.iter().zip(&exact) {
            prop_assert!(*e + 1e-12 >= *x, "estimate {} < exact {}", e, x);
        }
    }

    #[test]
    fn finite_estimate_dominates_exact(
        tables in prop::collection::vec(prop::collection::vec(0usize..4, 4), 1..8),
        zs in pairs(2, 2, 12),
    ) {
        let tables = tables.into_iter().map(|t| t.into_iter().map(|v| v as f64).collect()).collect();
        let class = FiniteClass::new(2, 2, 2, tables).unwrap();
        let ms: PairMultiset = zs.into_iter().collect();
        let est = estimate_sensitivity(&class, &ms, 0.05).unwrap();
        let exact = exact_sensitivities(&class, &ms, 0.05).unwrap();
        for (e, x) in est.scores.iter().zip(&exact) {
            prop_assert!(*e + 1e-12 >= *x);
        }
    }

    #[test]
    fn argmax_is_shift_invariant(row in prop::collection::vec(-5.0f64..5.0, 1..6), c in -3.0f64..3.0) {
        let a = first_argmax(&row);
        let shifted: Vec<f64> = row.iter().map(|v| v + c).collect();
        prop_assert_eq!(first_argmax(&shifted), a);
    }

    #[test]
    fn planned_q_is_bounded(
        episodes in prop::collection::vec(prop::collection::vec((0usize..3, 0usize..2, 0.0f64..=1.0, 0usize..3), 3), 0..6),
        beta in 0.01f64..5.0,
        seed in 0u64..1000,
    ) {
        let class = TabularClass::new(3, 2, 3).unwrap();
        let hp = HorizonParams::new(3, 8, 0.1).unwrap();
        let cfg = AgentConfig::new(hp, BonusConfig::new(BetaParams::practical(beta)), seed);
        let mut buf = ReplayBuffer::new(3);
        for ep in &episodes {
            let ts: Vec<Transition> = ep
                .iter()
                .map(|&(state, action, reward, next_state)| Transition { state, action, reward, next_state })
                .collect();
            buf.push_episode(&ts).unwrap();
        }
        prop_assert_eq!(buf.pairs().total() as usize, episodes.len() * 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stack = plan_episode(&class, &buf, &cfg, episodes.len() + 1, &mut rng).unwrap();
        for h in 0..3 {
            for z in class.all_pairs() {
                let q = stack.q(h, z);
                prop_assert!((0.0..=3.0).contains(&q));
                prop_assert!(stack.bonus(h, z) >= 0.0);
            }
            for s in 0..3 {
                let a = act(&stack, s, h);
                prop_assert_eq!(a, first_argmax(stack.q_row(h, s)));
            }
        }
    }
}

fn first_argmax(row: &[f64]) -> usize {
    let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    row.iter().position(|&v| v == best).unwrap()
}
