use mpdp::buffer::TransitionBuffer;
use mpdp::ensemble::ovr_categorical;
use mpdp::mdp::{random_mdp, TabularTransition};
use mpdp::soft_pi::{soft_policy_evaluation, TabularPolicy};
use proptest::prelude::*;

fn record(i: usize) -> TabularTransition {
    TabularTransition {
        state: i,
        action: 0,
        reward: i as f64,
        next_state: i + 1,
        terminal: false,
        truncated: false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_rows_are_distributions(ns in 1usize..9, na in 1usize..5, gamma in 0.3f64..0.97, seed: u64) {
        let mdp = random_mdp(ns, na, gamma, seed).unwrap();
        for s in 0..ns {
            for a in 0..na {
                let total: f64 = mdp.row(s, a).iter().sum();
                prop_assert!((total - 1.0).abs() <= 1e-12);
                prop_assert!(mdp.row(s, a).iter().all(|p| *p >= 0.0));
                prop_assert!((0.0..=1.0).contains(&mdp.reward(s, a)));
            }
        }
        prop_assert_eq!(mdp, random_mdp(ns, na, gamma, seed).unwrap());
    }

    #[test]
    fn buffer_keeps_the_newest_records(capacity in 1usize..40, pushes in 0usize..120) {
        let buf = TransitionBuffer::from_records(capacity, (0..pushes).map(record)).unwrap();
        prop_assert_eq!(buf.len(), pushes.min(capacity));
        prop_assert_eq!(buf.inserted(), pushes as u64);
        let kept: Vec<usize> = buf.iter().map(|t| t.state).collect();
        let expected: Vec<usize> = (pushes.saturating_sub(capacity)..pushes).collect();
        prop_assert_eq!(kept, expected);
    }

    #[test]
    fn softmax_rows_are_distributions(logits in prop::collection::vec(-30.0f64..30.0, 12), temp in 0.05f64..5.0) {
        let pi = TabularPolicy::softmax(4, 3, &logits, temp).unwrap();
        for s in 0..4 {
            prop_assert!((pi.row(s).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn evaluation_is_a_bellman_fixed_point(ns in 1usize..7, na in 1usize..4, seed: u64) {
        let mdp = random_mdp(ns, na, 0.9, seed).unwrap();
        let pi = TabularPolicy::uniform(ns, na);
        let vals = soft_policy_evaluation(&mdp, &pi, 0.2).unwrap();
        prop_assert!(mpdp::soft_pi::bellman_residual(&mdp, &pi, &vals) <= 1e-9);
    }

    #[test]
    fn ovr_of_categorical_members_is_nonnegative(raw in prop::collection::vec(0.01f64..1.0, 12)) {
        let rows: Vec<Vec<f64>> = raw
            .chunks(4)
            .map(|c| {
                let z: f64 = c.iter().sum();
                c.iter().map(|x| x / z).collect()
            })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let u = ovr_categorical(&refs).unwrap();
        prop_assert!(u.value >= 0.0);
        prop_assert_eq!(u.per_model_kl.len(), 3);
    }
}
