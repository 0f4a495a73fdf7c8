use cccb::linalg::RidgeState;
use cccb::reward::{argmax_super_arm, brute_force_argmax, RewardFunction};
use cccb::FeatureVector;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn ingest_sequence() -> impl Strategy<Value = (usize, Vec<(Vec<f64>, f64)>)> {
    (1usize..6).prop_flat_map(|d| {
        (
            Just(d),
            prop::collection::vec((prop::collection::vec(-1.0f64..1.0, d), -3.0f64..3.0), 1..60),
        )
    })
}

proptest! {
    #[test]
    fn ridge_state_matches_direct_accumulation((d, steps) in ingest_sequence(), lambda in 0.1f64..10.0) {
        let mut state = RidgeState::new(d, lambda, 1.0, 0.1).unwrap().with_refresh_interval(7);
        let mut v = DMatrix::<f64>::identity(d, d) * lambda;
        let mut y = DVector::<f64>::zeros(d);
        for (x, w) in &steps {
            state.ingest(&FeatureVector::new(x.clone()), *w).unwrap();
            let xv = DVector::from_column_slice(x);
            v += &xv * xv.transpose();
            y += &xv * *w;
        }
        let theta = v.clone().lu().solve(&y).unwrap();
        prop_assert!((state.theta_hat() - &theta).amax() < 1e-8);
        prop_assert!((state.log_det_v() - v.determinant().ln()).abs() < 1e-8);
        let inv = v.try_inverse().unwrap();
        prop_assert!((state.v_inv() - inv).amax() < 1e-8);
    }

    #[test]
    fn bounds_bracket_the_estimate((d, steps) in ingest_sequence(), probe in prop::collection::vec(-1.0f64..1.0, 5)) {
        let mut state = RidgeState::new(d, 1.0, 1.0, 0.1).unwrap();
        for (x, w) in &steps {
            state.ingest(&FeatureVector::new(x.clone()), *w).unwrap();
        }
        let x = FeatureVector::new(probe[..d].to_vec());
        let b = state.weight_bounds(&x).unwrap();
        let est = state.estimate(&x).unwrap();
        prop_assert!(b.lower >= 0.0);
        prop_assert!(b.lower <= b.upper.max(0.0));
        prop_assert!(est <= b.upper + 1e-12);
        prop_assert!((b.upper - est - state.radius() * state.mahalanobis_norm(&x).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn greedy_oracle_is_exact(values in prop::collection::vec(-2.0f64..2.0, 1..12), k in 1usize..4, scale in 0.2f64..5.0) {
        for f in [RewardFunction::LinearSum, RewardFunction::saturating(scale).unwrap()] {
            let g = argmax_super_arm(&f, &values, k).unwrap();
            let b = brute_force_argmax(&f, &values, k).unwrap();
            let gv = f.evaluate_arms(g.arms(), &values).unwrap();
            let bv = f.evaluate_arms(b.arms(), &values).unwrap();
            prop_assert!((gv - bv).abs() <= 1e-12 * (1.0 + bv.abs()));
            prop_assert!(g.arms().len() <= k.min(values.len()));
        }
    }
}
