mod common;

use num_traits::Zero;
use proptest::prelude::*;

use common::{structure, with_bids};
use tfmlab::game::GameStructure;
use tfmlab::matroid::{mask_members, FeasibilityMatroid};
use tfmlab::user_game::{
    expected_welfare, matroid_auction, poa_bound, smooth_deviation_sample, solve_bne, BneParams,
    BneProblem, Marginal, ValuationModel, SMOOTHNESS_LAMBDA,
};
use tfmlab::Rational;

fn coarse() -> BneParams {
    BneParams {
        v_points: 11,
        b_points: 11,
        ..BneParams::default()
    }
}

fn marginal() -> impl Strategy<Value = Marginal> {
    prop_oneof![
        (1u32..=3).prop_map(|hi| Marginal::uniform(0.0, hi as f64)),
        (prop::collection::vec(0u32..=4, 2..=3), prop::collection::vec(1u32..=3, 3)).prop_map(|(pts, w)| {
            let mut points: Vec<f64> = pts.iter().map(|&p| p as f64 / 2.0).collect();
            points.sort_by(f64::total_cmp);
            points.dedup();
            let total: u32 = w[..points.len()].iter().sum();
            let probs = w[..points.len()].iter().map(|&x| x as f64 / total as f64).collect();
            Marginal::Discrete { points, probs }
        }),
    ]
}

fn game(max_n: usize) -> impl Strategy<Value = (GameStructure, ValuationModel)> {
    structure(max_n, 2, 2).prop_flat_map(|gs| {
        let n = gs.n_users();
        (Just(gs), prop::collection::vec(marginal(), n))
    })
    .prop_map(|(gs, ms)| {
        let model = if ms.iter().all(|m| !m.is_discrete()) || ms.iter().all(Marginal::is_discrete) {
            ValuationModel::Independent { marginals: ms }
        } else {
            ValuationModel::Independent {
                marginals: ms.iter().map(|_| Marginal::uniform(0.0, 1.0)).collect(),
            }
        };
        (gs, model)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn auction_winners_maximize_the_bid_sum((gs, bids) in with_bids(6, 3, 2)) {
        let m = FeasibilityMatroid::from_structure(&gs);
        let out = matroid_auction(&m, &bids);
        let sum = |s: &[usize]| s.iter().fold(Rational::zero(), |acc, &i| acc + bids[i]);
        let best = (0u32..1 << gs.n_users())
            .map(mask_members)
            .filter(|s| m.is_independent(s))
            .map(|s| sum(&s))
            .max()
            .unwrap();
        prop_assert!(m.is_independent(&out.winners));
        prop_assert_eq!(sum(&out.winners), best);
        for i in 0..gs.n_users() {
            let expected = if out.winners.contains(&i) { bids[i] } else { Rational::zero() };
            prop_assert_eq!(out.payments[i].0, expected);
        }
    }

    #[test]
    fn certificate_recomputes_exactly((gs, model) in game(3)) {
        let m = FeasibilityMatroid::from_structure(&gs);
        let params = coarse();
        let problem = BneProblem::new(&m, model, &params).unwrap();
        let report = solve_bne(&problem, &params).unwrap();
        let again = problem.certify(&report.strategies).unwrap();
        prop_assert_eq!(again, report.epsilon);
        prop_assert!(report.converged || report.warning.is_some());
    }

    #[test]
    fn equilibrium_welfare_meets_the_degraded_guarantee((gs, model) in game(3), seed in any::<u64>()) {
        let m = FeasibilityMatroid::from_structure(&gs);
        let params = coarse();
        let problem = BneProblem::new(&m, model.clone(), &params).unwrap();
        let report = solve_bne(&problem, &params).unwrap();
        prop_assume!(report.converged);
        let est = expected_welfare(&m, &model, &report.strategies, 4000, seed);
        prop_assume!(!est.degenerate);
        let n = gs.n_users();
        let step = problem.bid_grid()[1] - problem.bid_grid()[0];
        let slack = n as f64 * step / est.opt_mean;
        let ratio_se = est.welfare_stderr / est.opt_mean;
        let bound = poa_bound(report.epsilon, n, est.opt_mean);
        prop_assert!(
            est.ratio + 3.0 * ratio_se >= bound - slack,
            "ratio {} bound {} slack {}", est.ratio, bound, slack
        );
    }

    #[test]
    fn deviation_sample_stays_in_support(v in 0.0f64..100.0, u in 0.0f64..=1.0) {
        let x = smooth_deviation_sample(v, u);
        prop_assert!(x >= 0.0);
        prop_assert!(x <= SMOOTHNESS_LAMBDA * v + 1e-12);
    }
}
