mod common;

use std::collections::BTreeSet;

use num_traits::Zero;
use proptest::prelude::*;

use common::{all_tfms, feasible_allocation, with_bids};
use tfmlab::game::Tx;
use tfmlab::matroid::FeasibilityMatroid;
use tfmlab::mechanisms::{confirm, evaluate, run_inclusion, PaymentRule, Tfm};
use tfmlab::Rational;

proptest! {
    #[test]
    fn every_composition_is_ir_and_budget_balanced(
        (gs, bids) in with_bids(5, 3, 2),
        seed in any::<u64>(),
    ) {
        let alloc = feasible_allocation(&gs, seed, 2);
        for tfm in all_tfms() {
            for a in [alloc.clone(), run_inclusion(&tfm, &gs, &bids)] {
                let out = evaluate(&tfm, &gs, &bids, &a).unwrap();
                for i in 0..gs.n_users() {
                    if out.confirmed.contains(&Tx::User(i)) {
                        prop_assert!(out.payments[i] <= bids[i], "{tfm}: user {i} overpays");
                        prop_assert!(out.payments[i] >= Rational::zero());
                    } else {
                        prop_assert!(out.payments[i].is_zero(), "{tfm}: unconfirmed user {i} pays");
                    }
                }
                prop_assert!(out.revenues.iter().all(|x| *x >= Rational::zero()));
                prop_assert!(out.total_revenue() <= out.total_payments(), "{tfm}");
            }
        }
    }

    #[test]
    fn fpa_eq_is_fully_budget_balanced((gs, bids) in with_bids(5, 3, 2), seed in any::<u64>()) {
        let tfm = Tfm::fpa_eq();
        let alloc = feasible_allocation(&gs, seed, 2);
        let out = evaluate(&tfm, &gs, &bids, &alloc).unwrap();
        prop_assert_eq!(out.total_revenue(), out.total_payments());
    }

    #[test]
    fn wm_first_price_confirms_the_greedy_basis((gs, bids) in with_bids(6, 3, 2)) {
        let tfm = Tfm::fpa_eq();
        let alloc = run_inclusion(&tfm, &gs, &bids);
        let confirmed: BTreeSet<usize> = confirm(&tfm, &alloc, &bids)
            .confirmed
            .iter()
            .filter_map(Tx::user)
            .collect();
        let basis = FeasibilityMatroid::from_structure(&gs).max_weight_basis(bids.as_slice());
        prop_assert_eq!(confirmed, basis.members.iter().copied().collect::<BTreeSet<_>>());
    }

    #[test]
    fn second_price_never_exceeds_a_confirmed_bid((gs, bids) in with_bids(5, 3, 2), seed in any::<u64>()) {
        let alloc = feasible_allocation(&gs, seed, 2);
        for tfm in all_tfms().into_iter().filter(|t| t.payment() == PaymentRule::SecondPrice) {
            let out = evaluate(&tfm, &gs, &bids, &alloc).unwrap();
            let floor = out.confirmed.iter().map(|t| t.bid(&bids)).min();
            for i in out.confirmed_users() {
                prop_assert!(out.payments[i] <= floor.unwrap());
            }
        }
    }
}

#[test]
fn composition_zoo_is_broad() {
    // 2 inclusion rules, 5 price pairs, 4 sharing rules.
    assert_eq!(all_tfms().len(), 40);
}
