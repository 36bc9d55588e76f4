mod common;

use proptest::prelude::*;

use common::{feasible_allocation, r, with_bids};
use tfmlab::game::{
    allocations_equivalent, included_set, included_users, is_feasible, welfare, Block, Tx,
};
use tfmlab::matroid::FeasibilityMatroid;
use tfmlab::mechanisms::Tfm;

proptest! {
    #[test]
    fn adding_a_transaction_never_shrinks_the_included_set(
        (gs, _bids) in with_bids(5, 3, 3),
        seed in any::<u64>(),
        bp_pick in any::<prop::sample::Index>(),
        user in 0usize..5,
    ) {
        let alloc = feasible_allocation(&gs, seed, 1);
        let bp = bp_pick.index(gs.n_bps());
        let before = alloc.distinct_txs();
        for tx in [Tx::User(user % gs.n_users()), Tx::shill(bp, 9, r(1, 2))] {
            let bigger = alloc.with_block(bp, alloc.block(bp).with(tx));
            prop_assert!(bigger.distinct_txs().is_superset(&before));
            if is_feasible(&gs, &bigger) {
                prop_assert!(included_set(&gs, &bigger).unwrap().is_superset(&before));
            }
        }
    }

    #[test]
    fn feasibility_is_downward_closed((gs, _b) in with_bids(5, 3, 3), seed in any::<u64>()) {
        let alloc = feasible_allocation(&gs, seed, 2);
        prop_assert!(is_feasible(&gs, &alloc));
        for j in 0..gs.n_bps() {
            for tx in alloc.block(j).txs() {
                let smaller = alloc.with_block(j, alloc.block(j).without(tx));
                prop_assert!(is_feasible(&gs, &smaller));
            }
        }
    }

    #[test]
    fn feasibility_matches_matroid_independence((gs, _b) in with_bids(5, 3, 3), mask in 0u32..32) {
        let m = FeasibilityMatroid::from_structure(&gs);
        let set: Vec<usize> = (0..gs.n_users()).filter(|i| mask >> i & 1 == 1).collect();
        match m.assign(&set) {
            Some(assignment) => {
                let mut blocks = vec![Vec::new(); gs.n_bps()];
                for (user, bp) in assignment {
                    blocks[bp].push(Tx::User(user));
                }
                let alloc = tfmlab::game::Allocation::new(blocks.into_iter().map(Block::new).collect());
                prop_assert!(is_feasible(&gs, &alloc));
                prop_assert_eq!(included_users(&gs, &alloc).unwrap().into_iter().collect::<Vec<_>>(), set);
            }
            None => prop_assert!(!m.is_independent(&set)),
        }
        let seed = mask as u64;
        let alloc = feasible_allocation(&gs, seed, 0);
        let users: Vec<usize> = included_users(&gs, &alloc).unwrap().into_iter().collect();
        prop_assert!(m.is_independent(&users));
    }

    #[test]
    fn welfare_is_additive_and_ignores_duplicates(
        (gs, values) in with_bids(5, 1, 1),
        mask in 0u32..32,
    ) {
        let n = gs.n_users();
        let a: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let b: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 0).collect();
        let all: Vec<usize> = (0..n).collect();
        prop_assert_eq!(welfare(a.clone(), &values) + welfare(b, &values), welfare(all, &values));
        let doubled: Vec<usize> = a.iter().chain(a.iter()).copied().collect();
        prop_assert_eq!(welfare(doubled, &values), welfare(a, &values));
    }

    #[test]
    fn equivalence_is_an_equivalence_relation(
        (gs, bids) in with_bids(4, 3, 2),
        seeds in prop::array::uniform3(any::<u64>()),
        tfm_pick in any::<prop::sample::Index>(),
    ) {
        let tfms = [Tfm::fpa_eq(), Tfm::spa_eq(), Tfm::fpa_shapley(), Tfm::spa_serial()];
        let tfm = tfms[tfm_pick.index(tfms.len())];
        let [x, y, z] = seeds.map(|s| feasible_allocation(&gs, s, 1));
        prop_assert!(allocations_equivalent(&x, &x, &tfm, &bids));
        prop_assert_eq!(
            allocations_equivalent(&x, &y, &tfm, &bids),
            allocations_equivalent(&y, &x, &tfm, &bids)
        );
        if allocations_equivalent(&x, &y, &tfm, &bids) && allocations_equivalent(&y, &z, &tfm, &bids) {
            prop_assert!(allocations_equivalent(&x, &z, &tfm, &bids));
        }
    }
}
