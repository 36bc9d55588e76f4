#![allow(dead_code)]

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use tfmlab::game::{Allocation, Block, GameStructure, Profile, Tx};
use tfmlab::mechanisms::{
    ConfirmationRule, DistributionRule, InclusionRule, PaymentRule, PriceVersion, Sharing, Tfm,
};
use tfmlab::rng::chunk_rng;
use tfmlab::Rational;

pub fn r(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

pub fn structure(max_n: usize, max_m: usize, max_k: usize) -> impl Strategy<Value = GameStructure> {
    (1..=max_n, 1..=max_m, 1..=max_k).prop_flat_map(|(n, m, k)| {
        prop::collection::vec(prop::collection::vec(any::<bool>(), n), m).prop_map(move |rows| {
            let eligibility = rows
                .iter()
                .map(|row| (0..n).filter(|&i| row[i]).collect())
                .collect();
            GameStructure::new(n, eligibility, k).expect("indices are in range")
        })
    })
}

/// Bids in quarters on `[0, max]`.
pub fn quarters(n: usize, max: i64) -> impl Strategy<Value = Vec<Rational>> {
    prop::collection::vec(0..=4 * max, n).prop_map(|v| v.into_iter().map(|x| r(x, 4)).collect())
}

pub fn profile(n: usize, max: i64) -> impl Strategy<Value = Profile> {
    quarters(n, max).prop_map(|v| Profile::new(v).expect("nonnegative"))
}

pub fn with_bids(max_n: usize, max_m: usize, max_k: usize) -> impl Strategy<Value = (GameStructure, Profile)> {
    structure(max_n, max_m, max_k).prop_flat_map(|gs| {
        let n = gs.n_users();
        (Just(gs), profile(n, 3))
    })
}

/// A feasible allocation drawn from `seed`: each BP takes a random subset of
/// its eligible users, then fills up to `shills` remaining slots with shills.
pub fn feasible_allocation(gs: &GameStructure, seed: u64, shills: usize) -> Allocation {
    let mut rng = chunk_rng(seed, 0x77, 0);
    let k = gs.block_size();
    let blocks = (0..gs.n_bps())
        .map(|j| {
            let mut users = gs.eligible_users(j).to_vec();
            users.shuffle(&mut rng);
            let take = rng.random_range(0..=k.min(users.len()));
            let mut txs: Vec<Tx> = users[..take].iter().map(|&u| Tx::User(u)).collect();
            let room = (k - take).min(shills);
            for s in 0..rng.random_range(0..=room) {
                txs.push(Tx::shill(j, s as u32, r(rng.random_range(0..=12), 4)));
            }
            Block::new(txs)
        })
        .collect();
    Allocation::new(blocks)
}

/// Every composition the constructor accepts, over both inclusion rules and a
/// reserve of 1.
pub fn all_tfms() -> Vec<Tfm> {
    let reserve = r(1, 1);
    let prices = [
        (ConfirmationRule::FirstPrice, PaymentRule::FirstPrice),
        (ConfirmationRule::SecondPrice, PaymentRule::SecondPrice),
        (ConfirmationRule::Reserve(reserve), PaymentRule::Reserve(reserve)),
        (ConfirmationRule::FirstPrice, PaymentRule::SecondPrice),
        (ConfirmationRule::SecondPrice, PaymentRule::FirstPrice),
    ];
    let mut out = Vec::new();
    for inclusion in [InclusionRule::WelfareMaximizing, InclusionRule::SerialDictatorship] {
        for (confirmation, payment) in prices {
            for sharing in [Sharing::Equal, Sharing::Null, Sharing::Shapley, Sharing::Serial] {
                for version in [PriceVersion::FirstPrice, PriceVersion::SecondPrice, PriceVersion::Reserve] {
                    let d = DistributionRule { sharing, version };
                    if let Ok(t) = Tfm::new(inclusion, confirmation, payment, d) {
                        out.push(t);
                    }
                }
            }
        }
    }
    out
}
