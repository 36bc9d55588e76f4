//! Game structures, transactions, blocks and allocations.
//!
//! Users and BPs are 0-indexed throughout the library; the CLI translates
//! from the 1-based indices used in configuration files.

use std::collections::BTreeSet;
use std::fmt;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::mechanisms::{confirm, Tfm};
use crate::rational::{format_rational, serde_rational, Rational};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StructureError {
    #[error("a game needs at least one BP")]
    NoBps,
    #[error("block size must be at least 1")]
    ZeroBlockSize,
    #[error("BP {bp} lists user {user} but there are only {n_users} users")]
    UserOutOfRange { bp: usize, user: usize, n_users: usize },
}

/// Users, BPs, per-BP eligibility sets and the block size.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GameStructure {
    n_users: usize,
    block_size: usize,
    eligibility: Vec<Vec<usize>>,
}

impl GameStructure {
    pub fn new(
        n_users: usize,
        eligibility: Vec<Vec<usize>>,
        block_size: usize,
    ) -> Result<Self, StructureError> {
        if eligibility.is_empty() {
            return Err(StructureError::NoBps);
        }
        if block_size == 0 {
            return Err(StructureError::ZeroBlockSize);
        }
        let mut sets = Vec::with_capacity(eligibility.len());
        for (bp, set) in eligibility.into_iter().enumerate() {
            let mut set = set;
            set.sort_unstable();
            set.dedup();
            if let Some(&user) = set.iter().find(|&&u| u >= n_users) {
                return Err(StructureError::UserOutOfRange { bp, user, n_users });
            }
            sets.push(set);
        }
        Ok(Self {
            n_users,
            block_size,
            eligibility: sets,
        })
    }

    /// Every BP may include every user.
    pub fn symmetric(n_users: usize, n_bps: usize, block_size: usize) -> Self {
        let all: Vec<usize> = (0..n_users).collect();
        Self::new(n_users, vec![all; n_bps.max(1)], block_size.max(1))
            .expect("symmetric structure is always valid")
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_bps(&self) -> usize {
        self.eligibility.len()
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// S_j for BP `bp`, sorted ascending.
    pub fn eligible_users(&self, bp: usize) -> &[usize] {
        &self.eligibility[bp]
    }

    pub fn eligibility(&self) -> &[Vec<usize>] {
        &self.eligibility
    }

    pub fn is_eligible(&self, bp: usize, user: usize) -> bool {
        self.eligibility[bp].binary_search(&user).is_ok()
    }

    pub fn is_bp_symmetric(&self) -> bool {
        self.eligibility.iter().all(|s| s.len() == self.n_users)
    }

    /// Every structure with these sizes, one per multiset of eligibility
    /// sets (BP order does not matter for feasibility). Empty sets included.
    pub fn enumerate(n_users: usize, n_bps: usize, block_size: usize) -> Vec<Self> {
        assert!(n_users < 16, "enumeration is for small ground sets");
        let subsets = 1u32 << n_users;
        let mut out = Vec::new();
        let mut masks = vec![0u32; n_bps];
        loop {
            let eligibility = masks
                .iter()
                .map(|&m| (0..n_users).filter(|u| m & (1 << u) != 0).collect())
                .collect();
            out.push(Self::new(n_users, eligibility, block_size).expect("masks are in range"));
            let Some(pos) = (0..n_bps).rev().find(|&j| masks[j] + 1 < subsets) else {
                break;
            };
            let next = masks[pos] + 1;
            masks[pos..].iter_mut().for_each(|m| *m = next);
        }
        out
    }
}

/// A transaction: either a user's own, or a shill fabricated by a BP.
///
/// User bids live in the [`BidProfile`]; shill bids are chosen by the
/// creating BP and travel with the transaction. `serial` keeps equal-bid
/// shills of one BP distinct.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tx {
    User(usize),
    Shill {
        bp: usize,
        serial: u32,
        #[serde(with = "serde_rational")]
        bid: Rational,
    },
}

impl Tx {
    pub fn shill(bp: usize, serial: u32, bid: Rational) -> Self {
        Tx::Shill { bp, serial, bid }
    }

    pub fn bid(&self, bids: &BidProfile) -> Rational {
        match self {
            Tx::User(i) => bids[*i],
            Tx::Shill { bid, .. } => *bid,
        }
    }

    pub fn user(&self) -> Option<usize> {
        match self {
            Tx::User(i) => Some(*i),
            Tx::Shill { .. } => None,
        }
    }

    pub fn shill_owner(&self) -> Option<usize> {
        match self {
            Tx::User(_) => None,
            Tx::Shill { bp, .. } => Some(*bp),
        }
    }
}

impl fmt::Display for Tx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tx::User(i) => write!(f, "user{}", i + 1),
            Tx::Shill { bp, serial, bid } => {
                write!(f, "shill(bp{},#{},{})", bp + 1, serial, format_rational(bid))
            }
        }
    }
}

/// An unordered set of transactions proposed by one BP.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Block(Vec<Tx>);

impl Block {
    pub fn new<I: IntoIterator<Item = Tx>>(txs: I) -> Self {
        let mut txs: Vec<Tx> = txs.into_iter().collect();
        txs.sort();
        txs.dedup();
        Block(txs)
    }

    pub fn empty() -> Self {
        Block(Vec::new())
    }

    pub fn of_users<I: IntoIterator<Item = usize>>(users: I) -> Self {
        Self::new(users.into_iter().map(Tx::User))
    }

    pub fn txs(&self) -> &[Tx] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, tx: &Tx) -> bool {
        self.0.binary_search(tx).is_ok()
    }

    pub fn with(&self, tx: Tx) -> Self {
        Self::new(self.0.iter().cloned().chain(std::iter::once(tx)))
    }

    pub fn without(&self, tx: &Tx) -> Self {
        Block(self.0.iter().filter(|t| *t != tx).cloned().collect())
    }

    pub fn users(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().filter_map(Tx::user)
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, tx) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{tx}")?;
        }
        f.write_str("}")
    }
}

/// One block per BP.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Allocation {
    blocks: Vec<Block>,
}

impl Allocation {
    pub fn new(blocks: Vec<Block>) -> Self {
        Self { blocks }
    }

    pub fn empty(n_bps: usize) -> Self {
        Self {
            blocks: vec![Block::empty(); n_bps],
        }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, bp: usize) -> &Block {
        &self.blocks[bp]
    }

    pub fn n_bps(&self) -> usize {
        self.blocks.len()
    }

    /// Same allocation with BP `bp`'s block replaced.
    pub fn with_block(&self, bp: usize, block: Block) -> Self {
        let mut blocks = self.blocks.clone();
        blocks[bp] = block;
        Self { blocks }
    }

    /// T(B) over every distinct transaction, shills included.
    pub fn distinct_txs(&self) -> BTreeSet<Tx> {
        self.blocks
            .iter()
            .flat_map(|b| b.txs().iter().cloned())
            .collect()
    }

    /// Number of blocks containing `tx`.
    pub fn multiplicity(&self, tx: &Tx) -> usize {
        self.blocks.iter().filter(|b| b.contains(tx)).count()
    }

    /// First BP (by index) whose block contains `tx`.
    pub fn first_includer(&self, tx: &Tx) -> Option<usize> {
        self.blocks.iter().position(|b| b.contains(tx))
    }
}

impl fmt::Display for Allocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (j, b) in self.blocks.iter().enumerate() {
            if j > 0 {
                f.write_str(" ")?;
            }
            write!(f, "B{}={}", j + 1, b)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProfileError {
    #[error("entry {index} is negative")]
    Negative { index: usize },
}

/// A vector of nonnegative exact rationals, one per user.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Profile(#[serde(with = "crate::rational::serde_rational_vec")] Vec<Rational>);

pub type BidProfile = Profile;
pub type ValuationProfile = Profile;

impl Profile {
    pub fn new(values: Vec<Rational>) -> Result<Self, ProfileError> {
        if let Some(index) = values.iter().position(|v| v.is_negative()) {
            return Err(ProfileError::Negative { index });
        }
        Ok(Self(values))
    }

    pub fn from_integers(values: &[i64]) -> Self {
        Self::new(values.iter().map(|&v| Rational::from_integer(v)).collect())
            .expect("integer profile must be nonnegative")
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![Rational::zero(); n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Rational] {
        &self.0
    }

    /// Copy with entry `i` replaced.
    pub fn with(&self, i: usize, value: Rational) -> Self {
        let mut v = self.0.clone();
        v[i] = value;
        Self(v)
    }

    pub fn scaled(&self, factor: Rational) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }
}

impl std::ops::Index<usize> for Profile {
    type Output = Rational;

    fn index(&self, i: usize) -> &Rational {
        &self.0[i]
    }
}

/// A feasibility constraint broken by an allocation.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    #[error("allocation has {got} blocks but the game has {expected} BPs")]
    BlockCount { expected: usize, got: usize },
    #[error("block of BP {bp} holds {size} transactions, block size is {cap}")]
    Size { bp: usize, size: usize, cap: usize },
    #[error("BP {bp} cannot include user {user}")]
    Eligibility { bp: usize, user: usize },
    #[error("BP {bp} includes a shill created by BP {owner}")]
    ShillOwnership { bp: usize, owner: usize },
    #[error("shill with negative bid in the block of BP {bp}")]
    NegativeShillBid { bp: usize },
}

/// Checks size caps, eligibility and shill ownership, reporting the first broken constraint.
pub fn check_feasible(gs: &GameStructure, alloc: &Allocation) -> Result<(), Violation> {
    if alloc.n_bps() != gs.n_bps() {
        return Err(Violation::BlockCount {
            expected: gs.n_bps(),
            got: alloc.n_bps(),
        });
    }
    for (bp, block) in alloc.blocks().iter().enumerate() {
        if block.len() > gs.block_size() {
            return Err(Violation::Size {
                bp,
                size: block.len(),
                cap: gs.block_size(),
            });
        }
        for tx in block.txs() {
            match tx {
                Tx::User(user) => {
                    if *user >= gs.n_users() || !gs.is_eligible(bp, *user) {
                        return Err(Violation::Eligibility { bp, user: *user });
                    }
                }
                Tx::Shill { bp: owner, bid, .. } => {
                    if *owner != bp {
                        return Err(Violation::ShillOwnership { bp, owner: *owner });
                    }
                    if bid.is_negative() {
                        return Err(Violation::NegativeShillBid { bp });
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn is_feasible(gs: &GameStructure, alloc: &Allocation) -> bool {
    check_feasible(gs, alloc).is_ok()
}

/// T(B): every distinct transaction included at least once.
pub fn included_set(gs: &GameStructure, alloc: &Allocation) -> Result<BTreeSet<Tx>, Violation> {
    check_feasible(gs, alloc)?;
    Ok(alloc.distinct_txs())
}

/// The user-origin part of T(B).
pub fn included_users(gs: &GameStructure, alloc: &Allocation) -> Result<BTreeSet<usize>, Violation> {
    Ok(included_set(gs, alloc)?
        .iter()
        .filter_map(Tx::user)
        .collect())
}

/// Total value of the confirmed users. Shills carry no value; duplicates count once.
pub fn welfare<I: IntoIterator<Item = usize>>(confirmed: I, values: &ValuationProfile) -> Rational {
    let set: BTreeSet<usize> = confirmed.into_iter().collect();
    set.iter().fold(Rational::zero(), |acc, &i| acc + values[i])
}

/// Multiset of positive bids among confirmed user transactions, sorted.
pub fn confirmed_bid_multiset(
    tfm: &Tfm,
    alloc: &Allocation,
    bids: &BidProfile,
) -> Vec<Rational> {
    let mut out: Vec<Rational> = confirm(tfm, alloc, bids)
        .confirmed
        .iter()
        .filter(|tx| tx.user().is_some())
        .map(|tx| tx.bid(bids))
        .filter(|b| b.is_positive())
        .collect();
    out.sort();
    out
}

/// Two allocations are equivalent when their confirmed user transactions
/// carry the same multiset of positive bids under the mechanism's own
/// confirmation rule.
pub fn allocations_equivalent(
    a: &Allocation,
    b: &Allocation,
    tfm: &Tfm,
    bids: &BidProfile,
) -> bool {
    confirmed_bid_multiset(tfm, a, bids) == confirmed_bid_multiset(tfm, b, bids)
}
