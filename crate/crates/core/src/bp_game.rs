//! The block-producer stage at fixed user bids: strategy spaces with shill
//! transactions, Nash verification, Pareto dominance and strong BPIC.
//!
//! Verdicts are exhaustive relative to the declared shill budget and bid grid,
//! and every verdict records both.

use num_integer::Integer;
use num_traits::{Signed, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::game::{
    allocations_equivalent, check_feasible, Allocation, BidProfile, Block, GameStructure, Tx,
    Violation,
};
use crate::mechanisms::{
    evaluate, run_inclusion, ConfirmationRule, PaymentRule, PriceVersion, Sharing, Tfm,
};
use crate::rational::{Exact, Rational};

pub const DEFAULT_SHILL_BUDGET: usize = 2;
pub const STRATEGY_GUARD: usize = 1_000_000;
pub const DEFAULT_PROFILE_GUARD: u128 = 30_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum BpGameError {
    #[error("{what} has {size} elements, above the guard of {limit}")]
    Guard {
        what: &'static str,
        size: u128,
        limit: u128,
    },
    #[error("allocation is infeasible: {0}")]
    Infeasible(Violation),
    #[error("bid profile has {got} entries for {expected} users")]
    BidLength { expected: usize, got: usize },
    #[error("bids and grid cannot be scaled to a common integer denominator")]
    Overflow,
}

impl From<Violation> for BpGameError {
    fn from(v: Violation) -> Self {
        BpGameError::Infeasible(v)
    }
}

/// Bids available to shill transactions.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ShillGrid {
    /// `{0}`, every user bid, and every user bid plus or minus 1/1000.
    #[default]
    Default,
    Explicit(Vec<Rational>),
}

impl ShillGrid {
    pub fn resolve(&self, bids: &BidProfile) -> Vec<Rational> {
        let mut grid = match self {
            ShillGrid::Default => {
                let eps = Rational::new(1, 1000);
                let mut g = vec![Rational::zero()];
                for &b in bids.as_slice() {
                    g.extend([b - eps, b, b + eps]);
                }
                g
            }
            ShillGrid::Explicit(g) => g.clone(),
        };
        grid.retain(|b| !b.is_negative());
        grid.sort();
        grid.dedup();
        grid
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchParams {
    pub shill_budget: usize,
    pub grid: ShillGrid,
    pub profile_guard: u128,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            shill_budget: DEFAULT_SHILL_BUDGET,
            grid: ShillGrid::Default,
            profile_guard: DEFAULT_PROFILE_GUARD,
        }
    }
}

impl SearchParams {
    pub fn with_budget(shill_budget: usize) -> Self {
        Self {
            shill_budget,
            ..Self::default()
        }
    }

    pub fn with_grid(mut self, grid: Vec<Rational>) -> Self {
        self.grid = ShillGrid::Explicit(grid);
        self
    }
}

/// Every block BP `bp` may propose: at most `k` transactions drawn from its
/// eligible users and up to `shill_budget` shills with bids from `grid`.
/// A BP's shills get serials `0..c` in ascending bid order, so each multiset
/// of shill bids appears once.
pub fn enumerate_strategies(
    gs: &GameStructure,
    bp: usize,
    shill_budget: usize,
    grid: &[Rational],
) -> Result<Vec<Block>, BpGameError> {
    let k = gs.block_size();
    let eligible = gs.eligible_users(bp);
    let count = strategy_count(eligible.len(), k, shill_budget, grid.len());
    if count > STRATEGY_GUARD as u128 {
        return Err(BpGameError::Guard {
            what: "per-BP strategy space",
            size: count,
            limit: STRATEGY_GUARD as u128,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    for c in 0..=shill_budget.min(k) {
        let shill_sets = multisets(grid.len(), c);
        for size in 0..=(k - c).min(eligible.len()) {
            for users in combinations(eligible.len(), size) {
                for shills in &shill_sets {
                    let txs = users.iter().map(|&u| Tx::User(eligible[u])).chain(
                        shills
                            .iter()
                            .enumerate()
                            .map(|(s, &g)| Tx::shill(bp, s as u32, grid[g])),
                    );
                    out.push(Block::new(txs));
                }
            }
        }
    }
    debug_assert_eq!(out.len() as u128, count);
    Ok(out)
}

fn binomial(n: usize, r: usize) -> u128 {
    if r > n {
        return 0;
    }
    (0..r).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn strategy_count(eligible: usize, k: usize, budget: usize, grid: usize) -> u128 {
    let mut total = 0u128;
    for c in 0..=budget.min(k) {
        let shills = match (c, grid) {
            (0, _) => 1,
            (_, 0) => 0,
            _ => binomial(grid + c - 1, c),
        };
        let users: u128 = (0..=(k - c).min(eligible)).map(|s| binomial(eligible, s)).sum();
        total += shills * users;
    }
    total
}

fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(r);
    fn go(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, r, cur, out);
            cur.pop();
        }
    }
    go(0, n, r, &mut cur, &mut out);
    out
}

/// Nondecreasing index sequences of length `r` over `0..n`.
fn multisets(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(r);
    fn go(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i, n, r, cur, out);
            cur.pop();
        }
    }
    go(0, n, r, &mut cur, &mut out);
    out
}

/// Weak dominance in every coordinate, strict in at least one.
pub fn dominates(a: &[Rational], b: &[Rational]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
}

/// Whether `a` Pareto dominates `b` in BP payoffs.
pub fn pareto_dominates(
    tfm: &Tfm,
    gs: &GameStructure,
    bids: &BidProfile,
    a: &Allocation,
    b: &Allocation,
) -> Result<bool, BpGameError> {
    let pa = evaluate(tfm, gs, bids, a)?.bp_payoffs;
    let pb = evaluate(tfm, gs, bids, b)?.bp_payoffs;
    Ok(dominates(&pa, &pb))
}

/// A profitable unilateral deviation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Deviation {
    pub bp: usize,
    pub block: Block,
    pub payoff_before: Exact,
    pub payoff_after: Exact,
    pub gain: Exact,
}

impl Deviation {
    /// Re-evaluates the deviation from scratch and checks the reported numbers.
    pub fn replays(&self, tfm: &Tfm, gs: &GameStructure, bids: &BidProfile, alloc: &Allocation) -> bool {
        let before = match evaluate(tfm, gs, bids, alloc) {
            Ok(o) => o.bp_payoffs[self.bp],
            Err(_) => return false,
        };
        let after = match evaluate(tfm, gs, bids, &alloc.with_block(self.bp, self.block.clone())) {
            Ok(o) => o.bp_payoffs[self.bp],
            Err(_) => return false,
        };
        before == self.payoff_before.0
            && after == self.payoff_after.0
            && after - before == self.gain.0
            && self.gain.0.is_positive()
    }
}

/// First profitable deviation from `alloc`, scanning BPs in index order and
/// each BP's strategies in enumeration order.
pub fn find_deviation(
    tfm: &Tfm,
    gs: &GameStructure,
    bids: &BidProfile,
    alloc: &Allocation,
    shill_budget: usize,
    grid: &[Rational],
) -> Result<Option<Deviation>, BpGameError> {
    check_bids(gs, bids)?;
    let base = evaluate(tfm, gs, bids, alloc)?.bp_payoffs;
    for bp in 0..gs.n_bps() {
        for block in enumerate_strategies(gs, bp, shill_budget, grid)? {
            let alt = alloc.with_block(bp, block.clone());
            let after = evaluate(tfm, gs, bids, &alt)?.bp_payoffs[bp];
            if after > base[bp] {
                return Ok(Some(Deviation {
                    bp,
                    block,
                    payoff_before: Exact(base[bp]),
                    payoff_after: Exact(after),
                    gain: Exact(after - base[bp]),
                }));
            }
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NashVerdict {
    pub is_nash: bool,
    pub deviation: Option<Deviation>,
}

pub fn is_nash(
    tfm: &Tfm,
    gs: &GameStructure,
    bids: &BidProfile,
    alloc: &Allocation,
    params: &SearchParams,
) -> Result<NashVerdict, BpGameError> {
    let grid = params.grid.resolve(bids);
    let deviation = find_deviation(tfm, gs, bids, alloc, params.shill_budget, &grid)?;
    Ok(NashVerdict {
        is_nash: deviation.is_none(),
        deviation,
    })
}

/// A BP Nash equilibrium that is neither equivalent to nor Pareto dominated
/// by the intended allocation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CounterEquilibrium {
    pub allocation: Allocation,
    pub payoffs: Vec<Exact>,
    pub intended_payoffs: Vec<Exact>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BpGameVerdict {
    pub tfm: String,
    pub shill_budget: usize,
    pub shill_grid: Vec<Exact>,
    pub intended: Allocation,
    pub is_nash: bool,
    pub deviation: Option<Deviation>,
    pub strong_bpic: bool,
    pub counter_equilibrium: Option<CounterEquilibrium>,
    pub strategies_per_bp: Vec<usize>,
    pub profiles_examined: u64,
    pub nash_profiles: u64,
    pub equivalent_nash_profiles: u64,
}

fn check_bids(gs: &GameStructure, bids: &BidProfile) -> Result<(), BpGameError> {
    if bids.len() != gs.n_users() {
        return Err(BpGameError::BidLength {
            expected: gs.n_users(),
            got: bids.len(),
        });
    }
    Ok(())
}

/// Exhaustive strong-BPIC verification at one bid profile.
///
/// Condition 1 is decided by the exact deviation search. Condition 2 scans all
/// joint profiles twice with an integer-scaled evaluator: first to tabulate
/// each BP's best-response payoff against every profile of the others, then
/// to classify each Nash profile against the intended allocation. Any
/// counter-equilibrium found is re-verified exactly before it is reported.
pub fn strong_bpic_check(
    tfm: &Tfm,
    gs: &GameStructure,
    bids: &BidProfile,
    params: &SearchParams,
) -> Result<BpGameVerdict, BpGameError> {
    check_bids(gs, bids)?;
    let grid = params.grid.resolve(bids);
    let spaces: Vec<Vec<Block>> = (0..gs.n_bps())
        .map(|j| enumerate_strategies(gs, j, params.shill_budget, &grid))
        .collect::<Result<_, _>>()?;
    let sizes: Vec<usize> = spaces.iter().map(Vec::len).collect();
    let total = sizes.iter().fold(1u128, |acc, &s| acc.saturating_mul(s as u128));
    if total > params.profile_guard {
        return Err(BpGameError::Guard {
            what: "joint profile space",
            size: total,
            limit: params.profile_guard,
        });
    }

    let intended = run_inclusion(tfm, gs, bids);
    let deviation = find_deviation(tfm, gs, bids, &intended, params.shill_budget, &grid)?;
    let intended_payoffs = evaluate(tfm, gs, bids, &intended)?.bp_payoffs;

    let compiled = Compiled::new(tfm, gs, bids, &grid, &spaces)?;
    let intended_choice: Vec<usize> = (0..gs.n_bps())
        .map(|j| {
            spaces[j]
                .iter()
                .position(|b| b == intended.block(j))
                .expect("intended block is enumerated")
        })
        .collect();
    let scan = compiled.scan(&intended_choice);
    debug_assert_eq!(scan.intended_is_nash, deviation.is_none());

    let counter_equilibrium = scan.first_counter.map(|p| {
        let alloc = compiled.allocation(p, &spaces);
        let payoffs = evaluate(tfm, gs, bids, &alloc)
            .expect("enumerated profile is feasible")
            .bp_payoffs;
        assert!(
            find_deviation(tfm, gs, bids, &alloc, params.shill_budget, &grid)
                .expect("guard already passed")
                .is_none()
                && !allocations_equivalent(&alloc, &intended, tfm, bids)
                && !dominates(&intended_payoffs, &payoffs),
            "scaled evaluator disagrees with exact evaluation on {alloc}"
        );
        CounterEquilibrium {
            allocation: alloc,
            payoffs: payoffs.into_iter().map(Exact).collect(),
            intended_payoffs: intended_payoffs.iter().copied().map(Exact).collect(),
        }
    });

    let is_nash = deviation.is_none();
    Ok(BpGameVerdict {
        tfm: tfm.to_string(),
        shill_budget: params.shill_budget,
        shill_grid: grid.into_iter().map(Exact).collect(),
        intended,
        is_nash,
        deviation,
        strong_bpic: is_nash && counter_equilibrium.is_none(),
        counter_equilibrium,
        strategies_per_bp: sizes,
        profiles_examined: total as u64,
        nash_profiles: scan.nash,
        equivalent_nash_profiles: scan.equivalent,
    })
}

/// All pure BP Nash equilibria at `bids`, in enumeration order.
pub fn nash_equilibria(
    tfm: &Tfm,
    gs: &GameStructure,
    bids: &BidProfile,
    params: &SearchParams,
) -> Result<Vec<Allocation>, BpGameError> {
    check_bids(gs, bids)?;
    let grid = params.grid.resolve(bids);
    let spaces: Vec<Vec<Block>> = (0..gs.n_bps())
        .map(|j| enumerate_strategies(gs, j, params.shill_budget, &grid))
        .collect::<Result<_, _>>()?;
    let total = spaces.iter().fold(1u128, |acc, s| acc.saturating_mul(s.len() as u128));
    if total > params.profile_guard {
        return Err(BpGameError::Guard {
            what: "joint profile space",
            size: total,
            limit: params.profile_guard,
        });
    }
    let compiled = Compiled::new(tfm, gs, bids, &grid, &spaces)?;
    let best = compiled.best_responses();
    let mut out = Vec::new();
    let mut choice = vec![0; compiled.m];
    let mut pay = vec![0i128; compiled.m];
    for p in 0..compiled.total {
        compiled.decode(p, &mut choice);
        compiled.payoffs(&choice, &mut pay);
        if compiled.is_nash_at(p, &pay, &best) {
            out.push(compiled.allocation(p, &spaces));
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Priced {
    First,
    Second,
    Reserve(i64),
}

struct CompiledBlock {
    users: u32,
    shills: Vec<i64>,
}

/// Payoff evaluator on integers. Bids are multiplied by the common
/// denominator of every bid, grid point and reserve; payoffs are further
/// multiplied by lcm(1..=m) so equal and Shapley splits stay integral.
struct Compiled {
    m: usize,
    user_bid: Vec<i64>,
    blocks: Vec<Vec<CompiledBlock>>,
    strides: Vec<usize>,
    total: usize,
    split: i128,
    confirmation: Priced,
    payment: Priced,
    version: PriceVersion,
    sharing: Sharing,
    needs_lowest: bool,
}

/// Ordering key for "lowest bid": bid, then shills before users, then the
/// higher identity first.
type LowKey = (i64, u8, i64);

fn scale(r: &Rational, d: i64) -> Result<i64, BpGameError> {
    r.numer()
        .checked_mul(d / r.denom())
        .ok_or(BpGameError::Overflow)
}

impl Compiled {
    fn new(
        tfm: &Tfm,
        gs: &GameStructure,
        bids: &BidProfile,
        grid: &[Rational],
        spaces: &[Vec<Block>],
    ) -> Result<Self, BpGameError> {
        assert!(gs.n_users() <= 32, "user masks are 32 bits");
        let mut rationals: Vec<Rational> = bids.as_slice().to_vec();
        rationals.extend_from_slice(grid);
        let reserve = |c: ConfirmationRule| match c {
            ConfirmationRule::Reserve(r) => Some(r),
            _ => None,
        };
        rationals.extend(reserve(tfm.confirmation()));
        if let PaymentRule::Reserve(r) = tfm.payment() {
            rationals.push(r);
        }
        let mut d: i64 = 1;
        for r in &rationals {
            d = d
                .checked_mul(*r.denom() / d.gcd(r.denom()))
                .ok_or(BpGameError::Overflow)?;
        }
        let user_bid = bids
            .as_slice()
            .iter()
            .map(|b| scale(b, d))
            .collect::<Result<Vec<_>, _>>()?;
        let mut blocks = Vec::with_capacity(spaces.len());
        for space in spaces {
            let mut compiled = Vec::with_capacity(space.len());
            for block in space {
                let mut users = 0u32;
                let mut shills = Vec::new();
                for tx in block.txs() {
                    match tx {
                        Tx::User(i) => users |= 1 << i,
                        Tx::Shill { serial, bid, .. } => {
                            debug_assert_eq!(*serial as usize, shills.len());
                            shills.push(scale(bid, d)?);
                        }
                    }
                }
                compiled.push(CompiledBlock { users, shills });
            }
            blocks.push(compiled);
        }
        let m = spaces.len();
        let mut strides = Vec::with_capacity(m);
        let mut total = 1usize;
        for space in spaces {
            strides.push(total);
            total *= space.len();
        }
        let split = (1..=m as i128).fold(1i128, |acc, x| acc.lcm(&x));
        let priced_c = match tfm.confirmation() {
            ConfirmationRule::FirstPrice => Priced::First,
            ConfirmationRule::SecondPrice => Priced::Second,
            ConfirmationRule::Reserve(r) => Priced::Reserve(scale(&r, d)?),
        };
        let priced_p = match tfm.payment() {
            PaymentRule::FirstPrice => Priced::First,
            PaymentRule::SecondPrice => Priced::Second,
            PaymentRule::Reserve(r) => Priced::Reserve(scale(&r, d)?),
        };
        Ok(Self {
            m,
            user_bid,
            blocks,
            strides,
            total,
            split,
            confirmation: priced_c,
            payment: priced_p,
            version: tfm.distribution().version,
            sharing: tfm.distribution().sharing,
            needs_lowest: priced_c == Priced::Second || priced_p == Priced::Second,
        })
    }

    fn decode(&self, p: usize, choice: &mut [usize]) {
        let mut rest = p;
        for (j, c) in choice.iter_mut().enumerate() {
            let s = self.blocks[j].len();
            *c = rest % s;
            rest /= s;
        }
    }

    /// Index of the others' profile when BP `j` is removed.
    fn others(&self, p: usize, j: usize) -> usize {
        let stride = self.strides[j];
        let s = self.blocks[j].len();
        (p / (stride * s)) * stride + p % stride
    }

    fn allocation(&self, p: usize, spaces: &[Vec<Block>]) -> Allocation {
        let mut choice = vec![0; self.m];
        self.decode(p, &mut choice);
        Allocation::new(
            choice
                .iter()
                .enumerate()
                .map(|(j, &c)| spaces[j][c].clone())
                .collect(),
        )
    }

    fn lowest(&self, choice: &[usize], mask: u32) -> Option<LowKey> {
        let mut low: Option<LowKey> = None;
        let mut consider = |key: LowKey| {
            if low.is_none_or(|l| key < l) {
                low = Some(key);
            }
        };
        let mut bits = mask;
        while bits != 0 {
            let i = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            consider((self.user_bid[i], 1, -(i as i64)));
        }
        for (j, &c) in choice.iter().enumerate() {
            for (s, &b) in self.blocks[j][c].shills.iter().enumerate() {
                consider((b, 0, -(((j as i64) << 16) | s as i64)));
            }
        }
        low
    }

    fn confirmed(&self, bid: i64, key: LowKey, low: Option<LowKey>) -> bool {
        match self.confirmation {
            Priced::First => true,
            Priced::Second => low != Some(key),
            Priced::Reserve(r) => bid >= r,
        }
    }

    fn price(&self, bid: i64, key: LowKey, low: Option<LowKey>) -> i64 {
        if !self.confirmed(bid, key, low) {
            return 0;
        }
        match self.payment {
            Priced::First => bid,
            Priced::Second => match low {
                Some(l) if l != key => l.0,
                _ => 0,
            },
            Priced::Reserve(r) => r,
        }
    }

    fn amount(&self, bid: i64, key: LowKey, low: Option<LowKey>) -> i64 {
        match self.version {
            PriceVersion::FirstPrice => {
                if self.confirmed(bid, key, low) {
                    bid
                } else {
                    0
                }
            }
            PriceVersion::SecondPrice => match low {
                Some(l) if l != key => l.0,
                _ => 0,
            },
            PriceVersion::Reserve => match self.payment {
                Priced::Reserve(r) if self.confirmed(bid, key, low) => r,
                _ => 0,
            },
        }
    }

    fn payoffs(&self, choice: &[usize], out: &mut [i128]) {
        let m = self.m;
        let mut mask = 0u32;
        for (j, &c) in choice.iter().enumerate() {
            mask |= self.blocks[j][c].users;
        }
        let low = if self.needs_lowest {
            self.lowest(choice, mask)
        } else {
            None
        };
        out.iter_mut().for_each(|x| *x = 0);
        let mut total: i128 = 0;
        let mut bits = mask;
        while bits != 0 {
            let i = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let bid = self.user_bid[i];
            let amount = self.amount(bid, (bid, 1, -(i as i64)), low) as i128;
            match self.sharing {
                Sharing::Equal => total += amount,
                Sharing::Null => {}
                Sharing::Shapley => {
                    let includers = choice
                        .iter()
                        .enumerate()
                        .filter(|&(j, &c)| self.blocks[j][c].users >> i & 1 == 1);
                    let count = includers.clone().count() as i128;
                    for (j, _) in includers {
                        out[j] += amount * self.split / count;
                    }
                }
                Sharing::Serial => {
                    let first = (0..m)
                        .find(|&j| self.blocks[j][choice[j]].users >> i & 1 == 1)
                        .expect("user is included");
                    out[first] += amount * self.split;
                }
            }
        }
        for (j, &c) in choice.iter().enumerate() {
            for (s, &bid) in self.blocks[j][c].shills.iter().enumerate() {
                let key = (bid, 0, -(((j as i64) << 16) | s as i64));
                let amount = self.amount(bid, key, low) as i128;
                match self.sharing {
                    Sharing::Equal => total += amount,
                    Sharing::Null => {}
                    Sharing::Shapley | Sharing::Serial => out[j] += amount * self.split,
                }
                out[j] -= self.price(bid, key, low) as i128 * self.split;
            }
        }
        if self.sharing == Sharing::Equal {
            let share = total * self.split / m as i128;
            out.iter_mut().for_each(|x| *x += share);
        }
    }

    /// Sorted positive bids of confirmed user transactions.
    fn user_multiset(&self, choice: &[usize], buf: &mut Vec<i64>) {
        buf.clear();
        let mut mask = 0u32;
        for (j, &c) in choice.iter().enumerate() {
            mask |= self.blocks[j][c].users;
        }
        let low = if self.needs_lowest {
            self.lowest(choice, mask)
        } else {
            None
        };
        let mut bits = mask;
        while bits != 0 {
            let i = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let bid = self.user_bid[i];
            if bid > 0 && self.confirmed(bid, (bid, 1, -(i as i64)), low) {
                buf.push(bid);
            }
        }
        buf.sort_unstable();
    }

    /// Best payoff of each BP against every profile of the others.
    fn best_responses(&self) -> Vec<Vec<i128>> {
        let m = self.m;
        const CHUNK: usize = 1 << 14;
        let fresh = || -> Vec<Vec<i128>> {
            (0..m)
                .map(|j| vec![i128::MIN; self.total / self.blocks[j].len()])
                .collect()
        };
        let merge = |mut a: Vec<Vec<i128>>, b: Vec<Vec<i128>>| {
            for (x, y) in a.iter_mut().zip(b) {
                for (u, v) in x.iter_mut().zip(y) {
                    *u = (*u).max(v);
                }
            }
            a
        };
        (0..self.total.div_ceil(CHUNK))
            .into_par_iter()
            .fold(fresh, |mut best, chunk| {
                let mut choice = vec![0; m];
                let mut pay = vec![0i128; m];
                for p in chunk * CHUNK..((chunk + 1) * CHUNK).min(self.total) {
                    self.decode(p, &mut choice);
                    self.payoffs(&choice, &mut pay);
                    for j in 0..m {
                        let slot = &mut best[j][self.others(p, j)];
                        *slot = (*slot).max(pay[j]);
                    }
                }
                best
            })
            .reduce(fresh, merge)
    }

    fn is_nash_at(&self, p: usize, pay: &[i128], best: &[Vec<i128>]) -> bool {
        (0..self.m).all(|j| pay[j] >= best[j][self.others(p, j)])
    }

    fn scan(&self, intended: &[usize]) -> Scan {
        let m = self.m;
        let best = self.best_responses();
        let mut target_pay = vec![0i128; m];
        self.payoffs(intended, &mut target_pay);
        let mut target_set = Vec::new();
        self.user_multiset(intended, &mut target_set);
        let intended_index: usize = intended
            .iter()
            .enumerate()
            .map(|(j, &c)| c * self.strides[j])
            .sum();
        let intended_is_nash = self.is_nash_at(intended_index, &target_pay, &best);

        const CHUNK: usize = 1 << 14;
        let partial = (0..self.total.div_ceil(CHUNK))
            .into_par_iter()
            .map(|chunk| {
                let mut out = Scan::default();
                let mut choice = vec![0; m];
                let mut pay = vec![0i128; m];
                let mut set = Vec::new();
                for p in chunk * CHUNK..((chunk + 1) * CHUNK).min(self.total) {
                    self.decode(p, &mut choice);
                    self.payoffs(&choice, &mut pay);
                    if !self.is_nash_at(p, &pay, &best) {
                        continue;
                    }
                    out.nash += 1;
                    self.user_multiset(&choice, &mut set);
                    if set == target_set {
                        out.equivalent += 1;
                        continue;
                    }
                    let weakly = target_pay.iter().zip(&pay).all(|(a, b)| a >= b);
                    let strictly = target_pay.iter().zip(&pay).any(|(a, b)| a > b);
                    if !(weakly && strictly) && out.first_counter.is_none() {
                        out.first_counter = Some(p);
                    }
                }
                out
            })
            .reduce(Scan::default, |a, b| Scan {
                nash: a.nash + b.nash,
                equivalent: a.equivalent + b.equivalent,
                first_counter: match (a.first_counter, b.first_counter) {
                    (Some(x), Some(y)) => Some(x.min(y)),
                    (x, y) => x.or(y),
                },
                intended_is_nash: false,
            });
        Scan {
            intended_is_nash,
            ..partial
        }
    }
}

#[derive(Default)]
struct Scan {
    nash: u64,
    equivalent: u64,
    first_counter: Option<usize>,
    intended_is_nash: bool,
}

/// Checks that an allocation's blocks all lie in the enumerated strategy
/// spaces (useful when replaying externally supplied witnesses).
pub fn within_strategy_space(
    gs: &GameStructure,
    alloc: &Allocation,
    shill_budget: usize,
    grid: &[Rational],
) -> Result<bool, BpGameError> {
    check_feasible(gs, alloc)?;
    for j in 0..gs.n_bps() {
        if !enumerate_strategies(gs, j, shill_budget, grid)?.contains(alloc.block(j)) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::Profile;

    fn r(n: i64) -> Rational {
        Rational::from_integer(n)
    }

    #[test]
    fn strategy_enumeration_examples() {
        let gs = GameStructure::new(2, vec![vec![0], vec![]], 1).unwrap();
        assert_eq!(
            enumerate_strategies(&gs, 0, 0, &[]).unwrap(),
            vec![Block::empty(), Block::of_users([0])]
        );
        assert_eq!(
            enumerate_strategies(&gs, 1, 1, &[r(4)]).unwrap(),
            vec![Block::empty(), Block::new([Tx::shill(1, 0, r(4))])]
        );
        let both = GameStructure::symmetric(2, 1, 1);
        assert_eq!(enumerate_strategies(&both, 0, 0, &[]).unwrap().len(), 3);
    }

    #[test]
    fn strategy_count_matches_enumeration() {
        let gs = GameStructure::symmetric(5, 1, 2);
        let grid: Vec<Rational> = (0..16).map(r).collect();
        let blocks = enumerate_strategies(&gs, 0, 2, &grid).unwrap();
        assert_eq!(blocks.len(), 248);
        let mut dedup = blocks.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), blocks.len());
        assert!(blocks.iter().all(|b| b.len() <= 2));
    }

    #[test]
    fn guard_refuses_huge_spaces() {
        let gs = GameStructure::symmetric(30, 1, 6);
        let grid: Vec<Rational> = (0..40).map(r).collect();
        assert!(matches!(
            enumerate_strategies(&gs, 0, 2, &grid),
            Err(BpGameError::Guard { .. })
        ));
    }

    #[test]
    fn default_grid() {
        let bids = Profile::from_integers(&[0, 2]);
        let g = ShillGrid::Default.resolve(&bids);
        let eps = Rational::new(1, 1000);
        assert_eq!(g, vec![r(0), eps, r(2) - eps, r(2), r(2) + eps]);
    }

    #[test]
    fn pareto_examples() {
        assert!(dominates(&[r(2), r(2)], &[r(1), r(1)]));
        assert!(!dominates(&[r(2), r(1)], &[r(1), r(2)]));
        assert!(!dominates(&[r(1), r(1)], &[r(1), r(1)]));
    }

    #[test]
    fn fpa_eq_intended_is_nash() {
        let gs = GameStructure::symmetric(3, 2, 2);
        let bids = Profile::from_integers(&[4, 1, 3]);
        let alloc = run_inclusion(&Tfm::fpa_eq(), &gs, &bids);
        let v = is_nash(&Tfm::fpa_eq(), &gs, &bids, &alloc, &SearchParams::default()).unwrap();
        assert!(v.is_nash);
    }

    #[test]
    fn fpa_shapley_redundant_inclusion() {
        let gs = GameStructure::symmetric(2, 2, 1);
        let bids = Profile::from_integers(&[10, 1]);
        let tfm = Tfm::fpa_shapley();
        let alloc = run_inclusion(&tfm, &gs, &bids);
        assert_eq!(alloc, Allocation::new(vec![Block::of_users([0]), Block::of_users([1])]));
        let v = is_nash(&tfm, &gs, &bids, &alloc, &SearchParams::default()).unwrap();
        let dev = v.deviation.unwrap();
        assert_eq!(dev.bp, 1);
        assert_eq!(dev.block, Block::of_users([0]));
        assert_eq!(dev.payoff_before.0, r(1));
        assert_eq!(dev.payoff_after.0, r(5));
        assert!(dev.replays(&tfm, &gs, &bids, &alloc));
    }

    #[test]
    fn spa_eq_price_shill() {
        let gs = GameStructure::symmetric(2, 1, 2);
        let bids = Profile::from_integers(&[5, 3]);
        let tfm = Tfm::spa_eq();
        let alloc = run_inclusion(&tfm, &gs, &bids);
        let params = SearchParams::with_budget(1).with_grid(vec![r(4)]);
        let dev = is_nash(&tfm, &gs, &bids, &alloc, &params).unwrap().deviation.unwrap();
        assert_eq!(dev.block, Block::new([Tx::User(0), Tx::shill(0, 0, r(4))]));
        assert_eq!(dev.gain.0, r(1));
        assert!(dev.replays(&tfm, &gs, &bids, &alloc));
        let default = is_nash(&tfm, &gs, &bids, &alloc, &SearchParams::default()).unwrap();
        assert!(default.deviation.unwrap().replays(&tfm, &gs, &bids, &alloc));
    }

    #[test]
    fn asymmetric_bad_nash_is_dominated() {
        let gs = GameStructure::new(2, vec![vec![0, 1], vec![0]], 1).unwrap();
        let bids = Profile::from_integers(&[1, 1]);
        let tfm = Tfm::fpa_eq();
        let bad = Allocation::new(vec![Block::of_users([0]), Block::empty()]);
        let params = SearchParams::default();
        assert!(is_nash(&tfm, &gs, &bids, &bad, &params).unwrap().is_nash);
        let intended = run_inclusion(&tfm, &gs, &bids);
        assert!(pareto_dominates(&tfm, &gs, &bids, &intended, &bad).unwrap());
        let out = evaluate(&tfm, &gs, &bids, &bad).unwrap();
        assert_eq!(out.bp_payoffs, vec![Rational::new(1, 2); 2]);
        let all = nash_equilibria(&tfm, &gs, &bids, &params).unwrap();
        assert!(all.contains(&bad));
        assert!(strong_bpic_check(&tfm, &gs, &bids, &params).unwrap().strong_bpic);
    }

    #[test]
    fn null_distribution_is_not_strongly_bpic() {
        let gs = GameStructure::symmetric(2, 2, 1);
        let bids = Profile::from_integers(&[3, 2]);
        let v = strong_bpic_check(&Tfm::fpa_null(), &gs, &bids, &SearchParams::default()).unwrap();
        assert!(v.is_nash);
        assert!(!v.strong_bpic);
        let counter = v.counter_equilibrium.unwrap();
        assert!(counter.payoffs.iter().all(|p| p.0.is_zero()));
    }

    #[test]
    fn scaled_evaluator_matches_exact() {
        let gs = GameStructure::new(4, vec![vec![0, 1, 3], vec![1, 2], vec![0, 2, 3]], 2).unwrap();
        let bids = Profile::new(vec![
            Rational::new(7, 3),
            r(1),
            Rational::new(1, 2),
            r(1),
        ])
        .unwrap();
        for tfm in [
            Tfm::fpa_eq(),
            Tfm::spa_eq(),
            Tfm::fpa_shapley(),
            Tfm::spa_shapley(),
            Tfm::fpa_serial(),
            Tfm::spa_serial(),
            Tfm::fpa_null(),
            Tfm::reserve_eq(r(1)).unwrap(),
        ] {
            let grid = ShillGrid::Default.resolve(&bids);
            let spaces: Vec<Vec<Block>> =
                (0..3).map(|j| enumerate_strategies(&gs, j, 1, &grid).unwrap()).collect();
            let c = Compiled::new(&tfm, &gs, &bids, &grid, &spaces).unwrap();
            let d = 3000 * c.split;
            let mut choice = vec![0; 3];
            let mut pay = vec![0i128; 3];
            for p in (0..c.total).step_by(37) {
                c.decode(p, &mut choice);
                c.payoffs(&choice, &mut pay);
                let alloc = c.allocation(p, &spaces);
                let exact = evaluate(&tfm, &gs, &bids, &alloc).unwrap().bp_payoffs;
                for j in 0..3 {
                    assert_eq!(
                        Rational::new(pay[j] as i64, d as i64),
                        exact[j],
                        "{tfm} at {alloc}"
                    );
                }
                let mut set = Vec::new();
                c.user_multiset(&choice, &mut set);
                let exact_set = crate::game::confirmed_bid_multiset(&tfm, &alloc, &bids);
                let scaled: Vec<Rational> =
                    set.iter().map(|&b| Rational::new(b, 3000)).collect();
                assert_eq!(scaled, exact_set);
            }
        }
    }
}
