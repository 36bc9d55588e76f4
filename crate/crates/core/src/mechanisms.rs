//! Inclusion, confirmation, payment and distribution rules, and their
//! composition into full transaction fee mechanisms.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::game::{check_feasible, Allocation, BidProfile, Block, GameStructure, Tx, Violation};
use crate::matroid::FeasibilityMatroid;
use crate::rational::{format_rational, parse_rational, Rational};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TfmError {
    #[error("unknown {field} rule {name:?}")]
    UnknownRule { field: &'static str, name: String },
    #[error("distribution rule {0:?} needs a version suffix (-fpa, -spa or -reserve)")]
    MissingVersion(String),
    #[error("distribution version {version} does not match the {payment} payment rule")]
    VersionMismatch { version: String, payment: String },
    #[error("a reserve payment rule requires the reserve confirmation rule with the same reserve")]
    ReserveMismatch,
    #[error("reserve price {0} is negative")]
    NegativeReserve(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InclusionRule {
    /// Max bid-sum shill-free allocation (greedy on the feasibility matroid).
    WelfareMaximizing,
    /// BPs in index order take the k highest remaining eligible bids.
    SerialDictatorship,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConfirmationRule {
    FirstPrice,
    /// Everything included except the single lowest-bidding transaction.
    SecondPrice,
    /// Included transactions bidding at least the reserve.
    Reserve(#[serde(with = "crate::rational::serde_rational")] Rational),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PaymentRule {
    FirstPrice,
    SecondPrice,
    Reserve(#[serde(with = "crate::rational::serde_rational")] Rational),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sharing {
    Equal,
    Null,
    Shapley,
    Serial,
}

/// Which per-transaction amount a distribution rule passes on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PriceVersion {
    FirstPrice,
    SecondPrice,
    Reserve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DistributionRule {
    pub sharing: Sharing,
    pub version: PriceVersion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tfm {
    inclusion: InclusionRule,
    confirmation: ConfirmationRule,
    payment: PaymentRule,
    distribution: DistributionRule,
}

impl Tfm {
    /// Validates that the distribution version and reserve parameters agree
    /// with the payment rule, which is what makes the composition ex post IR
    /// and weakly budget balanced.
    pub fn new(
        inclusion: InclusionRule,
        confirmation: ConfirmationRule,
        payment: PaymentRule,
        distribution: DistributionRule,
    ) -> Result<Self, TfmError> {
        let expected = match payment {
            PaymentRule::FirstPrice => PriceVersion::FirstPrice,
            PaymentRule::SecondPrice => PriceVersion::SecondPrice,
            PaymentRule::Reserve(_) => PriceVersion::Reserve,
        };
        if distribution.version != expected {
            return Err(TfmError::VersionMismatch {
                version: version_name(distribution.version).to_string(),
                payment: payment.to_string(),
            });
        }
        for r in [confirmation_reserve(confirmation), payment_reserve(payment)]
            .into_iter()
            .flatten()
        {
            if r < Rational::zero() {
                return Err(TfmError::NegativeReserve(format_rational(&r)));
            }
        }
        if let PaymentRule::Reserve(r) = payment {
            if confirmation != ConfirmationRule::Reserve(r) {
                return Err(TfmError::ReserveMismatch);
            }
        }
        Ok(Self {
            inclusion,
            confirmation,
            payment,
            distribution,
        })
    }

    fn preset(
        inclusion: InclusionRule,
        price: PriceVersion,
        sharing: Sharing,
    ) -> Self {
        let (confirmation, payment) = match price {
            PriceVersion::FirstPrice => (ConfirmationRule::FirstPrice, PaymentRule::FirstPrice),
            PriceVersion::SecondPrice => (ConfirmationRule::SecondPrice, PaymentRule::SecondPrice),
            PriceVersion::Reserve => unreachable!("reserve presets carry a price"),
        };
        Self::new(
            inclusion,
            confirmation,
            payment,
            DistributionRule {
                sharing,
                version: price,
            },
        )
        .expect("preset is consistent")
    }

    pub fn fpa_eq() -> Self {
        Self::preset(InclusionRule::WelfareMaximizing, PriceVersion::FirstPrice, Sharing::Equal)
    }

    pub fn spa_eq() -> Self {
        Self::preset(InclusionRule::WelfareMaximizing, PriceVersion::SecondPrice, Sharing::Equal)
    }

    pub fn fpa_shapley() -> Self {
        Self::preset(InclusionRule::WelfareMaximizing, PriceVersion::FirstPrice, Sharing::Shapley)
    }

    pub fn spa_shapley() -> Self {
        Self::preset(InclusionRule::WelfareMaximizing, PriceVersion::SecondPrice, Sharing::Shapley)
    }

    pub fn fpa_serial() -> Self {
        Self::preset(InclusionRule::SerialDictatorship, PriceVersion::FirstPrice, Sharing::Serial)
    }

    pub fn spa_serial() -> Self {
        Self::preset(InclusionRule::SerialDictatorship, PriceVersion::SecondPrice, Sharing::Serial)
    }

    pub fn fpa_null() -> Self {
        Self::preset(InclusionRule::WelfareMaximizing, PriceVersion::FirstPrice, Sharing::Null)
    }

    /// Confirm iff the bid reaches `reserve`, charge `reserve`, split it equally.
    pub fn reserve_eq(reserve: Rational) -> Result<Self, TfmError> {
        Self::new(
            InclusionRule::WelfareMaximizing,
            ConfirmationRule::Reserve(reserve),
            PaymentRule::Reserve(reserve),
            DistributionRule {
                sharing: Sharing::Equal,
                version: PriceVersion::Reserve,
            },
        )
    }

    /// Looks up a named mechanism such as `"fpa-eq"` or `"spa-shapley"`.
    pub fn named(name: &str) -> Option<Self> {
        Some(match name {
            "fpa-eq" => Self::fpa_eq(),
            "spa-eq" => Self::spa_eq(),
            "fpa-shapley" => Self::fpa_shapley(),
            "spa-shapley" => Self::spa_shapley(),
            "fpa-serial" => Self::fpa_serial(),
            "spa-serial" => Self::spa_serial(),
            "fpa-null" => Self::fpa_null(),
            _ => return None,
        })
    }

    pub fn inclusion(&self) -> InclusionRule {
        self.inclusion
    }

    pub fn confirmation(&self) -> ConfirmationRule {
        self.confirmation
    }

    pub fn payment(&self) -> PaymentRule {
        self.payment
    }

    pub fn distribution(&self) -> DistributionRule {
        self.distribution
    }

    pub fn with_inclusion(mut self, inclusion: InclusionRule) -> Self {
        self.inclusion = inclusion;
        self
    }
}

impl fmt::Display for Tfm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.inclusion, self.confirmation, self.payment, self.distribution
        )
    }
}

fn confirmation_reserve(c: ConfirmationRule) -> Option<Rational> {
    match c {
        ConfirmationRule::Reserve(r) => Some(r),
        _ => None,
    }
}

fn payment_reserve(p: PaymentRule) -> Option<Rational> {
    match p {
        PaymentRule::Reserve(r) => Some(r),
        _ => None,
    }
}

fn version_name(v: PriceVersion) -> &'static str {
    match v {
        PriceVersion::FirstPrice => "fpa",
        PriceVersion::SecondPrice => "spa",
        PriceVersion::Reserve => "reserve",
    }
}

impl fmt::Display for InclusionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InclusionRule::WelfareMaximizing => "wm",
            InclusionRule::SerialDictatorship => "serial",
        })
    }
}

impl FromStr for InclusionRule {
    type Err = TfmError;

    fn from_str(s: &str) -> Result<Self, TfmError> {
        match s {
            "wm" => Ok(InclusionRule::WelfareMaximizing),
            "serial" => Ok(InclusionRule::SerialDictatorship),
            _ => Err(TfmError::UnknownRule {
                field: "inclusion",
                name: s.to_string(),
            }),
        }
    }
}

/// `"fpa"`, `"spa"` or `"reserve:<p/q>"`.
fn parse_priced(field: &'static str, s: &str) -> Result<(PriceVersion, Option<Rational>), TfmError> {
    let unknown = || TfmError::UnknownRule {
        field,
        name: s.to_string(),
    };
    match s {
        "fpa" => Ok((PriceVersion::FirstPrice, None)),
        "spa" => Ok((PriceVersion::SecondPrice, None)),
        _ => {
            let r = s.strip_prefix("reserve:").ok_or_else(unknown)?;
            let r = parse_rational(r).map_err(|_| unknown())?;
            Ok((PriceVersion::Reserve, Some(r)))
        }
    }
}

impl fmt::Display for ConfirmationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfirmationRule::FirstPrice => f.write_str("fpa"),
            ConfirmationRule::SecondPrice => f.write_str("spa"),
            ConfirmationRule::Reserve(r) => write!(f, "reserve:{}", format_rational(r)),
        }
    }
}

impl FromStr for ConfirmationRule {
    type Err = TfmError;

    fn from_str(s: &str) -> Result<Self, TfmError> {
        Ok(match parse_priced("confirmation", s)? {
            (PriceVersion::FirstPrice, _) => ConfirmationRule::FirstPrice,
            (PriceVersion::SecondPrice, _) => ConfirmationRule::SecondPrice,
            (PriceVersion::Reserve, r) => ConfirmationRule::Reserve(r.expect("parsed reserve")),
        })
    }
}

impl fmt::Display for PaymentRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PaymentRule::FirstPrice => f.write_str("fpa"),
            PaymentRule::SecondPrice => f.write_str("spa"),
            PaymentRule::Reserve(r) => write!(f, "reserve:{}", format_rational(r)),
        }
    }
}

impl FromStr for PaymentRule {
    type Err = TfmError;

    fn from_str(s: &str) -> Result<Self, TfmError> {
        Ok(match parse_priced("payment", s)? {
            (PriceVersion::FirstPrice, _) => PaymentRule::FirstPrice,
            (PriceVersion::SecondPrice, _) => PaymentRule::SecondPrice,
            (PriceVersion::Reserve, r) => PaymentRule::Reserve(r.expect("parsed reserve")),
        })
    }
}

impl fmt::Display for DistributionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sharing = match self.sharing {
            Sharing::Equal => "eq",
            Sharing::Null => "null",
            Sharing::Shapley => "shapley",
            Sharing::Serial => "serial",
        };
        write!(f, "{}-{}", sharing, version_name(self.version))
    }
}

impl FromStr for DistributionRule {
    type Err = TfmError;

    fn from_str(s: &str) -> Result<Self, TfmError> {
        let parse_sharing = |name: &str| match name {
            "eq" => Some(Sharing::Equal),
            "null" => Some(Sharing::Null),
            "shapley" => Some(Sharing::Shapley),
            "serial" => Some(Sharing::Serial),
            _ => None,
        };
        let Some((sharing, version)) = s.split_once('-') else {
            return Err(if parse_sharing(s).is_some() {
                TfmError::MissingVersion(s.to_string())
            } else {
                TfmError::UnknownRule {
                    field: "distribution",
                    name: s.to_string(),
                }
            });
        };
        let unknown = || TfmError::UnknownRule {
            field: "distribution",
            name: s.to_string(),
        };
        let sharing = parse_sharing(sharing).ok_or_else(unknown)?;
        let version = match version {
            "fpa" => PriceVersion::FirstPrice,
            "spa" => PriceVersion::SecondPrice,
            "reserve" => PriceVersion::Reserve,
            _ => return Err(unknown()),
        };
        Ok(DistributionRule { sharing, version })
    }
}

/// Runs the inclusion rule. The result is always shill-free and feasible.
pub fn run_inclusion(tfm: &Tfm, gs: &GameStructure, bids: &BidProfile) -> Allocation {
    match tfm.inclusion {
        InclusionRule::WelfareMaximizing => {
            let m = FeasibilityMatroid::from_structure(gs);
            let basis = m.max_weight_basis(bids.as_slice());
            Allocation::new(
                basis
                    .blocks(gs.n_bps())
                    .into_iter()
                    .map(Block::of_users)
                    .collect(),
            )
        }
        InclusionRule::SerialDictatorship => {
            let mut taken = vec![false; gs.n_users()];
            let mut blocks = Vec::with_capacity(gs.n_bps());
            for bp in 0..gs.n_bps() {
                let mut remaining: Vec<usize> = gs
                    .eligible_users(bp)
                    .iter()
                    .copied()
                    .filter(|&u| !taken[u])
                    .collect();
                remaining.sort_by(|&a, &b| bids[b].cmp(&bids[a]).then(a.cmp(&b)));
                remaining.truncate(gs.block_size());
                for &u in &remaining {
                    taken[u] = true;
                }
                blocks.push(Block::of_users(remaining));
            }
            Allocation::new(blocks)
        }
    }
}

/// Order in which transactions count as "lower" for second-price rules:
/// lower bid first; on equal bids shills before users, then higher user
/// index (or higher shill identity) first.
pub fn lowness_cmp(a: &Tx, b: &Tx, bids: &BidProfile) -> Ordering {
    a.bid(bids).cmp(&b.bid(bids)).then_with(|| match (a, b) {
        (Tx::Shill { .. }, Tx::User(_)) => Ordering::Less,
        (Tx::User(_), Tx::Shill { .. }) => Ordering::Greater,
        (Tx::User(x), Tx::User(y)) => y.cmp(x),
        (
            Tx::Shill {
                bp: p, serial: s, ..
            },
            Tx::Shill {
                bp: q, serial: t, ..
            },
        ) => (q, t).cmp(&(p, s)),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Confirmation {
    pub confirmed: BTreeSet<Tx>,
    /// The lowest-bidding included transaction, under second-price rules.
    pub lowest: Option<Tx>,
    /// Several included transactions shared the lowest bid.
    pub lowest_tied: bool,
}

fn lowest_included(included: &BTreeSet<Tx>, bids: &BidProfile) -> (Option<Tx>, bool) {
    let lowest = included
        .iter()
        .min_by(|a, b| lowness_cmp(a, b, bids))
        .cloned();
    let tied = lowest.as_ref().is_some_and(|t| {
        let b = t.bid(bids);
        included.iter().filter(|x| x.bid(bids) == b).count() > 1
    });
    (lowest, tied)
}

pub fn confirm(tfm: &Tfm, alloc: &Allocation, bids: &BidProfile) -> Confirmation {
    let included = alloc.distinct_txs();
    match tfm.confirmation {
        ConfirmationRule::FirstPrice => {
            let (lowest, lowest_tied) = match tfm.payment {
                PaymentRule::SecondPrice => lowest_included(&included, bids),
                _ => (None, false),
            };
            Confirmation {
                confirmed: included,
                lowest,
                lowest_tied,
            }
        }
        ConfirmationRule::SecondPrice => {
            let (lowest, lowest_tied) = lowest_included(&included, bids);
            let mut confirmed = included;
            if let Some(t) = &lowest {
                confirmed.remove(t);
            }
            Confirmation {
                confirmed,
                lowest,
                lowest_tied,
            }
        }
        ConfirmationRule::Reserve(r) => Confirmation {
            confirmed: included.into_iter().filter(|t| t.bid(bids) >= r).collect(),
            lowest: None,
            lowest_tied: false,
        },
    }
}

/// What a confirmed transaction is charged.
fn price_of(tfm: &Tfm, tx: &Tx, conf: &Confirmation, bids: &BidProfile) -> Rational {
    if !conf.confirmed.contains(tx) {
        return Rational::zero();
    }
    match tfm.payment {
        PaymentRule::FirstPrice => tx.bid(bids),
        PaymentRule::SecondPrice => match &conf.lowest {
            Some(t) if t == tx => Rational::zero(),
            Some(t) => t.bid(bids),
            None => Rational::zero(),
        },
        PaymentRule::Reserve(r) => r,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Payments {
    /// One entry per user.
    pub users: Vec<Rational>,
    /// Total paid for each BP's own confirmed shills.
    pub shill_costs: Vec<Rational>,
}

impl Payments {
    pub fn total(&self) -> Rational {
        self.users
            .iter()
            .chain(self.shill_costs.iter())
            .fold(Rational::zero(), |acc, p| acc + p)
    }
}

pub fn payments(tfm: &Tfm, alloc: &Allocation, bids: &BidProfile) -> Payments {
    let conf = confirm(tfm, alloc, bids);
    payments_given(tfm, alloc, bids, &conf)
}

fn payments_given(tfm: &Tfm, alloc: &Allocation, bids: &BidProfile, conf: &Confirmation) -> Payments {
    let mut users = vec![Rational::zero(); bids.len()];
    let mut shill_costs = vec![Rational::zero(); alloc.n_bps()];
    for tx in &conf.confirmed {
        let p = price_of(tfm, tx, conf, bids);
        match tx {
            Tx::User(i) => users[*i] = p,
            Tx::Shill { bp, .. } => shill_costs[*bp] += p,
        }
    }
    Payments { users, shill_costs }
}

/// Per-transaction amount a distribution rule passes on to BPs.
fn distributed_amount(
    tfm: &Tfm,
    tx: &Tx,
    conf: &Confirmation,
    bids: &BidProfile,
) -> Rational {
    match tfm.distribution.version {
        PriceVersion::FirstPrice => {
            if conf.confirmed.contains(tx) {
                tx.bid(bids)
            } else {
                Rational::zero()
            }
        }
        PriceVersion::SecondPrice => match &conf.lowest {
            Some(t) if t != tx => t.bid(bids),
            _ => Rational::zero(),
        },
        PriceVersion::Reserve => match tfm.payment {
            PaymentRule::Reserve(r) if conf.confirmed.contains(tx) => r,
            _ => Rational::zero(),
        },
    }
}

pub fn distribute(tfm: &Tfm, alloc: &Allocation, bids: &BidProfile) -> Vec<Rational> {
    let conf = confirm(tfm, alloc, bids);
    distribute_given(tfm, alloc, bids, &conf)
}

fn distribute_given(
    tfm: &Tfm,
    alloc: &Allocation,
    bids: &BidProfile,
    conf: &Confirmation,
) -> Vec<Rational> {
    let m = alloc.n_bps();
    let mut revenue = vec![Rational::zero(); m];
    match tfm.distribution.sharing {
        Sharing::Null => {}
        Sharing::Equal => {
            let total = alloc
                .distinct_txs()
                .iter()
                .fold(Rational::zero(), |acc, tx| acc + distributed_amount(tfm, tx, conf, bids));
            let share = total / Rational::from_integer(m as i64);
            revenue.iter_mut().for_each(|r| *r = share);
        }
        Sharing::Shapley => {
            for (j, block) in alloc.blocks().iter().enumerate() {
                for tx in block.txs() {
                    let amount = distributed_amount(tfm, tx, conf, bids);
                    let includers = alloc.multiplicity(tx) as i64;
                    revenue[j] += amount / Rational::from_integer(includers);
                }
            }
        }
        Sharing::Serial => {
            for tx in alloc.distinct_txs() {
                let first = alloc.first_includer(&tx).expect("tx is included");
                revenue[first] += distributed_amount(tfm, &tx, conf, bids);
            }
        }
    }
    revenue
}

/// Full outcome of a feasible allocation at fixed bids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub allocation: Allocation,
    pub confirmed: BTreeSet<Tx>,
    pub payments: Vec<Rational>,
    pub shill_costs: Vec<Rational>,
    pub revenues: Vec<Rational>,
    /// Revenue minus payments for the BP's own confirmed shills.
    pub bp_payoffs: Vec<Rational>,
    /// Second-price rules had to break a tie for the lowest bid.
    pub lowest_tied: bool,
}

impl Outcome {
    pub fn confirmed_users(&self) -> BTreeSet<usize> {
        self.confirmed.iter().filter_map(Tx::user).collect()
    }

    pub fn total_payments(&self) -> Rational {
        self.payments
            .iter()
            .chain(self.shill_costs.iter())
            .fold(Rational::zero(), |acc, p| acc + p)
    }

    pub fn total_revenue(&self) -> Rational {
        self.revenues.iter().fold(Rational::zero(), |acc, r| acc + r)
    }
}

pub fn evaluate(
    tfm: &Tfm,
    gs: &GameStructure,
    bids: &BidProfile,
    alloc: &Allocation,
) -> Result<Outcome, Violation> {
    check_feasible(gs, alloc)?;
    let conf = confirm(tfm, alloc, bids);
    let pay = payments_given(tfm, alloc, bids, &conf);
    let revenues = distribute_given(tfm, alloc, bids, &conf);
    let total_paid = pay.total();
    let total_revenue = revenues.iter().fold(Rational::zero(), |acc, r| acc + r);
    assert!(
        total_revenue <= total_paid,
        "budget balance broken by {tfm}: revenue {total_revenue} > payments {total_paid}"
    );
    let bp_payoffs = revenues
        .iter()
        .zip(&pay.shill_costs)
        .map(|(r, c)| r - c)
        .collect();
    Ok(Outcome {
        allocation: alloc.clone(),
        confirmed: conf.confirmed,
        payments: pay.users,
        shill_costs: pay.shill_costs,
        revenues,
        bp_payoffs,
        lowest_tied: conf.lowest_tied,
    })
}

/// Quasi-linear utility of `user` with value `value`.
pub fn user_utility(
    tfm: &Tfm,
    gs: &GameStructure,
    user: usize,
    value: Rational,
    bids: &BidProfile,
    alloc: &Allocation,
) -> Result<Rational, Violation> {
    let outcome = evaluate(tfm, gs, bids, alloc)?;
    let gain = if outcome.confirmed.contains(&Tx::User(user)) {
        value
    } else {
        Rational::zero()
    };
    Ok(gain - outcome.payments[user])
}

/// Utility when every BP follows the inclusion rule.
pub fn intended_utility(
    tfm: &Tfm,
    gs: &GameStructure,
    user: usize,
    value: Rational,
    bids: &BidProfile,
) -> Rational {
    let alloc = run_inclusion(tfm, gs, bids);
    user_utility(tfm, gs, user, value, bids, &alloc).expect("inclusion rule output is feasible")
}
