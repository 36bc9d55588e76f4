//! The matroid of feasible transaction sets.
//!
//! A set of users is independent when it can be split into blocks
//! `B_j ⊆ S_j` with `|B_j| ≤ k`. Independence is decided by bipartite
//! b-matching (each BP node has capacity `k`) with augmenting paths, which
//! also yields a witnessing block assignment.

use std::cmp::Ordering;

use num_traits::Zero;
use rand::Rng as _;
use serde::Serialize;

use crate::game::GameStructure;
use crate::rational::Rational;

/// Largest ground set for which all independent sets are enumerated.
pub const ENUMERATION_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MatroidError {
    #[error("ground set of {size} elements exceeds the enumeration limit of {limit}")]
    TooLarge { size: usize, limit: usize },
    #[error("set is not independent")]
    NotIndependent,
    #[error("weight vector has {got} entries, ground set has {expected}")]
    WeightLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeasibilityMatroid {
    n: usize,
    capacity: usize,
    /// Eligible BPs of each user, ascending.
    user_bps: Vec<Vec<usize>>,
    n_bps: usize,
}

impl FeasibilityMatroid {
    pub fn new(n: usize, eligibility: &[Vec<usize>], capacity: usize) -> Self {
        let mut user_bps = vec![Vec::new(); n];
        for (bp, set) in eligibility.iter().enumerate() {
            for &u in set {
                if u < n {
                    user_bps[u].push(bp);
                }
            }
        }
        for list in &mut user_bps {
            list.sort_unstable();
            list.dedup();
        }
        Self {
            n,
            capacity,
            user_bps,
            n_bps: eligibility.len(),
        }
    }

    pub fn from_structure(gs: &GameStructure) -> Self {
        Self::new(gs.n_users(), gs.eligibility(), gs.block_size())
    }

    /// Rank-`r` uniform matroid on `n` elements.
    pub fn uniform(n: usize, r: usize) -> Self {
        Self::new(n, &[(0..n).collect()], r)
    }

    pub fn ground_size(&self) -> usize {
        self.n
    }

    pub fn n_bps(&self) -> usize {
        self.n_bps
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Users that no BP may include.
    pub fn is_loop(&self, x: usize) -> bool {
        self.user_bps[x].is_empty() || self.capacity == 0
    }

    fn matcher(&self) -> Matcher<'_> {
        Matcher {
            m: self,
            load: vec![0; self.n_bps],
            holder: vec![Vec::new(); self.n_bps],
            assigned: vec![None; self.n],
        }
    }

    /// A user → BP assignment covering `set`, if one exists.
    pub fn assign(&self, set: &[usize]) -> Option<Vec<(usize, usize)>> {
        let mut m = self.matcher();
        for &x in set {
            if x >= self.n || m.assigned[x].is_some() {
                continue;
            }
            if !m.try_add(x) {
                return None;
            }
        }
        Some(m.assignment())
    }

    pub fn is_independent(&self, set: &[usize]) -> bool {
        self.assign(set).is_some()
    }

    /// Size of a largest independent subset of `set`.
    pub fn rank_of(&self, set: &[usize]) -> usize {
        let mut m = self.matcher();
        set.iter().filter(|&&x| x < self.n && m.try_add(x)).count()
    }

    /// Greedy maximum-weight basis. Elements are scanned by descending
    /// weight, ties by ascending index; zero-weight elements are kept
    /// whenever they fit, so the result is always a basis.
    pub fn max_weight_basis<W: PartialOrd>(&self, w: &[W]) -> Basis {
        let order = greedy_order(w, None);
        self.greedy(&order)
    }

    fn greedy(&self, order: &[usize]) -> Basis {
        let mut m = self.matcher();
        let mut members = Vec::new();
        for &x in order {
            if m.try_add(x) {
                members.push(x);
            }
        }
        members.sort_unstable();
        Basis {
            members,
            assignment: m.assignment(),
        }
    }

    /// Whether `x` belongs to some maximum-weight independent set when the
    /// other weights are `w` and `x` weighs `z`: `x` must not be spanned by
    /// the elements strictly heavier than `z`. `w[x]` is ignored.
    pub fn in_some_max_basis(&self, x: usize, w: &[Rational], z: &Rational) -> bool {
        if self.is_loop(x) {
            return false;
        }
        let mut m = self.matcher();
        for y in greedy_order(w, Some(x)) {
            if y != x && w[y] > *z {
                m.try_add(y);
            }
        }
        m.try_add(x)
    }

    /// Smallest weight at which `x` joins some maximum-weight independent set,
    /// holding the others at `w` (`w[x]` is ignored).
    pub fn threshold_bid(&self, x: usize, w: &[Rational]) -> Threshold {
        if self.is_loop(x) {
            return Threshold::Never;
        }
        let mut candidates: Vec<Rational> = w
            .iter()
            .enumerate()
            .filter(|&(y, _)| y != x)
            .map(|(_, v)| *v)
            .chain(std::iter::once(Rational::zero()))
            .collect();
        candidates.sort();
        candidates.dedup();
        for z in candidates {
            if self.in_some_max_basis(x, w, &z) {
                return Threshold::Finite(z);
            }
        }
        unreachable!("a non-loop element is always in some max-weight basis above every competitor")
    }

    fn check_len<T>(&self, w: &[T]) -> Result<(), MatroidError> {
        if w.len() != self.n {
            return Err(MatroidError::WeightLength {
                expected: self.n,
                got: w.len(),
            });
        }
        Ok(())
    }

    fn check_enumerable(&self) -> Result<(), MatroidError> {
        if self.n > ENUMERATION_LIMIT {
            return Err(MatroidError::TooLarge {
                size: self.n,
                limit: ENUMERATION_LIMIT,
            });
        }
        Ok(())
    }

    /// Every independent set as a bitmask over the ground set.
    pub fn independent_masks(&self) -> Result<Vec<u32>, MatroidError> {
        self.check_enumerable()?;
        let mut out = Vec::new();
        for mask in 0u32..(1u32 << self.n) {
            if self.is_independent(&mask_members(mask)) {
                out.push(mask);
            }
        }
        Ok(out)
    }

    /// Enumerates every maximum-weight independent set and checks that they
    /// all carry one multiset of positive weights.
    pub fn lex_optimality_check(&self, w: &[Rational]) -> Result<bool, MatroidError> {
        self.check_len(w)?;
        let optima = self.max_weight_sets(w)?;
        let signature = |mask: u32| {
            let mut v: Vec<Rational> = mask_members(mask)
                .into_iter()
                .map(|x| w[x])
                .filter(|x| *x > Rational::zero())
                .collect();
            v.sort();
            v
        };
        let first = signature(optima[0]);
        Ok(optima.iter().all(|&m| signature(m) == first))
    }

    /// Every maximum-weight independent set (bitmasks), by enumeration.
    pub fn max_weight_sets(&self, w: &[Rational]) -> Result<Vec<u32>, MatroidError> {
        self.check_len(w)?;
        let sets = self.independent_masks()?;
        let weight = |mask: u32| -> Rational {
            mask_members(mask)
                .into_iter()
                .fold(Rational::zero(), |acc, x| acc + w[x])
        };
        let best = sets.iter().map(|&m| weight(m)).max().unwrap_or_else(Rational::zero);
        Ok(sets.into_iter().filter(|&m| weight(m) == best).collect())
    }

    /// Revenue covering: the optimum's weight bounds the thresholds of any
    /// independent set. Elements that can never be included are skipped.
    pub fn revenue_covering_check(
        &self,
        w: &[Rational],
        set: &[usize],
    ) -> Result<CoveringReport, MatroidError> {
        self.check_len(w)?;
        if !self.is_independent(set) {
            return Err(MatroidError::NotIndependent);
        }
        let optimum = self.max_weight_basis(w).weight(w);
        let thresholds = set
            .iter()
            .filter_map(|&x| self.threshold_bid(x, w).finite())
            .fold(Rational::zero(), |acc, t| acc + t);
        Ok(CoveringReport {
            optimum,
            threshold_sum: thresholds,
            slack: optimum - thresholds,
        })
    }
}

/// Outcome of [`audit`] on one matroid and a battery of weight vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub ground_size: usize,
    pub independent_sets: usize,
    pub weight_vectors: usize,
    pub axioms: bool,
    pub greedy_matches_brute_force: bool,
    pub lex_optimal: bool,
    pub covering: bool,
    /// Smallest revenue-covering slack seen, as `"p/q"`.
    pub min_covering_slack: Option<String>,
    pub first_failure: Option<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.axioms && self.greedy_matches_brute_force && self.lex_optimal && self.covering
    }
}

/// Independence family straight from the oracle, one query per subset.
pub fn oracle_family(m: &FeasibilityMatroid) -> Result<Vec<bool>, MatroidError> {
    m.check_enumerable()?;
    Ok((0..1u32 << m.n)
        .map(|mask| m.is_independent(&mask_members(mask)))
        .collect())
}

/// Empty set, hereditary and exchange axioms on an explicit family.
pub fn check_axioms(family: &[bool]) -> Result<(), String> {
    if !family[0] {
        return Err("empty set is dependent".into());
    }
    let sets: Vec<u32> = (0..family.len() as u32).filter(|&s| family[s as usize]).collect();
    for &s in &sets {
        let mut rest = s;
        while rest != 0 {
            let bit = rest & rest.wrapping_neg();
            rest ^= bit;
            if !family[(s ^ bit) as usize] {
                return Err(format!("{:?} is independent but {:?} is not", mask_members(s), mask_members(s ^ bit)));
            }
        }
    }
    for &a in &sets {
        for &b in &sets {
            if a.count_ones() < b.count_ones() {
                let mut extra = b & !a;
                let mut ok = false;
                while extra != 0 {
                    let bit = extra & extra.wrapping_neg();
                    extra ^= bit;
                    if family[(a | bit) as usize] {
                        ok = true;
                        break;
                    }
                }
                if !ok {
                    return Err(format!(
                        "no element of {:?} extends {:?}",
                        mask_members(b),
                        mask_members(a)
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Checks the matroid axioms, then for every weight vector: greedy against
/// brute-force optimum, lexicographic optimality, and revenue covering for
/// every independent set. All arithmetic is exact.
pub fn audit(m: &FeasibilityMatroid, weights: &[Vec<Rational>]) -> Result<AuditReport, MatroidError> {
    let family = oracle_family(m)?;
    let sets: Vec<u32> = (0..family.len() as u32).filter(|&s| family[s as usize]).collect();
    let mut report = AuditReport {
        ground_size: m.n,
        independent_sets: sets.len(),
        weight_vectors: weights.len(),
        axioms: true,
        greedy_matches_brute_force: true,
        lex_optimal: true,
        covering: true,
        min_covering_slack: None,
        first_failure: None,
    };
    let fail = |report: &mut AuditReport, what: String| {
        if report.first_failure.is_none() {
            report.first_failure = Some(what);
        }
    };
    if let Err(e) = check_axioms(&family) {
        report.axioms = false;
        fail(&mut report, e);
    }
    let mut min_slack: Option<Rational> = None;
    for w in weights {
        m.check_len(w)?;
        let weight = |mask: u32| {
            mask_members(mask)
                .into_iter()
                .fold(Rational::zero(), |acc, x| acc + w[x])
        };
        let brute = sets.iter().map(|&s| weight(s)).max().unwrap_or_else(Rational::zero);
        let basis = m.max_weight_basis(w);
        if basis.weight(w) != brute || !m.is_independent(&basis.members) {
            report.greedy_matches_brute_force = false;
            fail(&mut report, format!("greedy misses the optimum at weights {w:?}"));
        }
        let signature = |mask: u32| {
            let mut v: Vec<Rational> = mask_members(mask)
                .into_iter()
                .map(|x| w[x])
                .filter(|x| *x > Rational::zero())
                .collect();
            v.sort();
            v
        };
        let optima: Vec<u32> = sets.iter().copied().filter(|&s| weight(s) == brute).collect();
        if optima.iter().any(|&o| signature(o) != signature(optima[0])) {
            report.lex_optimal = false;
            fail(&mut report, format!("optima differ in positive weights at {w:?}"));
        }
        let thresholds: Vec<Rational> = (0..m.n)
            .map(|x| m.threshold_bid(x, w).finite().unwrap_or_else(Rational::zero))
            .collect();
        for &s in &sets {
            let covered = mask_members(s)
                .into_iter()
                .fold(Rational::zero(), |acc, x| acc + thresholds[x]);
            let slack = brute - covered;
            if min_slack.is_none_or(|best| slack < best) {
                min_slack = Some(slack);
            }
            if slack < Rational::zero() {
                report.covering = false;
                fail(&mut report, format!("thresholds of {:?} exceed the optimum at {w:?}", mask_members(s)));
            }
        }
    }
    report.min_covering_slack = min_slack.map(|s| crate::rational::format_rational(&s));
    Ok(report)
}

/// Weights for [`audit`]: every vector in `{0,1,2}^n` up to five elements,
/// otherwise 300 seeded draws from `{0, 1/2, ..., 3}^n`.
pub fn weight_battery(n: usize, seed: u64) -> Vec<Vec<Rational>> {
    if n <= 5 {
        (0..3usize.pow(n as u32))
            .map(|mut idx| {
                (0..n)
                    .map(|_| {
                        let d = idx % 3;
                        idx /= 3;
                        Rational::from_integer(d as i64)
                    })
                    .collect()
            })
            .collect()
    } else {
        let mut rng = crate::rng::chunk_rng(seed, STREAM_BATTERY, n as u64);
        (0..300)
            .map(|_| (0..n).map(|_| Rational::new(rng.random_range(0..=6), 2)).collect())
            .collect()
    }
}

const STREAM_BATTERY: u64 = 0xb;

/// Largest ground set [`audit_all_structures`] accepts.
pub const EXHAUSTIVE_LIMIT: usize = 7;

/// Audits of every game structure up to the given sizes, one per distinct
/// independence family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExhaustiveAudit {
    pub structures: usize,
    pub audits: Vec<(GameStructure, AuditReport)>,
}

impl ExhaustiveAudit {
    pub fn passed(&self) -> bool {
        self.audits.iter().all(|(_, r)| r.passed())
    }

    pub fn failures(&self) -> usize {
        self.audits.iter().filter(|(_, r)| !r.passed()).count()
    }

    pub fn min_covering_slack(&self) -> Option<String> {
        self.audits
            .iter()
            .filter_map(|(_, r)| r.min_covering_slack.as_deref())
            .filter_map(|s| crate::rational::parse_rational(s).ok())
            .min()
            .map(|r| crate::rational::format_rational(&r))
    }
}

/// Enumerates structures with `n ≤ max_users`, `m ≤ max_bps`, `k ≤ max_block`
/// (BP permutations identified), keeps one representative per
/// `(n, independence family)` and audits it against [`weight_battery`].
pub fn audit_all_structures(
    max_users: usize,
    max_bps: usize,
    max_block: usize,
    seed: u64,
) -> Result<ExhaustiveAudit, MatroidError> {
    use rayon::prelude::*;
    if max_users > EXHAUSTIVE_LIMIT {
        return Err(MatroidError::TooLarge {
            size: max_users,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let mut structures = 0;
    let mut families = std::collections::BTreeMap::new();
    for n in 1..=max_users {
        for m in 1..=max_bps {
            for k in 1..=max_block {
                for gs in GameStructure::enumerate(n, m, k) {
                    structures += 1;
                    let family = oracle_family(&FeasibilityMatroid::from_structure(&gs))?;
                    families.entry((n, family)).or_insert(gs);
                }
            }
        }
    }
    let reps: Vec<GameStructure> = families.into_values().collect();
    let audits = reps
        .into_par_iter()
        .map(|gs| {
            let m = FeasibilityMatroid::from_structure(&gs);
            audit(&m, &weight_battery(gs.n_users(), seed)).map(|r| (gs, r))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExhaustiveAudit { structures, audits })
}

/// Independence of every subset of a small ground set, as a lookup table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndependenceTable {
    n: usize,
    independent: Vec<bool>,
}

impl IndependenceTable {
    pub fn new(m: &FeasibilityMatroid) -> Result<Self, MatroidError> {
        m.check_enumerable()?;
        let size = 1usize << m.n;
        let mut independent = vec![false; size];
        independent[0] = true;
        for mask in 1..size {
            let without_low = mask & (mask - 1);
            independent[mask] =
                independent[without_low] && m.is_independent(&mask_members(mask as u32));
        }
        Ok(Self { n: m.n, independent })
    }

    pub fn ground_size(&self) -> usize {
        self.n
    }

    pub fn is_independent(&self, mask: u32) -> bool {
        self.independent[mask as usize]
    }

    /// Greedy basis scanning elements in `order`.
    pub fn greedy_in_order(&self, order: &[usize]) -> u32 {
        let mut mask = 0u32;
        for &x in order {
            let next = mask | 1 << x;
            if self.independent[next as usize] {
                mask = next;
            }
        }
        mask
    }

    /// Same tie-breaking as [`FeasibilityMatroid::max_weight_basis`].
    pub fn max_weight_basis<W: PartialOrd>(&self, w: &[W]) -> u32 {
        self.greedy_in_order(&greedy_order(w, None))
    }
}

/// Descending weight, ascending index; `favored` goes first within its tie class.
pub fn greedy_order<W: PartialOrd>(w: &[W], favored: Option<usize>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| {
        match w[b].partial_cmp(&w[a]).unwrap_or(Ordering::Equal) {
            Ordering::Equal => {}
            other => return other,
        }
        match (Some(a) == favored, Some(b) == favored) {
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            _ => a.cmp(&b),
        }
    });
    order
}

pub fn mask_members(mask: u32) -> Vec<usize> {
    (0..32).filter(|i| mask & (1 << i) != 0).collect()
}

struct Matcher<'a> {
    m: &'a FeasibilityMatroid,
    load: Vec<usize>,
    holder: Vec<Vec<usize>>,
    assigned: Vec<Option<usize>>,
}

impl Matcher<'_> {
    /// Adds `x`, rerouting earlier users along an augmenting path if needed.
    /// A BP with spare room is preferred over any rerouting.
    fn try_add(&mut self, x: usize) -> bool {
        let cap = self.m.capacity;
        if let Some(&bp) = self.m.user_bps[x].iter().find(|&&bp| self.load[bp] < cap) {
            self.place(x, bp);
            return true;
        }
        let mut visited = vec![false; self.m.n_bps];
        self.augment(x, &mut visited)
    }

    fn place(&mut self, x: usize, bp: usize) {
        self.load[bp] += 1;
        self.holder[bp].push(x);
        self.assigned[x] = Some(bp);
    }

    fn unplace(&mut self, x: usize) {
        if let Some(bp) = self.assigned[x].take() {
            self.load[bp] -= 1;
            self.holder[bp].retain(|&u| u != x);
        }
    }

    fn augment(&mut self, x: usize, visited: &mut [bool]) -> bool {
        let cap = self.m.capacity;
        for idx in 0..self.m.user_bps[x].len() {
            let bp = self.m.user_bps[x][idx];
            if visited[bp] {
                continue;
            }
            visited[bp] = true;
            if self.load[bp] < cap {
                self.place(x, bp);
                return true;
            }
            let occupants = self.holder[bp].clone();
            for u in occupants {
                self.unplace(u);
                if self.augment(u, visited) {
                    self.place(x, bp);
                    return true;
                }
                self.place(u, bp);
            }
        }
        false
    }

    fn assignment(&self) -> Vec<(usize, usize)> {
        self.assigned
            .iter()
            .enumerate()
            .filter_map(|(u, bp)| bp.map(|bp| (u, bp)))
            .collect()
    }
}

/// A maximum-weight basis and a block assignment witnessing its independence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Basis {
    /// Sorted ascending.
    pub members: Vec<usize>,
    /// (user, bp) pairs, sorted by user.
    pub assignment: Vec<(usize, usize)>,
}

impl Basis {
    pub fn weight(&self, w: &[Rational]) -> Rational {
        self.members
            .iter()
            .fold(Rational::zero(), |acc, &x| acc + w[x])
    }

    pub fn contains(&self, x: usize) -> bool {
        self.members.binary_search(&x).is_ok()
    }

    /// Users grouped into per-BP blocks.
    pub fn blocks(&self, n_bps: usize) -> Vec<Vec<usize>> {
        let mut blocks = vec![Vec::new(); n_bps];
        for &(u, bp) in &self.assignment {
            blocks[bp].push(u);
        }
        blocks
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Threshold {
    Finite(Rational),
    /// The element can never be included.
    Never,
}

impl Threshold {
    pub fn finite(self) -> Option<Rational> {
        match self {
            Threshold::Finite(t) => Some(t),
            Threshold::Never => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoveringReport {
    pub optimum: Rational,
    pub threshold_sum: Rational,
    pub slack: Rational,
}

impl CoveringReport {
    pub fn holds(&self) -> bool {
        self.slack >= Rational::zero()
    }
}
