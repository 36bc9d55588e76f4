//! The user stage. With BPs playing the intended allocation, users face a
//! winner-pays-bid auction over the feasibility matroid. This module solves
//! discretized Bayes-Nash equilibria of that auction, checks DSIC of full
//! mechanisms, evaluates the smoothness inequality and estimates expected
//! welfare by Monte Carlo.

use std::collections::HashSet;
use std::f64::consts::E;

use num_traits::Zero;
use rand::Rng as _;
use serde::Serialize;

use crate::game::{BidProfile, GameStructure, Profile};
use crate::matroid::{FeasibilityMatroid, IndependenceTable, MatroidError};
use crate::mechanisms::{intended_utility, Tfm};
use crate::rational::{to_f64, Exact, Rational};
use crate::rng::{combine, map_chunks, Moments, Rng};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("probabilities sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("negative or non-finite probability or value")]
    BadEntry,
    #[error("CDF must start at the atom, end at 1 and never decrease")]
    BadCdf,
    #[error("support points have {got} coordinates for {expected} users")]
    Dimension { expected: usize, got: usize },
    #[error("empty support")]
    Empty,
    #[error("uniform interval [{0}, {1}] is empty or negative")]
    BadInterval(f64, f64),
}

/// One user's valuation distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    Uniform { lo: f64, hi: f64 },
    /// Finitely many values; a single point is a point mass.
    Discrete { points: Vec<f64>, probs: Vec<f64> },
    /// CDF given at increasing grid points and interpolated linearly between
    /// them. `cdf[0]` is the atom at `xs[0]`.
    Tabulated { xs: Vec<f64>, cdf: Vec<f64> },
}

const PROB_TOL: f64 = 1e-9;

impl Marginal {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        Marginal::Uniform { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Marginal::Discrete {
            points: vec![v],
            probs: vec![1.0],
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            Marginal::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && *lo >= 0.0 && hi > lo) {
                    return Err(ModelError::BadInterval(*lo, *hi));
                }
            }
            Marginal::Discrete { points, probs } => {
                if points.is_empty() {
                    return Err(ModelError::Empty);
                }
                if points.len() != probs.len() {
                    return Err(ModelError::Dimension {
                        expected: points.len(),
                        got: probs.len(),
                    });
                }
                if points.iter().chain(probs).any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(ModelError::BadEntry);
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > PROB_TOL {
                    return Err(ModelError::NotNormalized(total));
                }
            }
            Marginal::Tabulated { xs, cdf } => {
                if xs.len() < 2 || xs.len() != cdf.len() {
                    return Err(ModelError::BadCdf);
                }
                if xs.iter().chain(cdf).any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(ModelError::BadEntry);
                }
                let increasing = xs.windows(2).all(|w| w[1] > w[0]);
                let monotone = cdf.windows(2).all(|w| w[1] >= w[0]);
                let ends = (cdf[cdf.len() - 1] - 1.0).abs() <= PROB_TOL;
                if !(increasing && monotone && ends) {
                    return Err(ModelError::BadCdf);
                }
            }
        }
        Ok(())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Marginal::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Marginal::Discrete { points, probs } => points
                .iter()
                .zip(probs)
                .filter(|(p, _)| **p <= x)
                .map(|(_, q)| q)
                .sum::<f64>()
                .min(1.0),
            Marginal::Tabulated { xs, cdf } => {
                if x < xs[0] {
                    return 0.0;
                }
                let j = xs.partition_point(|&g| g <= x);
                if j >= xs.len() {
                    return 1.0;
                }
                let (x0, x1) = (xs[j - 1], xs[j]);
                cdf[j - 1] + (cdf[j] - cdf[j - 1]) * (x - x0) / (x1 - x0)
            }
        }
    }

    /// Inverse CDF: the smallest `x` with `F(x) ≥ u`.
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Marginal::Uniform { lo, hi } => lo + (hi - lo) * u,
            Marginal::Discrete { points, probs } => {
                let mut acc = 0.0;
                for (p, q) in points.iter().zip(probs) {
                    acc += q;
                    if u < acc {
                        return *p;
                    }
                }
                *points.last().expect("validated non-empty")
            }
            Marginal::Tabulated { xs, cdf } => {
                if u <= cdf[0] {
                    return xs[0];
                }
                let j = cdf.partition_point(|&c| c < u).min(xs.len() - 1);
                let (c0, c1) = (cdf[j - 1], cdf[j]);
                if c1 <= c0 {
                    return xs[j];
                }
                xs[j - 1] + (xs[j] - xs[j - 1]) * (u - c0) / (c1 - c0)
            }
        }
    }

    pub fn lower(&self) -> f64 {
        match self {
            Marginal::Uniform { lo, .. } => *lo,
            Marginal::Discrete { points, probs } => points
                .iter()
                .zip(probs)
                .filter(|(_, q)| **q > 0.0)
                .map(|(p, _)| *p)
                .fold(f64::INFINITY, f64::min),
            Marginal::Tabulated { xs, .. } => xs[0],
        }
    }

    pub fn upper(&self) -> f64 {
        match self {
            Marginal::Uniform { hi, .. } => *hi,
            Marginal::Discrete { points, probs } => points
                .iter()
                .zip(probs)
                .filter(|(_, q)| **q > 0.0)
                .map(|(p, _)| *p)
                .fold(0.0, f64::max),
            Marginal::Tabulated { xs, .. } => xs[xs.len() - 1],
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Marginal::Uniform { lo, hi } => (lo + hi) / 2.0,
            Marginal::Discrete { points, probs } => {
                points.iter().zip(probs).map(|(p, q)| p * q).sum()
            }
            Marginal::Tabulated { xs, cdf } => {
                let mut m = xs[0] * cdf[0];
                for j in 1..xs.len() {
                    m += (cdf[j] - cdf[j - 1]) * (xs[j] + xs[j - 1]) / 2.0;
                }
                m
            }
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Marginal::Discrete { .. })
    }
}

/// Joint prior over user valuations.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValuationModel {
    Iid { n: usize, marginal: Marginal },
    Independent { marginals: Vec<Marginal> },
    /// Correlated valuations as an explicit table.
    JointTable {
        points: Vec<Vec<f64>>,
        probs: Vec<f64>,
    },
}

impl ValuationModel {
    pub fn iid(n: usize, marginal: Marginal) -> Self {
        ValuationModel::Iid { n, marginal }
    }

    pub fn n_users(&self) -> usize {
        match self {
            ValuationModel::Iid { n, .. } => *n,
            ValuationModel::Independent { marginals } => marginals.len(),
            ValuationModel::JointTable { points, .. } => points.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            ValuationModel::Iid { marginal, .. } => marginal.validate(),
            ValuationModel::Independent { marginals } => {
                marginals.iter().try_for_each(Marginal::validate)
            }
            ValuationModel::JointTable { points, probs } => {
                if points.is_empty() {
                    return Err(ModelError::Empty);
                }
                let n = points[0].len();
                if let Some(p) = points.iter().find(|p| p.len() != n) {
                    return Err(ModelError::Dimension {
                        expected: n,
                        got: p.len(),
                    });
                }
                if probs.len() != points.len() {
                    return Err(ModelError::Dimension {
                        expected: points.len(),
                        got: probs.len(),
                    });
                }
                if points.iter().flatten().chain(probs).any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(ModelError::BadEntry);
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > PROB_TOL {
                    return Err(ModelError::NotNormalized(total));
                }
                Ok(())
            }
        }
    }

    /// Per-user marginals when valuations are independent.
    pub fn marginals(&self) -> Option<Vec<&Marginal>> {
        match self {
            ValuationModel::Iid { n, marginal } => Some(vec![marginal; *n]),
            ValuationModel::Independent { marginals } => Some(marginals.iter().collect()),
            ValuationModel::JointTable { .. } => None,
        }
    }

    pub fn upper(&self) -> f64 {
        match self {
            ValuationModel::JointTable { points, .. } => {
                points.iter().flatten().copied().fold(0.0, f64::max)
            }
            _ => self
                .marginals()
                .expect("independent")
                .iter()
                .map(|m| m.upper())
                .fold(0.0, f64::max),
        }
    }

    pub fn mean_valuation(&self) -> f64 {
        match self {
            ValuationModel::JointTable { points, probs } => {
                let n = self.n_users().max(1) as f64;
                points
                    .iter()
                    .zip(probs)
                    .map(|(p, q)| q * p.iter().sum::<f64>())
                    .sum::<f64>()
                    / n
            }
            _ => {
                let ms = self.marginals().expect("independent");
                ms.iter().map(|m| m.mean()).sum::<f64>() / ms.len().max(1) as f64
            }
        }
    }

    pub fn sample(&self, rng: &mut Rng, out: &mut [f64]) {
        match self {
            ValuationModel::Iid { marginal, .. } => {
                for v in out.iter_mut() {
                    *v = marginal.quantile(rng.random());
                }
            }
            ValuationModel::Independent { marginals } => {
                for (v, m) in out.iter_mut().zip(marginals) {
                    *v = m.quantile(rng.random());
                }
            }
            ValuationModel::JointTable { points, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = points.len() - 1;
                for (j, q) in probs.iter().enumerate() {
                    acc += q;
                    if u < acc {
                        pick = j;
                        break;
                    }
                }
                out.copy_from_slice(&points[pick]);
            }
        }
    }

    /// Finite joint support, when every marginal is discrete or the model is
    /// a table.
    fn joint_support(&self, limit: usize) -> Option<Vec<(Vec<f64>, f64)>> {
        match self {
            ValuationModel::JointTable { points, probs } => Some(
                points
                    .iter()
                    .cloned()
                    .zip(probs.iter().copied())
                    .filter(|(_, q)| *q > 0.0)
                    .collect(),
            ),
            _ => {
                let ms = self.marginals().expect("independent");
                let mut out: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
                for m in ms {
                    let Marginal::Discrete { points, probs } = m else {
                        return None;
                    };
                    let mut next = Vec::new();
                    for (prefix, q) in &out {
                        for (p, r) in points.iter().zip(probs) {
                            if *r > 0.0 {
                                let mut v = prefix.clone();
                                v.push(*p);
                                next.push((v, q * r));
                            }
                        }
                    }
                    if next.len() > limit {
                        return None;
                    }
                    out = next;
                }
                Some(out)
            }
        }
    }
}

/// A pure bidding strategy.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    Truthful,
    Constant { bid: f64 },
    /// Monotone step function: types up to `cutoffs[l]` bid at most `bids[l]`.
    Cutoffs { bids: Vec<f64>, cutoffs: Vec<f64> },
    /// Bid per type for finitely many types.
    Table { types: Vec<f64>, bids: Vec<f64> },
}

impl Strategy {
    pub fn bid(&self, v: f64) -> f64 {
        match self {
            Strategy::Truthful => v,
            Strategy::Constant { bid } => *bid,
            Strategy::Cutoffs { bids, cutoffs } => bids[cutoff_level(cutoffs, v)],
            Strategy::Table { types, bids } => {
                let j = types.partition_point(|&t| t < v);
                let pick = if j == 0 {
                    0
                } else if j >= types.len() || (types[j] - v).abs() > (v - types[j - 1]).abs() {
                    j - 1
                } else {
                    j
                };
                bids[pick.min(bids.len() - 1)]
            }
        }
    }

    /// The strategy sampled at each point of `types`.
    pub fn tabulate(&self, types: &[f64]) -> Vec<f64> {
        types.iter().map(|&v| self.bid(v)).collect()
    }
}

fn cutoff_level(cutoffs: &[f64], v: f64) -> usize {
    cutoffs.partition_point(|&c| c < v)
}

/// Winners and payments of the winner-pays-bid auction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuctionOutcome {
    pub winners: Vec<usize>,
    pub payments: Vec<Exact>,
}

pub fn matroid_auction(m: &FeasibilityMatroid, bids: &BidProfile) -> AuctionOutcome {
    let basis = m.max_weight_basis(bids.as_slice());
    let payments = (0..bids.len())
        .map(|i| {
            Exact(if basis.contains(i) {
                bids[i]
            } else {
                Rational::zero()
            })
        })
        .collect();
    AuctionOutcome {
        winners: basis.members,
        payments,
    }
}

/// Confirmation indicator of each user when BPs follow the intended rule.
pub fn induced_allocation(m: &FeasibilityMatroid, bids: &[f64]) -> Vec<bool> {
    let basis = m.max_weight_basis(bids);
    (0..bids.len()).map(|i| basis.contains(i)).collect()
}

pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|j| lo + (hi - lo) * j as f64 / (points - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BneError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Matroid(#[from] MatroidError),
    #[error("model has {model} users, matroid has {matroid}")]
    Size { model: usize, matroid: usize },
    #[error("{what} has {size} entries, above the guard of {limit}")]
    Guard {
        what: &'static str,
        size: usize,
        limit: usize,
    },
    #[error("a grid needs at least two points")]
    Grid,
    #[error("strategy of user {0} does not fit the solver's representation")]
    Strategy(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BneParams {
    pub v_points: usize,
    pub b_points: usize,
    pub max_iters: usize,
    /// Absolute regret tolerance; `None` means 10^-6 of the mean valuation.
    pub tol: Option<f64>,
    pub damping: f64,
}

impl Default for BneParams {
    fn default() -> Self {
        Self {
            v_points: 41,
            b_points: 41,
            max_iters: 20_000,
            tol: None,
            damping: 0.1,
        }
    }
}

pub const PROFILE_GUARD: usize = 5_000_000;

/// A discretized user-stage game.
#[derive(Debug, Clone)]
pub struct BneProblem {
    model: ValuationModel,
    table: IndependenceTable,
    b_grid: Vec<f64>,
    v_grid: Vec<Vec<f64>>,
    tol: f64,
}

impl BneProblem {
    pub fn new(
        m: &FeasibilityMatroid,
        model: ValuationModel,
        params: &BneParams,
    ) -> Result<Self, BneError> {
        model.validate()?;
        let n = model.n_users();
        if n != m.ground_size() {
            return Err(BneError::Size {
                model: n,
                matroid: m.ground_size(),
            });
        }
        if params.b_points < 2 || params.v_points < 2 {
            return Err(BneError::Grid);
        }
        let upper = model.upper();
        let b_grid = linspace(0.0, if upper > 0.0 { upper } else { 1.0 }, params.b_points);
        let v_grid = match model.marginals() {
            Some(ms) if ms.iter().all(|m| !m.is_discrete()) => ms
                .iter()
                .map(|m| linspace(m.lower(), m.upper(), params.v_points))
                .collect(),
            _ => Vec::new(),
        };
        let tol = params.tol.unwrap_or(1e-6 * model.mean_valuation());
        Ok(Self {
            table: IndependenceTable::new(m)?,
            model,
            b_grid,
            v_grid,
            tol,
        })
    }

    pub fn bid_grid(&self) -> &[f64] {
        &self.b_grid
    }

    /// Types at which regret is certified (continuous models).
    pub fn type_grid(&self) -> &[Vec<f64>] {
        &self.v_grid
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn model(&self) -> &ValuationModel {
        &self.model
    }

    fn n(&self) -> usize {
        self.model.n_users()
    }

    fn levels(&self) -> usize {
        self.b_grid.len()
    }

    fn wins(&self, i: usize, profile: &[u16]) -> bool {
        self.table.max_weight_basis(profile) & (1 << i) != 0
    }

    /// Lowest own level at which `i` wins against `profile` (own entry
    /// ignored); `levels()` if it never wins.
    fn threshold(&self, i: usize, profile: &mut [u16]) -> u16 {
        let top = (self.levels() - 1) as u16;
        profile[i] = top;
        if !self.wins(i, profile) {
            return top + 1;
        }
        let (mut lo, mut hi) = (0u16, top);
        while lo < hi {
            let mid = (lo + hi) / 2;
            profile[i] = mid;
            if self.wins(i, profile) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    }

    fn others_profiles(&self) -> Result<usize, BneError> {
        let n = self.n();
        let g = self.levels();
        let size = (0..n.saturating_sub(1)).try_fold(1usize, |acc, _| acc.checked_mul(g));
        match size {
            Some(s) if s <= PROFILE_GUARD => Ok(s),
            _ => Err(BneError::Guard {
                what: "opponent bid-level profile space",
                size: size.unwrap_or(usize::MAX),
                limit: PROFILE_GUARD,
            }),
        }
    }

    /// Threshold level of each user against every opponent level profile,
    /// with opponents in ascending order and the first one varying fastest.
    fn threshold_tables(&self) -> Result<Vec<Vec<u16>>, BneError> {
        let n = self.n();
        let g = self.levels();
        let size = self.others_profiles()?;
        Ok((0..n)
            .map(|i| {
                let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                let mut profile = vec![0u16; n];
                (0..size)
                    .map(|idx| {
                        let mut rest = idx;
                        for &j in &others {
                            profile[j] = (rest % g) as u16;
                            rest /= g;
                        }
                        self.threshold(i, &mut profile)
                    })
                    .collect()
            })
            .collect())
    }

    /// Winning probability of user `i` at each level, given independent
    /// opponent level distributions.
    fn win_curve(&self, i: usize, thresholds: &[u16], dists: &[Vec<f64>]) -> Vec<f64> {
        let n = self.n();
        let g = self.levels();
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let mut mass = vec![0.0; g + 1];
        let mut digits = vec![0usize; others.len()];
        for &t in thresholds {
            let p: f64 = others
                .iter()
                .zip(&digits)
                .map(|(&j, &d)| dists[j][d])
                .product();
            mass[t as usize] += p;
            for d in digits.iter_mut() {
                *d += 1;
                if *d < g {
                    break;
                }
                *d = 0;
            }
        }
        let mut acc = 0.0;
        mass[..g]
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect()
    }

    fn level_distribution(marginal: &Marginal, cutoffs: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(cutoffs.len() + 1);
        let mut prev = 0.0;
        for &c in cutoffs {
            let f = marginal.cdf(c);
            out.push((f - prev).max(0.0));
            prev = f.max(prev);
        }
        out.push((1.0 - prev).max(0.0));
        out
    }

    /// Best-response cutoffs against the win curve `w`: the upper envelope of
    /// the lines `(v - b_l) w_l`, taking the lowest bid on ties.
    fn best_response_cutoffs(&self, w: &[f64], lo: f64, hi: f64) -> Vec<f64> {
        let b = &self.b_grid;
        let g = b.len();
        let mut cutoffs = vec![hi; g - 1];
        let mut cur = 0usize;
        loop {
            let mut next: Option<(f64, usize)> = None;
            for l in cur + 1..g {
                if w[l] <= w[cur] {
                    continue;
                }
                let v = (w[l] * b[l] - w[cur] * b[cur]) / (w[l] - w[cur]);
                let better = match next {
                    None => true,
                    Some((nv, nl)) => v < nv || (v == nv && w[l] > w[nl]),
                };
                if better {
                    next = Some((v, l));
                }
            }
            match next {
                Some((v, l)) if v < hi => {
                    for c in &mut cutoffs[cur..l] {
                        *c = v.max(lo);
                    }
                    cur = l;
                }
                _ => break,
            }
        }
        cutoffs
    }

    /// Largest interim regret over the whole type interval, for cutoff
    /// strategies under independent valuations. Between two cutoffs the
    /// regret is convex in the type, so the supremum is attained at the
    /// interval ends or at a cutoff (from either side). The type grid is
    /// included as well.
    fn cutoff_regret(&self, cutoffs: &[Vec<f64>], curves: &[Vec<f64>]) -> f64 {
        let b = &self.b_grid;
        let mut eps: f64 = 0.0;
        for (i, w) in curves.iter().enumerate() {
            let regret_at = |v: f64, played: usize| {
                let u = |l: usize| (v - b[l]) * w[l];
                let best = (0..b.len()).map(u).fold(f64::NEG_INFINITY, f64::max);
                best - u(played)
            };
            for &v in &self.v_grid[i] {
                eps = eps.max(regret_at(v, cutoff_level(&cutoffs[i], v)));
            }
            let (lo, hi) = (self.v_grid[i][0], self.v_grid[i][self.v_grid[i].len() - 1]);
            for &c in &cutoffs[i] {
                if c > lo && c < hi {
                    eps = eps.max(regret_at(c, cutoff_level(&cutoffs[i], c)));
                    eps = eps.max(regret_at(c, cutoffs[i].partition_point(|&x| x <= c)));
                }
            }
        }
        eps
    }

    fn level_of(&self, bid: f64) -> Option<usize> {
        let j = self.b_grid.partition_point(|&x| x < bid - 1e-12);
        (j < self.b_grid.len() && (self.b_grid[j] - bid).abs() <= 1e-9).then_some(j)
    }

    /// Recomputes the regret certificate of `strategies` from scratch.
    pub fn certify(&self, strategies: &[Strategy]) -> Result<f64, BneError> {
        if self.v_grid.is_empty() {
            let support = self.discrete_support()?;
            let levels = self.table_levels(&support, strategies)?;
            return Ok(self.table_regret(&support, &levels).0);
        }
        let marginals = self.model.marginals().expect("continuous path is independent");
        let mut cutoffs = Vec::with_capacity(strategies.len());
        for (i, s) in strategies.iter().enumerate() {
            match s {
                Strategy::Cutoffs { bids, cutoffs: c }
                    if bids.len() == self.levels()
                        && bids.iter().enumerate().all(|(l, &x)| self.level_of(x) == Some(l)) =>
                {
                    cutoffs.push(c.clone())
                }
                _ => return Err(BneError::Strategy(i)),
            }
        }
        let thresholds = self.threshold_tables()?;
        let dists: Vec<Vec<f64>> = marginals
            .iter()
            .zip(&cutoffs)
            .map(|(m, c)| Self::level_distribution(m, c))
            .collect();
        let curves: Vec<Vec<f64>> = (0..self.n())
            .map(|i| self.win_curve(i, &thresholds[i], &dists))
            .collect();
        Ok(self.cutoff_regret(&cutoffs, &curves))
    }

    fn solve_cutoffs(&self, params: &BneParams) -> Result<BneReport, BneError> {
        let n = self.n();
        let marginals = self.model.marginals().expect("continuous path is independent");
        let b = &self.b_grid;
        let thresholds = self.threshold_tables()?;
        let bounds: Vec<(f64, f64)> = marginals.iter().map(|m| (m.lower(), m.upper())).collect();
        let top = b[b.len() - 1];
        // Start near truthful bidding.
        let mut cutoffs: Vec<Vec<f64>> = bounds
            .iter()
            .map(|&(lo, hi)| {
                (0..b.len() - 1)
                    .map(|l| ((b[l] + b[l + 1]) / 2.0 / top * hi).clamp(lo, hi))
                    .collect()
            })
            .collect();
        let mut dists: Vec<Vec<f64>> = marginals
            .iter()
            .zip(&cutoffs)
            .map(|(m, c)| Self::level_distribution(m, c))
            .collect();
        let mut damping = params.damping.clamp(1e-4, 1.0);
        let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
        let mut best_residual = f64::INFINITY;
        let mut stalled = 0usize;
        let mut iterations = 0usize;
        let mut residual: f64;
        loop {
            let curves: Vec<Vec<f64>> = (0..n)
                .map(|i| self.win_curve(i, &thresholds[i], &dists))
                .collect();
            let eps = self.cutoff_regret(&cutoffs, &curves);
            if best.as_ref().is_none_or(|(e, _)| eps < *e) {
                best = Some((eps, cutoffs.clone()));
            }
            residual = (0..n)
                .map(|i| {
                    let r = self.best_response_cutoffs(&curves[i], bounds[i].0, bounds[i].1);
                    cutoffs[i]
                        .iter()
                        .zip(&r)
                        .map(|(c, r)| (c - r).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if residual <= 1e-13 || eps <= self.tol * 1e-2 || iterations >= params.max_iters {
                break;
            }
            if residual < best_residual * 0.99 {
                best_residual = residual;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= 500 && damping > 1e-3 {
                    damping *= 0.5;
                    stalled = 0;
                }
            }
            iterations += 1;
            // Users update in turn, each against the others' latest cutoffs.
            for i in 0..n {
                let w = self.win_curve(i, &thresholds[i], &dists);
                let r = self.best_response_cutoffs(&w, bounds[i].0, bounds[i].1);
                for (x, y) in cutoffs[i].iter_mut().zip(&r) {
                    *x += damping * (y - *x);
                    if (y - *x).abs() <= 1e-12 {
                        *x = *y;
                    }
                }
                dists[i] = Self::level_distribution(marginals[i], &cutoffs[i]);
            }
        }
        let (epsilon, cutoffs) = best.expect("at least one evaluation");
        let converged = epsilon <= self.tol;
        Ok(BneReport {
            method: SolveMethod::Cutoffs,
            strategies: cutoffs
                .into_iter()
                .map(|c| Strategy::Cutoffs {
                    bids: b.clone(),
                    cutoffs: c,
                })
                .collect(),
            epsilon,
            tolerance: self.tol,
            converged,
            iterations,
            residual,
            damping,
            bid_grid: b.clone(),
            warning: (!converged).then(|| {
                format!("no {:e}-equilibrium within {} iterations", self.tol, iterations)
            }),
        })
    }

    fn discrete_support(&self) -> Result<DiscreteSupport, BneError> {
        let points = self.model.joint_support(PROFILE_GUARD).ok_or(BneError::Guard {
            what: "joint valuation support",
            size: usize::MAX,
            limit: PROFILE_GUARD,
        })?;
        let n = self.n();
        let mut types: Vec<Vec<f64>> = vec![Vec::new(); n];
        for (v, _) in &points {
            for i in 0..n {
                types[i].push(v[i]);
            }
        }
        for t in &mut types {
            t.sort_by(|a, b| a.total_cmp(b));
            t.dedup();
        }
        let type_of: Vec<Vec<usize>> = points
            .iter()
            .map(|(v, _)| {
                (0..n)
                    .map(|i| types[i].partition_point(|&t| t < v[i]))
                    .collect()
            })
            .collect();
        let mut type_prob: Vec<Vec<f64>> = types.iter().map(|t| vec![0.0; t.len()]).collect();
        for ((_, q), tau) in points.iter().zip(&type_of) {
            for i in 0..n {
                type_prob[i][tau[i]] += q;
            }
        }
        Ok(DiscreteSupport {
            probs: points.iter().map(|(_, q)| *q).collect(),
            type_of,
            types,
            type_prob,
        })
    }

    fn table_levels(
        &self,
        support: &DiscreteSupport,
        strategies: &[Strategy],
    ) -> Result<Vec<Vec<u16>>, BneError> {
        strategies
            .iter()
            .enumerate()
            .map(|(i, s)| {
                support.types[i]
                    .iter()
                    .map(|&v| {
                        self.level_of(s.bid(v))
                            .map(|l| l as u16)
                            .ok_or(BneError::Strategy(i))
                    })
                    .collect()
            })
            .collect()
    }

    /// Interim win curve of user `i` at each of its types.
    fn table_curves(&self, support: &DiscreteSupport, levels: &[Vec<u16>], i: usize) -> Vec<Vec<f64>> {
        let g = self.levels();
        let n = self.n();
        let mut mass = vec![vec![0.0; g + 1]; support.types[i].len()];
        let mut profile = vec![0u16; n];
        for (tau, q) in support.type_of.iter().zip(&support.probs) {
            for j in 0..n {
                profile[j] = levels[j][tau[j]];
            }
            let t = self.threshold(i, &mut profile);
            mass[tau[i]][t as usize] += q;
        }
        mass.into_iter()
            .zip(&support.type_prob[i])
            .map(|(m, &p)| {
                let mut acc = 0.0;
                m[..g]
                    .iter()
                    .map(|x| {
                        acc += x;
                        if p > 0.0 {
                            acc / p
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// (max regret, best responses) for table strategies.
    fn table_regret(&self, support: &DiscreteSupport, levels: &[Vec<u16>]) -> (f64, Vec<Vec<u16>>) {
        let b = &self.b_grid;
        let mut eps: f64 = 0.0;
        let mut responses = Vec::with_capacity(self.n());
        for i in 0..self.n() {
            let curves = self.table_curves(support, levels, i);
            let mut br = Vec::with_capacity(curves.len());
            for (tau, w) in curves.iter().enumerate() {
                let v = support.types[i][tau];
                let u = |l: usize| (v - b[l]) * w[l];
                let (mut best_l, mut best_u) = (0usize, u(0));
                for l in 1..b.len() {
                    if u(l) > best_u {
                        best_l = l;
                        best_u = u(l);
                    }
                }
                br.push(best_l as u16);
                if support.type_prob[i][tau] > 0.0 {
                    eps = eps.max(best_u - u(levels[i][tau] as usize));
                }
            }
            responses.push(br);
        }
        (eps, responses)
    }

    fn solve_tables(&self, params: &BneParams) -> Result<BneReport, BneError> {
        let support = self.discrete_support()?;
        let n = self.n();
        let mut levels: Vec<Vec<u16>> = support.types.iter().map(|t| vec![0; t.len()]).collect();
        let mut seen: HashSet<Vec<Vec<u16>>> = HashSet::new();
        let (mut best_eps, mut best) = (f64::INFINITY, levels.clone());
        let mut iterations = 0;
        let mut cycled = false;
        loop {
            let (eps, _) = self.table_regret(&support, &levels);
            if eps < best_eps {
                best_eps = eps;
                best = levels.clone();
            }
            if eps <= self.tol || iterations >= params.max_iters {
                break;
            }
            if !seen.insert(levels.clone()) {
                cycled = true;
                break;
            }
            iterations += 1;
            for i in 0..n {
                let (_, responses) = self.table_regret(&support, &levels);
                levels[i] = responses[i].clone();
            }
        }
        let converged = best_eps <= self.tol;
        let b = &self.b_grid;
        Ok(BneReport {
            method: SolveMethod::BestResponseTables,
            strategies: best
                .iter()
                .enumerate()
                .map(|(i, ls)| Strategy::Table {
                    types: support.types[i].clone(),
                    bids: ls.iter().map(|&l| b[l as usize]).collect(),
                })
                .collect(),
            epsilon: best_eps,
            tolerance: self.tol,
            converged,
            iterations,
            residual: 0.0,
            damping: 1.0,
            bid_grid: b.clone(),
            warning: (!converged).then(|| {
                if cycled {
                    "best-response dynamics cycled; reporting the least-regret profile seen".into()
                } else {
                    format!("no {:e}-equilibrium within {} iterations", self.tol, iterations)
                }
            }),
        })
    }
}

#[derive(Debug, Clone)]
struct DiscreteSupport {
    probs: Vec<f64>,
    type_of: Vec<Vec<usize>>,
    types: Vec<Vec<f64>>,
    type_prob: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// Damped best response over monotone cutoff strategies (continuous types).
    Cutoffs,
    /// Pure best response over per-type bid tables (finitely many types).
    BestResponseTables,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BneReport {
    pub method: SolveMethod,
    pub strategies: Vec<Strategy>,
    /// Largest interim regret of any user at any certified type.
    pub epsilon: f64,
    pub tolerance: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub damping: f64,
    pub bid_grid: Vec<f64>,
    pub warning: Option<String>,
}

/// Approximate Bayes-Nash equilibrium of the winner-pays-bid matroid auction
/// on a bid grid. The report's `epsilon` is an honest certificate; a run that
/// misses the tolerance says so instead of returning a fabricated equilibrium.
pub fn solve_bne(problem: &BneProblem, params: &BneParams) -> Result<BneReport, BneError> {
    if problem.v_grid.is_empty() {
        problem.solve_tables(params)
    } else {
        problem.solve_cutoffs(params)
    }
}

/// A profitable misreport found by [`dsic_check`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DsicWitness {
    pub user: usize,
    pub value: Exact,
    pub bid: Exact,
    pub bids: Vec<Exact>,
    pub truthful_utility: Exact,
    pub deviation_utility: Exact,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DsicVerdict {
    pub dsic: bool,
    pub cases_checked: u64,
    pub witness: Option<DsicWitness>,
}

pub const DSIC_GUARD: u64 = 5_000_000;

/// Searches every (user, value, bid, opponent bids) combination on the grids
/// for a bid that beats truth-telling when BPs follow the inclusion rule.
pub fn dsic_check(
    tfm: &Tfm,
    gs: &GameStructure,
    v_grid: &[Rational],
    b_grid: &[Rational],
) -> Result<DsicVerdict, BneError> {
    let n = gs.n_users();
    let profiles = (0..n.saturating_sub(1))
        .try_fold(1u64, |acc, _| acc.checked_mul(b_grid.len() as u64));
    let cases = profiles.and_then(|p| {
        p.checked_mul((n * v_grid.len() * b_grid.len()) as u64)
    });
    let cases = match cases {
        Some(c) if c <= DSIC_GUARD => c,
        _ => {
            return Err(BneError::Guard {
                what: "DSIC search space",
                size: cases.map_or(usize::MAX, |c| c as usize),
                limit: DSIC_GUARD as usize,
            })
        }
    };
    let g = b_grid.len();
    let total_profiles = profiles.expect("checked above") as usize;
    for i in 0..n {
        let mut others = vec![Rational::zero(); n];
        for idx in 0..total_profiles {
            let mut rest = idx;
            for (j, slot) in others.iter_mut().enumerate() {
                if j == i {
                    continue;
                }
                *slot = b_grid[rest % g];
                rest /= g;
            }
            for &v in v_grid {
                let truthful = Profile::new(others.clone())
                    .expect("grid is nonnegative")
                    .with(i, v);
                let honest = intended_utility(tfm, gs, i, v, &truthful);
                for &b in b_grid {
                    let lie = truthful.with(i, b);
                    let u = intended_utility(tfm, gs, i, v, &lie);
                    if u > honest {
                        return Ok(DsicVerdict {
                            dsic: false,
                            cases_checked: cases,
                            witness: Some(DsicWitness {
                                user: i,
                                value: Exact(v),
                                bid: Exact(b),
                                bids: lie.as_slice().iter().copied().map(Exact).collect(),
                                truthful_utility: Exact(honest),
                                deviation_utility: Exact(u),
                            }),
                        });
                    }
                }
            }
        }
    }
    Ok(DsicVerdict {
        dsic: true,
        cases_checked: cases,
        witness: None,
    })
}

/// Inverse-CDF draw from the density `1/(v - x)` on `[0, (1 - 1/e) v]`.
pub fn smooth_deviation_sample(v: f64, u: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    v * (1.0 - (-u).exp())
}

/// Kolmogorov-Smirnov distance between `n` sampler draws and the CDF
/// `ln(v / (v - x))`.
pub fn smooth_sampler_ks(v: f64, n: usize, seed: u64) -> f64 {
    let mut xs: Vec<f64> = map_chunks(n, seed, STREAM_KS, |rng, range| {
        range
            .map(|_| smooth_deviation_sample(v, rng.random()))
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    let cdf = |x: f64| (v / (v - x)).ln().clamp(0.0, 1.0);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(j, &x)| {
            let f = cdf(x);
            (f - j as f64 / n).abs().max(((j + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

const STREAM_KS: u64 = 0x5;
const STREAM_SMOOTH: u64 = 0x6;
const STREAM_WELFARE: u64 = 0x7;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothnessReport {
    pub lambda: f64,
    pub mu: f64,
    /// Estimated sum of the users' expected deviation utilities.
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub opt: Exact,
    pub revenue: Exact,
    pub rhs: f64,
    pub margin: f64,
    pub holds: bool,
}

/// Monte Carlo check of the smoothness inequality at one (v, b) pair.
///
/// Each user `i` deviates to a draw from the sampler while the others keep
/// `b`; the deviation wins exactly when it reaches `i`'s threshold bid.
/// Draws are stratified over the unit interval, and the reported standard
/// error is the plain independent-sampling one, which bounds the stratified
/// estimator's error from above.
pub fn smoothness_check(
    m: &FeasibilityMatroid,
    v: &[Rational],
    b: &[Rational],
    n_samples: usize,
    seed: u64,
    lambda: f64,
    mu: f64,
) -> SmoothnessReport {
    let n = v.len();
    let thresholds: Vec<Option<f64>> = (0..n)
        .map(|i| m.threshold_bid(i, b).finite().map(|t| to_f64(&t)))
        .collect();
    let mut lhs = 0.0;
    let mut var = 0.0;
    for i in 0..n {
        let vi = to_f64(&v[i]);
        let Some(t) = thresholds[i] else { continue };
        if vi <= 0.0 {
            continue;
        }
        let parts = map_chunks(n_samples, seed, STREAM_SMOOTH + ((i as u64) << 8), |rng, range| {
            let mut mo = Moments::default();
            for s in range {
                let u = (s as f64 + rng.random::<f64>()) / n_samples as f64;
                let x = smooth_deviation_sample(vi, u);
                mo.push(if x >= t { vi - x } else { 0.0 });
            }
            mo
        });
        let mo = combine(parts);
        lhs += mo.mean();
        var += mo.stderr().powi(2);
    }
    let opt_basis = m.max_weight_basis(v);
    let opt = opt_basis.weight(v);
    let rev_basis = m.max_weight_basis(b);
    let revenue = rev_basis.weight(b);
    let rhs = lambda * to_f64(&opt) - mu * to_f64(&revenue);
    let lhs_stderr = var.sqrt();
    let margin = lhs - rhs;
    SmoothnessReport {
        lambda,
        mu,
        lhs,
        lhs_stderr,
        opt: Exact(opt),
        revenue: Exact(revenue),
        rhs,
        margin,
        holds: margin + 3.0 * lhs_stderr >= 0.0,
    }
}

pub const SMOOTHNESS_LAMBDA: f64 = 1.0 - 1.0 / E;
pub const SMOOTHNESS_MU: f64 = 1.0;

/// Guaranteed welfare fraction of an ε-equilibrium: `(1 - 1/e) - ε n / OPT`.
pub fn poa_bound(epsilon: f64, n: usize, expected_opt: f64) -> f64 {
    if expected_opt <= 0.0 {
        return 0.0;
    }
    SMOOTHNESS_LAMBDA - epsilon * n as f64 / expected_opt
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelfareRow {
    pub sample_id: u64,
    pub welfare: f64,
    pub opt: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WelfareEstimate {
    pub samples: u64,
    pub welfare_mean: f64,
    pub welfare_stderr: f64,
    pub opt_mean: f64,
    pub opt_stderr: f64,
    pub ratio: f64,
    /// Expected optimum is zero; the ratio is reported as 1 by convention.
    pub degenerate: bool,
}

struct Greedy {
    table: Option<IndependenceTable>,
    matroid: FeasibilityMatroid,
}

impl Greedy {
    fn new(m: &FeasibilityMatroid) -> Self {
        Self {
            table: (m.ground_size() <= 16).then(|| IndependenceTable::new(m).expect("small")),
            matroid: m.clone(),
        }
    }

    fn winners(&self, w: &[f64]) -> u64 {
        match &self.table {
            Some(t) => t.max_weight_basis(w) as u64,
            None => self
                .matroid
                .max_weight_basis(w)
                .members
                .iter()
                .fold(0u64, |acc, &i| acc | 1 << i),
        }
    }
}

fn masked_sum(mask: u64, v: &[f64]) -> f64 {
    v.iter()
        .enumerate()
        .filter(|(i, _)| mask >> i & 1 == 1)
        .map(|(_, x)| x)
        .sum()
}

fn simulate(
    m: &FeasibilityMatroid,
    model: &ValuationModel,
    strategies: &[Strategy],
    n_samples: usize,
    seed: u64,
    keep_rows: bool,
) -> Vec<(Moments, Moments, Vec<WelfareRow>)> {
    let greedy = Greedy::new(m);
    let n = model.n_users();
    assert_eq!(strategies.len(), n, "one strategy per user");
    map_chunks(n_samples, seed, STREAM_WELFARE, |rng, range| {
        let mut v = vec![0.0; n];
        let mut b = vec![0.0; n];
        let (mut wm, mut om) = (Moments::default(), Moments::default());
        let mut rows = Vec::new();
        for s in range {
            model.sample(rng, &mut v);
            for i in 0..n {
                b[i] = strategies[i].bid(v[i]);
            }
            let welfare = masked_sum(greedy.winners(&b), &v);
            let opt = masked_sum(greedy.winners(&v), &v);
            wm.push(welfare);
            om.push(opt);
            if keep_rows {
                rows.push(WelfareRow {
                    sample_id: s as u64,
                    welfare,
                    opt,
                    ratio: if opt > 0.0 { welfare / opt } else { 1.0 },
                });
            }
        }
        (wm, om, rows)
    })
}

fn estimate(parts: &[(Moments, Moments, Vec<WelfareRow>)]) -> WelfareEstimate {
    let w = combine(parts.iter().map(|p| p.0));
    let o = combine(parts.iter().map(|p| p.1));
    let degenerate = o.mean() <= 0.0;
    WelfareEstimate {
        samples: w.n,
        welfare_mean: w.mean(),
        welfare_stderr: w.stderr(),
        opt_mean: o.mean(),
        opt_stderr: o.stderr(),
        ratio: if degenerate { 1.0 } else { w.mean() / o.mean() },
        degenerate,
    }
}

/// Paired Monte Carlo estimate of expected welfare under `strategies` and of
/// the expected optimum, on common valuation draws.
pub fn expected_welfare(
    m: &FeasibilityMatroid,
    model: &ValuationModel,
    strategies: &[Strategy],
    n_samples: usize,
    seed: u64,
) -> WelfareEstimate {
    estimate(&simulate(m, model, strategies, n_samples, seed, false))
}

/// Like [`expected_welfare`], also returning one row per sample.
pub fn expected_welfare_rows(
    m: &FeasibilityMatroid,
    model: &ValuationModel,
    strategies: &[Strategy],
    n_samples: usize,
    seed: u64,
) -> (WelfareEstimate, Vec<WelfareRow>) {
    let parts = simulate(m, model, strategies, n_samples, seed, true);
    let est = estimate(&parts);
    (est, parts.into_iter().flat_map(|p| p.2).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64) -> Rational {
        Rational::from_integer(n)
    }

    #[test]
    fn auction_examples() {
        let single = FeasibilityMatroid::uniform(2, 1);
        let bids = Profile::new(vec![Rational::new(7, 10), Rational::new(2, 5)]).unwrap();
        let out = matroid_auction(&single, &bids);
        assert_eq!(out.winners, vec![0]);
        assert_eq!(out.payments[0].0, Rational::new(7, 10));
        let two = FeasibilityMatroid::uniform(3, 2);
        let out = matroid_auction(&two, &Profile::from_integers(&[5, 3, 2]));
        assert_eq!(out.winners, vec![0, 1]);
        assert_eq!(
            out.payments.iter().map(|p| p.0).collect::<Vec<_>>(),
            vec![r(5), r(3), r(0)]
        );
        let out = matroid_auction(&single, &Profile::zeros(2));
        assert_eq!(out.winners, vec![0]);
        assert!(out.payments.iter().all(|p| p.0.is_zero()));
    }

    #[test]
    fn marginal_cdf_and_quantile() {
        let t = Marginal::Tabulated {
            xs: vec![0.0, 1.0, 2.0],
            cdf: vec![0.2, 0.6, 1.0],
        };
        t.validate().unwrap();
        assert_eq!(t.cdf(0.0), 0.2);
        assert!((t.cdf(0.5) - 0.4).abs() < 1e-12);
        assert_eq!(t.quantile(0.1), 0.0);
        assert!((t.quantile(0.8) - 1.5).abs() < 1e-12);
        let d = Marginal::Discrete {
            points: vec![1.0, 3.0],
            probs: vec![0.25, 0.75],
        };
        assert_eq!(d.quantile(0.2), 1.0);
        assert_eq!(d.quantile(0.3), 3.0);
        assert_eq!(d.mean(), 2.5);
        assert!(Marginal::Discrete {
            points: vec![1.0],
            probs: vec![0.5]
        }
        .validate()
        .is_err());
    }

    #[test]
    fn sampler_examples() {
        assert_eq!(smooth_deviation_sample(1.0, 0.0), 0.0);
        assert!((smooth_deviation_sample(1.0, 1.0) - (1.0 - 1.0 / E)).abs() < 1e-15);
        assert_eq!(smooth_deviation_sample(0.0, 0.7), 0.0);
    }

    #[test]
    fn single_user_bids_zero_and_wins() {
        let m = FeasibilityMatroid::uniform(1, 1);
        let model = ValuationModel::iid(1, Marginal::uniform(0.0, 1.0));
        let problem = BneProblem::new(&m, model.clone(), &BneParams::default()).unwrap();
        let report = solve_bne(&problem, &BneParams::default()).unwrap();
        assert_eq!(report.epsilon, 0.0);
        assert!(report.converged);
        assert_eq!(report.strategies[0].bid(0.9), 0.0);
        let est = expected_welfare(&m, &model, &report.strategies, 4096, 3);
        assert_eq!(est.ratio, 1.0);
    }

    #[test]
    fn point_masses_complete_information() {
        let m = FeasibilityMatroid::uniform(2, 1);
        let model = ValuationModel::Independent {
            marginals: vec![Marginal::point(1.0), Marginal::point(0.0)],
        };
        let params = BneParams::default();
        let problem = BneProblem::new(&m, model, &params).unwrap();
        let report = solve_bne(&problem, &params).unwrap();
        assert!(report.converged);
        let step = problem.bid_grid()[1];
        let bid = report.strategies[0].bid(1.0);
        assert!(bid <= step);
        let bids = [bid, report.strategies[1].bid(0.0)];
        assert!(induced_allocation(&m, &bids)[0]);
    }

    #[test]
    fn certificate_reproduces() {
        let m = FeasibilityMatroid::uniform(2, 1);
        let model = ValuationModel::iid(2, Marginal::uniform(0.0, 1.0));
        let params = BneParams {
            v_points: 11,
            b_points: 11,
            ..BneParams::default()
        };
        let problem = BneProblem::new(&m, model, &params).unwrap();
        let report = solve_bne(&problem, &params).unwrap();
        assert_eq!(problem.certify(&report.strategies).unwrap(), report.epsilon);
    }

    #[test]
    fn truthful_welfare_is_optimal() {
        let m = FeasibilityMatroid::new(3, &[vec![0, 1], vec![2]], 1);
        let model = ValuationModel::iid(3, Marginal::uniform(0.0, 2.0));
        let est = expected_welfare(&m, &model, &vec![Strategy::Truthful; 3], 10_000, 1);
        assert_eq!(est.ratio, 1.0);
        assert_eq!(est.welfare_mean, est.opt_mean);
    }

    #[test]
    fn zero_model_is_degenerate() {
        let m = FeasibilityMatroid::uniform(2, 1);
        let model = ValuationModel::iid(2, Marginal::point(0.0));
        let est = expected_welfare(&m, &model, &vec![Strategy::Truthful; 2], 100, 1);
        assert!(est.degenerate);
        assert_eq!(est.ratio, 1.0);
    }

    #[test]
    fn dsic_examples() {
        let gs = GameStructure::symmetric(2, 1, 1);
        let grid: Vec<Rational> = (0..4).map(r).collect();
        let fpa = dsic_check(&Tfm::fpa_eq(), &gs, &grid, &grid).unwrap();
        let w = fpa.witness.unwrap();
        assert!(w.bid.0 < w.value.0);
        let spa = dsic_check(&Tfm::spa_eq(), &GameStructure::symmetric(3, 2, 1), &grid, &grid).unwrap();
        assert!(spa.dsic);
        let lone = dsic_check(&Tfm::spa_eq(), &GameStructure::symmetric(1, 1, 1), &grid, &grid).unwrap();
        assert!(lone.dsic);
    }

    #[test]
    fn smoothness_single_item() {
        let m = FeasibilityMatroid::uniform(1, 1);
        let rep = smoothness_check(&m, &[r(1)], &[r(0)], 10_000, 5, SMOOTHNESS_LAMBDA, SMOOTHNESS_MU);
        assert!((rep.rhs - SMOOTHNESS_LAMBDA).abs() < 1e-15);
        assert!(rep.holds);
        assert!(rep.margin.abs() < 1e-3);
        let zero = smoothness_check(&m, &[r(0)], &[r(0)], 1000, 5, SMOOTHNESS_LAMBDA, SMOOTHNESS_MU);
        assert_eq!((zero.lhs, zero.rhs), (0.0, 0.0));
    }

    #[test]
    fn ks_distance_small() {
        assert!(smooth_sampler_ks(2.0, 100_000, 9) < 0.01);
    }
}
