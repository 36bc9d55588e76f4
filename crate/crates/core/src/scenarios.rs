//! Concrete instances with known answers: the welfare-loss examples, the
//! tightness instance for the welfare guarantee, numeric checkers for the two
//! impossibility constructions, and a price-of-anarchy sweep over random
//! structures and priors.
//!
//! Each check produces [`Metric`]s that carry a provenance [`Tag`] and an
//! explicit [`Target`], so a suite run can be tabulated row by row.

use std::f64::consts::E;

use num_traits::{One, Signed, Zero};
use rand::Rng as _;
use serde::Serialize;

use crate::bp_game::{
    enumerate_strategies, is_nash, pareto_dominates, strong_bpic_check, BpGameError,
    CounterEquilibrium, Deviation, SearchParams,
};
use crate::game::{Allocation, Block, GameStructure, Profile, Tx};
use crate::matroid::FeasibilityMatroid;
use crate::mechanisms::{evaluate, run_inclusion, Tfm};
use crate::rational::{format_rational, to_f64, Exact, Rational};
use crate::rng::{chunk_rng, combine, map_chunks, Moments};
use crate::user_game::{
    dsic_check, expected_welfare, expected_welfare_rows, induced_allocation, poa_bound, solve_bne,
    BneError, BneParams, BneProblem, DsicWitness, Marginal, Strategy, ValuationModel,
    SMOOTHNESS_LAMBDA,
};

const STREAM_TIGHTNESS: u64 = 0x8;
const STREAM_SWEEP: u64 = 0x9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error(transparent)]
    BpGame(#[from] BpGameError),
    #[error(transparent)]
    Bne(#[from] BneError),
    #[error("revenue-greedy dynamics did not settle within {0} sweeps")]
    NoFixedPoint(usize),
}

/// Where an expected value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    /// Stated in the source analysis.
    Paper,
    /// Computed independently and frozen.
    Derived,
    /// Follows directly from a definition.
    Trivial,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Paper => "paper",
            Tag::Derived => "derived",
            Tag::Trivial => "trivial",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    Approx { value: f64, tolerance: f64 },
    Exactly { value: Exact },
    Below { bound: f64 },
    AtLeast { bound: f64 },
    AtMost { bound: f64 },
    /// Equal up to four significant figures.
    SigFigs { value: f64 },
    Label { value: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Realized {
    Float(f64),
    Exact(Exact),
    Label(String),
}

impl Realized {
    fn as_f64(&self) -> Option<f64> {
        match self {
            Realized::Float(x) => Some(*x),
            Realized::Exact(r) => Some(to_f64(&r.0)),
            Realized::Label(_) => None,
        }
    }

    pub fn render(&self) -> String {
        match self {
            Realized::Float(x) => format!("{x:.6}"),
            Realized::Exact(r) => format_rational(&r.0),
            Realized::Label(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub tag: Tag,
    pub target: Target,
    pub realized: Realized,
}

fn sig4(x: f64) -> String {
    format!("{x:.3e}")
}

impl Metric {
    pub fn new(name: impl Into<String>, tag: Tag, target: Target, realized: Realized) -> Self {
        Self {
            name: name.into(),
            tag,
            target,
            realized,
        }
    }

    pub fn pass(&self) -> bool {
        let x = self.realized.as_f64();
        match (&self.target, &self.realized) {
            (Target::Exactly { value }, Realized::Exact(r)) => value == r,
            (Target::Exactly { .. }, _) => false,
            (Target::Label { value }, Realized::Label(s)) => value == s,
            (Target::Label { .. }, _) => false,
            (Target::Approx { value, tolerance }, _) => x.is_some_and(|x| (x - value).abs() <= *tolerance),
            (Target::Below { bound }, _) => x.is_some_and(|x| x < *bound),
            (Target::AtLeast { bound }, _) => x.is_some_and(|x| x >= *bound),
            (Target::AtMost { bound }, _) => x.is_some_and(|x| x <= *bound),
            (Target::SigFigs { value }, _) => x.is_some_and(|x| agrees_to_sig_figs(x, *value, 4)),
        }
    }

    pub fn target_text(&self) -> String {
        match &self.target {
            Target::Approx { value, .. } => format!("{value:.6}"),
            Target::Exactly { value } => format_rational(&value.0),
            Target::Below { bound } => format!("< {bound}"),
            Target::AtLeast { bound } => format!(">= {bound}"),
            Target::AtMost { bound } => format!("<= {bound}"),
            Target::SigFigs { value } => sig4(*value),
            Target::Label { value } => value.clone(),
        }
    }

    pub fn tolerance_text(&self) -> String {
        match &self.target {
            Target::Approx { tolerance, .. } => format!("{tolerance}"),
            Target::SigFigs { .. } => "4 significant figures".to_string(),
            _ => "0".to_string(),
        }
    }
}

/// Whether `x` is within half a unit in the `digits`-th significant figure of
/// `value`. Stable for values that sit on a rounding boundary.
pub fn agrees_to_sig_figs(x: f64, value: f64, digits: i32) -> bool {
    if value == 0.0 {
        return x == 0.0;
    }
    let unit = 10f64.powi(value.abs().log10().floor() as i32 - (digits - 1));
    (x - value).abs() <= 0.5 * unit
}

/// The fixed inputs of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Setting {
    Prior { model: ValuationModel },
    Fixed { values: Vec<Exact> },
    Grid { values: Vec<Exact> },
    Described { text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub structure: Option<GameStructure>,
    pub setting: Setting,
    pub tfm: Option<String>,
    pub strategies: String,
    pub metrics: Vec<Metric>,
}

impl Scenario {
    pub fn pass(&self) -> bool {
        self.metrics.iter().all(Metric::pass)
    }
}

/// One line of the suite table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteRow {
    pub name: String,
    pub metric: String,
    pub tag: Tag,
    pub target: String,
    pub realized: String,
    pub tolerance: String,
    pub pass: bool,
}

pub fn suite_rows(scenarios: &[Scenario]) -> Vec<SuiteRow> {
    scenarios
        .iter()
        .flat_map(|s| {
            s.metrics.iter().map(move |m| SuiteRow {
                name: s.name.clone(),
                metric: m.name.clone(),
                tag: m.tag,
                target: m.target_text(),
                realized: m.realized.render(),
                tolerance: m.tolerance_text(),
                pass: m.pass(),
            })
        })
        .collect()
}

fn ri(n: i64) -> Rational {
    Rational::from_integer(n)
}

fn exacts(values: &[Rational]) -> Vec<Exact> {
    values.iter().copied().map(Exact).collect()
}

// Tightness instance.

pub fn tightness_structure() -> GameStructure {
    GameStructure::symmetric(3, 1, 1)
}

/// Inverse CDF of `F(x) = 1 / (e (1 - x))` on `[0, 1 - 1/e]`, whose atom of
/// mass `1/e` sits at zero.
pub fn tightness_draw(u: f64) -> f64 {
    if u <= 1.0 / E {
        0.0
    } else {
        1.0 - 1.0 / (E * u)
    }
}

/// User 1 bids zero; users 2 and 3 bid their values.
pub fn tightness_strategies() -> Vec<Strategy> {
    vec![Strategy::Constant { bid: 0.0 }, Strategy::Truthful, Strategy::Truthful]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TightnessReport {
    pub samples: u64,
    pub welfare: f64,
    pub welfare_stderr: f64,
    pub opt: f64,
    pub ratio: f64,
    /// Share of draws that landed on the atom at zero.
    pub atom_fraction: f64,
}

/// Monte Carlo welfare of the prescribed strategies on `v = (1, x, x)`.
///
/// Draws are stratified over the unit interval before the inverse CDF; the
/// reported standard error is the independent-sampling one.
pub fn run_tightness(n_samples: usize, seed: u64) -> TightnessReport {
    let matroid = FeasibilityMatroid::from_structure(&tightness_structure());
    let strategies = tightness_strategies();
    let parts = map_chunks(n_samples, seed, STREAM_TIGHTNESS, |rng, range| {
        let mut welfare = Moments::default();
        let mut opt = Moments::default();
        let mut atoms = 0u64;
        for s in range {
            let u = (s as f64 + rng.random::<f64>()) / n_samples as f64;
            let x = tightness_draw(u);
            let v = [1.0, x, x];
            let bids: Vec<f64> = strategies.iter().zip(&v).map(|(st, &vi)| st.bid(vi)).collect();
            let won = induced_allocation(&matroid, &bids);
            let best = induced_allocation(&matroid, &v);
            welfare.push((0..3).filter(|&i| won[i]).map(|i| v[i]).sum());
            opt.push((0..3).filter(|&i| best[i]).map(|i| v[i]).sum());
            atoms += u64::from(x == 0.0);
        }
        (welfare, opt, atoms)
    });
    let atoms: u64 = parts.iter().map(|p| p.2).sum();
    let welfare = combine(parts.iter().map(|p| p.0));
    let opt = combine(parts.iter().map(|p| p.1));
    TightnessReport {
        samples: welfare.n,
        welfare: welfare.mean(),
        welfare_stderr: welfare.stderr(),
        opt: opt.mean(),
        ratio: if opt.mean() > 0.0 { welfare.mean() / opt.mean() } else { 1.0 },
        atom_fraction: atoms as f64 / n_samples.max(1) as f64,
    }
}

fn tightness_scenario(n_samples: usize, seed: u64) -> Scenario {
    let rep = run_tightness(n_samples, seed);
    let tolerance = 0.003;
    Scenario {
        name: "tightness".into(),
        structure: Some(tightness_structure()),
        setting: Setting::Described {
            text: "v = (1, x, x) with F(x) = 1/(e(1-x)) on [0, 1-1/e]".into(),
        },
        tfm: Some("fpa-eq".into()),
        strategies: "user 1 bids 0, users 2 and 3 truthful".into(),
        metrics: vec![
            Metric::new(
                "expected welfare",
                Tag::Paper,
                Target::Approx {
                    value: 1.0 - 1.0 / E,
                    tolerance,
                },
                Realized::Float(rep.welfare),
            ),
            Metric::new(
                "expected optimum",
                Tag::Trivial,
                Target::Approx {
                    value: 1.0,
                    tolerance: 0.0,
                },
                Realized::Float(rep.opt),
            ),
            Metric::new(
                "atom share",
                Tag::Trivial,
                Target::Approx {
                    value: 1.0 / E,
                    tolerance,
                },
                Realized::Float(rep.atom_fraction),
            ),
        ],
    }
}

// Welfare-loss examples.

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WelfareLossRow {
    pub example: String,
    pub allocation: String,
    pub welfare: f64,
    pub optimum: f64,
    pub ratio: f64,
    /// Present when the ratio is computed exactly.
    pub exact_ratio: Option<Exact>,
    pub expected: String,
    pub holds: bool,
}

/// Each BP in turn switches to its payoff-maximizing user-only block given
/// the others, starting from empty blocks, until no BP moves. Ties keep the
/// current block.
pub fn revenue_greedy_inclusion(
    tfm: &Tfm,
    gs: &GameStructure,
    bids: &Profile,
) -> Result<Allocation, ScenarioError> {
    const MAX_SWEEPS: usize = 1000;
    let spaces: Vec<Vec<Block>> = (0..gs.n_bps())
        .map(|j| enumerate_strategies(gs, j, 0, &[]))
        .collect::<Result<_, _>>()?;
    let mut alloc = Allocation::empty(gs.n_bps());
    for _ in 0..MAX_SWEEPS {
        let mut moved = false;
        for (j, space) in spaces.iter().enumerate() {
            let mut best = evaluate(tfm, gs, bids, &alloc).map_err(BpGameError::from)?.bp_payoffs[j];
            let mut choice = None;
            for block in space {
                let alt = alloc.with_block(j, block.clone());
                let p = evaluate(tfm, gs, bids, &alt).map_err(BpGameError::from)?.bp_payoffs[j];
                if p > best {
                    best = p;
                    choice = Some(alt);
                }
            }
            if let Some(alt) = choice {
                alloc = alt;
                moved = true;
            }
        }
        if !moved {
            return Ok(alloc);
        }
    }
    Err(ScenarioError::NoFixedPoint(MAX_SWEEPS))
}

fn confirmed_welfare(tfm: &Tfm, gs: &GameStructure, values: &Profile, alloc: &Allocation) -> Rational {
    let outcome = evaluate(tfm, gs, values, alloc).expect("allocation is feasible");
    outcome
        .confirmed
        .iter()
        .filter_map(Tx::user)
        .fold(Rational::zero(), |acc, i| acc + values[i])
}

fn optimum(gs: &GameStructure, values: &Profile) -> Rational {
    let m = FeasibilityMatroid::from_structure(gs);
    m.max_weight_basis(values.as_slice()).weight(values.as_slice())
}

/// Symmetric instance with `m` BPs, block size 1, one bid of `m + eps` and
/// `m - 1` bids of 1, under FPA-Shapley with revenue-greedy inclusion.
pub fn fpa_shapley_variant(m: usize, eps: Rational) -> Result<WelfareLossRow, ScenarioError> {
    let gs = GameStructure::symmetric(m, m, 1);
    let mut values = vec![Rational::one(); m];
    values[0] = ri(m as i64) + eps;
    let values = Profile::new(values).expect("bids are positive");
    let tfm = Tfm::fpa_shapley();
    let alloc = revenue_greedy_inclusion(&tfm, &gs, &values)?;
    let welfare = confirmed_welfare(&tfm, &gs, &values, &alloc);
    let opt = optimum(&gs, &values);
    let ratio = welfare / opt;
    let mi = ri(m as i64);
    let formula = (mi + eps) / (ri(2) * mi - ri(1) + eps);
    let half = Rational::new(1, 2);
    Ok(WelfareLossRow {
        example: format!("fpa-shapley revenue-greedy, m={m}"),
        allocation: alloc.to_string(),
        welfare: to_f64(&welfare),
        optimum: to_f64(&opt),
        ratio: to_f64(&ratio),
        exact_ratio: Some(Exact(ratio)),
        expected: format!(
            "(m+eps)/(2m-1+eps) = {}, within 1/m of 1/2",
            format_rational(&formula)
        ),
        holds: ratio == formula && (ratio - half).abs() <= Rational::new(1, m as i64),
    })
}

/// Two users with bid 1, block size 1; BP 1 may include both, BP 2 only the
/// first user.
pub fn two_bp_structure() -> GameStructure {
    GameStructure::new(2, vec![vec![0, 1], vec![0]], 1).expect("valid structure")
}

pub fn serial_dictatorship_instance() -> WelfareLossRow {
    let gs = two_bp_structure();
    let values = Profile::from_integers(&[1, 1]);
    let tfm = Tfm::fpa_serial();
    let alloc = run_inclusion(&tfm, &gs, &values);
    let welfare = confirmed_welfare(&tfm, &gs, &values, &alloc);
    let opt = optimum(&gs, &values);
    let ratio = welfare / opt;
    WelfareLossRow {
        example: "serial dictatorship".into(),
        allocation: alloc.to_string(),
        welfare: to_f64(&welfare),
        optimum: to_f64(&opt),
        ratio: to_f64(&ratio),
        exact_ratio: Some(Exact(ratio)),
        expected: "1/2".into(),
        holds: ratio == Rational::new(1, 2),
    }
}

/// FPA-EQ on [`two_bp_structure`]: BP 1 includes user 1 and BP 2 stays empty.
pub fn fpa_eq_bad_nash() -> Result<WelfareLossRow, ScenarioError> {
    let gs = two_bp_structure();
    let values = Profile::from_integers(&[1, 1]);
    let tfm = Tfm::fpa_eq();
    let bad = Allocation::new(vec![Block::of_users([0]), Block::empty()]);
    let params = SearchParams::default();
    let nash = is_nash(&tfm, &gs, &values, &bad, &params)?;
    let intended = run_inclusion(&tfm, &gs, &values);
    let dominated = pareto_dominates(&tfm, &gs, &values, &intended, &bad)?;
    let welfare = confirmed_welfare(&tfm, &gs, &values, &bad);
    let opt = optimum(&gs, &values);
    let ratio = welfare / opt;
    Ok(WelfareLossRow {
        example: "fpa-eq bad nash".into(),
        allocation: bad.to_string(),
        welfare: to_f64(&welfare),
        optimum: to_f64(&opt),
        ratio: to_f64(&ratio),
        exact_ratio: Some(Exact(ratio)),
        expected: "1/2, Nash, Pareto dominated by the intended allocation".into(),
        holds: ratio == Rational::new(1, 2) && nash.is_nash && dominated,
    })
}

/// Single-item first-price auction with values U[0,1] and U[0,2]: the
/// discretized BNE loses welfare with high confidence.
pub fn fpa_asymmetric_bne(n_samples: usize, seed: u64) -> Result<WelfareLossRow, ScenarioError> {
    let gs = GameStructure::symmetric(2, 1, 1);
    let matroid = FeasibilityMatroid::from_structure(&gs);
    let model = ValuationModel::Independent {
        marginals: vec![Marginal::uniform(0.0, 1.0), Marginal::uniform(0.0, 2.0)],
    };
    let params = BneParams::default();
    let problem = BneProblem::new(&matroid, model.clone(), &params)?;
    let report = solve_bne(&problem, &params)?;
    let (est, rows) = expected_welfare_rows(&matroid, &model, &report.strategies, n_samples, seed);
    let mut loss = Moments::default();
    for row in &rows {
        loss.push(row.opt - row.welfare);
    }
    let holds = report.converged && loss.mean() > 3.0 * loss.stderr();
    Ok(WelfareLossRow {
        example: "fpa asymmetric bne".into(),
        allocation: format!(
            "bne epsilon {:.3e}, welfare loss {:.5} +- {:.5}",
            report.epsilon,
            loss.mean(),
            loss.stderr()
        ),
        welfare: est.welfare_mean,
        optimum: est.opt_mean,
        ratio: est.ratio,
        exact_ratio: None,
        expected: "ratio below 1 by more than 3 stderr".into(),
        holds,
    })
}

pub const SUITE_SEED: u64 = 20_240_601;

/// The four welfare-loss examples: the revenue-greedy FPA-Shapley variant at
/// m = 2, 10 and 100 with eps = 1/1000, serial dictatorship, the FPA-EQ bad
/// equilibrium, and asymmetric first-price bidding.
pub fn run_welfare_loss_suite() -> Result<Vec<WelfareLossRow>, ScenarioError> {
    let eps = Rational::new(1, 1000);
    let mut rows = Vec::new();
    for m in [2, 10, 100] {
        rows.push(fpa_shapley_variant(m, eps)?);
    }
    rows.push(serial_dictatorship_instance());
    rows.push(fpa_eq_bad_nash()?);
    rows.push(fpa_asymmetric_bne(200_000, SUITE_SEED)?);
    Ok(rows)
}

fn welfare_loss_scenarios(rows: &[WelfareLossRow]) -> Vec<Scenario> {
    rows.iter()
        .map(|row| {
            let (tag, target, realized) = match &row.exact_ratio {
                Some(r) if row.example.starts_with("fpa-shapley") => {
                    (Tag::Derived, Target::Exactly { value: *r }, Realized::Exact(*r))
                }
                Some(r) => (
                    Tag::Paper,
                    Target::Exactly {
                        value: Exact(Rational::new(1, 2)),
                    },
                    Realized::Exact(*r),
                ),
                None => (Tag::Derived, Target::Below { bound: 1.0 }, Realized::Float(row.ratio)),
            };
            let mut metrics = vec![Metric::new("welfare ratio", tag, target, realized)];
            metrics.push(Metric::new(
                "claim holds",
                tag,
                Target::Label {
                    value: "true".into(),
                },
                Realized::Label(row.holds.to_string()),
            ));
            Scenario {
                name: row.example.clone(),
                structure: None,
                setting: Setting::Described {
                    text: row.allocation.clone(),
                },
                tfm: None,
                strategies: row.expected.clone(),
                metrics,
            }
        })
        .collect()
}

// First impossibility construction.

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Lb1Verdict {
    DsicFails {
        witness: DsicWitness,
    },
    StrongBpicFails {
        values: Vec<Exact>,
        deviation: Option<Deviation>,
        counter_equilibrium: Option<CounterEquilibrium>,
    },
    /// DSIC and strongly BPIC on the grid, and some positive valuation
    /// vector gets an empty confirmed set.
    ConfirmsNothing {
        values: Vec<Exact>,
        optimum: Exact,
    },
    /// Passed every check and always confirmed something on this grid.
    Inconclusive,
}

impl Lb1Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Lb1Verdict::DsicFails { .. } => "dsic fails",
            Lb1Verdict::StrongBpicFails { .. } => "strong bpic fails",
            Lb1Verdict::ConfirmsNothing { .. } => "confirms nothing",
            Lb1Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lb1Report {
    pub tfm: String,
    pub structure: GameStructure,
    pub value_grid: Vec<Exact>,
    pub dsic_cases: u64,
    pub bpic_profiles: usize,
    pub verdict: Lb1Verdict,
}

/// Two users, one BP, block size 2.
pub fn lb1_structure() -> GameStructure {
    GameStructure::symmetric(2, 1, 2)
}

pub fn lb1_default_grid() -> Vec<Rational> {
    vec![ri(0), Rational::new(1, 2), ri(1), Rational::new(3, 2)]
}

fn grid_profiles(n: usize, grid: &[Rational]) -> Vec<Profile> {
    let g = grid.len();
    let total = g.pow(n as u32);
    (0..total)
        .map(|mut idx| {
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                v.push(grid[idx % g]);
                idx /= g;
            }
            Profile::new(v).expect("grid is nonnegative")
        })
        .collect()
}

/// Tries to falsify a candidate on [`lb1_structure`]: first DSIC over the
/// grid, then strong BPIC at every truthful grid profile. A candidate that
/// survives both is searched for a positive valuation vector whose intended
/// allocation confirms nothing; the one with the largest optimum is reported.
pub fn check_lb1_construction(tfm: &Tfm, value_grid: &[Rational]) -> Result<Lb1Report, ScenarioError> {
    let gs = lb1_structure();
    let dsic = dsic_check(tfm, &gs, value_grid, value_grid)?;
    let report = |bpic_profiles, verdict| Lb1Report {
        tfm: tfm.to_string(),
        structure: gs.clone(),
        value_grid: exacts(value_grid),
        dsic_cases: dsic.cases_checked,
        bpic_profiles,
        verdict,
    };
    if let Some(witness) = dsic.witness.clone() {
        return Ok(report(0, Lb1Verdict::DsicFails { witness }));
    }
    let profiles = grid_profiles(gs.n_users(), value_grid);
    let params = SearchParams::default();
    for (checked, v) in profiles.iter().enumerate() {
        let verdict = strong_bpic_check(tfm, &gs, v, &params)?;
        if !verdict.strong_bpic {
            return Ok(report(
                checked + 1,
                Lb1Verdict::StrongBpicFails {
                    values: exacts(v.as_slice()),
                    deviation: verdict.deviation,
                    counter_equilibrium: verdict.counter_equilibrium,
                },
            ));
        }
    }
    let mut best: Option<(Rational, &Profile)> = None;
    for v in &profiles {
        if v.as_slice().iter().all(Zero::is_zero) {
            continue;
        }
        let alloc = run_inclusion(tfm, &gs, v);
        let outcome = evaluate(tfm, &gs, v, &alloc).expect("inclusion is feasible");
        if outcome.confirmed_users().is_empty() {
            let opt = optimum(&gs, v);
            if best.as_ref().is_none_or(|(b, _)| opt > *b) {
                best = Some((opt, v));
            }
        }
    }
    let verdict = match best {
        Some((opt, v)) => Lb1Verdict::ConfirmsNothing {
            values: exacts(v.as_slice()),
            optimum: Exact(opt),
        },
        None => Lb1Verdict::Inconclusive,
    };
    Ok(report(profiles.len(), verdict))
}

/// Reserve price used by the fixed-threshold candidate.
pub fn lb1_reserve() -> Rational {
    ri(1)
}

fn lb1_scenarios() -> Result<Vec<Scenario>, ScenarioError> {
    let grid = lb1_default_grid();
    let cases = [
        (Tfm::spa_eq(), "strong bpic fails", Tag::Derived),
        (Tfm::fpa_eq(), "dsic fails", Tag::Paper),
        (
            Tfm::reserve_eq(lb1_reserve()).expect("valid reserve"),
            "confirms nothing",
            Tag::Trivial,
        ),
    ];
    let mut out = Vec::new();
    for (tfm, expected, tag) in cases {
        let rep = check_lb1_construction(&tfm, &grid)?;
        let mut metrics = vec![Metric::new(
            "classification",
            tag,
            Target::Label {
                value: expected.into(),
            },
            Realized::Label(rep.verdict.label().into()),
        )];
        if let Lb1Verdict::ConfirmsNothing { values, .. } = &rep.verdict {
            let v = Profile::new(values.iter().map(|e| e.0).collect()).expect("nonnegative");
            let alloc = run_inclusion(&tfm, &rep.structure, &v);
            metrics.push(Metric::new(
                "welfare at reported vector",
                Tag::Trivial,
                Target::Exactly {
                    value: Exact(Rational::zero()),
                },
                Realized::Exact(Exact(confirmed_welfare(&tfm, &rep.structure, &v, &alloc))),
            ));
        }
        out.push(Scenario {
            name: format!("lb1 {}", tfm),
            structure: Some(rep.structure.clone()),
            setting: Setting::Grid {
                values: rep.value_grid.clone(),
            },
            tfm: Some(tfm.to_string()),
            strategies: "truthful users, intended inclusion".into(),
            metrics,
        });
    }
    Ok(out)
}

// Second impossibility construction.

/// A distribution discretized into equal-width cells, each carrying its
/// probability mass spread uniformly.
#[derive(Debug, Clone)]
struct CellGrid {
    lo: f64,
    width: f64,
    mass: Vec<f64>,
}

impl CellGrid {
    fn new(marginal: &Marginal, cells: usize) -> Self {
        let (lo, hi) = (marginal.lower(), marginal.upper());
        let width = (hi - lo) / cells as f64;
        let mass = (0..cells)
            .map(|c| {
                let a = lo + width * c as f64;
                marginal.cdf(a + width) - marginal.cdf(a)
            })
            .collect();
        Self { lo, width, mass }
    }

    /// Cell index containing `x` and the fraction of that cell below `x`.
    fn locate(&self, x: f64) -> (usize, f64) {
        let t = ((x - self.lo) / self.width).max(0.0);
        let c = (t.floor() as usize).min(self.mass.len());
        (c, if c < self.mass.len() { t - c as f64 } else { 0.0 })
    }

    fn prob_below(&self, x: f64) -> f64 {
        let (c, frac) = self.locate(x);
        self.mass[..c].iter().sum::<f64>() + self.mass.get(c).map_or(0.0, |m| m * frac)
    }

    /// `E[v ; v < x]`, the unnormalized partial mean.
    fn partial_mean_below(&self, x: f64) -> f64 {
        let (c, frac) = self.locate(x);
        let full: f64 = (0..c)
            .map(|j| self.mass[j] * (self.lo + self.width * (j as f64 + 0.5)))
            .sum();
        let a = self.lo + self.width * c as f64;
        full + self.mass.get(c).map_or(0.0, |m| m * frac * (a + 0.5 * frac * self.width))
    }

    fn cond_mean_below(&self, x: f64) -> f64 {
        let p = self.prob_below(x);
        if p > 0.0 {
            self.partial_mean_below(x) / p
        } else {
            0.0
        }
    }

    fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.mass.len()).map(|j| self.lo + self.width * j as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lb2Report {
    pub cells: usize,
    /// Widest cell across all four discretized distributions.
    pub grid_step: f64,
    /// Largest gap between the grid payment targets and their closed forms.
    pub payment_target_error: f64,
    /// Instance 1: `Pr[v_1 < 7/8]`.
    pub pr_v1_below: f64,
    /// Instance 1: bidder 2's equilibrium utility at `v_2 = 7/8`.
    pub sigma_utility_v2: f64,
    pub sigma_utility_bound: f64,
    /// `7/8` minus the largest payment target of bidder 2 in instance 2.
    pub deviation_margin_v2: f64,
    /// Win probability of the borrowed strategy implied by the equilibrium.
    pub win_probability_cap: f64,
    pub win_probability_bound: f64,
    /// Largest payment target of bidder 1 in instance 1.
    pub deviation_payment_cap: f64,
    /// Instance 2: bidder 1's deviation utility at `v_1 = 3/4`.
    pub deviation_utility: f64,
    /// Instance 2: `Pr[v_2 < 3/4]`.
    pub pr_v2_below: f64,
    /// Instance 2: bidder 1's equilibrium utility at `v_1 = 3/4`.
    pub sigma_prime_utility_v1: f64,
    pub sigma_prime_utility_cap: f64,
    pub step_a_holds: bool,
    pub win_bound_holds: bool,
    pub step_b_holds: bool,
}

/// Reconstructs both instances of the winning-bid-only payment argument on
/// grids of `cells` cells and evaluates every quantity in the two deviation
/// steps by quadrature.
pub fn check_lb2_construction(cells: usize) -> Lb2Report {
    let cells = cells.max(1);
    let i1 = [Marginal::uniform(0.0, 100.0), Marginal::uniform(0.0, 1.0)];
    let i2 = [Marginal::uniform(0.0, 1.5), Marginal::uniform(0.0, 100.0)];
    let g1: Vec<CellGrid> = i1.iter().map(|m| CellGrid::new(m, cells)).collect();
    let g2: Vec<CellGrid> = i2.iter().map(|m| CellGrid::new(m, cells)).collect();
    let grid_step = g1.iter().chain(&g2).map(|g| g.width).fold(0.0, f64::max);

    // Payment targets: f(sigma_i(v)) = E[v_other | v_other < v].
    let target = |grids: &[CellGrid], i: usize| -> Vec<(f64, f64)> {
        grids[i]
            .nodes()
            .map(|v| (v, grids[1 - i].cond_mean_below(v)))
            .collect()
    };
    let f1 = target(&g1, 0);
    let f2 = target(&g1, 1);
    let f1p = target(&g2, 0);
    let f2p = target(&g2, 1);
    let closed: [(&[(f64, f64)], fn(f64) -> f64); 4] = [
        (&f1, |v| (v / 2.0).min(0.5)),
        (&f2, |v| v / 2.0),
        (&f1p, |v| v / 2.0),
        (&f2p, |v| (v / 2.0).min(0.75)),
    ];
    let payment_target_error = closed
        .iter()
        .flat_map(|(pts, f)| pts.iter().map(move |&(v, y)| (y - f(v)).abs()))
        .fold(0.0, f64::max);
    let sup = |pts: &[(f64, f64)]| pts.iter().map(|p| p.1).fold(0.0, f64::max);

    let v2 = 7.0 / 8.0;
    let pr_v1_below = g1[0].prob_below(v2);
    let sigma_utility_v2 = pr_v1_below * (v2 - g1[0].cond_mean_below(v2));
    let sigma_utility_bound = 1.0 / 200.0;
    let deviation_margin_v2 = v2 - sup(&f2p);
    let win_probability_cap = sigma_utility_v2 / deviation_margin_v2;
    let win_probability_bound = 1.0 / 25.0;

    let v1 = 3.0 / 4.0;
    let deviation_payment_cap = sup(&f1);
    let deviation_utility = (v1 - deviation_payment_cap) * (1.0 - win_probability_bound);
    let pr_v2_below = g2[1].prob_below(v1);
    let sigma_prime_utility_v1 = pr_v2_below * (v1 - g2[1].cond_mean_below(v1));
    let sigma_prime_utility_cap = 1.0 / 100.0;

    Lb2Report {
        cells,
        grid_step,
        payment_target_error,
        pr_v1_below,
        sigma_utility_v2,
        sigma_utility_bound,
        deviation_margin_v2,
        win_probability_cap,
        win_probability_bound,
        deviation_payment_cap,
        deviation_utility,
        pr_v2_below,
        sigma_prime_utility_v1,
        sigma_prime_utility_cap,
        step_a_holds: sigma_utility_v2 < sigma_utility_bound,
        win_bound_holds: win_probability_cap < win_probability_bound,
        step_b_holds: deviation_utility > sigma_prime_utility_cap
            && sigma_prime_utility_v1 <= sigma_prime_utility_cap,
    }
}

fn lb2_scenario(cells: usize) -> Scenario {
    let rep = check_lb2_construction(cells);
    let flag = |b: bool| Realized::Label(b.to_string());
    let yes = || Target::Label {
        value: "true".into(),
    };
    Scenario {
        name: "lb2".into(),
        structure: Some(GameStructure::symmetric(2, 1, 1)),
        setting: Setting::Described {
            text: format!("two uniform instances on {} cells", rep.cells),
        },
        tfm: None,
        strategies: "hypothetical efficient equilibria".into(),
        metrics: vec![
            Metric::new(
                "Pr[v1 < 7/8]",
                Tag::Derived,
                Target::SigFigs { value: 0.00875 },
                Realized::Float(rep.pr_v1_below),
            ),
            Metric::new(
                "bidder 2 utility at 7/8",
                Tag::Derived,
                Target::SigFigs {
                    value: 0.00875 * 0.4375,
                },
                Realized::Float(rep.sigma_utility_v2),
            ),
            Metric::new(
                "bidder 2 utility below 1/200",
                Tag::Paper,
                Target::Below {
                    bound: rep.sigma_utility_bound,
                },
                Realized::Float(rep.sigma_utility_v2),
            ),
            Metric::new(
                "win probability below 1/25",
                Tag::Paper,
                Target::Below {
                    bound: rep.win_probability_bound,
                },
                Realized::Float(rep.win_probability_cap),
            ),
            Metric::new(
                "bidder 1 deviation utility at 3/4",
                Tag::Paper,
                Target::SigFigs { value: 6.0 / 25.0 },
                Realized::Float(rep.deviation_utility),
            ),
            Metric::new(
                "bidder 1 equilibrium utility at most 1/100",
                Tag::Paper,
                Target::AtMost {
                    bound: rep.sigma_prime_utility_cap,
                },
                Realized::Float(rep.sigma_prime_utility_v1),
            ),
            Metric::new("both deviation steps hold", Tag::Paper, yes(), flag(rep.step_a_holds && rep.win_bound_holds && rep.step_b_holds)),
        ],
    }
}

// Price-of-anarchy sweep.

#[derive(Debug, Clone, PartialEq)]
pub struct PoaSweepConfig {
    pub instances: usize,
    pub max_users: usize,
    pub max_bps: usize,
    pub max_block: usize,
    pub seed: u64,
    pub samples: usize,
    pub bne: BneParams,
    /// Also run the tightness instance with this many samples.
    pub tightness_samples: Option<usize>,
}

impl Default for PoaSweepConfig {
    fn default() -> Self {
        Self {
            instances: 8,
            max_users: 3,
            max_bps: 2,
            max_block: 2,
            seed: SUITE_SEED,
            samples: 20_000,
            bne: BneParams::default(),
            tightness_samples: Some(200_000),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoaRow {
    pub instance: usize,
    pub n_users: usize,
    pub n_bps: usize,
    pub block_size: usize,
    /// Eligibility sets, 1-based, separated by `|`.
    pub eligibility: String,
    pub prior: String,
    pub method: String,
    pub converged: bool,
    pub epsilon: f64,
    pub welfare: f64,
    pub opt: f64,
    pub ratio: f64,
    pub ratio_stderr: f64,
    /// `(1 - 1/e) - eps n / E[OPT]`.
    pub bound: f64,
    /// `n * bid step / E[OPT]`.
    pub grid_slack: f64,
    /// Converged rows are asserted; the rest are only flagged.
    pub asserted: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoaSweep {
    pub rows: Vec<PoaRow>,
    pub flagged: usize,
    pub all_pass: bool,
}

fn random_instance(rng: &mut crate::rng::Rng, cfg: &PoaSweepConfig, first: bool) -> (GameStructure, ValuationModel) {
    let max = cfg.max_users.max(1);
    let n = if first || max == 1 { 1 } else { rng.random_range(2..=max) };
    let m = rng.random_range(1..=cfg.max_bps.max(1));
    let k = rng.random_range(1..=cfg.max_block.max(1));
    let mut eligibility = Vec::with_capacity(m);
    for _ in 0..m {
        loop {
            let set: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
            if !set.is_empty() {
                eligibility.push(set);
                break;
            }
        }
    }
    let gs = GameStructure::new(n, eligibility, k).expect("sampled sets are in range");
    let model = if rng.random_bool(0.5) {
        ValuationModel::iid(n, Marginal::uniform(0.0, 1.0))
    } else {
        ValuationModel::Independent {
            marginals: (0..n)
                .map(|_| Marginal::uniform(0.0, rng.random_range(1..=3) as f64))
                .collect(),
        }
    };
    (gs, model)
}

fn describe_eligibility(gs: &GameStructure) -> String {
    gs.eligibility()
        .iter()
        .map(|s| s.iter().map(|u| (u + 1).to_string()).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("|")
}

fn describe_prior(model: &ValuationModel) -> String {
    let one = |m: &Marginal| match m {
        Marginal::Uniform { lo, hi } => format!("U[{lo},{hi}]"),
        other => format!("{other:?}"),
    };
    match model {
        ValuationModel::Iid { n, marginal } => format!("iid {n} x {}", one(marginal)),
        ValuationModel::Independent { marginals } => {
            marginals.iter().map(one).collect::<Vec<_>>().join(" ")
        }
        ValuationModel::JointTable { probs, .. } => format!("joint table, {} points", probs.len()),
    }
}

/// Solves the user-stage BNE on random small instances and checks every
/// converged one against the smoothness guarantee, allowing for the bid grid
/// and three Monte Carlo standard errors.
pub fn run_poa_sweep(cfg: &PoaSweepConfig) -> Result<PoaSweep, ScenarioError> {
    let mut rng = chunk_rng(cfg.seed, STREAM_SWEEP, 0);
    let mut rows = Vec::new();
    for inst in 0..cfg.instances {
        let (gs, model) = random_instance(&mut rng, cfg, inst == 0);
        let matroid = FeasibilityMatroid::from_structure(&gs);
        let problem = BneProblem::new(&matroid, model.clone(), &cfg.bne)?;
        let report = solve_bne(&problem, &cfg.bne)?;
        let est = expected_welfare(
            &matroid,
            &model,
            &report.strategies,
            cfg.samples,
            cfg.seed.wrapping_add(inst as u64 + 1),
        );
        let n = gs.n_users();
        let step = problem.bid_grid()[1] - problem.bid_grid()[0];
        let grid_slack = if est.opt_mean > 0.0 {
            n as f64 * step / est.opt_mean
        } else {
            0.0
        };
        let bound = poa_bound(report.epsilon, n, est.opt_mean);
        let ratio_stderr = if est.opt_mean > 0.0 {
            est.welfare_stderr / est.opt_mean
        } else {
            0.0
        };
        let asserted = report.converged;
        let pass = !asserted || est.ratio + 3.0 * ratio_stderr >= bound - grid_slack;
        rows.push(PoaRow {
            instance: inst,
            n_users: n,
            n_bps: gs.n_bps(),
            block_size: gs.block_size(),
            eligibility: describe_eligibility(&gs),
            prior: describe_prior(&model),
            method: format!("{:?}", report.method).to_lowercase(),
            converged: report.converged,
            epsilon: report.epsilon,
            welfare: est.welfare_mean,
            opt: est.opt_mean,
            ratio: est.ratio,
            ratio_stderr,
            bound,
            grid_slack,
            asserted,
            pass,
        });
    }
    if let Some(samples) = cfg.tightness_samples {
        let rep = run_tightness(samples, cfg.seed);
        let gs = tightness_structure();
        let ratio_stderr = rep.welfare_stderr / rep.opt;
        rows.push(PoaRow {
            instance: cfg.instances,
            n_users: 3,
            n_bps: 1,
            block_size: 1,
            eligibility: describe_eligibility(&gs),
            prior: "v = (1, x, x), tightness prior".into(),
            method: "prescribed".into(),
            converged: true,
            epsilon: 0.0,
            welfare: rep.welfare,
            opt: rep.opt,
            ratio: rep.ratio,
            ratio_stderr,
            bound: SMOOTHNESS_LAMBDA,
            grid_slack: 0.0,
            asserted: true,
            pass: rep.ratio + 3.0 * ratio_stderr >= SMOOTHNESS_LAMBDA,
        });
    }
    let flagged = rows.iter().filter(|r| !r.asserted).count();
    let all_pass = rows.iter().all(|r| r.pass);
    Ok(PoaSweep {
        rows,
        flagged,
        all_pass,
    })
}

// Suite.

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    pub seed: u64,
    pub tightness_samples: usize,
    pub lb2_cells: usize,
    pub sweep: Option<PoaSweepConfig>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: SUITE_SEED,
            tightness_samples: 1_000_000,
            lb2_cells: 10_000,
            sweep: Some(PoaSweepConfig::default()),
        }
    }
}

/// Runs every scenario.
pub fn paper_suite(opts: &SuiteOptions) -> Result<Vec<Scenario>, ScenarioError> {
    let mut out = vec![tightness_scenario(opts.tightness_samples, opts.seed)];
    out.extend(welfare_loss_scenarios(&run_welfare_loss_suite()?));
    out.extend(lb1_scenarios()?);
    out.push(lb2_scenario(opts.lb2_cells));
    if let Some(cfg) = &opts.sweep {
        let cfg = PoaSweepConfig {
            seed: opts.seed,
            ..cfg.clone()
        };
        let sweep = run_poa_sweep(&cfg)?;
        let worst = sweep
            .rows
            .iter()
            .filter(|r| r.asserted)
            .map(|r| r.ratio + 3.0 * r.ratio_stderr - (r.bound - r.grid_slack))
            .fold(f64::INFINITY, f64::min);
        out.push(Scenario {
            name: "poa sweep".into(),
            structure: None,
            setting: Setting::Described {
                text: format!(
                    "{} random instances, {} not converged",
                    cfg.instances, sweep.flagged
                ),
            },
            tfm: Some("fpa-eq".into()),
            strategies: "discretized BNE".into(),
            metrics: vec![
                Metric::new(
                    "smallest margin over the guarantee",
                    Tag::Paper,
                    Target::AtLeast { bound: 0.0 },
                    Realized::Float(worst),
                ),
            ],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tightness_draw_inverts_the_cdf() {
        assert_eq!(tightness_draw(0.2), 0.0);
        assert_eq!(tightness_draw(1.0 / E), 0.0);
        let x = tightness_draw(0.9);
        let f = 1.0 / (E * (1.0 - x));
        assert!((f - 0.9).abs() < 1e-12);
        assert!((tightness_draw(1.0) - (1.0 - 1.0 / E)).abs() < 1e-12);
    }

    #[test]
    fn tightness_tie_favors_first_user() {
        let m = FeasibilityMatroid::from_structure(&tightness_structure());
        assert_eq!(induced_allocation(&m, &[0.0, 0.0, 0.0]), vec![true, false, false]);
        assert_eq!(induced_allocation(&m, &[0.0, 0.3, 0.3]), vec![false, true, false]);
    }

    #[test]
    fn tightness_small_run() {
        let rep = run_tightness(50_000, 3);
        assert_eq!(rep.opt, 1.0);
        assert!((rep.welfare - (1.0 - 1.0 / E)).abs() < 0.01);
    }

    #[test]
    fn shapley_variant_ratio() {
        let eps = Rational::new(1, 1000);
        let row = fpa_shapley_variant(10, eps).unwrap();
        assert!(row.holds);
        assert_eq!(row.exact_ratio.unwrap().0, Rational::new(10_001, 19_001));
    }

    #[test]
    fn serial_and_bad_nash_halve_welfare() {
        assert!(serial_dictatorship_instance().holds);
        assert!(fpa_eq_bad_nash().unwrap().holds);
    }

    #[test]
    fn lb1_classifications() {
        let grid = lb1_default_grid();
        let label = |t: Tfm| check_lb1_construction(&t, &grid).unwrap().verdict.label();
        assert_eq!(label(Tfm::spa_eq()), "strong bpic fails");
        assert_eq!(label(Tfm::fpa_eq()), "dsic fails");
        assert_eq!(label(Tfm::reserve_eq(lb1_reserve()).unwrap()), "confirms nothing");
    }

    #[test]
    fn lb2_quantities() {
        let rep = check_lb2_construction(10_000);
        assert_eq!(sig4(rep.sigma_utility_v2), sig4(0.003828125));
        assert_eq!(sig4(rep.deviation_utility), sig4(0.24));
        assert!(rep.step_a_holds && rep.win_bound_holds && rep.step_b_holds);
        assert!(rep.payment_target_error < 1e-9);
    }

    #[test]
    fn metric_pass_rules() {
        let m = Metric::new("x", Tag::Trivial, Target::Below { bound: 1.0 }, Realized::Float(0.5));
        assert!(m.pass());
        let m = Metric::new(
            "x",
            Tag::Trivial,
            Target::SigFigs { value: 0.003828 },
            Realized::Float(0.0038281),
        );
        assert!(m.pass());
        let m = Metric::new(
            "x",
            Tag::Trivial,
            Target::Exactly {
                value: Exact(Rational::new(1, 2)),
            },
            Realized::Float(0.5),
        );
        assert!(!m.pass());
    }
}
