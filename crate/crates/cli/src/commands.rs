use rand::Rng as _;
use serde::Serialize;
use serde_json::{json, Value};

use tfmlab::bp_game::{strong_bpic_check, BpGameError, SearchParams, ShillGrid};
use tfmlab::game::{GameStructure, Profile};
use tfmlab::matroid::{audit, weight_battery, audit_all_structures, FeasibilityMatroid};
use tfmlab::rational::format_rational;
use tfmlab::rng::chunk_rng;
use tfmlab::scenarios::{
    paper_suite, run_poa_sweep, suite_rows, PoaSweepConfig, ScenarioError, SuiteOptions,
};
use tfmlab::user_game::{
    dsic_check, expected_welfare, linspace, smooth_sampler_ks, smoothness_check, solve_bne,
    BneError, BneProblem, SMOOTHNESS_LAMBDA, SMOOTHNESS_MU,
};
use tfmlab::Rational;

use crate::config::{ScenarioConfig, Valuations};

const STREAM_CLI: u64 = 0x20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    CheckBpic,
    CheckDsic,
    SolveBne,
    Poa,
    Smoothness,
    MatroidVerify,
    PaperSuite,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::CheckBpic => "check-bpic",
            Command::CheckDsic => "check-dsic",
            Command::SolveBne => "solve-bne",
            Command::Poa => "poa",
            Command::Smoothness => "smoothness",
            Command::MatroidVerify => "matroid-verify",
            Command::PaperSuite => "paper-suite",
        }
    }
}

/// Result of a command before it is written out.
pub struct Artifacts {
    pub pass: bool,
    pub result: Value,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug)]
pub enum Failure {
    Guard(Value),
    Config(Vec<crate::config::Issue>),
}

impl From<BpGameError> for Failure {
    fn from(e: BpGameError) -> Self {
        Failure::Guard(json!({ "error": e.to_string(), "detail": e }))
    }
}

impl From<BneError> for Failure {
    fn from(e: BneError) -> Self {
        Failure::Guard(json!({ "error": e.to_string() }))
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::BpGame(e) => e.into(),
            ScenarioError::Bne(e) => e.into(),
            other => Failure::Guard(json!({ "error": other.to_string() })),
        }
    }
}

fn config_error(path: &str, message: &str) -> Failure {
    Failure::Config(vec![crate::config::Issue {
        path: path.into(),
        message: message.into(),
    }])
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

fn render(values: &[Rational]) -> String {
    values.iter().map(format_rational).collect::<Vec<_>>().join(" ")
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("reports serialize")
}

pub fn dispatch(cmd: Command, cfg: &ScenarioConfig) -> Result<Artifacts, Failure> {
    match cmd {
        Command::CheckBpic => check_bpic(cfg),
        Command::CheckDsic => check_dsic(cfg),
        Command::SolveBne => solve(cfg),
        Command::Poa => poa(cfg),
        Command::Smoothness => smoothness(cfg),
        Command::MatroidVerify => matroid_verify(cfg),
        Command::PaperSuite => suite(cfg),
    }
}

fn bid_profiles(cfg: &ScenarioConfig) -> Vec<Profile> {
    if let Some(b) = &cfg.bids {
        return vec![b.clone()];
    }
    if let Some(Valuations::Profile(v)) = &cfg.valuations {
        return vec![v.clone()];
    }
    let n = cfg.game.n_users();
    (0..cfg.sampling.instances.unwrap_or(1))
        .map(|i| {
            let mut rng = chunk_rng(cfg.sampling.seed, STREAM_CLI, i as u64);
            let v = (0..n).map(|_| Rational::from_integer(rng.random_range(0..=5))).collect();
            Profile::new(v).expect("draws are nonnegative")
        })
        .collect()
}

fn search_params(cfg: &ScenarioConfig) -> SearchParams {
    SearchParams {
        shill_budget: cfg.search.shill_budget,
        grid: match &cfg.search.shill_grid {
            Some(g) => ShillGrid::Explicit(g.clone()),
            None => ShillGrid::Default,
        },
        profile_guard: cfg.search.profile_guard,
    }
}

fn check_bpic(cfg: &ScenarioConfig) -> Result<Artifacts, Failure> {
    let params = search_params(cfg);
    let mut rows = Vec::new();
    let mut first_failure = None;
    let mut checked = 0;
    for (i, bids) in bid_profiles(cfg).iter().enumerate() {
        let v = strong_bpic_check(&cfg.tfm, &cfg.game, bids, &params)?;
        checked += 1;
        let witness = match (&v.deviation, &v.counter_equilibrium) {
            (Some(d), _) => serde_json::to_string(d).expect("serializes"),
            (None, Some(c)) => serde_json::to_string(c).expect("serializes"),
            _ => String::new(),
        };
        rows.push(vec![
            (i + 1).to_string(),
            render(bids.as_slice()),
            v.is_nash.to_string(),
            v.strong_bpic.to_string(),
            v.profiles_examined.to_string(),
            v.nash_profiles.to_string(),
            v.equivalent_nash_profiles.to_string(),
            witness,
        ]);
        if !v.strong_bpic && first_failure.is_none() {
            first_failure = Some(json!({ "bids": bids, "verdict": v }));
        }
    }
    Ok(Artifacts {
        pass: first_failure.is_none(),
        result: json!({
            "tfm": cfg.tfm.to_string(),
            "profiles_checked": checked,
            "strong_bpic": first_failure.is_none(),
            "first_failure": first_failure,
        }),
        header: header(&[
            "instance",
            "bids",
            "is_nash",
            "strong_bpic",
            "profiles_examined",
            "nash_profiles",
            "equivalent_nash_profiles",
            "witness",
        ]),
        rows,
    })
}

fn check_dsic(cfg: &ScenarioConfig) -> Result<Artifacts, Failure> {
    let grid = cfg
        .grid
        .as_ref()
        .ok_or_else(|| config_error("$.grid", "check-dsic needs a value grid"))?;
    let bid_grid = cfg.bid_grid.as_ref().unwrap_or(grid);
    let v = dsic_check(&cfg.tfm, &cfg.game, grid, bid_grid)?;
    let rows = v
        .witness
        .iter()
        .map(|w| {
            vec![
                (w.user + 1).to_string(),
                format_rational(&w.value.0),
                format_rational(&w.bid.0),
                w.bids.iter().map(|b| format_rational(&b.0)).collect::<Vec<_>>().join(" "),
                format_rational(&w.truthful_utility.0),
                format_rational(&w.deviation_utility.0),
            ]
        })
        .collect();
    Ok(Artifacts {
        pass: v.dsic,
        result: json!({ "tfm": cfg.tfm.to_string(), "verdict": v }),
        header: header(&["user", "value", "bid", "bids", "truthful_utility", "deviation_utility"]),
        rows,
    })
}

fn model(cfg: &ScenarioConfig) -> Result<&tfmlab::user_game::ValuationModel, Failure> {
    match &cfg.valuations {
        Some(Valuations::Model(m)) => Ok(m),
        _ => Err(config_error("$.valuations", "this command needs a valuation distribution")),
    }
}

fn solve(cfg: &ScenarioConfig) -> Result<Artifacts, Failure> {
    let model = model(cfg)?;
    let matroid = FeasibilityMatroid::from_structure(&cfg.game);
    let problem = BneProblem::new(&matroid, model.clone(), &cfg.solver)?;
    let report = solve_bne(&problem, &cfg.solver)?;
    let samples = cfg.sampling.samples.unwrap_or(100_000);
    let welfare = expected_welfare(&matroid, model, &report.strategies, samples, cfg.sampling.seed);
    let marginals = model.marginals();
    let mut rows = Vec::new();
    for (i, s) in report.strategies.iter().enumerate() {
        let types = match problem.type_grid().get(i) {
            Some(t) => t.clone(),
            None => match &marginals {
                Some(ms) => match ms[i] {
                    tfmlab::user_game::Marginal::Discrete { points, .. } => points.clone(),
                    m => linspace(m.lower(), m.upper(), cfg.solver.v_points),
                },
                None => linspace(0.0, model.upper(), cfg.solver.v_points),
            },
        };
        for t in types {
            rows.push(vec![(i + 1).to_string(), format!("{t}"), format!("{}", s.bid(t))]);
        }
    }
    Ok(Artifacts {
        pass: report.converged,
        result: json!({ "bne": report, "welfare": welfare }),
        header: header(&["user", "type", "bid"]),
        rows,
    })
}

fn poa(cfg: &ScenarioConfig) -> Result<Artifacts, Failure> {
    let sweep_cfg = PoaSweepConfig {
        instances: cfg.sampling.instances.unwrap_or(8),
        max_users: cfg.sweep.max_users,
        max_bps: cfg.sweep.max_bps,
        max_block: cfg.sweep.max_block,
        seed: cfg.sampling.seed,
        samples: cfg.sampling.samples.unwrap_or(20_000),
        bne: cfg.solver.clone(),
        tightness_samples: (cfg.sweep.tightness_samples > 0).then_some(cfg.sweep.tightness_samples),
    };
    let sweep = run_poa_sweep(&sweep_cfg)?;
    let rows = sweep
        .rows
        .iter()
        .map(|r| {
            vec![
                r.instance.to_string(),
                r.n_users.to_string(),
                r.n_bps.to_string(),
                r.block_size.to_string(),
                r.eligibility.clone(),
                r.prior.clone(),
                r.method.clone(),
                r.converged.to_string(),
                format!("{}", r.epsilon),
                format!("{}", r.welfare),
                format!("{}", r.opt),
                format!("{}", r.ratio),
                format!("{}", r.ratio_stderr),
                format!("{}", r.bound),
                format!("{}", r.grid_slack),
                r.asserted.to_string(),
                r.pass.to_string(),
            ]
        })
        .collect();
    Ok(Artifacts {
        pass: sweep.all_pass,
        result: json!({ "instances": sweep.rows.len(), "flagged": sweep.flagged, "all_pass": sweep.all_pass }),
        header: header(&[
            "instance",
            "n_users",
            "n_bps",
            "block_size",
            "eligibility",
            "prior",
            "method",
            "converged",
            "epsilon",
            "welfare",
            "opt",
            "ratio",
            "ratio_stderr",
            "bound",
            "grid_slack",
            "asserted",
            "pass",
        ]),
        rows,
    })
}

fn random_profile(rng: &mut tfmlab::rng::Rng, n: usize) -> Vec<Rational> {
    (0..n).map(|_| Rational::new(rng.random_range(0..=16), 4)).collect()
}

fn smoothness(cfg: &ScenarioConfig) -> Result<Artifacts, Failure> {
    let matroid = FeasibilityMatroid::from_structure(&cfg.game);
    let n = cfg.game.n_users();
    let samples = cfg.sampling.samples.unwrap_or(10_000);
    let fixed = match (&cfg.valuations, &cfg.bids) {
        (Some(Valuations::Profile(v)), Some(b)) => Some((v.as_slice().to_vec(), b.as_slice().to_vec())),
        _ => None,
    };
    let trials = if fixed.is_some() { 1 } else { cfg.sampling.instances.unwrap_or(100) };
    let mut rows = Vec::new();
    let mut all_hold = true;
    let mut worst = f64::INFINITY;
    for t in 0..trials {
        let (v, b) = fixed.clone().unwrap_or_else(|| {
            let mut rng = chunk_rng(cfg.sampling.seed, STREAM_CLI + 1, t as u64);
            (random_profile(&mut rng, n), random_profile(&mut rng, n))
        });
        let seed = cfg.sampling.seed.wrapping_add(t as u64);
        let rep = smoothness_check(&matroid, &v, &b, samples, seed, SMOOTHNESS_LAMBDA, SMOOTHNESS_MU);
        all_hold &= rep.holds;
        worst = worst.min(rep.margin + 3.0 * rep.lhs_stderr);
        rows.push(vec![
            (t + 1).to_string(),
            render(&v),
            render(&b),
            format!("{}", rep.lhs),
            format!("{}", rep.lhs_stderr),
            format!("{}", rep.rhs),
            format!("{}", rep.margin),
            rep.holds.to_string(),
        ]);
    }
    let ks = smooth_sampler_ks(1.0, 100_000, cfg.sampling.seed);
    Ok(Artifacts {
        pass: all_hold && ks < 0.01,
        result: json!({
            "trials": trials,
            "samples_per_user": samples,
            "all_hold": all_hold,
            "worst_margin_plus_3se": worst,
            "sampler_ks": ks,
        }),
        header: header(&["trial", "v", "b", "lhs", "lhs_stderr", "rhs", "margin", "holds"]),
        rows,
    })
}

fn eligibility_text(gs: &GameStructure) -> String {
    gs.eligibility()
        .iter()
        .map(|s| s.iter().map(|u| (u + 1).to_string()).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("|")
}

fn matroid_verify(cfg: &ScenarioConfig) -> Result<Artifacts, Failure> {
    let h = header(&[
        "n_users",
        "n_bps",
        "block_size",
        "eligibility",
        "independent_sets",
        "weight_vectors",
        "axioms",
        "greedy",
        "lex_optimal",
        "covering",
        "min_covering_slack",
    ]);
    let row = |gs: &GameStructure, r: &tfmlab::matroid::AuditReport| {
        vec![
            gs.n_users().to_string(),
            gs.n_bps().to_string(),
            gs.block_size().to_string(),
            eligibility_text(gs),
            r.independent_sets.to_string(),
            r.weight_vectors.to_string(),
            r.axioms.to_string(),
            r.greedy_matches_brute_force.to_string(),
            r.lex_optimal.to_string(),
            r.covering.to_string(),
            r.min_covering_slack.clone().unwrap_or_default(),
        ]
    };
    let too_large = |e: tfmlab::matroid::MatroidError| Failure::Guard(json!({ "error": e.to_string() }));
    if cfg.exhaustive {
        let all = audit_all_structures(
            cfg.game.n_users(),
            cfg.game.n_bps(),
            cfg.game.block_size(),
            cfg.sampling.seed,
        )
        .map_err(too_large)?;
        let rows = all.audits.iter().map(|(gs, r)| row(gs, r)).collect();
        return Ok(Artifacts {
            pass: all.passed(),
            result: json!({
                "structures": all.structures,
                "families": all.audits.len(),
                "failures": all.failures(),
                "min_covering_slack": all.min_covering_slack(),
            }),
            header: h,
            rows,
        });
    }
    let matroid = FeasibilityMatroid::from_structure(&cfg.game);
    let mut weights = weight_battery(cfg.game.n_users(), cfg.sampling.seed);
    for p in [&cfg.bids, &match &cfg.valuations {
        Some(Valuations::Profile(v)) => Some(v.clone()),
        _ => None,
    }]
    .into_iter()
    .flatten()
    {
        weights.push(p.as_slice().to_vec());
    }
    let report = audit(&matroid, &weights).map_err(too_large)?;
    Ok(Artifacts {
        pass: report.passed(),
        result: to_value(&report),
        header: h,
        rows: vec![row(&cfg.game, &report)],
    })
}

fn suite(cfg: &ScenarioConfig) -> Result<Artifacts, Failure> {
    let mut opts = SuiteOptions {
        seed: cfg.sampling.seed,
        ..SuiteOptions::default()
    };
    if let Some(s) = cfg.sampling.samples {
        opts.tightness_samples = s;
    }
    let scenarios = paper_suite(&opts)?;
    let table = suite_rows(&scenarios);
    let failing: Vec<_> = table.iter().filter(|r| !r.pass).map(|r| format!("{}: {}", r.name, r.metric)).collect();
    let rows = table
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                r.metric.clone(),
                r.tag.as_str().to_string(),
                r.target.clone(),
                r.realized.clone(),
                r.tolerance.clone(),
                r.pass.to_string(),
            ]
        })
        .collect();
    Ok(Artifacts {
        pass: failing.is_empty(),
        result: json!({ "rows": table.len(), "failing": failing, "scenarios": scenarios }),
        header: header(&["name", "metric", "tag", "target", "realized", "tolerance", "pass"]),
        rows,
    })
}
