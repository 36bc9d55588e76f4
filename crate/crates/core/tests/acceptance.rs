use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;

use tfmlab::bp_game::{is_nash, strong_bpic_check, Deviation, SearchParams};
use tfmlab::game::{Allocation, GameStructure, Profile};
use tfmlab::matroid::{audit_all_structures, FeasibilityMatroid};
use tfmlab::mechanisms::{run_inclusion, Tfm};
use tfmlab::rng::{chunk_rng, Rng as ChaRng};
use tfmlab::scenarios::{
    agrees_to_sig_figs, check_lb1_construction, check_lb2_construction, fpa_eq_bad_nash, fpa_shapley_variant,
    lb1_default_grid, lb1_reserve, run_poa_sweep, run_tightness, serial_dictatorship_instance,
    tightness_draw, tightness_structure, PoaSweepConfig,
};
use tfmlab::user_game::{
    expected_welfare, smooth_sampler_ks, smoothness_check, solve_bne, BneParams, BneProblem,
    Marginal, ValuationModel, SMOOTHNESS_LAMBDA, SMOOTHNESS_MU,
};
use tfmlab::Rational;

const SEED: u64 = 20_240_601;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);
type Family = Vec<(GameStructure, Vec<i64>)>;
type WitnessKind<'a> = &'a dyn Fn(&Deviation, &Allocation) -> bool;

fn r(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

fn random_structure(rng: &mut ChaRng, max_n: usize, max_m: usize, max_k: usize) -> GameStructure {
    let n = rng.random_range(1..=max_n);
    let m = rng.random_range(1..=max_m);
    let k = rng.random_range(1..=max_k);
    let eligibility = (0..m)
        .map(|_| (0..n).filter(|_| rng.random_bool(0.6)).collect())
        .collect();
    GameStructure::new(n, eligibility, k).expect("indices are in range")
}

fn quarter_profile(rng: &mut ChaRng, n: usize, max: i64) -> Vec<Rational> {
    (0..n).map(|_| r(rng.random_range(0..=4 * max), 4)).collect()
}

fn strong_bpic_of_fpa_eq() -> Outcome {
    let start = Instant::now();
    let tfm = Tfm::fpa_eq();
    let params = SearchParams::default();
    let mut profiles = 0u64;
    for i in 0..200u64 {
        let mut rng = chunk_rng(SEED, 0x41, i);
        let gs = random_structure(&mut rng, 5, 3, 2);
        let bids = Profile::new(quarter_profile(&mut rng, gs.n_users(), 2)).unwrap();
        let v = strong_bpic_check(&tfm, &gs, &bids, &params).map_err(|e| format!("instance {i}: {e}"))?;
        if !v.strong_bpic {
            return Err(format!("instance {i} violates strong BPIC: {gs:?} at {bids:?}"));
        }
        profiles += v.profiles_examined;
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(300) {
        return Err(format!("took {elapsed:.1?}"));
    }
    Ok(format!("200 instances, {profiles} joint profiles, 0 violations, {elapsed:.1?}"))
}

fn bpic_failures() -> Outcome {
    let mut lines = Vec::new();
    // A BP adds its own transaction to lift the price it collects.
    let shill_family: Family = vec![
        (GameStructure::symmetric(1, 1, 2), vec![5]),
        (GameStructure::symmetric(2, 1, 2), vec![5, 1]),
        (GameStructure::symmetric(2, 1, 2), vec![5, 3]),
        (GameStructure::symmetric(2, 1, 3), vec![5, 3]),
        (GameStructure::symmetric(3, 1, 2), vec![6, 4, 1]),
    ];
    // A BP copies a high bid another BP already included.
    let redundant_family: Family = vec![
        (GameStructure::symmetric(2, 2, 1), vec![10, 1]),
        (GameStructure::symmetric(3, 3, 1), vec![10, 1, 1]),
        (GameStructure::symmetric(3, 2, 1), vec![9, 2, 1]),
    ];
    let shill = |d: &Deviation, _: &Allocation| d.block.txs().iter().any(|t| t.shill_owner().is_some());
    let redundant = |d: &Deviation, a: &Allocation| {
        d.block.users().any(|u| {
            (0..a.n_bps()).any(|j| j != d.bp && a.block(j).users().any(|w| w == u))
        })
    };
    let cases: [(Tfm, &Family, WitnessKind); 3] = [
        (Tfm::spa_eq(), &shill_family, &shill),
        (Tfm::spa_shapley(), &shill_family, &shill),
        (Tfm::fpa_shapley(), &redundant_family, &redundant),
    ];
    let params = SearchParams::default();
    for (tfm, family, kind) in cases {
        let mut slowest = Duration::ZERO;
        for (gs, bids) in family {
            let bids = Profile::from_integers(bids);
            let alloc = run_inclusion(&tfm, gs, &bids);
            let start = Instant::now();
            let v = is_nash(&tfm, gs, &bids, &alloc, &params).map_err(|e| e.to_string())?;
            let took = start.elapsed();
            slowest = slowest.max(took);
            let dev = v
                .deviation
                .ok_or_else(|| format!("{tfm}: no deviation at {gs:?} bids {bids:?}"))?;
            if took > Duration::from_secs(1) {
                return Err(format!("{tfm}: search took {took:.2?}"));
            }
            if !dev.replays(&tfm, gs, &bids, &alloc) || dev.gain.0 <= Rational::zero() {
                return Err(format!("{tfm}: witness does not replay"));
            }
            if !kind(&dev, &alloc) {
                return Err(format!("{tfm}: unexpected witness {}", dev.block));
            }
        }
        lines.push(format!("{tfm} {}/{} (max {slowest:.0?})", family.len(), family.len()));
    }
    Ok(lines.join(", "))
}

fn tightness() -> Outcome {
    let rep = run_tightness(1_000_000, SEED);
    let target = 1.0 - (-1.0f64).exp();
    // The optimum is exactly 1 at every draw: user 0 has value 1 and the rest
    // share one slot with values below 1.
    let gs = tightness_structure();
    let m = FeasibilityMatroid::from_structure(&gs);
    for u in [0.0, 0.2, 0.5, 0.9, 0.999] {
        let x = Rational::approximate_float(tightness_draw(u)).unwrap_or_else(Rational::zero);
        let v = [Rational::one(), x, x];
        if m.max_weight_basis(&v).weight(&v) != Rational::one() {
            return Err(format!("optimum at x = {x} is not 1"));
        }
    }
    if rep.opt != 1.0 {
        return Err(format!("sampled optimum {}", rep.opt));
    }
    let gap = (rep.welfare - target).abs();
    if gap > 0.003 {
        return Err(format!("welfare {:.6} misses {target:.6} by {gap:.6}", rep.welfare));
    }
    Ok(format!(
        "welfare {:.6} +- {:.1e} vs {target:.6}, optimum 1, {} samples",
        rep.welfare, rep.welfare_stderr, rep.samples
    ))
}

fn welfare_loss() -> Outcome {
    let half = r(1, 2);
    let serial = serial_dictatorship_instance();
    if serial.exact_ratio.map(|e| e.0) != Some(half) {
        return Err(format!("serial dictatorship ratio {:?}", serial.exact_ratio));
    }
    let bad = fpa_eq_bad_nash().map_err(|e| e.to_string())?;
    if bad.exact_ratio.map(|e| e.0) != Some(half) || !bad.holds {
        return Err("bad Nash instance is not a dominated half-welfare equilibrium".into());
    }
    let eps = r(1, 1000);
    let mut ratios = Vec::new();
    for m in [2i64, 10, 100] {
        let row = fpa_shapley_variant(m as usize, eps).map_err(|e| e.to_string())?;
        let got = row.exact_ratio.expect("exact").0;
        // One confirmed transaction worth m + eps against m + eps + (m - 1).
        let oracle = (Rational::from_integer(m) + eps) / (Rational::from_integer(2 * m - 1) + eps);
        if got != oracle || (got - half).abs() > r(1, m) {
            return Err(format!("m = {m}: ratio {got}, expected {oracle}"));
        }
        ratios.push(format!("m={m}: {:.4}", got.to_f64().unwrap()));
    }
    Ok(format!("serial 1/2, bad Nash 1/2 dominated, variant {}", ratios.join(" ")))
}

fn smoothness() -> Outcome {
    let mut worst = f64::INFINITY;
    for t in 0..500u64 {
        let mut rng = chunk_rng(SEED, 0x45, t);
        let gs = random_structure(&mut rng, 6, 3, 2);
        let m = FeasibilityMatroid::from_structure(&gs);
        let v = quarter_profile(&mut rng, gs.n_users(), 4);
        let b = quarter_profile(&mut rng, gs.n_users(), 4);
        let rep = smoothness_check(&m, &v, &b, 10_000, SEED + t, SMOOTHNESS_LAMBDA, SMOOTHNESS_MU);
        let slack = rep.margin + 3.0 * rep.lhs_stderr;
        if slack < 0.0 {
            return Err(format!("trial {t}: margin {:.4} at v {v:?} b {b:?}", rep.margin));
        }
        worst = worst.min(slack);
    }
    let ks = smooth_sampler_ks(1.0, 100_000, SEED);
    if ks >= 0.01 {
        return Err(format!("sampler KS distance {ks:.4}"));
    }
    Ok(format!("500 trials, min margin + 3se {worst:.4}, KS {ks:.4}"))
}

fn matroid_layer() -> Outcome {
    let start = Instant::now();
    let all = audit_all_structures(6, 3, 2, SEED).map_err(|e| e.to_string())?;
    if let Some((gs, rep)) = all.audits.iter().find(|(_, r)| !r.passed()) {
        return Err(format!("{gs:?}: {}", rep.first_failure.clone().unwrap_or_default()));
    }
    let weights: usize = all.audits.iter().map(|(_, r)| r.weight_vectors).sum();
    Ok(format!(
        "{} structures, {} distinct families, {weights} weight vectors, min covering slack {}, {:.1?}",
        all.structures,
        all.audits.len(),
        all.min_covering_slack().unwrap_or_default(),
        start.elapsed()
    ))
}

fn symmetric_efficiency() -> Outcome {
    let params = BneParams::default();
    let mut worst_ratio = f64::INFINITY;
    let mut worst_eps = 0.0f64;
    let mut solved = 0;
    for n in 1..=4 {
        for bps in 1..=2 {
            for k in 1..=2 {
                let gs = GameStructure::symmetric(n, bps, k);
                let m = FeasibilityMatroid::from_structure(&gs);
                let model = ValuationModel::iid(n, Marginal::uniform(0.0, 1.0));
                let problem = BneProblem::new(&m, model.clone(), &params).map_err(|e| e.to_string())?;
                let rep = solve_bne(&problem, &params).map_err(|e| e.to_string())?;
                if !rep.converged || rep.epsilon > 1e-6 {
                    return Err(format!("n={n} m={bps} k={k}: epsilon {:.2e}", rep.epsilon));
                }
                let est = expected_welfare(&m, &model, &rep.strategies, 100_000, SEED);
                if est.ratio < 0.99 {
                    return Err(format!("n={n} m={bps} k={k}: ratio {:.4}", est.ratio));
                }
                worst_ratio = worst_ratio.min(est.ratio);
                worst_eps = worst_eps.max(rep.epsilon);
                solved += 1;
            }
        }
    }
    let sweep = run_poa_sweep(&PoaSweepConfig {
        seed: SEED,
        ..PoaSweepConfig::default()
    })
    .map_err(|e| e.to_string())?;
    if !sweep.all_pass {
        let bad: Vec<_> = sweep.rows.iter().filter(|r| !r.pass).map(|r| r.instance).collect();
        return Err(format!("sweep instances below the guarantee: {bad:?}"));
    }
    let asserted = sweep.rows.iter().filter(|r| r.asserted).count();
    Ok(format!(
        "{solved} structures, min ratio {worst_ratio:.4}, max epsilon {worst_eps:.1e}; \
         sweep {asserted}/{} rows above the guarantee, {} flagged",
        sweep.rows.len(),
        sweep.flagged
    ))
}

fn sig4(x: f64) -> String {
    format!("{x:.3e}")
}

fn impossibility() -> Outcome {
    // Exact values for U[0,100] against U[0,1] and U[0,3/2] against U[0,100].
    let pr_v1 = r(7, 8) / r(100, 1);
    let util_v2 = pr_v1 * (r(7, 8) - r(7, 16));
    let win_cap = util_v2 / (r(7, 8) - r(3, 4));
    let dev_util = (r(3, 4) - r(1, 2)) * (Rational::one() - r(1, 25));
    let sigma_prime = r(3, 4) / r(100, 1) * (r(3, 4) - r(3, 8));
    let f = |x: Rational| x.to_f64().unwrap();

    let fine = check_lb2_construction(10_000);
    let coarse = check_lb2_construction(5_000);
    let pairs = [
        ("Pr[v1 < 7/8]", fine.pr_v1_below, coarse.pr_v1_below, f(pr_v1)),
        ("utility at 7/8", fine.sigma_utility_v2, coarse.sigma_utility_v2, f(util_v2)),
        ("win cap", fine.win_probability_cap, coarse.win_probability_cap, f(win_cap)),
        ("deviation utility", fine.deviation_utility, coarse.deviation_utility, f(dev_util)),
        ("utility at 3/4", fine.sigma_prime_utility_v1, coarse.sigma_prime_utility_v1, f(sigma_prime)),
    ];
    for (name, a, b, exact) in pairs {
        if !agrees_to_sig_figs(a, exact, 4) || !agrees_to_sig_figs(b, exact, 4) {
            return Err(format!("{name}: {a} (half grid {b}), exact {exact}"));
        }
    }
    if format!("{:.2e}", fine.sigma_utility_v2) != "3.83e-3" || fine.sigma_utility_v2 >= 1.0 / 200.0 {
        return Err(format!("utility at 7/8 is {}", fine.sigma_utility_v2));
    }
    if !(fine.win_probability_cap < 1.0 / 25.0 && fine.step_a_holds && fine.win_bound_holds && fine.step_b_holds) {
        return Err("deviation steps fail".into());
    }
    if !agrees_to_sig_figs(fine.deviation_utility, 6.0 / 25.0, 4) || fine.sigma_prime_utility_v1 > 0.01 {
        return Err("6/25 against 1/100 gap not reproduced".into());
    }

    let grid = lb1_default_grid();
    let cases = [
        (Tfm::spa_eq(), "strong bpic fails"),
        (Tfm::fpa_eq(), "dsic fails"),
        (Tfm::reserve_eq(lb1_reserve()).unwrap(), "confirms nothing"),
    ];
    let mut labels = Vec::new();
    for (tfm, expected) in cases {
        let rep = check_lb1_construction(&tfm, &grid).map_err(|e| e.to_string())?;
        if rep.verdict.label() != expected {
            return Err(format!("{tfm}: {} instead of {expected}", rep.verdict.label()));
        }
        labels.push(format!("{tfm}: {expected}"));
    }
    Ok(format!(
        "lb2 {} < 1/200, cap {} < 1/25, {} vs {} <= 1/100; lb1 {}",
        sig4(fine.sigma_utility_v2),
        sig4(fine.win_probability_cap),
        sig4(fine.deviation_utility),
        sig4(fine.sigma_prime_utility_v1),
        labels.join(", ")
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("strong BPIC of FPA-EQ on random instances", strong_bpic_of_fpa_eq),
        ("BPIC deviation witnesses", bpic_failures),
        ("tightness of the welfare guarantee", tightness),
        ("welfare-loss examples", welfare_loss),
        ("smoothness inequality", smoothness),
        ("exhaustive matroid audit", matroid_layer),
        ("symmetric efficiency and PoA sweep", symmetric_efficiency),
        ("impossibility checkers", impossibility),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {} PASS {name} ({took:.1?}): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL {name} ({took:.1?}): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {}/8 criteria pass", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
