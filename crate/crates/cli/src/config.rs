//! JSON configuration: parsing, validation and overrides.
//!
//! Users are numbered from 1 in configuration files. Exact quantities may be
//! written as JSON numbers or as `"p/q"` strings.

use std::fmt;

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use tfmlab::game::{GameStructure, Profile};
use tfmlab::mechanisms::{ConfirmationRule, DistributionRule, InclusionRule, PaymentRule, Tfm};
use tfmlab::rational::{parse_rational, to_f64};
use tfmlab::user_game::{BneParams, Marginal, ValuationModel};
use tfmlab::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Valuations {
    Model(ValuationModel),
    Profile(Profile),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Search {
    pub shill_budget: usize,
    pub shill_grid: Option<Vec<Rational>>,
    pub profile_guard: u128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sampling {
    pub seed: u64,
    pub samples: Option<usize>,
    pub instances: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub max_users: usize,
    pub max_bps: usize,
    pub max_block: usize,
    pub tightness_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub game: GameStructure,
    pub tfm: Tfm,
    pub valuations: Option<Valuations>,
    pub bids: Option<Profile>,
    pub grid: Option<Vec<Rational>>,
    pub bid_grid: Option<Vec<Rational>>,
    pub search: Search,
    pub solver: BneParams,
    pub sampling: Sampling,
    pub sweep: Sweep,
    pub exhaustive: bool,
    pub out_dir: Option<String>,
    /// SHA-256 of the effective document after overrides.
    pub hash: String,
}

/// Values from the command line that replace fields of the document.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub out: Option<String>,
}

pub fn parse_config_with(text: &str, overrides: &Overrides) -> Result<ScenarioConfig, Vec<Issue>> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| {
        vec![Issue {
            path: "$".into(),
            message: format!("invalid JSON: {e}"),
        }]
    })?;
    apply_overrides(&mut doc, overrides);
    let mut p = Parser::default();
    let cfg = p.document(&doc);
    match cfg {
        Some(cfg) if p.issues.is_empty() => Ok(cfg),
        _ => Err(p.issues),
    }
}

fn apply_overrides(doc: &mut Value, o: &Overrides) {
    let Value::Object(root) = doc else { return };
    let mut set = |section: &str, key: &str, v: Value| {
        let entry = root
            .entry(section.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
        if let Value::Object(m) = entry {
            m.insert(key.to_string(), v);
        }
    };
    if let Some(seed) = o.seed {
        set("sampling", "seed", Value::from(seed));
    }
    if let Some(samples) = o.samples {
        set("sampling", "samples", Value::from(samples));
    }
    if let Some(out) = &o.out {
        set("output", "dir", Value::from(out.clone()));
    }
}

/// SHA-256 of the compact document, minus the `output` section.
pub fn document_hash(doc: &Value) -> String {
    let mut doc = doc.clone();
    if let Some(m) = doc.as_object_mut() {
        m.remove("output");
    }
    let canonical = serde_json::to_string(&doc).expect("JSON values always serialize");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Default)]
struct Parser {
    issues: Vec<Issue>,
}

fn join(path: &str, key: &str) -> String {
    format!("{path}.{key}")
}

fn index(path: &str, i: usize) -> String {
    format!("{path}[{i}]")
}

impl Parser {
    fn issue(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue {
            path: path.into(),
            message: message.into(),
        });
    }

    fn object<'a>(&mut self, v: &'a Value, path: &str, allowed: &[&str]) -> Option<&'a Map<String, Value>> {
        match v {
            Value::Object(m) => {
                for key in m.keys() {
                    if !allowed.contains(&key.as_str()) {
                        self.issue(join(path, key), "unknown field");
                    }
                }
                Some(m)
            }
            _ => {
                self.issue(path, "expected an object");
                None
            }
        }
    }

    fn required<'a>(&mut self, m: &'a Map<String, Value>, path: &str, key: &str) -> Option<&'a Value> {
        let v = m.get(key);
        if v.is_none() {
            self.issue(join(path, key), "missing required field");
        }
        v
    }

    fn uint(&mut self, v: &Value, path: &str) -> Option<u64> {
        let n = v.as_u64();
        if n.is_none() {
            self.issue(path, "expected a nonnegative integer");
        }
        n
    }

    fn positive(&mut self, v: &Value, path: &str) -> Option<usize> {
        match self.uint(v, path)? {
            0 => {
                self.issue(path, "must be at least 1");
                None
            }
            n => Some(n as usize),
        }
    }

    fn rational(&mut self, v: &Value, path: &str) -> Option<Rational> {
        let text = match v {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            _ => {
                self.issue(path, "expected a number or a \"p/q\" string");
                return None;
            }
        };
        match parse_rational(&text) {
            Ok(r) => Some(r),
            Err(e) => {
                self.issue(path, e.to_string());
                None
            }
        }
    }

    fn nonnegative(&mut self, v: &Value, path: &str) -> Option<Rational> {
        let r = self.rational(v, path)?;
        if r < Rational::from_integer(0) {
            self.issue(path, "must be nonnegative");
            return None;
        }
        Some(r)
    }

    fn array<'a>(&mut self, v: &'a Value, path: &str) -> Option<&'a Vec<Value>> {
        let a = v.as_array();
        if a.is_none() {
            self.issue(path, "expected an array");
        }
        a
    }

    fn rationals(&mut self, v: &Value, path: &str) -> Option<Vec<Rational>> {
        let items = self.array(v, path)?;
        let parsed: Vec<Option<Rational>> = items
            .iter()
            .enumerate()
            .map(|(i, x)| self.nonnegative(x, &index(path, i)))
            .collect();
        parsed.into_iter().collect()
    }

    fn floats(&mut self, v: &Value, path: &str) -> Option<Vec<f64>> {
        self.rationals(v, path)
            .map(|rs| rs.iter().map(to_f64).collect())
    }

    fn document(&mut self, doc: &Value) -> Option<ScenarioConfig> {
        let root = self.object(
            doc,
            "$",
            &[
                "game", "tfm", "valuations", "bids", "grid", "bid_grid", "search", "solver",
                "sampling", "sweep", "matroid", "output",
            ],
        )?;
        let game = self.required(root, "$", "game").and_then(|v| self.game(v));
        let tfm = self.required(root, "$", "tfm").and_then(|v| self.tfm(v));
        let n = game.as_ref().map(GameStructure::n_users);
        let valuations = root
            .get("valuations")
            .map(|v| self.valuations(v, "$.valuations", n));
        let bids = root.get("bids").map(|v| self.profile(v, "$.bids", n));
        let grid = root.get("grid").map(|v| self.rationals(v, "$.grid"));
        let bid_grid = root.get("bid_grid").map(|v| self.rationals(v, "$.bid_grid"));
        let search = self.search(root.get("search"));
        let solver = self.solver(root.get("solver"));
        let sampling = match root.get("sampling") {
            Some(v) => self.sampling(v),
            None => {
                self.issue("$.sampling.seed", "missing required field");
                None
            }
        };
        let sweep = self.sweep(root.get("sweep"));
        let exhaustive = self.matroid(root.get("matroid"));
        let out_dir = self.output(root.get("output"));
        Some(ScenarioConfig {
            game: game?,
            tfm: tfm?,
            valuations: valuations.flatten(),
            bids: bids.flatten(),
            grid: grid.flatten(),
            bid_grid: bid_grid.flatten(),
            search: search?,
            solver: solver?,
            sampling: sampling?,
            sweep: sweep?,
            exhaustive: exhaustive?,
            out_dir: out_dir?,
            hash: document_hash(doc),
        })
    }

    fn game(&mut self, v: &Value) -> Option<GameStructure> {
        let path = "$.game";
        let m = self.object(v, path, &["users", "bps", "block_size", "eligibility"])?;
        let users = self
            .required(m, path, "users")
            .and_then(|v| self.uint(v, &join(path, "users")));
        let bps = self
            .required(m, path, "bps")
            .and_then(|v| self.positive(v, &join(path, "bps")));
        let k = self
            .required(m, path, "block_size")
            .and_then(|v| self.positive(v, &join(path, "block_size")));
        let (users, bps, k) = (users? as usize, bps?, k?);
        let Some(elig) = m.get("eligibility") else {
            return Some(GameStructure::symmetric(users, bps, k));
        };
        let epath = join(path, "eligibility");
        let sets = self.array(elig, &epath)?;
        if sets.len() != bps {
            self.issue(&epath, format!("expected {bps} eligibility sets, found {}", sets.len()));
            return None;
        }
        let mut eligibility = Vec::with_capacity(bps);
        let mut ok = true;
        for (j, set) in sets.iter().enumerate() {
            let spath = index(&epath, j);
            let Some(items) = self.array(set, &spath) else {
                ok = false;
                continue;
            };
            let mut s = Vec::new();
            for (t, u) in items.iter().enumerate() {
                let upath = index(&spath, t);
                match self.uint(u, &upath) {
                    Some(u) if u >= 1 && (u as usize) <= users => s.push(u as usize - 1),
                    Some(u) => {
                        self.issue(upath, format!("user {u} is out of range 1..={users}"));
                        ok = false;
                    }
                    None => ok = false,
                }
            }
            eligibility.push(s);
        }
        if !ok {
            return None;
        }
        Some(GameStructure::new(users, eligibility, k).expect("indices were range-checked"))
    }

    fn tfm(&mut self, v: &Value) -> Option<Tfm> {
        let path = "$.tfm";
        match v {
            Value::String(name) => {
                let t = Tfm::named(name);
                if t.is_none() {
                    self.issue(path, format!("unknown TFM {name:?}"));
                }
                t
            }
            Value::Object(_) => {
                let m = self.object(v, path, &["inclusion", "confirmation", "payment", "distribution"])?;
                let inclusion = self.rule::<InclusionRule>(m, path, "inclusion");
                let confirmation = self.rule::<ConfirmationRule>(m, path, "confirmation");
                let payment = self.rule::<PaymentRule>(m, path, "payment");
                let distribution = self.rule::<DistributionRule>(m, path, "distribution");
                let tfm = Tfm::new(inclusion?, confirmation?, payment?, distribution?);
                match tfm {
                    Ok(t) => Some(t),
                    Err(e) => {
                        self.issue(path, e.to_string());
                        None
                    }
                }
            }
            _ => {
                self.issue(path, "expected a preset name or an object of rules");
                None
            }
        }
    }

    fn rule<T>(&mut self, m: &Map<String, Value>, path: &str, key: &str) -> Option<T>
    where
        T: std::str::FromStr,
        T::Err: fmt::Display,
    {
        let v = self.required(m, path, key)?;
        let p = join(path, key);
        let Some(s) = v.as_str() else {
            self.issue(p, "expected a rule name");
            return None;
        };
        match s.parse() {
            Ok(r) => Some(r),
            Err(e) => {
                self.issue(p, e.to_string());
                None
            }
        }
    }

    fn profile(&mut self, v: &Value, path: &str, n: Option<usize>) -> Option<Profile> {
        let values = self.rationals(v, path)?;
        if let Some(n) = n {
            if values.len() != n {
                self.issue(path, format!("expected {n} entries, found {}", values.len()));
                return None;
            }
        }
        Some(Profile::new(values).expect("entries were checked nonnegative"))
    }

    fn valuations(&mut self, v: &Value, path: &str, n: Option<usize>) -> Option<Valuations> {
        let kind = v.get("kind").and_then(Value::as_str);
        match kind {
            Some("iid") => {
                let m = self.object(v, path, &["kind", "marginal"])?;
                let marginal = self
                    .required(m, path, "marginal")
                    .and_then(|x| self.marginal(x, &join(path, "marginal")))?;
                Some(Valuations::Model(ValuationModel::iid(n?, marginal)))
            }
            Some("independent") => {
                let m = self.object(v, path, &["kind", "marginals"])?;
                let mpath = join(path, "marginals");
                let items = self.required(m, path, "marginals").and_then(|x| self.array(x, &mpath))?;
                let marginals: Vec<Option<Marginal>> = items
                    .iter()
                    .enumerate()
                    .map(|(i, x)| self.marginal(x, &index(&mpath, i)))
                    .collect();
                let marginals: Vec<Marginal> = marginals.into_iter().collect::<Option<_>>()?;
                if n.is_some_and(|n| n != marginals.len()) {
                    self.issue(mpath, format!("expected {} marginals, found {}", n?, marginals.len()));
                    return None;
                }
                Some(Valuations::Model(ValuationModel::Independent { marginals }))
            }
            Some("joint") => {
                let m = self.object(v, path, &["kind", "points", "probs"])?;
                let ppath = join(path, "points");
                let rows = self.required(m, path, "points").and_then(|x| self.array(x, &ppath))?;
                let points: Vec<Option<Vec<f64>>> = rows
                    .iter()
                    .enumerate()
                    .map(|(i, r)| self.floats(r, &index(&ppath, i)))
                    .collect();
                let probs = self
                    .required(m, path, "probs")
                    .and_then(|x| self.floats(x, &join(path, "probs")));
                Some(Valuations::Model(ValuationModel::JointTable {
                    points: points.into_iter().collect::<Option<_>>()?,
                    probs: probs?,
                }))
            }
            Some("profile") => {
                let m = self.object(v, path, &["kind", "values"])?;
                let values = self.required(m, path, "values")?;
                self.profile(values, &join(path, "values"), n).map(Valuations::Profile)
            }
            Some(other) => {
                self.issue(join(path, "kind"), format!("unknown valuation kind {other:?}"));
                None
            }
            None => {
                self.issue(join(path, "kind"), "missing required field");
                None
            }
        }
        .and_then(|v| match v {
            Valuations::Model(m) => self.model_valid(m, path, n),
            p => Some(p),
        })
    }

    fn model_valid(&mut self, model: ValuationModel, path: &str, n: Option<usize>) -> Option<Valuations> {
        if let Err(e) = model.validate() {
            self.issue(path, e.to_string());
            return None;
        }
        if let Some(n) = n {
            if model.n_users() != n {
                self.issue(path, format!("model has {} users, game has {n}", model.n_users()));
                return None;
            }
        }
        Some(Valuations::Model(model))
    }

    fn marginal(&mut self, v: &Value, path: &str) -> Option<Marginal> {
        let kind = v.get("kind").and_then(Value::as_str);
        let num = |p: &mut Self, m: &Map<String, Value>, key: &str| {
            p.required(m, path, key)
                .and_then(|x| p.nonnegative(x, &join(path, key)))
                .map(|r| to_f64(&r))
        };
        let marginal = match kind {
            Some("uniform") => {
                let m = self.object(v, path, &["kind", "lo", "hi"])?;
                let (lo, hi) = (num(self, m, "lo"), num(self, m, "hi"));
                Marginal::uniform(lo?, hi?)
            }
            Some("uniform_grid") => {
                let m = self.object(v, path, &["kind", "lo", "hi", "points"])?;
                let (lo, hi) = (num(self, m, "lo"), num(self, m, "hi"));
                let points = self
                    .required(m, path, "points")
                    .and_then(|x| self.positive(x, &join(path, "points")))?;
                let xs = tfmlab::user_game::linspace(lo?, hi?, points);
                let probs = vec![1.0 / points as f64; points];
                Marginal::Discrete { points: xs, probs }
            }
            Some("discrete") => {
                let m = self.object(v, path, &["kind", "points", "probs"])?;
                let points = self
                    .required(m, path, "points")
                    .and_then(|x| self.floats(x, &join(path, "points")));
                let probs = self
                    .required(m, path, "probs")
                    .and_then(|x| self.floats(x, &join(path, "probs")));
                Marginal::Discrete {
                    points: points?,
                    probs: probs?,
                }
            }
            Some("point") => {
                let m = self.object(v, path, &["kind", "value"])?;
                Marginal::point(num(self, m, "value")?)
            }
            Some(other) => {
                self.issue(join(path, "kind"), format!("unknown marginal kind {other:?}"));
                return None;
            }
            None => {
                self.issue(join(path, "kind"), "missing required field");
                return None;
            }
        };
        if let Err(e) = marginal.validate() {
            self.issue(path, e.to_string());
            return None;
        }
        Some(marginal)
    }

    fn search(&mut self, v: Option<&Value>) -> Option<Search> {
        let mut s = Search {
            shill_budget: tfmlab::bp_game::DEFAULT_SHILL_BUDGET,
            shill_grid: None,
            profile_guard: tfmlab::bp_game::DEFAULT_PROFILE_GUARD,
        };
        let Some(v) = v else { return Some(s) };
        let path = "$.search";
        let m = self.object(v, path, &["shill_budget", "shill_grid", "profile_guard"])?;
        let mut ok = true;
        if let Some(x) = m.get("shill_budget") {
            match self.uint(x, &join(path, "shill_budget")) {
                Some(b) => s.shill_budget = b as usize,
                None => ok = false,
            }
        }
        if let Some(x) = m.get("shill_grid") {
            s.shill_grid = self.rationals(x, &join(path, "shill_grid"));
            ok &= s.shill_grid.is_some();
        }
        if let Some(x) = m.get("profile_guard") {
            match self.uint(x, &join(path, "profile_guard")) {
                Some(g) => s.profile_guard = g as u128,
                None => ok = false,
            }
        }
        ok.then_some(s)
    }

    fn solver(&mut self, v: Option<&Value>) -> Option<BneParams> {
        let mut s = BneParams::default();
        let Some(v) = v else { return Some(s) };
        let path = "$.solver";
        let m = self.object(v, path, &["v_points", "b_points", "max_iters", "tol", "damping"])?;
        let before = self.issues.len();
        for (key, slot) in [
            ("v_points", &mut s.v_points),
            ("b_points", &mut s.b_points),
            ("max_iters", &mut s.max_iters),
        ] {
            if let Some(x) = m.get(key) {
                if let Some(n) = self.positive(x, &join(path, key)) {
                    *slot = n;
                }
            }
        }
        if let Some(x) = m.get("tol") {
            s.tol = self.nonnegative(x, &join(path, "tol")).map(|r| to_f64(&r));
        }
        if let Some(x) = m.get("damping") {
            if let Some(d) = self.nonnegative(x, &join(path, "damping")) {
                let d = to_f64(&d);
                if d > 0.0 && d <= 1.0 {
                    s.damping = d;
                } else {
                    self.issue(join(path, "damping"), "must lie in (0, 1]");
                }
            }
        }
        (self.issues.len() == before).then_some(s)
    }

    fn sampling(&mut self, v: &Value) -> Option<Sampling> {
        let path = "$.sampling";
        let m = self.object(v, path, &["seed", "samples", "instances"])?;
        let seed = self
            .required(m, path, "seed")
            .and_then(|x| self.uint(x, &join(path, "seed")));
        let samples = m.get("samples").map(|x| self.positive(x, &join(path, "samples")));
        let instances = m
            .get("instances")
            .map(|x| self.positive(x, &join(path, "instances")));
        Some(Sampling {
            seed: seed?,
            samples: match samples {
                Some(s) => Some(s?),
                None => None,
            },
            instances: match instances {
                Some(i) => Some(i?),
                None => None,
            },
        })
    }

    fn sweep(&mut self, v: Option<&Value>) -> Option<Sweep> {
        let mut s = Sweep {
            max_users: 3,
            max_bps: 2,
            max_block: 2,
            tightness_samples: 200_000,
        };
        let Some(v) = v else { return Some(s) };
        let path = "$.sweep";
        let m = self.object(v, path, &["max_users", "max_bps", "max_block", "tightness_samples"])?;
        let before = self.issues.len();
        for (key, slot) in [
            ("max_users", &mut s.max_users),
            ("max_bps", &mut s.max_bps),
            ("max_block", &mut s.max_block),
        ] {
            if let Some(x) = m.get(key) {
                if let Some(n) = self.positive(x, &join(path, key)) {
                    *slot = n;
                }
            }
        }
        if let Some(x) = m.get("tightness_samples") {
            if let Some(n) = self.uint(x, &join(path, "tightness_samples")) {
                s.tightness_samples = n as usize;
            }
        }
        (self.issues.len() == before).then_some(s)
    }

    fn matroid(&mut self, v: Option<&Value>) -> Option<bool> {
        let Some(v) = v else { return Some(false) };
        let path = "$.matroid";
        let m = self.object(v, path, &["exhaustive"])?;
        match m.get("exhaustive") {
            None => Some(false),
            Some(Value::Bool(b)) => Some(*b),
            Some(_) => {
                self.issue(join(path, "exhaustive"), "expected a boolean");
                None
            }
        }
    }

    fn output(&mut self, v: Option<&Value>) -> Option<Option<String>> {
        let Some(v) = v else { return Some(None) };
        let path = "$.output";
        let m = self.object(v, path, &["dir"])?;
        match m.get("dir") {
            None => Some(None),
            Some(Value::String(s)) => Some(Some(s.clone())),
            Some(_) => {
                self.issue(join(path, "dir"), "expected a string");
                None
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ScenarioConfig, Vec<Issue>> {
        parse_config_with(text, &Overrides::default())
    }

    const MINIMAL: &str = r#"{
        "game": {"users": 2, "bps": 1, "block_size": 1},
        "tfm": "fpa-eq",
        "valuations": {"kind": "iid", "marginal": {"kind": "uniform_grid", "lo": 0, "hi": 1, "points": 5}},
        "sampling": {"seed": 7}
    }"#;

    fn paths(text: &str) -> Vec<String> {
        parse(text).unwrap_err().into_iter().map(|i| i.path).collect()
    }

    #[test]
    fn minimal_config_parses() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.game.n_users(), 2);
        assert_eq!(cfg.tfm, Tfm::fpa_eq());
        assert_eq!(cfg.sampling.seed, 7);
        assert!(matches!(cfg.valuations, Some(Valuations::Model(ValuationModel::Iid { n: 2, .. }))));
    }

    #[test]
    fn unversioned_distribution_names_the_field() {
        let text = r#"{
            "game": {"users": 2, "bps": 1, "block_size": 1},
            "tfm": {"inclusion": "wm", "confirmation": "fpa", "payment": "fpa", "distribution": "eq"},
            "sampling": {"seed": 7}
        }"#;
        assert_eq!(paths(text), vec!["$.tfm.distribution"]);
    }

    #[test]
    fn eligibility_index_out_of_range() {
        let text = r#"{
            "game": {"users": 2, "bps": 2, "block_size": 1, "eligibility": [[1, 2], [3]]},
            "tfm": "fpa-eq",
            "sampling": {"seed": 7}
        }"#;
        let issues = parse(text).unwrap_err();
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].path, "$.game.eligibility[1][0]");
        assert!(issues[0].message.contains("out of range"));
    }

    #[test]
    fn missing_seed_and_unknown_rule_are_both_reported() {
        let text = r#"{
            "game": {"users": 2, "bps": 1, "block_size": 1},
            "tfm": "fpa-magic"
        }"#;
        assert_eq!(paths(text), vec!["$.tfm", "$.sampling.seed"]);
    }

    #[test]
    fn seed_override_fills_a_missing_seed() {
        let text = r#"{"game": {"users": 1, "bps": 1, "block_size": 1}, "tfm": "spa-eq"}"#;
        let o = Overrides {
            seed: Some(3),
            ..Overrides::default()
        };
        assert_eq!(parse_config_with(text, &o).unwrap().sampling.seed, 3);
    }

    #[test]
    fn hash_tracks_the_effective_document() {
        let a = parse(MINIMAL).unwrap().hash;
        let o = Overrides {
            seed: Some(8),
            ..Overrides::default()
        };
        let b = parse_config_with(MINIMAL, &o).unwrap().hash;
        assert_ne!(a, b);
        assert_eq!(a, parse(MINIMAL).unwrap().hash);
        let o = Overrides {
            out: Some("elsewhere".into()),
            ..Overrides::default()
        };
        assert_eq!(a, parse_config_with(MINIMAL, &o).unwrap().hash);
    }

    #[test]
    fn rationals_accept_strings_and_numbers() {
        let text = r#"{
            "game": {"users": 2, "bps": 1, "block_size": 2},
            "tfm": "spa-eq",
            "bids": ["3/2", 0.25],
            "sampling": {"seed": 1}
        }"#;
        let cfg = parse(text).unwrap();
        assert_eq!(cfg.bids.unwrap().as_slice(), &[Rational::new(3, 2), Rational::new(1, 4)]);
    }
}
