//! Monte Carlo harnesses: stationarity of the environment seen from the
//! walker, the change-of-law and many-to-one identities, endpoint CLTs,
//! the displacement bound and the excursion coupling statistics.
//!
//! Replica `i` always draws from seeds derived from `(master, i)` and results
//! are collected in replica order, so reports do not depend on the worker
//! count.

use crate::cascade::{estimate_sigma2, require_critical, require_diffusive, DEFAULT_N_W};
use crate::coupling::{build_coupled, decompose, discrepancies};
use crate::error::{Error, Result};
use crate::mark_law::MarkLaw;
use crate::regime::{classify, RegimeReport};
use crate::rng::SeedSplitter;
use crate::stats::{chi_squared_two_sample, ks_statistic, median, Estimate, TargetCdf};
use crate::tree::{Environment, MarkedTree, RayedTree, VertexId};
use crate::walk::{run_walk, step};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::Arc;

pub const SCHEMA_VERSION: &str = "rwre-report/1";

/// Identity checks pass when the two sides differ by at most this many
/// combined standard errors.
pub const K_SE: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    /// Two estimates of the same quantity.
    Agreement {
        lhs: Estimate,
        rhs: Estimate,
        diff: f64,
        se: f64,
        k_se: f64,
    },
    /// A statistic that must not exceed a ceiling.
    Ceiling {
        value: f64,
        ceiling: f64,
    },
    /// A statistic that must reach a floor (p-values).
    Floor {
        value: f64,
        floor: f64,
    },
    Interval {
        value: f64,
        lo: f64,
        hi: f64,
    },
    /// A yes/no structural property.
    Holds {
        detail: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    #[serde(flatten)]
    pub outcome: Outcome,
}

impl Check {
    pub fn agreement(name: impl Into<String>, lhs: Estimate, rhs: Estimate, k_se: f64) -> Self {
        let passed = lhs.agrees_with(&rhs, k_se);
        let outcome = Outcome::Agreement {
            lhs,
            rhs,
            diff: lhs.mean - rhs.mean,
            se: lhs.combined_se(&rhs),
            k_se,
        };
        Check {
            name: name.into(),
            passed,
            outcome,
        }
    }

    pub fn ceiling(name: impl Into<String>, value: f64, ceiling: f64) -> Self {
        Check {
            name: name.into(),
            passed: value <= ceiling,
            outcome: Outcome::Ceiling { value, ceiling },
        }
    }

    pub fn floor(name: impl Into<String>, value: f64, floor: f64) -> Self {
        Check {
            name: name.into(),
            passed: value > floor,
            outcome: Outcome::Floor { value, floor },
        }
    }

    pub fn interval(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Check {
            name: name.into(),
            passed: (lo..=hi).contains(&value),
            outcome: Outcome::Interval { value, lo, hi },
        }
    }

    pub fn holds(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            outcome: Outcome::Holds {
                detail: detail.into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub schema_version: String,
    pub name: String,
    pub seed: u64,
    pub parameters: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
    /// Reported quantities that are not pass/fail.
    pub diagnostics: BTreeMap<String, Value>,
    pub notes: Vec<String>,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
}

impl ExperimentReport {
    fn new(name: &str, seed: u64, law: &MarkLaw) -> Self {
        let mut parameters = BTreeMap::new();
        parameters.insert(
            "law".into(),
            serde_json::to_value(law.to_config()).unwrap_or(Value::Null),
        );
        ExperimentReport {
            schema_version: SCHEMA_VERSION.into(),
            name: name.into(),
            seed,
            parameters,
            checks: Vec::new(),
            diagnostics: BTreeMap::new(),
            notes: Vec::new(),
            passed: true,
            wall_clock_s: None,
        }
    }

    fn param(mut self, key: &str, v: impl Serialize) -> Self {
        self.parameters
            .insert(key.into(), serde_json::to_value(v).unwrap_or(Value::Null));
        self
    }

    fn diag(&mut self, key: &str, v: impl Serialize) {
        self.diagnostics
            .insert(key.into(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    fn push(&mut self, c: Check) {
        self.passed &= c.passed;
        self.checks.push(c);
    }
}

fn par_replicas<T: Send>(n: usize, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..n as u64).into_par_iter().map(f).collect()
}

fn parse_err(kind: &str, s: &str) -> Error {
    Error::Config(format!("unknown {kind} '{s}'"))
}

// ---------------------------------------------------------------------------
// Stationarity and reversibility of the environment seen from the walker.

/// Functionals F(T_a, T_b) of two consecutive environments; `a` and `b` are
/// the walker's positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairFunctional {
    One,
    /// A(b): mark of the vertex occupied in the second environment.
    DestinationMark,
    /// 1{b is the parent of a}.
    StepUp,
    /// N(a).
    ChildCountAtOrigin,
}

impl PairFunctional {
    pub const ALL: [PairFunctional; 4] = [
        PairFunctional::One,
        PairFunctional::DestinationMark,
        PairFunctional::StepUp,
        PairFunctional::ChildCountAtOrigin,
    ];

    fn eval<E: Environment + ?Sized>(self, env: &E, a: VertexId, b: VertexId) -> f64 {
        match self {
            PairFunctional::One => 1.0,
            PairFunctional::DestinationMark => env.mark(b),
            PairFunctional::StepUp => (env.parent(a) == Some(b)) as u8 as f64,
            PairFunctional::ChildCountAtOrigin => env.children(a).map_or(0, |c| c.len()) as f64,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PairFunctional::One => "one",
            PairFunctional::DestinationMark => "destination_mark",
            PairFunctional::StepUp => "step_up",
            PairFunctional::ChildCountAtOrigin => "child_count_at_origin",
        }
    }
}

impl FromStr for PairFunctional {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| parse_err("pair functional", s))
    }
}

/// E_IMT[F(T_0,T_1)] against E_IMT[F(T_1,T_0)] from one step of the walk on
/// independent IMT trees.
pub fn check_stationarity(
    law: Arc<MarkLaw>,
    f: PairFunctional,
    replicas: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    require_critical(&law)?;
    let split = SeedSplitter::new(seed);
    let pairs = par_replicas(replicas, |i| {
        // Spine to v_2 so that A(v_1) is drawn.
        let mut t = RayedTree::new(law.clone(), split.seed(i), 2)?;
        let x0 = t.root();
        let x1 = step(&mut t, x0, &mut split.rng(i))?;
        t.ensure_expanded(x1)?;
        Ok((f.eval(&t, x0, x1), f.eval(&t, x1, x0)))
    })?;
    let fwd: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let rev: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let diff: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
    let mut r = ExperimentReport::new("stationarity", seed, &law)
        .param("functional", f)
        .param("replicas", replicas);
    // The two sides come from the same walks; the paired difference carries
    // the right standard error.
    let d = Estimate::from_samples(&diff);
    r.diag("forward", Estimate::from_samples(&fwd));
    r.diag("reversed", Estimate::from_samples(&rev));
    r.push(Check::agreement(f.name(), d, Estimate::exact(0.0), K_SE));
    Ok(r)
}

// ---------------------------------------------------------------------------
// Change of law between IMT and MT.

/// Functionals G of the tree below v_n and the position of v_0 in it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootedFunctional {
    One,
    /// N(v_0).
    RootChildCount,
    /// A(v_0); needs n ≥ 1.
    OriginMark,
    /// A(v_1); needs n ≥ 2.
    ParentMark,
}

impl RootedFunctional {
    pub const ALL: [RootedFunctional; 4] = [
        RootedFunctional::One,
        RootedFunctional::RootChildCount,
        RootedFunctional::OriginMark,
        RootedFunctional::ParentMark,
    ];

    fn min_depth(self) -> usize {
        match self {
            RootedFunctional::One | RootedFunctional::RootChildCount => 0,
            RootedFunctional::OriginMark => 1,
            RootedFunctional::ParentMark => 2,
        }
    }

    fn eval<E: Environment + ?Sized>(self, env: &E, x: VertexId) -> f64 {
        match self {
            RootedFunctional::One => 1.0,
            RootedFunctional::RootChildCount => env.children(x).map_or(0, |c| c.len()) as f64,
            RootedFunctional::OriginMark => env.mark(x),
            RootedFunctional::ParentMark => env.mark(env.parent(x).expect("depth checked")),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RootedFunctional::One => "one",
            RootedFunctional::RootChildCount => "root_child_count",
            RootedFunctional::OriginMark => "origin_mark",
            RootedFunctional::ParentMark => "parent_mark",
        }
    }
}

impl FromStr for RootedFunctional {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| parse_err("rooted functional", s))
    }
}

pub const MAX_CHANGE_OF_LAW_DEPTH: usize = 4;

/// E_IMT[G] against E_MT[Σ_{x∈T_n} C_x G(T,x)(1+ΣA(x_i))/2].
pub fn check_change_of_law(
    law: Arc<MarkLaw>,
    n: usize,
    g: RootedFunctional,
    replicas: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    require_critical(&law)?;
    if n > MAX_CHANGE_OF_LAW_DEPTH || n < g.min_depth() {
        return Err(Error::Config(format!(
            "depth {n} outside {}..={MAX_CHANGE_OF_LAW_DEPTH} for {}",
            g.min_depth(),
            g.name()
        )));
    }
    let split = SeedSplitter::new(seed);
    let imt_split = split.fork("imt");
    let imt = par_replicas(replicas, |i| {
        let mut t = RayedTree::new(law.clone(), imt_split.seed(i), n.max(1))?;
        let v0 = t.root();
        t.ensure_expanded(v0)?;
        Ok(g.eval(&t, v0))
    })?;
    let mt_split = split.fork("mt");
    let mt = par_replicas(replicas, |i| {
        let mut t = MarkedTree::new(law.clone(), mt_split.seed(i));
        t.expand_to_depth(n + 1)?;
        let terms: Vec<f64> = t
            .level_set(n)?
            .into_iter()
            .map(|x| {
                let s = t.sum_child_marks(x).unwrap_or(0.0);
                t.cond(x) * g.eval(&t, x) * (1.0 + s) / 2.0
            })
            .collect();
        Ok(crate::stats::pairwise_sum(&terms))
    })?;
    let mut r = ExperimentReport::new("change_of_law", seed, &law)
        .param("depth", n)
        .param("functional", g)
        .param("replicas", replicas);
    r.push(Check::agreement(
        g.name(),
        Estimate::from_samples(&imt),
        Estimate::from_samples(&mt),
        K_SE,
    ));
    Ok(r)
}

// ---------------------------------------------------------------------------
// Many-to-one formula.

/// Functionals G of the path products (C_y, e < y ≤ x).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PathFunctional {
    One,
    /// C_x.
    EndpointC,
    /// 1{C_x > threshold}.
    EndpointIndicator {
        threshold: f64,
    },
    /// min over the path of C_y.
    PathMin,
}

impl PathFunctional {
    pub fn eval(&self, path: &[f64]) -> f64 {
        let last = *path.last().unwrap_or(&1.0);
        match *self {
            PathFunctional::One => 1.0,
            PathFunctional::EndpointC => last,
            PathFunctional::EndpointIndicator { threshold } => (last > threshold) as u8 as f64,
            PathFunctional::PathMin => path.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn name(&self) -> String {
        match self {
            PathFunctional::One => "one".into(),
            PathFunctional::EndpointC => "endpoint_c".into(),
            PathFunctional::EndpointIndicator { threshold } => {
                format!("endpoint_indicator({threshold})")
            }
            PathFunctional::PathMin => "path_min".into(),
        }
    }
}

impl FromStr for PathFunctional {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" => Ok(PathFunctional::One),
            "endpoint_c" => Ok(PathFunctional::EndpointC),
            "path_min" => Ok(PathFunctional::PathMin),
            _ => s
                .strip_prefix("endpoint_indicator(")
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|v| v.parse().ok())
                .map(|threshold| PathFunctional::EndpointIndicator { threshold })
                .ok_or_else(|| parse_err("path functional", s)),
        }
    }
}

/// One draw of (e^{S_1},...,e^{S_n}) for the walk whose steps follow the
/// mark-tilted law normalised by ρ(1).
pub fn tilted_path<R: rand::Rng + ?Sized>(law: &MarkLaw, n: usize, rng: &mut R) -> Vec<f64> {
    let mut s = 0.0;
    (0..n)
        .map(|_| {
            s += law.sample_tilted_log_mark(rng);
            s.exp()
        })
        .collect()
}

/// E_MT[Σ_{x∈T_n} C_x G(C_y, e<y≤x)] against ρ(1)^n E[G(e^{S_1..S_n})].
pub fn check_many_to_one(
    law: Arc<MarkLaw>,
    n: usize,
    g: PathFunctional,
    replicas: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    if n == 0 {
        return Err(Error::Config("many-to-one needs n ≥ 1".into()));
    }
    let split = SeedSplitter::new(seed);
    let mt_split = split.fork("mt");
    let mt = par_replicas(replicas, |i| {
        let mut t = MarkedTree::new(law.clone(), mt_split.seed(i));
        t.expand_to_depth(n)?;
        let terms: Vec<f64> = t
            .level_set(n)?
            .into_iter()
            .map(|x| {
                let mut path = Vec::with_capacity(n);
                let mut y = x;
                while let Some(p) = t.parent(y) {
                    path.push(t.cond(y));
                    y = p;
                }
                path.reverse();
                t.cond(x) * g.eval(&path)
            })
            .collect();
        Ok(crate::stats::pairwise_sum(&terms))
    })?;
    let scale = law.rho(1.0).powi(n as i32);
    let walk_split = split.fork("tilted");
    let tilted = par_replicas(replicas, |i| {
        Ok(scale * g.eval(&tilted_path(&law, n, &mut walk_split.rng(i))))
    })?;
    let mut r = ExperimentReport::new("many_to_one", seed, &law)
        .param("depth", n)
        .param("functional", g)
        .param("replicas", replicas);
    r.diag("rho_one_pow_n", scale);
    r.push(Check::agreement(
        g.name(),
        Estimate::from_samples(&mt),
        Estimate::from_samples(&tilted),
        K_SE,
    ));
    Ok(r)
}

/// Median of C at depth n under the tilted walk; a natural threshold for
/// [`PathFunctional::EndpointIndicator`].
pub fn tilted_endpoint_median(law: &MarkLaw, n: usize, draws: usize, seed: u64) -> f64 {
    let split = SeedSplitter::new(seed);
    let xs: Vec<f64> = (0..draws as u64)
        .into_par_iter()
        .map(|i| *tilted_path(law, n, &mut split.rng(i)).last().unwrap())
        .collect();
    median(&xs)
}

// ---------------------------------------------------------------------------
// Endpoint CLTs.

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Sigma2Source {
    /// Root-sampling estimate from the harmonic-function machinery.
    Estimate {
        replicas: usize,
        n_w: usize,
    },
    Fixed {
        value: f64,
    },
}

impl Default for Sigma2Source {
    fn default() -> Self {
        Sigma2Source::Estimate {
            replicas: 2000,
            n_w: DEFAULT_N_W,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CltParams {
    pub steps: usize,
    pub walks: usize,
    pub sigma2: Sigma2Source,
    /// KS ceiling for h(X_n)/√(σ²n) on IMT against N(0,1).
    pub ks_imt: f64,
    /// KS ceiling for |X_n|/√(σ²n) on MT against the half-normal law.
    pub ks_mt: f64,
}

impl Default for CltParams {
    fn default() -> Self {
        CltParams {
            steps: 1 << 14,
            walks: 2000,
            sigma2: Sigma2Source::default(),
            ks_imt: 0.05,
            ks_mt: 0.06,
        }
    }
}

/// Positions of one walk at steps/2 and at steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Endpoints {
    pub half: i64,
    pub end: i64,
}

fn walk_endpoints<E: Environment + ?Sized, R: rand::Rng + ?Sized>(
    env: &mut E,
    steps: usize,
    rng: &mut R,
) -> Result<Endpoints> {
    let mut x = env.root();
    let mut half = env.level(x);
    for t in 1..=steps {
        x = step(env, x, rng)?;
        if t == steps / 2 {
            half = env.level(x);
        }
    }
    Ok(Endpoints {
        half,
        end: env.level(x),
    })
}

/// How many fresh environments to try before giving up on one that strands
/// the walker at a childless root.
const MAX_RESAMPLES: u64 = 1000;

fn mt_walk(
    law: &Arc<MarkLaw>,
    env_seeds: &SeedSplitter,
    env_index: u64,
    steps: usize,
    rng: &mut crate::rng::Rng,
) -> Result<Endpoints> {
    for attempt in 0..MAX_RESAMPLES {
        let seed = env_seeds.fork(&attempt.to_string()).seed(env_index);
        let mut t = MarkedTree::new(law.clone(), seed);
        match walk_endpoints(&mut t, steps, rng) {
            Err(Error::Extinct) => continue,
            other => return other,
        }
    }
    Err(Error::Extinct)
}

/// Walks on MT trees: one tree for all walks when `tree_seed` is given
/// (resampled if the walker is stranded), a fresh tree per walk otherwise.
/// No regime preconditions, so this also serves negative controls.
pub fn mt_endpoints(
    law: Arc<MarkLaw>,
    tree_seed: Option<u64>,
    steps: usize,
    walks: usize,
    seed: u64,
) -> Result<Vec<Endpoints>> {
    let split = SeedSplitter::new(seed);
    match tree_seed {
        Some(ts) => {
            // Find one environment that does not strand the walker.
            let envs = SeedSplitter::new(ts);
            let mut chosen = None;
            for attempt in 0..MAX_RESAMPLES {
                let s = envs.fork(&attempt.to_string()).seed(0);
                let mut t = MarkedTree::new(law.clone(), s);
                let r = t.root();
                t.ensure_expanded(r)?;
                if !t.children(r).unwrap().is_empty() {
                    chosen = Some(s);
                    break;
                }
            }
            let s = chosen.ok_or(Error::Extinct)?;
            par_replicas(walks, |i| {
                let mut t = MarkedTree::new(law.clone(), s);
                walk_endpoints(&mut t, steps, &mut split.rng(i))
            })
        }
        None => {
            let envs = split.fork("env");
            par_replicas(walks, |i| mt_walk(&law, &envs, i, steps, &mut split.rng(i)))
        }
    }
}

/// Walks on IMT trees: one tree for all walks when `tree_seed` is given, a
/// fresh tree per walk otherwise.
pub fn imt_endpoints(
    law: Arc<MarkLaw>,
    tree_seed: Option<u64>,
    steps: usize,
    walks: usize,
    seed: u64,
) -> Result<Vec<Endpoints>> {
    let split = SeedSplitter::new(seed);
    let envs = split.fork("env");
    par_replicas(walks, |i| {
        let s = tree_seed.unwrap_or_else(|| envs.seed(i));
        let mut t = RayedTree::new(law.clone(), s, 1)?;
        walk_endpoints(&mut t, steps, &mut split.rng(i))
    })
}

fn second_moment(xs: impl Iterator<Item = f64>) -> Estimate {
    let v: Vec<f64> = xs.map(|x| x * x).collect();
    Estimate::from_samples(&v)
}

fn resolve_sigma2(law: &Arc<MarkLaw>, src: Sigma2Source, seed: u64) -> Result<(f64, Value)> {
    match src {
        Sigma2Source::Fixed { value } => Ok((value, json!({ "fixed": value }))),
        Sigma2Source::Estimate { replicas, n_w } => {
            let e = estimate_sigma2(law.clone(), replicas, 0, n_w, seed)?;
            Ok((e.root.mean, serde_json::to_value(e).unwrap_or(Value::Null)))
        }
    }
}

fn kappa_notes(r: &mut ExperimentReport, regime: &RegimeReport) {
    let k = regime.kappa;
    if k <= 8.0 {
        r.notes.push(format!("kappa = {k} is not above 8"));
    }
    if k < 5.0 {
        r.notes.push(format!("kappa = {k} is below 5"));
    }
    if k <= 5.0 {
        r.notes.push(format!("kappa = {k} is not above 5"));
    }
}

fn clt_report(
    name: &str,
    law: Arc<MarkLaw>,
    tree_seed: Option<u64>,
    p: CltParams,
    seed: u64,
) -> Result<ExperimentReport> {
    require_diffusive(&law)?;
    let regime = classify(&law)?;
    let split = SeedSplitter::new(seed);
    let (sigma2, sigma_diag) = resolve_sigma2(&law, p.sigma2, split.fork("sigma2").master())?;
    let mut r = ExperimentReport::new(name, seed, &law).param("clt", p);
    if let Some(ts) = tree_seed {
        r = r.param("tree_seed", ts);
    }
    r.diag("sigma2", sigma_diag);
    if regime.kappa.is_finite() {
        r.diag("kappa", regime.kappa);
    } else {
        r.diag("kappa", "+inf");
    }
    kappa_notes(&mut r, &regime);

    let n = p.steps as f64;
    let scale = (sigma2 * n).sqrt();
    let imt = imt_endpoints(
        law.clone(),
        tree_seed,
        p.steps,
        p.walks,
        split.fork("imt").master(),
    )?;
    let mt = mt_endpoints(
        law.clone(),
        tree_seed,
        p.steps,
        p.walks,
        split.fork("mt").master(),
    )?;

    let z: Vec<f64> = imt.iter().map(|e| e.end as f64 / scale).collect();
    let ks_imt = ks_statistic(&z, TargetCdf::StandardNormal)?;
    r.push(Check::ceiling("ks_imt_normal", ks_imt, p.ks_imt));
    let zm: Vec<f64> = mt.iter().map(|e| e.end.abs() as f64 / scale).collect();
    let ks_mt = ks_statistic(&zm, TargetCdf::HalfNormal)?;
    r.push(Check::ceiling("ks_mt_half_normal", ks_mt, p.ks_mt));

    let m_end = second_moment(imt.iter().map(|e| e.end as f64));
    let m_half = second_moment(imt.iter().map(|e| e.half as f64));
    r.push(Check::interval(
        "half_time_variance_ratio",
        m_half.mean / m_end.mean,
        0.4,
        0.6,
    ));
    r.diag("imt_second_moment_ratio", m_end.mean / (sigma2 * n));
    r.diag(
        "mt_second_moment_ratio",
        second_moment(mt.iter().map(|e| e.end as f64)).mean / (sigma2 * n),
    );
    r.diag("imt_mean_scaled", Estimate::from_samples(&z));
    // Correlation of the two half-increments; zero for Brownian motion.
    let a: Vec<f64> = imt.iter().map(|e| e.half as f64).collect();
    let b: Vec<f64> = imt.iter().map(|e| (e.end - e.half) as f64).collect();
    r.diag("increment_correlation", correlation(&a, &b));
    Ok(r)
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let ea = Estimate::from_samples(a).mean;
    let eb = Estimate::from_samples(b).mean;
    let cov: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ea) * (y - eb)).collect();
    let va: Vec<f64> = a.iter().map(|x| (x - ea) * (x - ea)).collect();
    let vb: Vec<f64> = b.iter().map(|y| (y - eb) * (y - eb)).collect();
    let (c, va, vb) = (
        crate::stats::pairwise_sum(&cov),
        crate::stats::pairwise_sum(&va),
        crate::stats::pairwise_sum(&vb),
    );
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        c / (va * vb).sqrt()
    }
}

/// Endpoint CLT on one fixed environment per side.
pub fn quenched_clt(
    law: Arc<MarkLaw>,
    tree_seed: u64,
    p: CltParams,
    seed: u64,
) -> Result<ExperimentReport> {
    clt_report("quenched_clt", law, Some(tree_seed), p, seed)
}

/// Endpoint CLT with a fresh environment per walk.
pub fn annealed_clt(law: Arc<MarkLaw>, p: CltParams, seed: u64) -> Result<ExperimentReport> {
    clt_report("annealed_clt", law, None, p, seed)
}

// ---------------------------------------------------------------------------
// Displacement bound on MT trees.

/// P_MT(max_{i≤t} |X_i| ≥ u) against 2t e^{-u²/2t}; fails only if the
/// estimate exceeds the bound by more than 3 SE.
pub fn check_displacement_bound(
    law: Arc<MarkLaw>,
    t: usize,
    u: usize,
    replicas: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    let split = SeedSplitter::new(seed);
    let envs = split.fork("env");
    let hits = par_replicas(replicas, |i| {
        let mut rng = split.rng(i);
        for attempt in 0..MAX_RESAMPLES {
            let mut tree = MarkedTree::new(law.clone(), envs.fork(&attempt.to_string()).seed(i));
            let mut x = tree.root();
            let mut hit = false;
            let mut stranded = false;
            for _ in 0..t {
                match step(&mut tree, x, &mut rng) {
                    Ok(y) => x = y,
                    Err(Error::Extinct) => {
                        stranded = true;
                        break;
                    }
                    Err(e) => return Err(e),
                }
                if tree.level(x) >= u as i64 {
                    hit = true;
                    break;
                }
            }
            if !stranded {
                return Ok(hit as u8 as f64);
            }
        }
        Err(Error::Extinct)
    })?;
    let p_hat = Estimate::from_samples(&hits);
    let (tf, uf) = (t as f64, u as f64);
    let bound = 2.0 * tf * (-uf * uf / (2.0 * tf)).exp();
    let mut r = ExperimentReport::new("displacement_bound", seed, &law)
        .param("t", t)
        .param("u", u)
        .param("replicas", replicas);
    r.diag("probability", p_hat);
    r.push(Check::ceiling(
        format!("max_displacement({t},{u})"),
        p_hat.mean - 3.0 * p_hat.se,
        bound,
    ));
    Ok(r)
}

// ---------------------------------------------------------------------------
// Excursion coupling.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    /// Coupled builds for the length and root-law checks.
    pub builds: usize,
    /// MT steps per build.
    pub build_steps: usize,
    /// Checkpoints for the discrepancy medians.
    pub checkpoints: Vec<usize>,
    pub replicas: usize,
    pub alpha: f64,
    pub p_floor: f64,
}

impl Default for CouplingParams {
    fn default() -> Self {
        CouplingParams {
            builds: 10_000,
            build_steps: 200,
            checkpoints: vec![1_000, 10_000, 100_000],
            replicas: 100,
            alpha: 0.25,
            p_floor: 1e-3,
        }
    }
}

/// Bin label for a brood: the atom index for finite laws, the child count
/// otherwise.
fn brood_bin(law: &MarkLaw, marks: &[f64]) -> String {
    if let Some(atoms) = law.atoms() {
        if let Some(k) = atoms.iter().position(|a| a.marks == marks) {
            return format!("a{k}");
        }
    }
    format!("n{}", marks.len())
}

/// (brood of v_0, brood of the first child of v_0) in a spined tree.
fn root_statistic(t: &mut RayedTree) -> Result<String> {
    let v0 = t.root();
    t.ensure_expanded(v0)?;
    let cs = t.children(v0).unwrap().to_vec();
    let law = t.law_arc().clone();
    let m0: Vec<f64> = cs.iter().map(|&c| t.mark(c)).collect();
    let first = match cs.first() {
        Some(&c) => {
            t.ensure_expanded(c)?;
            let m: Vec<f64> = t.children(c).unwrap().iter().map(|&y| t.mark(y)).collect();
            brood_bin(&law, &m)
        }
        None => "none".into(),
    };
    Ok(format!("{}|{}", brood_bin(&law, &m0), first))
}

struct CoupledRun {
    lengths_match: bool,
    root_stat: String,
}

fn coupled_run(
    law: &Arc<MarkLaw>,
    steps: usize,
    split: &SeedSplitter,
    i: u64,
) -> Result<CoupledRun> {
    let mut t = MarkedTree::new(law.clone(), split.seed(i));
    let traj = run_walk(&mut t, 0, steps, &mut split.rng(i))?;
    let d = decompose(&mut t, &traj)?;
    let fresh = split.fork("tilde");
    let mut pair = build_coupled(&t, &traj, &d, fresh.seed(i), &mut fresh.rng(i))?;
    Ok(CoupledRun {
        lengths_match: pair.excursion_lengths() == d.excursion_lengths(),
        root_stat: root_statistic(&mut pair.tilde)?,
    })
}

/// Δ_t/t and B_t/√t for one replica at each checkpoint.
fn discrepancy_run(
    law: &Arc<MarkLaw>,
    checkpoints: &[usize],
    alpha: f64,
    split: &SeedSplitter,
    i: u64,
) -> Result<Vec<(f64, f64)>> {
    let t_max = *checkpoints.iter().max().unwrap_or(&0);
    let mut steps = t_max + t_max / 2;
    loop {
        let mut t = MarkedTree::new(law.clone(), split.seed(i));
        let traj = run_walk(&mut t, 0, steps, &mut split.rng(i))?;
        let d = decompose(&mut t, &traj)?;
        let fresh = split.fork("tilde");
        let pair = build_coupled(&t, &traj, &d, fresh.seed(i), &mut fresh.rng(i))?;
        if pair.steps() >= t_max {
            return checkpoints
                .iter()
                .map(|&c| {
                    let x = discrepancies(&pair, &d, &traj, alpha, c)?;
                    Ok((x.delta as f64 / c as f64, x.b as f64 / (c as f64).sqrt()))
                })
                .collect();
        }
        // The coupled walk fell short of the horizon; rerun the same replica
        // longer.
        steps *= 2;
    }
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

pub fn check_coupling(
    law: Arc<MarkLaw>,
    p: &CouplingParams,
    seed: u64,
) -> Result<ExperimentReport> {
    require_critical(&law)?;
    let split = SeedSplitter::new(seed);
    let mut r = ExperimentReport::new("coupling", seed, &law).param("coupling", p);

    let builds = split.fork("builds");
    let runs = par_replicas(p.builds, |i| coupled_run(&law, p.build_steps, &builds, i))?;
    let mismatched = runs.iter().filter(|c| !c.lengths_match).count();
    r.push(Check::holds(
        "excursion_lengths_preserved",
        mismatched == 0,
        format!("{mismatched} of {} builds differ", p.builds),
    ));

    let direct = split.fork("direct");
    let direct_stats = par_replicas(p.builds, |i| {
        let mut t = RayedTree::new(law.clone(), direct.seed(i), 1)?;
        root_statistic(&mut t)
    })?;
    let mut bins: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for c in &runs {
        bins.entry(c.root_stat.clone()).or_default().0 += 1;
    }
    for s in direct_stats {
        bins.entry(s).or_default().1 += 1;
    }
    let a: Vec<u64> = bins.values().map(|b| b.0).collect();
    let b: Vec<u64> = bins.values().map(|b| b.1).collect();
    let (stat, dof, pv) = chi_squared_two_sample(&a, &b);
    r.diag("root_bins", &bins);
    r.diag("chi_squared", json!({ "statistic": stat, "dof": dof }));
    r.push(Check::floor("root_law_chi_squared_p", pv, p.p_floor));

    if !p.checkpoints.is_empty() && p.replicas > 0 {
        let disc = split.fork("discrepancy");
        let per = par_replicas(p.replicas, |i| {
            discrepancy_run(&law, &p.checkpoints, p.alpha, &disc, i)
        })?;
        let med = |k: usize, f: fn(&(f64, f64)) -> f64| -> f64 {
            median(&per.iter().map(|v| f(&v[k])).collect::<Vec<_>>())
        };
        let d: Vec<f64> = (0..p.checkpoints.len()).map(|k| med(k, |x| x.0)).collect();
        let bt: Vec<f64> = (0..p.checkpoints.len()).map(|k| med(k, |x| x.1)).collect();
        r.diag("median_delta_over_t", &d);
        r.diag("median_b_over_sqrt_t", &bt);
        r.push(Check::holds(
            "delta_over_t_decreasing",
            strictly_decreasing(&d),
            format!("{d:?}"),
        ));
        r.push(Check::holds(
            "b_over_sqrt_t_decreasing",
            strictly_decreasing(&bt),
            format!("{bt:?}"),
        ));
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// Suites.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Core,
    Clt,
    Coupling,
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "core" => Ok(Suite::Core),
            "clt" => Ok(Suite::Clt),
            "coupling" => Ok(Suite::Coupling),
            _ => Err(parse_err("suite", s)),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub schema_version: String,
    pub suite: Suite,
    pub seed: u64,
    pub passed: bool,
    pub reports: Vec<ExperimentReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteOptions {
    /// Replicas for the identity checks.
    pub replicas: usize,
    pub clt: CltParams,
    pub coupling: CouplingParams,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            replicas: 10_000,
            clt: CltParams::default(),
            coupling: CouplingParams::default(),
        }
    }
}

/// Identity checks and the displacement bound for one law. Checks whose
/// preconditions the law does not meet are skipped with a note.
pub fn core_reports(
    law: Arc<MarkLaw>,
    replicas: usize,
    seed: u64,
) -> Result<Vec<ExperimentReport>> {
    let split = SeedSplitter::new(seed);
    let mut out = Vec::new();
    let critical = require_critical(&law).is_ok();
    if critical {
        for f in PairFunctional::ALL {
            out.push(check_stationarity(
                law.clone(),
                f,
                replicas,
                split.fork(f.name()).master(),
            )?);
        }
        for g in RootedFunctional::ALL {
            let n = g.min_depth().max(2);
            let tag = format!("col-{}", g.name());
            out.push(check_change_of_law(
                law.clone(),
                n,
                g,
                replicas,
                split.fork(&tag).master(),
            )?);
        }
    }
    let n = 3;
    let c = tilted_endpoint_median(&law, n, replicas, split.fork("median").master());
    for g in [
        PathFunctional::One,
        PathFunctional::EndpointC,
        PathFunctional::EndpointIndicator { threshold: c },
        PathFunctional::PathMin,
    ] {
        let tag = format!("m21-{}", g.name());
        out.push(check_many_to_one(
            law.clone(),
            n,
            g,
            replicas,
            split.fork(&tag).master(),
        )?);
    }
    for (t, u) in [(100, 30), (1000, 100)] {
        let tag = format!("disp-{t}-{u}");
        out.push(check_displacement_bound(
            law.clone(),
            t,
            u,
            replicas,
            split.fork(&tag).master(),
        )?);
    }
    if !critical {
        if let Some(first) = out.first_mut() {
            first
                .notes
                .push("law is not critical: IMT checks skipped".into());
        }
    }
    Ok(out)
}

pub fn run_suite(
    suite: Suite,
    law: Arc<MarkLaw>,
    opts: &SuiteOptions,
    seed: u64,
) -> Result<SuiteReport> {
    let split = SeedSplitter::new(seed);
    let reports = match suite {
        Suite::Core => core_reports(law, opts.replicas, split.fork("core").master())?,
        Suite::Clt => vec![
            quenched_clt(
                law.clone(),
                split.fork("tree").master(),
                opts.clt,
                split.fork("quenched").master(),
            )?,
            annealed_clt(law, opts.clt, split.fork("annealed").master())?,
        ],
        Suite::Coupling => vec![check_coupling(
            law,
            &opts.coupling,
            split.fork("coupling").master(),
        )?],
    };
    Ok(SuiteReport {
        schema_version: SCHEMA_VERSION.into(),
        suite,
        seed,
        passed: reports.iter().all(|r| r.passed),
        reports,
    })
}
