//! The offspring/mark distribution `q`, its size-biased version `q̂`, and
//! the root mixture `(q + q̂)/2`.
//!
//! A draw from `q` is a [`Brood`]: the number of children of a vertex
//! together with the positive marks `A(x_i)` carried by those children.

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

/// Criticality tolerance for `ρ(1) = 1` on exactly evaluated laws.
pub const TOL_CRIT: f64 = 1e-9;

const PROB_SUM_TOL: f64 = 1e-12;

/// One draw from a mark law.
#[derive(Debug, Clone, PartialEq)]
pub struct Brood {
    pub marks: Vec<f64>,
    /// Index of the atom drawn, for finite-support laws.
    pub atom: Option<usize>,
}

impl Brood {
    pub fn n_children(&self) -> usize {
        self.marks.len()
    }

    pub fn sum_marks(&self) -> f64 {
        self.marks.iter().sum()
    }
}

/// A finite-support atom: probability and the marks of its children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub prob: f64,
    pub marks: Vec<f64>,
}

impl Atom {
    pub fn new(prob: f64, marks: impl Into<Vec<f64>>) -> Self {
        Self {
            prob,
            marks: marks.into(),
        }
    }

    pub fn n_children(&self) -> usize {
        self.marks.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Offspring {
    Fixed(usize),
    /// `p[n]` is the probability of `n` children.
    Categorical(Vec<f64>),
    /// Poisson with the given mean; truncated to `n_max` when one is declared.
    Poisson(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkMode {
    Independent,
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkDist {
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
    TwoPoint { low: f64, high: f64, p_low: f64 },
}

impl MarkDist {
    fn support(&self) -> (f64, f64) {
        match *self {
            MarkDist::Uniform { lo, hi } | MarkDist::LogUniform { lo, hi } => (lo, hi),
            MarkDist::TwoPoint { low, high, .. } => (low.min(high), low.max(high)),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            MarkDist::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            MarkDist::LogUniform { lo, hi } => {
                let (a, b) = (lo.ln(), hi.ln());
                (a + (b - a) * rng.random::<f64>()).exp()
            }
            MarkDist::TwoPoint { low, high, p_low } => {
                if rng.random::<f64>() < p_low {
                    low
                } else {
                    high
                }
            }
        }
    }

    /// E[A^α].
    fn moment(&self, alpha: f64) -> f64 {
        match *self {
            MarkDist::Uniform { lo, hi } => {
                let k = alpha + 1.0;
                (hi.powf(k) - lo.powf(k)) / (k * (hi - lo))
            }
            MarkDist::LogUniform { lo, hi } => {
                let (a, d) = (lo.ln(), hi.ln() - lo.ln());
                let x = alpha * d;
                (alpha * a).exp() * expm1_over_x(x)
            }
            MarkDist::TwoPoint { low, high, p_low } => {
                p_low * low.powf(alpha) + (1.0 - p_low) * high.powf(alpha)
            }
        }
    }

    /// E[A^α log A].
    fn log_moment(&self, alpha: f64) -> f64 {
        match *self {
            MarkDist::Uniform { lo, hi } => {
                let k = alpha + 1.0;
                let (bk, ak) = (hi.powf(k), lo.powf(k));
                ((bk * hi.ln() - ak * lo.ln()) * k - (bk - ak)) / (k * k * (hi - lo))
            }
            MarkDist::LogUniform { lo, hi } => {
                let (a, d) = (lo.ln(), hi.ln() - lo.ln());
                let x = alpha * d;
                let base = (alpha * a).exp();
                base * (a * expm1_over_x(x) + d * expm1_over_x_prime(x))
            }
            MarkDist::TwoPoint { low, high, p_low } => {
                p_low * low.powf(alpha) * low.ln() + (1.0 - p_low) * high.powf(alpha) * high.ln()
            }
        }
    }

    /// Size-biased mark: density proportional to `a` times the mark density.
    fn sample_tilted<R: Rng + ?Sized>(&self, bound: f64, rng: &mut R) -> f64 {
        loop {
            let a = self.sample(rng);
            if rng.random::<f64>() * bound < a {
                return a;
            }
        }
    }
}

/// (e^x - 1)/x, continuous at 0.
fn expm1_over_x(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 + x / 2.0
    } else {
        x.exp_m1() / x
    }
}

/// d/dx of (e^x - 1)/x.
fn expm1_over_x_prime(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        0.5 + x / 3.0 + x * x / 8.0 + x * x * x / 30.0
    } else {
        (x.exp() * (x - 1.0) + 1.0) / (x * x)
    }
}

/// Parametric law: offspring count independent of the marks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parametric {
    pub offspring: Offspring,
    pub mode: MarkMode,
    pub dist: MarkDist,
    pub eps0: f64,
    pub n_max: Option<usize>,
}

impl Parametric {
    fn offspring_pmf(&self) -> Option<Vec<f64>> {
        match &self.offspring {
            Offspring::Fixed(n) => {
                let mut p = vec![0.0; n + 1];
                p[*n] = 1.0;
                Some(p)
            }
            Offspring::Categorical(p) => Some(p.clone()),
            Offspring::Poisson(mean) => {
                let cap = self.n_max?;
                let mut p = Vec::with_capacity(cap + 1);
                let mut term = (-mean).exp();
                for n in 0..=cap {
                    if n > 0 {
                        term *= mean / n as f64;
                    }
                    p.push(term);
                }
                let z: f64 = p.iter().sum();
                Some(p.into_iter().map(|x| x / z).collect())
            }
        }
    }

    fn mean_offspring(&self) -> f64 {
        match (&self.offspring, self.offspring_pmf()) {
            (_, Some(p)) => p.iter().enumerate().map(|(n, w)| n as f64 * w).sum(),
            (Offspring::Poisson(mean), None) => *mean,
            _ => unreachable!("only Poisson lacks a finite pmf"),
        }
    }

    fn max_offspring(&self) -> Option<usize> {
        match &self.offspring {
            Offspring::Fixed(n) => Some(*n),
            Offspring::Categorical(p) => p.iter().rposition(|&w| w > 0.0),
            Offspring::Poisson(_) => self.n_max,
        }
    }

    fn sample_count<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match &self.offspring {
            Offspring::Fixed(n) => *n,
            Offspring::Categorical(p) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (n, w) in p.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        return n;
                    }
                }
                p.iter().rposition(|&w| w > 0.0).unwrap_or(0)
            }
            Offspring::Poisson(mean) => {
                let dist = Poisson::new(*mean).expect("validated mean");
                loop {
                    let n = dist.sample(rng) as usize;
                    match self.n_max {
                        Some(cap) if n > cap => continue,
                        _ => return n,
                    }
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidLaw(msg.to_string()));
        if !(self.eps0 > 0.0 && self.eps0 <= 1.0) {
            return bad("eps0 must lie in (0, 1]");
        }
        let (lo, hi) = self.dist.support();
        if !(lo.is_finite() && hi.is_finite()) {
            return bad("mark support must be finite");
        }
        if lo < self.eps0 * (1.0 - 1e-12) || hi > (1.0 / self.eps0) * (1.0 + 1e-12) {
            return bad("mark support must lie in [eps0, 1/eps0]");
        }
        match self.dist {
            MarkDist::Uniform { lo, hi } | MarkDist::LogUniform { lo, hi } if lo >= hi => {
                return bad("mark interval must have lo < hi");
            }
            MarkDist::TwoPoint { p_low, .. } if !(0.0..=1.0).contains(&p_low) => {
                return bad("p_low must lie in [0, 1]");
            }
            _ => {}
        }
        match &self.offspring {
            Offspring::Categorical(p) => {
                if p.iter().any(|&w| !w.is_finite() || w < 0.0) {
                    return bad("categorical offspring probabilities must be non-negative");
                }
                if (p.iter().sum::<f64>() - 1.0).abs() > PROB_SUM_TOL {
                    return bad("categorical offspring probabilities must sum to 1");
                }
            }
            Offspring::Poisson(mean) => {
                if !(*mean > 0.0 && mean.is_finite()) {
                    return bad("Poisson mean must be positive");
                }
            }
            Offspring::Fixed(_) => {}
        }
        if let (Some(cap), Some(max)) = (self.n_max, self.max_offspring()) {
            if max > cap {
                return bad("n_max is below the largest offspring count");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Finite {
        atoms: Vec<Atom>,
        cumulative: Vec<f64>,
    },
    Parametric(Parametric),
}

/// The law `q` of (number of children, marks of the children).
#[derive(Debug, Clone, PartialEq)]
pub struct MarkLaw {
    kind: Kind,
}

impl MarkLaw {
    pub fn finite(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidLaw("no atoms".into()));
        }
        for a in &atoms {
            if !(a.prob > 0.0 && a.prob <= 1.0) {
                return Err(Error::InvalidLaw(format!(
                    "atom probability {} not in (0,1]",
                    a.prob
                )));
            }
            if a.marks.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
                return Err(Error::InvalidLaw(
                    "marks must be positive and finite".into(),
                ));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.prob).sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidLaw(format!(
                "atom probabilities sum to {total}"
            )));
        }
        let mut acc = 0.0;
        let cumulative = atoms
            .iter()
            .map(|a| {
                acc += a.prob;
                acc
            })
            .collect();
        Ok(Self {
            kind: Kind::Finite { atoms, cumulative },
        })
    }

    /// Builds a finite law without validation, for empirical laws whose
    /// weights are known to be a probability vector up to rounding.
    pub(crate) fn finite_unchecked(atoms: Vec<Atom>) -> Self {
        let mut acc = 0.0;
        let cumulative = atoms
            .iter()
            .map(|a| {
                acc += a.prob;
                acc
            })
            .collect();
        Self {
            kind: Kind::Finite { atoms, cumulative },
        }
    }

    /// A single-atom law: every vertex has exactly these children marks.
    pub fn deterministic(marks: impl Into<Vec<f64>>) -> Result<Self> {
        Self::finite(vec![Atom::new(1.0, marks)])
    }

    pub fn parametric(p: Parametric) -> Result<Self> {
        p.validate()?;
        Ok(Self {
            kind: Kind::Parametric(p),
        })
    }

    pub fn atoms(&self) -> Option<&[Atom]> {
        match &self.kind {
            Kind::Finite { atoms, .. } => Some(atoms),
            Kind::Parametric(_) => None,
        }
    }

    pub fn as_parametric(&self) -> Option<&Parametric> {
        match &self.kind {
            Kind::Parametric(p) => Some(p),
            Kind::Finite { .. } => None,
        }
    }

    pub fn is_finite_support(&self) -> bool {
        matches!(self.kind, Kind::Finite { .. })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Brood {
        match &self.kind {
            Kind::Finite { atoms, cumulative } => {
                let k = pick(cumulative, rng.random::<f64>());
                Brood {
                    marks: atoms[k].marks.clone(),
                    atom: Some(k),
                }
            }
            Kind::Parametric(p) => {
                let n = p.sample_count(rng);
                let marks = match p.mode {
                    MarkMode::Independent => (0..n).map(|_| p.dist.sample(rng)).collect(),
                    MarkMode::Shared => {
                        let b = p.dist.sample(rng);
                        vec![b; n]
                    }
                };
                Brood { marks, atom: None }
            }
        }
    }

    /// ρ(α) = E_q[Σ A(e_i)^α], exact.
    pub fn rho(&self, alpha: f64) -> f64 {
        match &self.kind {
            Kind::Finite { atoms, .. } => atoms
                .iter()
                .map(|a| a.prob * a.marks.iter().map(|m| m.powf(alpha)).sum::<f64>())
                .sum(),
            Kind::Parametric(p) => p.mean_offspring() * p.dist.moment(alpha),
        }
    }

    /// ρ'(α) = E_q[Σ A(e_i)^α log A(e_i)], exact.
    pub fn rho_prime(&self, alpha: f64) -> f64 {
        match &self.kind {
            Kind::Finite { atoms, .. } => atoms
                .iter()
                .map(|a| a.prob * a.marks.iter().map(|m| m.powf(alpha) * m.ln()).sum::<f64>())
                .sum(),
            Kind::Parametric(p) => p.mean_offspring() * p.dist.log_moment(alpha),
        }
    }

    pub fn mean_offspring(&self) -> f64 {
        self.rho(0.0)
    }

    pub fn is_critical(&self) -> bool {
        (self.rho(1.0) - 1.0).abs() <= TOL_CRIT
    }

    /// True when Σ A(e_i) = 1 for q-almost every draw.
    pub fn sum_marks_identically_one(&self) -> bool {
        match &self.kind {
            Kind::Finite { atoms, .. } => atoms
                .iter()
                .all(|a| (a.marks.iter().sum::<f64>() - 1.0).abs() <= 1e-12),
            Kind::Parametric(_) => false,
        }
    }

    /// Probability generating function of the offspring count, E[s^N].
    pub fn offspring_pgf(&self, s: f64) -> f64 {
        match &self.kind {
            Kind::Finite { atoms, .. } => atoms
                .iter()
                .map(|a| a.prob * s.powi(a.n_children() as i32))
                .sum(),
            Kind::Parametric(p) => match (&p.offspring, p.offspring_pmf()) {
                (_, Some(pmf)) => pmf
                    .iter()
                    .enumerate()
                    .map(|(n, w)| w * s.powi(n as i32))
                    .sum(),
                (Offspring::Poisson(mean), None) => (mean * (s - 1.0)).exp(),
                _ => unreachable!(),
            },
        }
    }

    /// Samples the i.i.d. step of the many-to-one walk: `log A` of a
    /// child picked with weight `A` (normalized by ρ(1)).
    pub fn sample_tilted_log_mark<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            Kind::Finite { atoms, .. } => {
                let total = self.rho(1.0);
                let mut u = rng.random::<f64>() * total;
                for a in atoms {
                    for &m in &a.marks {
                        let w = a.prob * m;
                        if u < w {
                            return m.ln();
                        }
                        u -= w;
                    }
                }
                // Rounding residue lands on the last child with positive weight.
                let last = atoms
                    .iter()
                    .rev()
                    .find_map(|a| a.marks.last())
                    .expect("non-empty");
                last.ln()
            }
            Kind::Parametric(p) => p.dist.sample_tilted(p.dist.support().1, rng).ln(),
        }
    }

    pub fn to_config(&self) -> LawConfig {
        match &self.kind {
            Kind::Finite { atoms, .. } => LawConfig::Finite {
                atoms: atoms
                    .iter()
                    .map(|a| (a.prob, a.n_children(), a.marks.clone()))
                    .collect(),
            },
            Kind::Parametric(p) => LawConfig::Parametric {
                offspring: p.offspring.clone(),
                marks: MarksConfig::from_dist(p.mode, p.dist),
                eps0: p.eps0,
                n_max: p.n_max,
            },
        }
    }
}

fn pick(cumulative: &[f64], u: f64) -> usize {
    let k = cumulative.partition_point(|&c| c <= u);
    k.min(cumulative.len() - 1)
}

/// The size-biased law `q̂`, dq̂/dq = Σ A(e_i). Only defined at criticality.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeBiasedLaw {
    base: MarkLaw,
    atom_weights: Option<Vec<f64>>,
    cumulative: Vec<f64>,
    rejection_bound: Option<f64>,
}

/// Builds `q̂` from a critical law.
pub fn size_bias(law: &MarkLaw) -> Result<SizeBiasedLaw> {
    let rho_one = law.rho(1.0);
    if (rho_one - 1.0).abs() > TOL_CRIT {
        return Err(Error::NotCritical { rho_one });
    }
    match &law.kind {
        Kind::Finite { atoms, .. } => {
            let weights: Vec<f64> = atoms
                .iter()
                .map(|a| a.prob * a.marks.iter().sum::<f64>())
                .collect();
            let total: f64 = weights.iter().sum();
            debug_assert!((total - 1.0).abs() <= 1e-8);
            let mut acc = 0.0;
            let cumulative = weights
                .iter()
                .map(|w| {
                    acc += w / total;
                    acc
                })
                .collect();
            Ok(SizeBiasedLaw {
                base: law.clone(),
                atom_weights: Some(weights),
                cumulative,
                rejection_bound: None,
            })
        }
        Kind::Parametric(p) => {
            let n_max = match (&p.offspring, p.n_max) {
                (_, Some(n)) => n,
                (Offspring::Poisson(_), None) => return Err(Error::UnboundedDensity),
                (_, None) => p.max_offspring().expect("bounded offspring"),
            };
            Ok(SizeBiasedLaw {
                base: law.clone(),
                atom_weights: None,
                cumulative: Vec::new(),
                rejection_bound: Some(n_max as f64 / p.eps0),
            })
        }
    }
}

impl SizeBiasedLaw {
    pub fn base(&self) -> &MarkLaw {
        &self.base
    }

    /// Finite support: w_k = p_k Σ_i A_i(k).
    pub fn atom_weights(&self) -> Option<&[f64]> {
        self.atom_weights.as_deref()
    }

    pub fn rejection_bound(&self) -> Option<f64> {
        self.rejection_bound
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Brood {
        match self.rejection_bound {
            None => {
                let atoms = self.base.atoms().expect("finite support");
                let k = pick(&self.cumulative, rng.random::<f64>());
                Brood {
                    marks: atoms[k].marks.clone(),
                    atom: Some(k),
                }
            }
            Some(bound) => loop {
                let b = self.base.sample(rng);
                if rng.random::<f64>() * bound < b.sum_marks() {
                    return b;
                }
            },
        }
    }

    /// A `q̂` draw plus the index of the child continuing the ray,
    /// chosen with probability A(child)/Σ A.
    pub fn sample_with_ray_child<R: Rng + ?Sized>(&self, rng: &mut R) -> (Brood, usize) {
        let brood = self.sample(rng);
        let child = pick_proportional(&brood.marks, rng);
        (brood, child)
    }

    /// A draw from the root mixture (q + q̂)/2.
    pub fn sample_root_mixture<R: Rng + ?Sized>(&self, rng: &mut R) -> Brood {
        if rng.random::<f64>() < 0.5 {
            self.base.sample(rng)
        } else {
            self.sample(rng)
        }
    }
}

/// Index drawn with probability proportional to `weights`.
pub fn pick_proportional<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    debug_assert!(!weights.is_empty());
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

// ---------------------------------------------------------------------------
// Config schema (TOML or JSON, same shape).

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LawConfig {
    Finite {
        /// `[prob, n_children, [marks...]]`
        atoms: Vec<(f64, usize, Vec<f64>)>,
    },
    Parametric {
        offspring: Offspring,
        marks: MarksConfig,
        eps0: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_max: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarksConfig {
    pub mode: MarkMode,
    /// "uniform" | "log_uniform" | "two_point"
    pub dist: String,
    pub params: Vec<f64>,
}

impl MarksConfig {
    fn from_dist(mode: MarkMode, dist: MarkDist) -> Self {
        let (name, params) = match dist {
            MarkDist::Uniform { lo, hi } => ("uniform", vec![lo, hi]),
            MarkDist::LogUniform { lo, hi } => ("log_uniform", vec![lo, hi]),
            MarkDist::TwoPoint { low, high, p_low } => ("two_point", vec![low, high, p_low]),
        };
        Self {
            mode,
            dist: name.to_string(),
            params,
        }
    }

    fn to_dist(&self) -> Result<MarkDist> {
        let need = |k: usize| {
            if self.params.len() == k {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "mark dist '{}' takes {k} params",
                    self.dist
                )))
            }
        };
        match self.dist.as_str() {
            "uniform" => {
                need(2)?;
                Ok(MarkDist::Uniform {
                    lo: self.params[0],
                    hi: self.params[1],
                })
            }
            "log_uniform" | "loguniform" => {
                need(2)?;
                Ok(MarkDist::LogUniform {
                    lo: self.params[0],
                    hi: self.params[1],
                })
            }
            "two_point" => {
                need(3)?;
                Ok(MarkDist::TwoPoint {
                    low: self.params[0],
                    high: self.params[1],
                    p_low: self.params[2],
                })
            }
            other => Err(Error::Config(format!("unknown mark dist '{other}'"))),
        }
    }
}

impl LawConfig {
    pub fn build(&self) -> Result<MarkLaw> {
        match self {
            LawConfig::Finite { atoms } => {
                let atoms = atoms
                    .iter()
                    .map(|(p, n, marks)| {
                        if *n != marks.len() {
                            Err(Error::Config(format!(
                                "atom declares {n} children but lists {} marks",
                                marks.len()
                            )))
                        } else {
                            Ok(Atom::new(*p, marks.clone()))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                MarkLaw::finite(atoms)
            }
            LawConfig::Parametric {
                offspring,
                marks,
                eps0,
                n_max,
            } => MarkLaw::parametric(Parametric {
                offspring: offspring.clone(),
                mode: marks.mode,
                dist: marks.to_dist()?,
                eps0: *eps0,
                n_max: *n_max,
            }),
        }
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
        }
    }
}

/// The law suite used throughout the tests and the `verify` command.
pub mod canonical {
    use super::*;

    /// Binary tree, every mark 1/2: ΣA ≡ 1, σ² = 1 exactly.
    pub fn binary_half() -> MarkLaw {
        MarkLaw::deterministic([0.5, 0.5]).unwrap()
    }

    /// Binary tree, marks 1: transient.
    pub fn binary_one() -> MarkLaw {
        MarkLaw::deterministic([1.0, 1.0]).unwrap()
    }

    /// Binary tree, marks 1/4: positive recurrent.
    pub fn binary_quarter() -> MarkLaw {
        MarkLaw::deterministic([0.25, 0.25]).unwrap()
    }

    pub fn ternary_half() -> MarkLaw {
        MarkLaw::deterministic([0.5, 0.5, 0.5]).unwrap()
    }

    /// A single child with mark 1: the half-line.
    pub fn unary() -> MarkLaw {
        MarkLaw::deterministic([1.0]).unwrap()
    }

    /// Critical, ρ'(1) < 0, κ = ∞: ρ(t) = 0.25^t + 0.75^t.
    pub fn two_atom_critical() -> MarkLaw {
        MarkLaw::finite(vec![
            Atom::new(0.5, [0.25, 0.25]),
            Atom::new(0.5, [0.75, 0.75]),
        ])
        .unwrap()
    }

    /// All named laws, in a fixed order.
    pub fn suite() -> Vec<(&'static str, MarkLaw)> {
        vec![
            ("binary_half", binary_half()),
            ("binary_one", binary_one()),
            ("binary_quarter", binary_quarter()),
            ("ternary_half", ternary_half()),
            ("unary", unary()),
            ("two_atom_critical", two_atom_critical()),
        ]
    }

    pub fn by_name(name: &str) -> Option<MarkLaw> {
        suite()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, l)| l)
    }
}
