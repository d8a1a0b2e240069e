//! Mandelbrot cascades Y_n^(α) = Σ_{|x|=n} C_x^α, the limits W_v of the
//! normalized subtree populations, the harmonic coordinate S built from
//! them, the walk martingale M_t = S(X_t) with its quadratic variation, and
//! the constants η = E[W²] and σ² (E_IMT[G] = σ²η²).

use crate::error::{Error, Result};
use crate::mark_law::{MarkLaw, TOL_CRIT};
use crate::rng::SeedSplitter;
use crate::stats::Estimate;
use crate::tree::{child_key, keyed_brood, Environment, MarkedTree, RayedTree, VertexId};
use crate::walk::{step, Trajectory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub const DEFAULT_N_W: usize = 20;
/// Subtrees whose relative weight falls below this are replaced by their
/// conditional mean (the weight itself), which keeps E[W] = 1.
pub const DEFAULT_PRUNE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeSeries {
    pub alpha: f64,
    /// Y_n for n = 0..=depth.
    pub values: Vec<f64>,
    /// Y_n / ρ(α)^n.
    pub normalized: Vec<f64>,
}

/// Level sums of C_x^α on a tree expanded to `depth`.
pub fn cascade(tree: &MarkedTree, alpha: f64, depth: usize) -> Result<CascadeSeries> {
    let rho = tree.law().rho(alpha);
    let mut values = Vec::with_capacity(depth + 1);
    let mut level = vec![tree.root()];
    for n in 0..=depth {
        values.push(level.iter().map(|&v| tree.cond(v).powf(alpha)).sum::<f64>());
        if n == depth {
            break;
        }
        let mut next = Vec::new();
        for &v in &level {
            match tree.children(v) {
                Some(cs) => next.extend_from_slice(cs),
                None => {
                    return Err(Error::DepthUnavailable {
                        requested: depth,
                        available: n,
                    })
                }
            }
        }
        level = next;
    }
    let normalized = values
        .iter()
        .enumerate()
        .map(|(n, y)| y / rho.powi(n as i32))
        .collect();
    Ok(CascadeSeries {
        alpha,
        values,
        normalized,
    })
}

/// Cascade series over `replicas` independent MT trees.
pub fn cascade_replicas(
    law: Arc<MarkLaw>,
    alpha: f64,
    depth: usize,
    replicas: usize,
    seed: u64,
) -> Result<Vec<CascadeSeries>> {
    let split = SeedSplitter::new(seed);
    (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut t = MarkedTree::new(law.clone(), split.seed(i as u64));
            t.expand_to_depth(depth)?;
            cascade(&t, alpha, depth)
        })
        .collect()
}

pub fn require_critical(law: &MarkLaw) -> Result<()> {
    let rho_one = law.rho(1.0);
    if (rho_one - 1.0).abs() > TOL_CRIT {
        return Err(Error::NotCritical { rho_one });
    }
    Ok(())
}

/// Truncated estimate of W_v: Σ of relative products A over descendants at
/// relative depth `n_w`, with light subtrees pruned to their mean.
pub fn w_estimate<E: Environment + ?Sized>(env: &mut E, v: VertexId, n_w: usize) -> Result<f64> {
    require_critical(env.law())?;
    w_truncated(env, v, n_w, DEFAULT_PRUNE)
}

fn w_truncated<E: Environment + ?Sized>(
    env: &mut E,
    v: VertexId,
    n_w: usize,
    prune: f64,
) -> Result<f64> {
    if env.law().sum_marks_identically_one() {
        return Ok(1.0);
    }
    enum Node {
        Built(VertexId),
        Keyed(u64),
    }
    let seed = env.tree_seed();
    let mut total = 0.0;
    let mut stack = vec![(Node::Built(v), 1.0, 0usize)];
    while let Some((node, w, d)) = stack.pop() {
        if d == n_w || (d > 0 && w < prune) {
            total += w;
            continue;
        }
        match node {
            Node::Built(x) => {
                if !env.is_expanded(x) && x == env.root() {
                    env.ensure_expanded(x)?;
                }
                match env.children(x) {
                    Some(cs) => {
                        for &c in cs {
                            stack.push((Node::Built(c), w * env.mark(c), d + 1));
                        }
                    }
                    None => stack.push((Node::Keyed(env.vertex_key(x)), w, d)),
                }
            }
            Node::Keyed(key) => {
                let brood = keyed_brood(env.law(), seed, key);
                for (i, &a) in brood.marks.iter().enumerate() {
                    stack.push((Node::Keyed(child_key(key, i)), w * a, d + 1));
                }
            }
        }
    }
    Ok(total)
}

/// Memoized W and S values on one tree.
#[derive(Debug, Clone)]
pub struct HarmonicFrame {
    uid: u64,
    n_w: usize,
    prune: f64,
    w: Vec<f64>,
    s: Vec<f64>,
}

fn slot(v: &mut Vec<f64>, i: usize) -> &mut f64 {
    if i >= v.len() {
        v.resize(i + 1, f64::NAN);
    }
    &mut v[i]
}

impl HarmonicFrame {
    pub fn new<E: Environment + ?Sized>(env: &E, n_w: usize) -> Result<Self> {
        require_critical(env.law())?;
        Ok(Self {
            uid: env.uid(),
            n_w,
            prune: DEFAULT_PRUNE,
            w: Vec::new(),
            s: Vec::new(),
        })
    }

    pub fn with_prune(mut self, prune: f64) -> Self {
        self.prune = prune;
        self
    }

    pub fn n_w(&self) -> usize {
        self.n_w
    }

    fn check<E: Environment + ?Sized>(&self, env: &E) -> Result<()> {
        if env.uid() == self.uid {
            Ok(())
        } else {
            Err(Error::MismatchedTree)
        }
    }

    pub fn w<E: Environment + ?Sized>(&mut self, env: &mut E, v: VertexId) -> Result<f64> {
        self.check(env)?;
        let cached = *slot(&mut self.w, v);
        if !cached.is_nan() {
            return Ok(cached);
        }
        let value = w_truncated(env, v, self.n_w, self.prune)?;
        *slot(&mut self.w, v) = value;
        Ok(value)
    }

    /// S(root) = 0, S(child) = S(parent) + W(child); along the spine
    /// S(v_{j+1}) = S(v_j) - W(v_j).
    pub fn s<E: Environment + ?Sized>(&mut self, env: &mut E, x: VertexId) -> Result<f64> {
        self.check(env)?;
        let mut path = Vec::new();
        let mut y = x;
        loop {
            if !slot(&mut self.s, y).is_nan() {
                break;
            }
            if y == env.root() {
                *slot(&mut self.s, y) = 0.0;
                break;
            }
            path.push(y);
            y = match env.spine_below(y) {
                Some(below) => below,
                None => env.parent(y).expect("non-root vertex has a parent"),
            };
        }
        for &z in path.iter().rev() {
            let value = match env.spine_below(z) {
                Some(below) => self.s[below] - self.w(env, below)?,
                None => {
                    let p = env.parent(z).unwrap();
                    self.s[p] + self.w(env, z)?
                }
            };
            *slot(&mut self.s, z) = value;
        }
        Ok(self.s[x])
    }

    /// Sum of W along the geodesic from the spine down to `x`.
    pub fn s_ray(&mut self, env: &mut RayedTree, x: VertexId) -> Result<f64> {
        let anchor = env.ray_vertex(env.anchor(x)).unwrap();
        Ok(self.s(env, x)? - self.s(env, anchor)?)
    }

    /// W*_j = Σ A(c) W(c) over the off-spine children c of v_j.
    pub fn w_star(&mut self, env: &mut RayedTree, j: usize) -> Result<f64> {
        env.grow_ray(j)?;
        let v = env.ray_vertex(j).unwrap();
        env.ensure_expanded(v)?;
        let below = if j > 0 { env.ray_vertex(j - 1) } else { None };
        let cs: Vec<VertexId> = env.children(v).unwrap().to_vec();
        let mut total = 0.0;
        for c in cs {
            if Some(c) != below {
                total += env.mark(c) * self.w(env, c)?;
            }
        }
        Ok(total)
    }

    /// G(x) = ω(x,parent) W_x² + Σ_j ω(x,x_j) W_{x_j}², the conditional
    /// variance of the martingale increment at x.
    pub fn g<E: Environment + ?Sized>(&mut self, env: &mut E, x: VertexId) -> Result<f64> {
        self.check(env)?;
        env.ensure_expanded(x)?;
        let cs: Vec<VertexId> = env.children(x).unwrap().to_vec();
        let s: f64 = cs.iter().map(|&c| env.mark(c)).sum();
        let mut acc = 0.0;
        for &c in &cs {
            let wc = self.w(env, c)?;
            acc += env.mark(c) * wc * wc;
        }
        if env.parent(x).is_none() && env.reflects_at_root() {
            if s == 0.0 {
                return Err(Error::Extinct);
            }
            return Ok(acc / s);
        }
        let wx = self.w(env, x)?;
        Ok((wx * wx + acc) / (1.0 + s))
    }
}

/// M_t = S(X_t) and the running means V_t of G along the path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleSeries {
    pub m: Vec<f64>,
    /// `v[t-1]` is V_t = (1/t) Σ_{i<t} G(X_i), for t = 1..=steps.
    pub v: Vec<f64>,
}

pub fn martingale_series<E: Environment + ?Sized>(
    env: &mut E,
    traj: &Trajectory,
    frame: &mut HarmonicFrame,
) -> Result<MartingaleSeries> {
    if traj.tree_uid != env.uid() {
        return Err(Error::MismatchedTree);
    }
    frame.check(env)?;
    let mut m = Vec::with_capacity(traj.vertices.len());
    let mut v = Vec::with_capacity(traj.steps());
    let mut acc = 0.0;
    for (t, &x) in traj.vertices.iter().enumerate() {
        m.push(frame.s(env, x)?);
        if t < traj.steps() {
            acc += frame.g(env, x)?;
            v.push(acc / (t + 1) as f64);
        }
    }
    Ok(MartingaleSeries { m, v })
}

/// η̂ = mean of W(root)² over independent MT trees.
pub fn estimate_eta(law: Arc<MarkLaw>, replicas: usize, n_w: usize, seed: u64) -> Result<Estimate> {
    require_critical(&law)?;
    if law.sum_marks_identically_one() {
        return Ok(Estimate {
            mean: 1.0,
            se: 0.0,
            n: replicas,
        });
    }
    let split = SeedSplitter::new(seed);
    let xs: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut t = MarkedTree::new(law.clone(), split.seed(i as u64));
            let w = w_truncated(&mut t, 0, n_w, DEFAULT_PRUNE)?;
            Ok(w * w)
        })
        .collect::<Result<_>>()?;
    Ok(Estimate::from_samples(&xs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sigma2Estimate {
    pub eta: Estimate,
    /// E_IMT[G] from fresh IMT roots.
    pub g_root: Estimate,
    /// E_IMT[G] from the tree seen by a walker after the given number of steps.
    pub g_particle: Estimate,
    pub root: Estimate,
    pub particle: Estimate,
}

fn ratio(g: Estimate, eta: Estimate) -> Estimate {
    let e2 = eta.mean * eta.mean;
    let mean = g.mean / e2;
    let se = ((g.se / e2).powi(2) + (2.0 * g.mean * eta.se / (e2 * eta.mean)).powi(2)).sqrt();
    Estimate { mean, se, n: g.n }
}

/// Checks the preconditions shared by the σ² machinery and the CLT
/// harnesses: criticality and negative drift (or ΣA ≡ 1).
pub fn require_diffusive(law: &MarkLaw) -> Result<()> {
    require_critical(law)?;
    let d = law.rho_prime(1.0);
    if d >= 0.0 && !law.sum_marks_identically_one() {
        return Err(Error::WrongDriftSign { rho_prime_one: d });
    }
    Ok(())
}

/// σ̂² = E_IMT[G]/η̂², from root sampling and from particle sampling.
pub fn estimate_sigma2(
    law: Arc<MarkLaw>,
    replicas: usize,
    steps: usize,
    n_w: usize,
    seed: u64,
) -> Result<Sigma2Estimate> {
    require_diffusive(&law)?;
    let split = SeedSplitter::new(seed);
    let eta = estimate_eta(law.clone(), replicas, n_w, split.fork("eta").master())?;

    let roots = split.fork("root");
    let g_root: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut t = RayedTree::new(law.clone(), roots.seed(i as u64), 1)?;
            let mut frame = HarmonicFrame::new(&t, n_w)?;
            let r = t.root();
            frame.g(&mut t, r)
        })
        .collect::<Result<_>>()?;

    let walkers = split.fork("particle");
    let g_particle: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut t = RayedTree::new(law.clone(), walkers.seed(i as u64), 1)?;
            let mut rng = walkers.rng(i as u64);
            let mut x = t.root();
            for _ in 0..steps {
                x = step(&mut t, x, &mut rng)?;
            }
            let mut frame = HarmonicFrame::new(&t, n_w)?;
            frame.g(&mut t, x)
        })
        .collect::<Result<_>>()?;

    let g_root = Estimate::from_samples(&g_root);
    let g_particle = Estimate::from_samples(&g_particle);
    Ok(Sigma2Estimate {
        eta,
        g_root,
        g_particle,
        root: ratio(g_root, eta),
        particle: ratio(g_particle, eta),
    })
}
