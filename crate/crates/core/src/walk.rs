//! The nearest-neighbour walk driven by the marks.
//!
//! From `x` with children `x_1..x_N`: step to `x_i` with probability
//! `A(x_i)/(1+ΣA(x_j))`, to the parent with `1/(1+ΣA(x_j))`. On an MT tree
//! the root has no parent and the walk reflects: `A(e_i)/ΣA(e_j)`.

use crate::error::{Error, Result};
use crate::tree::{Environment, RayedTree, ShiftView, VertexId};
use rand::Rng;
use serde::Serialize;
use std::collections::BTreeMap;

/// Transition probabilities out of an expanded vertex.
pub fn kernel<E: Environment + ?Sized>(env: &E, x: VertexId) -> Result<Vec<(VertexId, f64)>> {
    let children = env.children(x).ok_or(Error::Unexpanded(x))?;
    let s: f64 = children.iter().map(|&c| env.mark(c)).sum();
    match env.parent(x) {
        None if env.reflects_at_root() => {
            if children.is_empty() {
                return Err(Error::Extinct);
            }
            Ok(children.iter().map(|&c| (c, env.mark(c) / s)).collect())
        }
        parent => {
            let z = 1.0 + s;
            let mut out = Vec::with_capacity(children.len() + 1);
            // The top ray vertex has no parent until the ray grows.
            if let Some(p) = parent {
                out.push((p, 1.0 / z));
            } else {
                return Err(Error::Unexpanded(x));
            }
            out.extend(children.iter().map(|&c| (c, env.mark(c) / z)));
            Ok(out)
        }
    }
}

/// One step from `x`, expanding `x` (and growing the ray) as needed.
pub fn step<E: Environment + ?Sized, R: Rng + ?Sized>(
    env: &mut E,
    x: VertexId,
    rng: &mut R,
) -> Result<VertexId> {
    env.ensure_expanded(x)?;
    let s = env.sum_child_marks(x).expect("expanded");
    let reflect = env.parent(x).is_none() && env.reflects_at_root();
    let u: f64 = rng.random();
    let mut rest = if reflect {
        if s == 0.0 {
            return Err(Error::Extinct);
        }
        u * s
    } else {
        let r = u * (1.0 + s);
        if r < 1.0 {
            return env
                .parent_or_grow(x)
                .map(|p| p.expect("non-root vertex has a parent"));
        }
        r - 1.0
    };
    let children = env.children(x).expect("expanded");
    for &c in children {
        let a = env.mark(c);
        if rest < a {
            return Ok(c);
        }
        rest -= a;
    }
    Ok(*children.last().expect("rounding residue needs a child"))
}

/// Runs `steps` steps from `start`, calling `visit(t, X_t, env)` for
/// t = 0..=steps.
pub fn walk_with<E, R, F>(
    env: &mut E,
    start: VertexId,
    steps: usize,
    rng: &mut R,
    mut visit: F,
) -> Result<()>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(usize, VertexId, &E),
{
    let mut x = start;
    visit(0, x, env);
    for t in 1..=steps {
        x = step(env, x, rng)?;
        visit(t, x, env);
    }
    Ok(())
}

/// A walk path with its level series (depth on MT, h on IMT).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub tree_uid: u64,
    pub vertices: Vec<VertexId>,
    pub levels: Vec<i64>,
    /// First time each level was reached.
    pub first_passage: BTreeMap<i64, usize>,
    /// Times t > 0 at which the walk is back at its start.
    pub returns: Vec<usize>,
}

impl Trajectory {
    fn empty(uid: u64) -> Self {
        Self {
            tree_uid: uid,
            vertices: Vec::new(),
            levels: Vec::new(),
            first_passage: BTreeMap::new(),
            returns: Vec::new(),
        }
    }

    fn push(&mut self, t: usize, v: VertexId, level: i64) {
        if t > 0 && v == self.vertices[0] {
            self.returns.push(t);
        }
        self.first_passage.entry(level).or_insert(t);
        self.vertices.push(v);
        self.levels.push(level);
    }

    /// Number of steps (one less than the number of positions).
    pub fn steps(&self) -> usize {
        self.vertices.len().saturating_sub(1)
    }

    pub fn position(&self, t: usize) -> Result<VertexId> {
        self.vertices.get(t).copied().ok_or(Error::HorizonExceeded {
            requested: t,
            horizon: self.steps(),
        })
    }

    /// Builds a trajectory from a given vertex sequence, checking that
    /// consecutive vertices are neighbours in `env`.
    pub fn from_vertices<E: Environment + ?Sized>(env: &E, vertices: &[VertexId]) -> Result<Self> {
        let mut traj = Trajectory::empty(env.uid());
        for (t, &v) in vertices.iter().enumerate() {
            if v >= env.len() {
                return Err(Error::InvalidTrajectory(format!("unknown vertex {v}")));
            }
            if t > 0 {
                let u = vertices[t - 1];
                if env.parent(v) != Some(u) && env.parent(u) != Some(v) {
                    return Err(Error::InvalidTrajectory(format!(
                        "{u} and {v} are not neighbours (step {t})"
                    )));
                }
            }
            traj.push(t, v, env.level(v));
        }
        Ok(traj)
    }
}

pub fn run_walk<E: Environment + ?Sized, R: Rng + ?Sized>(
    env: &mut E,
    start: VertexId,
    steps: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut traj = Trajectory::empty(env.uid());
    traj.vertices.reserve(steps + 1);
    traj.levels.reserve(steps + 1);
    walk_with(env, start, steps, rng, |t, v, e| {
        traj.push(t, v, e.level(v))
    })?;
    Ok(traj)
}

/// The tree seen from the walker at time `t`.
pub fn environment_seen_from_particle<'a>(
    tree: &'a RayedTree,
    traj: &Trajectory,
    t: usize,
) -> Result<ShiftView<'a>> {
    if traj.tree_uid != tree.uid() {
        return Err(Error::MismatchedTree);
    }
    Ok(tree.shift(traj.position(t)?))
}
