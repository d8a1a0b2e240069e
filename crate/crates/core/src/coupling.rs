//! Excursion coupling between a walk on an MT tree and a walk on a tree with
//! a spine.
//!
//! The MT walk is cut at the times it first touches the boundary of the
//! region explored so far (τ_i) and the times it comes back inside (η_i).
//! Each excursion, together with the subtree it explored, is glued onto a
//! spined tree at the leaf where a freshly simulated bridging walk lands,
//! and the excursion path is replayed there.

use crate::error::{Error, Result};
use crate::tree::{Environment, MarkedTree, RayedTree, VertexId};
use crate::walk::{step, Trajectory};
use rand::Rng;
use serde::Serialize;
use std::collections::HashMap;

/// One explored tree T_i: the vertices visited during excursion i, in
/// first-visit order (its root first).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExploredTree {
    pub root: VertexId,
    pub visited: Vec<VertexId>,
    /// Visited vertices plus their offspring.
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcursionDecomposition {
    pub tree_uid: u64,
    pub steps: usize,
    /// τ_1, τ_2, ... (τ_0 = 0 is implicit).
    pub tau: Vec<usize>,
    /// η_1, η_2, ... for completed excursions.
    pub eta: Vec<usize>,
    /// True when the trajectory ends inside its last excursion.
    pub partial: bool,
    pub explored: Vec<ExploredTree>,
    /// |U_0|, |U_1|, ...
    pub u_sizes: Vec<usize>,
}

impl ExcursionDecomposition {
    /// η_i - τ_i for completed excursions.
    pub fn excursion_lengths(&self) -> Vec<usize> {
        self.eta.iter().zip(&self.tau).map(|(e, t)| e - t).collect()
    }
}

const OUTSIDE: u32 = u32::MAX;

/// Splits an MT trajectory started at the root into bridging segments and
/// excursions.
/// Visited vertices that are still unexpanded (the final position, say)
/// get their broods drawn here.
pub fn decompose(tree: &mut MarkedTree, traj: &Trajectory) -> Result<ExcursionDecomposition> {
    if traj.tree_uid != tree.uid() {
        return Err(Error::MismatchedTree);
    }
    for &v in &traj.vertices {
        tree.ensure_expanded(v)?;
    }
    let tree = &*tree;
    if traj.vertices.first() != Some(&tree.root()) {
        return Err(Error::InvalidTrajectory(
            "coupling needs a walk from the root".into(),
        ));
    }
    let n = tree.len();
    // Epoch at which a vertex became interior / a leaf of U.
    let mut interior = vec![OUTSIDE; n];
    let mut leaf = vec![OUTSIDE; n];
    let root = tree.root();
    let root_children = tree.children(root).ok_or(Error::Unexpanded(root))?;
    interior[root] = 0;
    for &c in root_children {
        leaf[c] = 0;
    }
    let mut d = ExcursionDecomposition {
        tree_uid: tree.uid(),
        steps: traj.steps(),
        tau: Vec::new(),
        eta: Vec::new(),
        partial: false,
        explored: Vec::new(),
        u_sizes: vec![1 + root_children.len()],
    };
    let mut in_excursion = false;
    for (t, &x) in traj.vertices.iter().enumerate() {
        let i = d.tau.len() as u32; // index of the current/last excursion
        if in_excursion {
            // η_i: first return to the interior of U_{i-1}.
            if interior[x] < i {
                in_excursion = false;
                d.eta.push(t);
                let explored = d.explored.last().unwrap();
                let prev = *d.u_sizes.last().unwrap();
                d.u_sizes.push(prev + explored.size - 1);
            } else {
                explore(
                    tree,
                    x,
                    i,
                    &mut interior,
                    &mut leaf,
                    d.explored.last_mut().unwrap(),
                )?;
                continue;
            }
        }
        if !in_excursion && leaf[x] != OUTSIDE && interior[x] == OUTSIDE {
            in_excursion = true;
            d.tau.push(t);
            let mut e = ExploredTree {
                root: x,
                visited: Vec::new(),
                size: 1,
            };
            explore(tree, x, i + 1, &mut interior, &mut leaf, &mut e)?;
            d.explored.push(e);
        }
    }
    d.partial = in_excursion;
    Ok(d)
}

fn explore(
    tree: &MarkedTree,
    x: VertexId,
    epoch: u32,
    interior: &mut [u32],
    leaf: &mut [u32],
    e: &mut ExploredTree,
) -> Result<()> {
    if interior[x] != OUTSIDE {
        return Ok(());
    }
    interior[x] = epoch;
    e.visited.push(x);
    let cs = tree.children(x).ok_or(Error::Unexpanded(x))?;
    for &c in cs {
        if leaf[c] == OUTSIDE {
            leaf[c] = epoch;
        }
    }
    e.size += cs.len();
    Ok(())
}

/// The spined tree Ũ with the coupled walk X̃.
#[derive(Debug, Clone)]
pub struct CoupledPair {
    pub tilde: RayedTree,
    /// X̃_0, X̃_1, ...
    pub path: Vec<VertexId>,
    /// h(X̃_t).
    pub levels: Vec<i64>,
    pub tau: Vec<usize>,
    pub eta: Vec<usize>,
    pub partial: bool,
    /// Whether X̃_t is a spine vertex.
    pub on_ray: Vec<bool>,
    /// d(X̃_t, spine).
    pub ray_distance: Vec<usize>,
}

impl CoupledPair {
    pub fn steps(&self) -> usize {
        self.path.len() - 1
    }

    pub fn excursion_lengths(&self) -> Vec<usize> {
        self.eta.iter().zip(&self.tau).map(|(e, t)| e - t).collect()
    }
}

/// Builds Ũ and X̃ from a decomposed MT walk. `tree_seed` seeds the spine
/// and its broods, `rng` drives the bridging walks.
pub fn build_coupled<R: Rng + ?Sized>(
    tree: &MarkedTree,
    traj: &Trajectory,
    decomp: &ExcursionDecomposition,
    tree_seed: u64,
    rng: &mut R,
) -> Result<CoupledPair> {
    if decomp.tree_uid != tree.uid() || traj.tree_uid != tree.uid() {
        return Err(Error::MismatchedTree);
    }
    let mut ut = RayedTree::new(tree.law_arc().clone(), tree_seed, 1)?;
    let v0 = ut.root();
    ut.ensure_expanded(v0)?;
    let mut path = vec![v0];
    let mut tau = Vec::new();
    let mut eta = Vec::new();
    let mut x = v0;
    for (i, explored) in decomp.explored.iter().enumerate() {
        // Bridging segment: walk on Ũ_{i-1} until a leaf is reached.
        while ut.is_expanded(x) {
            x = step(&mut ut, x, rng)?;
            path.push(x);
        }
        tau.push(path.len() - 1);
        let glue = x;
        let mut map: HashMap<VertexId, VertexId> = HashMap::new();
        map.insert(explored.root, glue);
        for &y in &explored.visited {
            let uy = map[&y];
            let cs = tree.children(y).ok_or(Error::Unexpanded(y))?;
            let marks: Vec<f64> = cs.iter().map(|&c| tree.mark(c)).collect();
            ut.attach_brood(uy, &marks)?;
            for (&c, &uc) in cs.iter().zip(ut.children(uy).unwrap()) {
                map.insert(c, uc);
            }
        }
        // Replay the excursion.
        let start = decomp.tau[i];
        let end = decomp.eta.get(i).copied().unwrap_or(traj.steps() + 1);
        for t in start + 1..end {
            path.push(map[&traj.vertices[t]]);
        }
        if i < decomp.eta.len() {
            let last = *path.last().unwrap();
            x = ut.parent(last).expect("glued vertex has a parent");
            path.push(x);
            eta.push(path.len() - 1);
        }
    }
    let levels = path.iter().map(|&v| ut.level(v)).collect();
    let on_ray = path.iter().map(|&v| ut.is_on_ray(v)).collect();
    let ray_distance = path.iter().map(|&v| ut.distance_to_ray(v)).collect();
    Ok(CoupledPair {
        tilde: ut,
        path,
        levels,
        tau,
        eta,
        partial: decomp.partial,
        on_ray,
        ray_distance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Discrepancies {
    pub t: usize,
    /// Time the MT walk spent outside coupled excursions.
    pub delta: usize,
    /// Same, counting only times at depth ≤ t^α.
    pub delta_alpha: usize,
    pub delta_tilde: usize,
    pub delta_tilde_alpha: usize,
    /// Largest rise of h between two spine visits of X̃ (0 if none).
    pub b: i64,
    /// h(X̃_t) - min_{1≤i≤t} h(X̃_i).
    pub r: i64,
}

/// Σ_{i ≤ I_t} (τ_i - η_{i-1}), and the same sum restricted by `keep`.
fn outside_time(
    tau: &[usize],
    eta: &[usize],
    t: usize,
    mut keep: impl FnMut(usize) -> bool,
) -> (usize, usize) {
    let mut total = 0;
    let mut kept = 0;
    for (i, &ti) in tau.iter().enumerate() {
        if ti > t {
            break;
        }
        let from = if i == 0 { 0 } else { eta[i - 1] };
        total += ti - from;
        kept += (from..ti).filter(|&s| keep(s)).count();
    }
    (total, kept)
}

pub fn discrepancies(
    pair: &CoupledPair,
    decomp: &ExcursionDecomposition,
    traj: &Trajectory,
    alpha: f64,
    t: usize,
) -> Result<Discrepancies> {
    let horizon = pair.steps().min(decomp.steps);
    if t > horizon {
        return Err(Error::HorizonExceeded {
            requested: t,
            horizon,
        });
    }
    let cut = (t as f64).powf(alpha);
    let (delta, delta_alpha) = outside_time(&decomp.tau, &decomp.eta, t, |s| {
        (traj.levels[s] as f64) <= cut
    });
    let (delta_tilde, delta_tilde_alpha) = outside_time(&pair.tau, &pair.eta, t, |s| {
        (pair.ray_distance[s] as f64) <= cut
    });

    let mut b: i64 = 0;
    let mut min_ray: Option<i64> = None;
    for s in 0..=t {
        if pair.on_ray[s] {
            let h = pair.levels[s];
            if let Some(m) = min_ray {
                b = b.max(h - m);
            }
            min_ray = Some(min_ray.map_or(h, |m| m.min(h)));
        }
    }
    let r = if t == 0 {
        0
    } else {
        pair.levels[t] - pair.levels[1..=t].iter().min().unwrap()
    };
    Ok(Discrepancies {
        t,
        delta,
        delta_alpha,
        delta_tilde,
        delta_tilde_alpha,
        b,
        r,
    })
}
