//! The tree as an electrical network (edge conductance `C_x` on the edge
//! above `x`) and as a capacitated network (capacity `C_x`), truncated at a
//! level `n`, plus the reversible measure of the walk.

use crate::error::{Error, Result};
use crate::tree::{Environment, MarkedTree, VertexId};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Largest tree the brute-force oracles accept.
pub const ORACLE_CAP: usize = 10_000;
/// Dense solves up to this many unknowns, conjugate gradients beyond.
const DENSE_LIMIT: usize = 1500;

/// A non-negative value that may be +∞.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub fn to_f64(self) -> f64 {
        match self {
            Extended::Finite(x) => x,
            Extended::Infinite => f64::INFINITY,
        }
    }

    /// Series combination with a finite conductance `c`: c·x/(c+x), and c
    /// when x is infinite.
    fn series(self, c: f64) -> f64 {
        match self {
            Extended::Infinite => c,
            Extended::Finite(0.0) => 0.0,
            Extended::Finite(x) => c * x / (c + x),
        }
    }

    /// min(self, 1).
    fn min_one(self) -> f64 {
        match self {
            Extended::Infinite => 1.0,
            Extended::Finite(x) => x.min(1.0),
        }
    }
}

/// Vertices at depth ≤ n in BFS order, failing if any vertex above level n
/// is unexpanded.
fn truncated(tree: &MarkedTree, n: usize) -> Result<Vec<VertexId>> {
    let mut order = vec![tree.root()];
    let mut i = 0;
    while i < order.len() {
        let v = order[i];
        i += 1;
        let d = tree.level(v) as usize;
        if d == n {
            continue;
        }
        match tree.children(v) {
            Some(cs) => order.extend_from_slice(cs),
            None => {
                return Err(Error::DepthUnavailable {
                    requested: n,
                    available: d,
                })
            }
        }
    }
    Ok(order)
}

/// Bottom-up recursion over the truncated tree: `leaf` at level n,
/// `combine(v, children values)` above.
fn fold_up<F>(tree: &MarkedTree, n: usize, mut combine: F) -> Result<Extended>
where
    F: FnMut(VertexId, &[(VertexId, Extended)]) -> Extended,
{
    if n == 0 {
        return Ok(Extended::Infinite);
    }
    let order = truncated(tree, n)?;
    let mut value = std::collections::HashMap::with_capacity(order.len());
    let mut buf = Vec::new();
    for &v in order.iter().rev() {
        let val = if tree.level(v) as usize == n {
            Extended::Infinite
        } else {
            buf.clear();
            for &c in tree.children(v).unwrap() {
                buf.push((c, value[&c]));
            }
            combine(v, &buf)
        };
        value.insert(v, val);
    }
    Ok(value[&tree.root()])
}

/// Effective conductance between the root and level `n`.
pub fn effective_conductance(tree: &MarkedTree, n: usize) -> Result<f64> {
    fold_up(tree, n, |_, cs| {
        Extended::Finite(cs.iter().map(|&(c, x)| x.series(tree.cond(c))).sum())
    })
    .map(Extended::to_f64)
}

/// Maximum flow from the root to level `n` with capacities `C_x`, computed by
/// the normalized recursion M(v) = Σ A(c)·min(M(c), 1).
pub fn max_flow(tree: &MarkedTree, n: usize) -> Result<f64> {
    fold_up(tree, n, |_, cs| {
        Extended::Finite(cs.iter().map(|&(c, m)| tree.mark(c) * m.min_one()).sum())
    })
    .map(Extended::to_f64)
}

/// Σ_{|x|=k} C_x for k = 0..=n.
pub fn level_sums(tree: &MarkedTree, n: usize) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; n + 1];
    for v in truncated(tree, n)? {
        sums[tree.level(v) as usize] += tree.cond(v);
    }
    Ok(sums)
}

/// Reversible measure of the walk: C_x(1 + ΣA(x_i)) away from a reflecting
/// root, ΣA(e_i) at a reflecting root.
pub fn invariant_measure<E: Environment + ?Sized>(env: &E, x: VertexId) -> Result<f64> {
    let s = env.sum_child_marks(x).ok_or(Error::Unexpanded(x))?;
    if env.parent(x).is_none() && env.reflects_at_root() {
        Ok(s)
    } else {
        Ok(env.cond(x) * (1.0 + s))
    }
}

/// Largest relative violation of π(x)ω(x,y) = π(y)ω(y,x) over edges with
/// both ends expanded.
pub fn detailed_balance_defect<E: Environment + ?Sized>(env: &E) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for y in 0..env.len() {
        let Some(x) = env.parent(y) else { continue };
        if !env.is_expanded(x) || !env.is_expanded(y) {
            continue;
        }
        // The top spine vertex has no kernel until the spine grows.
        let (kx, ky) = match (crate::walk::kernel(env, x), crate::walk::kernel(env, y)) {
            (Ok(kx), Ok(ky)) => (kx, ky),
            (Err(Error::Unexpanded(_)), _) | (_, Err(Error::Unexpanded(_))) => continue,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        let w_xy = kx.iter().find(|p| p.0 == y).unwrap().1;
        let w_yx = ky.iter().find(|p| p.0 == x).unwrap().1;
        let lhs = invariant_measure(env, x)? * w_xy;
        let rhs = invariant_measure(env, y)? * w_yx;
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
    }
    Ok(worst)
}

/// Effective conductance by solving the Dirichlet problem: potential 1 at
/// the root, 0 on level `n`, harmonic elsewhere; returns the root current.
pub fn conductance_oracle(tree: &MarkedTree, n: usize) -> Result<f64> {
    if n == 0 {
        return Ok(f64::INFINITY);
    }
    let order = truncated(tree, n)?;
    if order.len() > ORACLE_CAP {
        return Err(Error::SizeLimit { cap: ORACLE_CAP });
    }
    // Unknowns: vertices strictly between the root and level n.
    let mut index = std::collections::HashMap::new();
    for &v in &order {
        let d = tree.level(v) as usize;
        if d > 0 && d < n {
            let k = index.len();
            index.insert(v, k);
        }
    }
    let m = index.len();
    // Edges (a, b, conductance) of the truncated tree.
    let edges: Vec<(VertexId, VertexId, f64)> = order
        .iter()
        .filter(|&&v| v != tree.root())
        .map(|&v| (tree.parent(v).unwrap(), v, tree.cond(v)))
        .collect();
    let boundary = |v: VertexId| -> f64 {
        if v == tree.root() {
            1.0
        } else {
            0.0
        }
    };
    let potential: Vec<f64> = if m == 0 {
        Vec::new()
    } else if m <= DENSE_LIMIT {
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut b = DVector::<f64>::zeros(m);
        for &(p, c, g) in &edges {
            match (index.get(&p), index.get(&c)) {
                (Some(&i), Some(&j)) => {
                    a[(i, i)] += g;
                    a[(j, j)] += g;
                    a[(i, j)] -= g;
                    a[(j, i)] -= g;
                }
                (Some(&i), None) => {
                    a[(i, i)] += g;
                    b[i] += g * boundary(c);
                }
                (None, Some(&j)) => {
                    a[(j, j)] += g;
                    b[j] += g * boundary(p);
                }
                (None, None) => {}
            }
        }
        let sol = a.lu().solve(&b).ok_or(Error::NonFinite(f64::NAN))?;
        sol.iter().copied().collect()
    } else {
        conjugate_gradient(m, &edges, &index, &boundary)
    };
    let value = |v: VertexId| match index.get(&v) {
        Some(&i) => potential[i],
        None => boundary(v),
    };
    let current = edges
        .iter()
        .filter(|e| e.0 == tree.root())
        .map(|&(_, c, g)| g * (1.0 - value(c)))
        .sum();
    Ok(current)
}

/// Jacobi-preconditioned CG on the weighted graph Laplacian restricted to
/// the interior unknowns.
fn conjugate_gradient(
    m: usize,
    edges: &[(VertexId, VertexId, f64)],
    index: &std::collections::HashMap<VertexId, usize>,
    boundary: &dyn Fn(VertexId) -> f64,
) -> Vec<f64> {
    let mut inner = Vec::new();
    let mut diag = vec![0.0; m];
    let mut b = vec![0.0; m];
    for &(p, c, g) in edges {
        match (index.get(&p), index.get(&c)) {
            (Some(&i), Some(&j)) => {
                diag[i] += g;
                diag[j] += g;
                inner.push((i, j, g));
            }
            (Some(&i), None) => {
                diag[i] += g;
                b[i] += g * boundary(c);
            }
            (None, Some(&j)) => {
                diag[j] += g;
                b[j] += g * boundary(p);
            }
            (None, None) => {}
        }
    }
    let apply = |x: &[f64], out: &mut [f64]| {
        for i in 0..m {
            out[i] = diag[i] * x[i];
        }
        for &(i, j, g) in &inner {
            out[i] -= g * x[j];
            out[j] -= g * x[i];
        }
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; m];
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let b_norm = dot(&b, &b).sqrt().max(f64::MIN_POSITIVE);
    let mut ap = vec![0.0; m];
    for _ in 0..10 * m + 100 {
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..m {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= 1e-15 * b_norm {
            break;
        }
        for i in 0..m {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..m {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

/// Maximum flow by augmenting paths (Edmonds–Karp) from the root to a
/// super-sink fed by every level-`n` vertex through an infinite edge.
pub fn max_flow_oracle(tree: &MarkedTree, n: usize) -> Result<f64> {
    if n == 0 {
        return Ok(f64::INFINITY);
    }
    let order = truncated(tree, n)?;
    if order.len() > ORACLE_CAP {
        return Err(Error::SizeLimit { cap: ORACLE_CAP });
    }
    let node: std::collections::HashMap<VertexId, usize> =
        order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let sink = order.len();
    let mut g = FlowGraph::new(sink + 1);
    for &v in &order {
        if v != tree.root() {
            g.add_edge(node[&tree.parent(v).unwrap()], node[&v], tree.cond(v));
        }
        if tree.level(v) as usize == n {
            g.add_edge(node[&v], sink, f64::INFINITY);
        }
    }
    Ok(g.max_flow(node[&tree.root()], sink))
}

struct FlowGraph {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
}

impl FlowGraph {
    fn new(n: usize) -> Self {
        Self {
            adj: vec![Vec::new(); n],
            to: Vec::new(),
            cap: Vec::new(),
        }
    }

    fn add_edge(&mut self, a: usize, b: usize, c: f64) {
        self.adj[a].push(self.to.len());
        self.to.push(b);
        self.cap.push(c);
        self.adj[b].push(self.to.len());
        self.to.push(a);
        self.cap.push(0.0);
    }

    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut total = 0.0;
        loop {
            let mut via = vec![usize::MAX; self.adj.len()];
            let mut seen = vec![false; self.adj.len()];
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &e in &self.adj[u] {
                    let w = self.to[e];
                    if !seen[w] && self.cap[e] > 0.0 {
                        seen[w] = true;
                        via[w] = e;
                        queue.push_back(w);
                    }
                }
            }
            if !seen[t] {
                return total;
            }
            let mut push = f64::INFINITY;
            let mut w = t;
            while w != s {
                let e = via[w];
                push = push.min(self.cap[e]);
                w = self.to[e ^ 1];
            }
            let mut w = t;
            while w != s {
                let e = via[w];
                self.cap[e] -= push;
                self.cap[e ^ 1] += push;
                w = self.to[e ^ 1];
            }
            total += push;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mark_law::canonical::*;
    use crate::mark_law::{Atom, MarkLaw};
    use crate::rng::stream_rng;
    use crate::tree::generate_mt;
    use std::sync::Arc;

    fn tree(law: MarkLaw, depth: usize) -> MarkedTree {
        generate_mt(Arc::new(law), depth, &mut stream_rng(1, 0)).unwrap()
    }

    #[test]
    fn conductance_examples() {
        let t = tree(binary_half(), 4);
        assert!((effective_conductance(&t, 1).unwrap() - 1.0).abs() < 1e-15);
        assert!((effective_conductance(&t, 2).unwrap() - 0.5).abs() < 1e-15);
        let p = tree(unary(), 5);
        assert!((effective_conductance(&p, 5).unwrap() - 0.2).abs() < 1e-15);
        assert!((conductance_oracle(&t, 2).unwrap() - 0.5).abs() < 1e-10);
        assert!((conductance_oracle(&p, 5).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn flow_examples() {
        let t = tree(binary_half(), 6);
        for n in 1..=6 {
            assert!((max_flow(&t, n).unwrap() - 1.0).abs() < 1e-15);
        }
        assert!((max_flow_oracle(&t, 3).unwrap() - 1.0).abs() < 1e-12);
        let t = tree(binary_one(), 4);
        for n in 1..=4 {
            assert_eq!(max_flow(&t, n).unwrap(), 2.0);
        }
        assert_eq!(max_flow_oracle(&t, 3).unwrap(), 2.0);
        let p = tree(MarkLaw::deterministic([0.5]).unwrap(), 3);
        assert_eq!(max_flow(&p, 3).unwrap(), 0.125);
    }

    #[test]
    fn missing_depth_is_reported() {
        let t = tree(binary_half(), 2);
        assert!(matches!(
            effective_conductance(&t, 3),
            Err(Error::DepthUnavailable {
                requested: 3,
                available: 2
            })
        ));
    }

    #[test]
    fn dead_branches_carry_nothing() {
        let law =
            MarkLaw::finite(vec![Atom::new(0.5, []), Atom::new(0.5, [0.7, 0.6, 0.5])]).unwrap();
        for seed in 0..30 {
            let t = generate_mt(Arc::new(law.clone()), 5, &mut stream_rng(seed, 0)).unwrap();
            let a = effective_conductance(&t, 5).unwrap();
            let b = conductance_oracle(&t, 5).unwrap();
            assert!((a - b).abs() <= 1e-9 * (1.0 + a), "{a} vs {b}");
            let a = max_flow(&t, 5).unwrap();
            let b = max_flow_oracle(&t, 5).unwrap();
            assert!((a - b).abs() <= 1e-9 * (1.0 + a));
            if t.level_set(5).unwrap().is_empty() {
                assert_eq!(a, 0.0);
            }
        }
    }

    #[test]
    fn invariant_measure_examples() {
        let t = tree(binary_half(), 2);
        assert_eq!(invariant_measure(&t, 0).unwrap(), 1.0);
        let c = t.children(0).unwrap()[0];
        assert_eq!(invariant_measure(&t, c).unwrap(), 1.0);
        let p = tree(unary(), 4);
        let vals: Vec<f64> = (1..4).map(|v| invariant_measure(&p, v).unwrap()).collect();
        assert!(vals.iter().all(|&x| x == 2.0));
        let leaf = MarkLaw::finite(vec![Atom::new(0.5, []), Atom::new(0.5, [0.5, 0.5])]).unwrap();
        let t = generate_mt(Arc::new(leaf), 4, &mut stream_rng(3, 0)).unwrap();
        for v in 1..t.len() {
            if t.children(v).map(|c| c.is_empty()) == Some(true) {
                assert_eq!(invariant_measure(&t, v).unwrap(), t.cond(v));
            }
        }
        assert!(matches!(
            invariant_measure(&t, t.len() - 1),
            Err(Error::Unexpanded(_))
        ));
    }

    #[test]
    fn detailed_balance_on_sampled_trees() {
        let t = tree(two_atom_critical(), 6);
        assert!(detailed_balance_defect(&t).unwrap() <= 1e-12);
    }

    #[test]
    fn conductance_and_flow_decrease_with_depth() {
        let t = generate_mt(Arc::new(two_atom_critical()), 8, &mut stream_rng(8, 0)).unwrap();
        for n in 1..8 {
            assert!(
                effective_conductance(&t, n + 1).unwrap() <= effective_conductance(&t, n).unwrap()
            );
            assert!(max_flow(&t, n + 1).unwrap() <= max_flow(&t, n).unwrap() + 1e-15);
        }
    }

    #[test]
    fn flow_is_below_every_level_cut() {
        let t = generate_mt(Arc::new(two_atom_critical()), 8, &mut stream_rng(9, 0)).unwrap();
        let sums = level_sums(&t, 8).unwrap();
        let f = max_flow(&t, 8).unwrap();
        for s in &sums[1..] {
            assert!(f <= s + 1e-12);
        }
        let det = tree(binary_quarter(), 6);
        let sums = level_sums(&det, 6).unwrap();
        let min = sums[1..].iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((max_flow(&det, 6).unwrap() - min).abs() < 1e-15);
    }

    #[test]
    fn conjugate_gradient_matches_dense() {
        // A binary tree of depth 11 has 2046 interior unknowns: CG path.
        let t = generate_mt(
            Arc::new(MarkLaw::deterministic([0.6, 0.3]).unwrap()),
            11,
            &mut stream_rng(1, 0),
        )
        .unwrap();
        let a = effective_conductance(&t, 11).unwrap();
        let b = conductance_oracle(&t, 11).unwrap();
        assert!((a - b).abs() <= 1e-9 * a, "{a} vs {b}");
    }
}
