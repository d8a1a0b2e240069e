//! Marked trees: depth-truncated or lazily grown Galton–Watson trees (MT)
//! and trees with a semi-infinite spine (IMT).
//!
//! Broods are keyed: the children of a vertex are drawn from a random
//! stream addressed by `(tree seed, vertex key)`, and child keys derive from
//! the parent key. The tree is therefore a pure function of its seed, no
//! matter in which order vertices get expanded.

use crate::error::{Error, Result};
use crate::mark_law::{size_bias, Brood, MarkLaw, SizeBiasedLaw};
use crate::rng::{combine, mix64, stream_rng};
use rand::Rng;
use serde::Serialize;
use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

pub type VertexId = usize;

pub const DEFAULT_SIZE_CAP: usize = 100_000_000;

const ROOT_KEY: u64 = 0x6D74_5F72_6F6F_7400;
const RAY_SALT: u64 = 0x7261_795F_7665_7274;

static NEXT_UID: AtomicU64 = AtomicU64::new(1);

fn fresh_uid() -> u64 {
    NEXT_UID.fetch_add(1, Ordering::Relaxed)
}

fn ray_key(j: usize) -> u64 {
    combine(RAY_SALT, j as u64)
}

/// Key of child `i` of the vertex keyed `key`.
pub fn child_key(key: u64, i: usize) -> u64 {
    combine(key, i as u64)
}

/// The q-brood of the off-spine vertex keyed `key` in the tree seeded `seed`.
/// Lets callers explore subtrees without materializing them.
pub fn keyed_brood(law: &MarkLaw, seed: u64, key: u64) -> Brood {
    law.sample(&mut stream_rng(seed, key))
}

#[derive(Debug, Clone, Copy)]
struct Vertex {
    parent: Option<VertexId>,
    mark: f64,
    c: f64,
    /// Depth on MT, horocycle coordinate on IMT.
    level: i64,
    /// IMT: index of the ray vertex this vertex hangs from.
    anchor: usize,
    key: u64,
    children: Option<(u32, u32)>,
}

#[derive(Debug, Clone)]
struct Arena {
    uid: u64,
    seed: u64,
    law: Arc<MarkLaw>,
    verts: Vec<Vertex>,
    pool: Vec<VertexId>,
    cap: usize,
}

impl Arena {
    fn new(law: Arc<MarkLaw>, seed: u64) -> Self {
        Self {
            uid: fresh_uid(),
            seed,
            law,
            verts: Vec::new(),
            pool: Vec::new(),
            cap: DEFAULT_SIZE_CAP,
        }
    }

    fn push(&mut self, v: Vertex) -> Result<VertexId> {
        if self.verts.len() >= self.cap {
            return Err(Error::SizeLimit { cap: self.cap });
        }
        self.verts.push(v);
        Ok(self.verts.len() - 1)
    }

    fn children(&self, v: VertexId) -> Option<&[VertexId]> {
        self.verts[v]
            .children
            .map(|(s, n)| &self.pool[s as usize..(s + n) as usize])
    }

    fn brood_rng(&self, key: u64) -> crate::rng::Rng {
        stream_rng(self.seed, key)
    }

    /// Appends fresh children with `marks` under `v`, keeping `existing`
    /// (index, id) as an already-built child.
    fn attach(
        &mut self,
        v: VertexId,
        marks: &[f64],
        existing: Option<(usize, VertexId)>,
    ) -> Result<()> {
        if self.verts.len() + marks.len() > self.cap {
            return Err(Error::SizeLimit { cap: self.cap });
        }
        let parent = self.verts[v];
        let start = self.pool.len() as u32;
        for (i, &m) in marks.iter().enumerate() {
            let id = match existing {
                Some((k, id)) if k == i => id,
                _ => self.push(Vertex {
                    parent: Some(v),
                    mark: m,
                    c: parent.c * m,
                    level: parent.level + 1,
                    anchor: parent.anchor,
                    key: child_key(parent.key, i),
                    children: None,
                })?,
            };
            self.pool.push(id);
        }
        self.verts[v].children = Some((start, marks.len() as u32));
        Ok(())
    }

    fn expand_with_law(&mut self, v: VertexId) -> Result<()> {
        let brood = keyed_brood(&self.law, self.seed, self.verts[v].key);
        self.attach(v, &brood.marks, None)
    }

    fn dump<W: Write>(&self, out: &mut W, level_name: &str) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Line {
            id: VertexId,
            parent: Option<VertexId>,
            #[serde(flatten)]
            level: std::collections::BTreeMap<String, i64>,
            mark: Option<f64>,
            #[serde(rename = "C")]
            c: f64,
        }
        for (id, v) in self.verts.iter().enumerate() {
            let line = Line {
                id,
                parent: v.parent,
                level: [(level_name.to_string(), v.level)].into_iter().collect(),
                mark: v.mark.is_finite().then_some(v.mark),
                c: v.c,
            };
            serde_json::to_writer(&mut *out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Read/grow interface shared by both tree kinds; the walk runs on either.
pub trait Environment {
    /// Identifier distinguishing tree instances (not seeds).
    fn uid(&self) -> u64;
    fn root(&self) -> VertexId;
    fn law(&self) -> &MarkLaw;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn parent(&self, v: VertexId) -> Option<VertexId>;
    /// `None` when `v` has not been expanded yet.
    fn children(&self, v: VertexId) -> Option<&[VertexId]>;
    /// A(v); NaN at the MT root and at the top ray vertex.
    fn mark(&self, v: VertexId) -> f64;
    /// Product of marks from the root (MT) or relative to v_0 (IMT).
    fn cond(&self, v: VertexId) -> f64;
    /// Depth on MT, horocycle coordinate h on IMT.
    fn level(&self, v: VertexId) -> i64;
    /// Expands `v` unless already expanded.
    fn ensure_expanded(&mut self, v: VertexId) -> Result<()>;
    /// Parent of `v`, growing the ray first if `v` is its top vertex.
    fn parent_or_grow(&mut self, v: VertexId) -> Result<Option<VertexId>>;
    /// True when the root has no parent and the walk reflects there.
    fn reflects_at_root(&self) -> bool;
    fn tree_seed(&self) -> u64;
    /// Brood key of `v`; see [`keyed_brood`].
    fn vertex_key(&self, v: VertexId) -> u64;
    /// For a spine vertex v_j with j ≥ 1, the spine vertex v_{j-1} below it.
    fn spine_below(&self, _v: VertexId) -> Option<VertexId> {
        None
    }
    fn is_expanded(&self, v: VertexId) -> bool {
        self.children(v).is_some()
    }
    fn sum_child_marks(&self, v: VertexId) -> Option<f64> {
        self.children(v)
            .map(|cs| cs.iter().map(|&c| self.mark(c)).sum())
    }
}

/// A Galton–Watson marked tree grown lazily from its root.
#[derive(Debug, Clone)]
pub struct MarkedTree {
    arena: Arena,
}

impl MarkedTree {
    /// Root-only tree; nothing is sampled until vertices are expanded.
    pub fn new(law: Arc<MarkLaw>, seed: u64) -> Self {
        let mut arena = Arena::new(law, seed);
        arena.verts.push(Vertex {
            parent: None,
            mark: f64::NAN,
            c: 1.0,
            level: 0,
            anchor: 0,
            key: mix64(ROOT_KEY),
            children: None,
        });
        Self { arena }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.arena.cap = cap;
        self
    }

    pub fn seed(&self) -> u64 {
        self.arena.seed
    }

    pub fn law_arc(&self) -> &Arc<MarkLaw> {
        &self.arena.law
    }

    /// A fresh copy grown from the same seed (same environment, new uid,
    /// nothing materialized beyond the root).
    pub fn regrow(&self) -> Self {
        MarkedTree::new(self.arena.law.clone(), self.arena.seed).with_cap(self.arena.cap)
    }

    /// Expands every vertex above `depth`.
    pub fn expand_to_depth(&mut self, depth: usize) -> Result<()> {
        let mut level = vec![0];
        for _ in 0..depth {
            let mut next = Vec::new();
            for v in level {
                self.ensure_expanded(v)?;
                next.extend_from_slice(self.children(v).unwrap());
            }
            level = next;
        }
        Ok(())
    }

    /// Expands a frontier vertex with a fresh q-draw.
    pub fn expand_frontier(&mut self, v: VertexId) -> Result<()> {
        if self.arena.verts[v].children.is_some() {
            return Err(Error::NotFrontier(v));
        }
        self.arena.expand_with_law(v)
    }

    /// Unexpanded vertices.
    pub fn frontier(&self) -> Vec<VertexId> {
        (0..self.len()).filter(|&v| !self.is_expanded(v)).collect()
    }

    /// Vertices at depth `n`; fails unless every vertex above is expanded.
    pub fn level_set(&self, n: usize) -> Result<Vec<VertexId>> {
        let mut level = vec![0];
        for k in 0..n {
            let mut next = Vec::new();
            for &v in &level {
                match self.children(v) {
                    Some(cs) => next.extend_from_slice(cs),
                    None => {
                        return Err(Error::DepthUnavailable {
                            requested: n,
                            available: k,
                        })
                    }
                }
            }
            level = next;
        }
        Ok(level)
    }

    /// First depth with no vertices, if it is at most `depth`.
    pub fn extinction_level(&self, depth: usize) -> Result<Option<usize>> {
        for n in 0..=depth {
            if self.level_set(n)?.is_empty() {
                return Ok(Some(n));
            }
        }
        Ok(None)
    }

    pub fn dump_jsonl<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        self.arena.dump(out, "depth")
    }
}

/// Samples an MT tree expanded to `depth`.
pub fn generate_mt<R: Rng + ?Sized>(
    law: Arc<MarkLaw>,
    depth: usize,
    rng: &mut R,
) -> Result<MarkedTree> {
    let mut t = MarkedTree::new(law, rng.random());
    t.expand_to_depth(depth)?;
    Ok(t)
}

impl Environment for MarkedTree {
    fn uid(&self) -> u64 {
        self.arena.uid
    }
    fn root(&self) -> VertexId {
        0
    }
    fn law(&self) -> &MarkLaw {
        &self.arena.law
    }
    fn len(&self) -> usize {
        self.arena.verts.len()
    }
    fn parent(&self, v: VertexId) -> Option<VertexId> {
        self.arena.verts[v].parent
    }
    fn children(&self, v: VertexId) -> Option<&[VertexId]> {
        self.arena.children(v)
    }
    fn mark(&self, v: VertexId) -> f64 {
        self.arena.verts[v].mark
    }
    fn cond(&self, v: VertexId) -> f64 {
        self.arena.verts[v].c
    }
    fn level(&self, v: VertexId) -> i64 {
        self.arena.verts[v].level
    }
    fn ensure_expanded(&mut self, v: VertexId) -> Result<()> {
        if self.arena.verts[v].children.is_none() {
            self.arena.expand_with_law(v)?;
        }
        Ok(())
    }
    fn parent_or_grow(&mut self, v: VertexId) -> Result<Option<VertexId>> {
        Ok(self.parent(v))
    }
    fn reflects_at_root(&self) -> bool {
        true
    }
    fn tree_seed(&self) -> u64 {
        self.arena.seed
    }
    fn vertex_key(&self, v: VertexId) -> u64 {
        self.arena.verts[v].key
    }
}

/// A tree with a semi-infinite spine `v_0, v_1, ...` (v_{j+1} the parent
/// of v_j), grown on demand, with MT subtrees hanging off the spine.
#[derive(Debug, Clone)]
pub struct RayedTree {
    arena: Arena,
    sb: Arc<SizeBiasedLaw>,
    ray: Vec<VertexId>,
}

impl RayedTree {
    /// Spine of length `ray_len` (vertices v_0..v_{ray_len}); v_0 unexpanded.
    pub fn new(law: Arc<MarkLaw>, seed: u64, ray_len: usize) -> Result<Self> {
        let sb = Arc::new(size_bias(&law)?);
        let mut arena = Arena::new(law, seed);
        arena.verts.push(Vertex {
            parent: None,
            mark: f64::NAN,
            c: 1.0,
            level: 0,
            anchor: 0,
            key: ray_key(0),
            children: None,
        });
        let mut t = Self {
            arena,
            sb,
            ray: vec![0],
        };
        t.grow_ray(ray_len)?;
        Ok(t)
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.arena.cap = cap;
        self
    }

    pub fn seed(&self) -> u64 {
        self.arena.seed
    }

    pub fn law_arc(&self) -> &Arc<MarkLaw> {
        &self.arena.law
    }

    pub fn size_biased(&self) -> &SizeBiasedLaw {
        &self.sb
    }

    pub fn regrow(&self) -> Result<Self> {
        Ok(
            RayedTree::new(self.arena.law.clone(), self.arena.seed, self.ray_len())?
                .with_cap(self.arena.cap),
        )
    }

    /// Current spine length L (v_L is the top vertex).
    pub fn ray_len(&self) -> usize {
        self.ray.len() - 1
    }

    pub fn ray_vertex(&self, j: usize) -> Option<VertexId> {
        self.ray.get(j).copied()
    }

    pub fn ray(&self) -> &[VertexId] {
        &self.ray
    }

    /// Grows the spine until v_{len} exists.
    pub fn grow_ray(&mut self, len: usize) -> Result<()> {
        while self.ray_len() < len {
            let j = self.ray.len();
            let below = self.ray[j - 1];
            let mut rng = self.arena.brood_rng(ray_key(j));
            let (brood, k) = self.sb.sample_with_ray_child(&mut rng);
            let a = brood.marks[k];
            let lower = self.arena.verts[below];
            self.arena.verts[below].mark = a;
            let top = self.arena.push(Vertex {
                parent: None,
                mark: f64::NAN,
                c: lower.c / a,
                level: lower.level - 1,
                anchor: j,
                key: ray_key(j),
                children: None,
            })?;
            self.arena.verts[below].parent = Some(top);
            self.ray.push(top);
            self.arena.attach(top, &brood.marks, Some((k, below)))?;
        }
        Ok(())
    }

    /// Index j of the spine vertex `x` hangs from (x itself if on the spine).
    pub fn anchor(&self, x: VertexId) -> usize {
        self.arena.verts[x].anchor
    }

    pub fn is_on_ray(&self, x: VertexId) -> bool {
        let j = self.anchor(x);
        self.ray.get(j) == Some(&x)
    }

    /// Graph distance from `x` to the spine.
    pub fn distance_to_ray(&self, x: VertexId) -> usize {
        (self.level(x) + self.anchor(x) as i64) as usize
    }

    /// Replaces the (not yet expanded) brood of `v` with the given marks.
    pub fn attach_brood(&mut self, v: VertexId, marks: &[f64]) -> Result<()> {
        if self.arena.verts[v].children.is_some() {
            return Err(Error::NotFrontier(v));
        }
        self.arena.attach(v, marks, None)
    }

    /// Expands every off-spine vertex within `depth` of the spine
    /// vertices v_0..v_L.
    pub fn expand_subtrees(&mut self, depth: usize) -> Result<()> {
        if depth == 0 {
            return Ok(());
        }
        self.ensure_expanded(self.ray[0])?;
        let ray = self.ray.clone();
        for (j, &r) in ray.iter().enumerate() {
            let mut level: Vec<VertexId> = self
                .children(r)
                .unwrap()
                .iter()
                .copied()
                .filter(|&c| j == 0 || c != ray[j - 1])
                .collect();
            for _ in 1..depth {
                let mut next = Vec::new();
                for v in level {
                    self.ensure_expanded(v)?;
                    next.extend_from_slice(self.children(v).unwrap());
                }
                level = next;
            }
        }
        Ok(())
    }

    pub fn shift(&self, origin: VertexId) -> ShiftView<'_> {
        ShiftView { tree: self, origin }
    }

    pub fn dump_jsonl<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        self.arena.dump(out, "h")
    }
}

/// Samples an IMT tree with a spine of `ray_len` and hanging subtrees
/// materialized to `subtree_depth`.
pub fn generate_imt<R: Rng + ?Sized>(
    law: Arc<MarkLaw>,
    ray_len: usize,
    subtree_depth: usize,
    rng: &mut R,
) -> Result<RayedTree> {
    let mut t = RayedTree::new(law, rng.random(), ray_len)?;
    t.expand_subtrees(subtree_depth)?;
    Ok(t)
}

impl Environment for RayedTree {
    fn uid(&self) -> u64 {
        self.arena.uid
    }
    fn root(&self) -> VertexId {
        self.ray[0]
    }
    fn law(&self) -> &MarkLaw {
        &self.arena.law
    }
    fn len(&self) -> usize {
        self.arena.verts.len()
    }
    fn parent(&self, v: VertexId) -> Option<VertexId> {
        self.arena.verts[v].parent
    }
    fn children(&self, v: VertexId) -> Option<&[VertexId]> {
        self.arena.children(v)
    }
    fn mark(&self, v: VertexId) -> f64 {
        self.arena.verts[v].mark
    }
    fn cond(&self, v: VertexId) -> f64 {
        self.arena.verts[v].c
    }
    fn level(&self, v: VertexId) -> i64 {
        self.arena.verts[v].level
    }
    fn ensure_expanded(&mut self, v: VertexId) -> Result<()> {
        if self.arena.verts[v].children.is_some() {
            return Ok(());
        }
        if v == self.ray[0] {
            let mut rng = self.arena.brood_rng(self.arena.verts[v].key);
            let brood = self.sb.sample_root_mixture(&mut rng);
            self.arena.attach(v, &brood.marks, None)
        } else {
            self.arena.expand_with_law(v)
        }
    }
    fn parent_or_grow(&mut self, v: VertexId) -> Result<Option<VertexId>> {
        if self.arena.verts[v].parent.is_none() {
            let l = self.ray_len();
            self.grow_ray((2 * l).max(l + 1))?;
        }
        Ok(self.arena.verts[v].parent)
    }
    fn reflects_at_root(&self) -> bool {
        false
    }
    fn tree_seed(&self) -> u64 {
        self.arena.seed
    }
    fn vertex_key(&self, v: VertexId) -> u64 {
        self.arena.verts[v].key
    }
    fn spine_below(&self, v: VertexId) -> Option<VertexId> {
        let j = self.anchor(v);
        (j > 0 && self.ray[j] == v).then(|| self.ray[j - 1])
    }
}

/// The rayed tree re-rooted at `origin`: same structure and marks, with
/// horocycle coordinates measured from the origin.
#[derive(Debug, Clone, Copy)]
pub struct ShiftView<'a> {
    tree: &'a RayedTree,
    origin: VertexId,
}

impl<'a> ShiftView<'a> {
    pub fn origin(&self) -> VertexId {
        self.origin
    }

    pub fn tree(&self) -> &'a RayedTree {
        self.tree
    }

    pub fn h(&self, x: VertexId) -> i64 {
        self.tree.level(x) - self.tree.level(self.origin)
    }

    /// Conductance relative to the origin.
    pub fn cond(&self, x: VertexId) -> f64 {
        self.tree.cond(x) / self.tree.cond(self.origin)
    }

    pub fn shift(&self, origin: VertexId) -> ShiftView<'a> {
        ShiftView {
            tree: self.tree,
            origin,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.origin == self.tree.root()
    }
}

/// Galton–Watson survival probability to infinity: one minus the smallest
/// fixed point of the offspring generating function.
pub fn survival_probability(law: &MarkLaw) -> f64 {
    let mut s = 0.0;
    for _ in 0..100_000 {
        let next = law.offspring_pgf(s);
        if (next - s).abs() < 1e-15 {
            s = next;
            break;
        }
        s = next;
    }
    1.0 - s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mark_law::canonical::*;
    use crate::mark_law::Atom;
    use crate::rng::stream_rng;

    #[test]
    fn complete_binary_tree() {
        let t = generate_mt(Arc::new(binary_half()), 3, &mut stream_rng(1, 0)).unwrap();
        assert_eq!(t.level_set(3).unwrap().len(), 8);
        let total: usize = (0..=3).map(|n| t.level_set(n).unwrap().len()).sum();
        assert_eq!(total, 15);
        for v in t.level_set(3).unwrap() {
            assert_eq!(t.cond(v), 0.125);
            assert_eq!(t.level(v), 3);
        }
    }

    #[test]
    fn depth_zero_is_root_only() {
        let t = generate_mt(Arc::new(binary_half()), 0, &mut stream_rng(1, 0)).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.frontier(), vec![0]);
    }

    #[test]
    fn links_and_products_are_consistent() {
        let t = generate_mt(Arc::new(two_atom_critical()), 6, &mut stream_rng(2, 0)).unwrap();
        for v in 0..t.len() {
            if let Some(cs) = t.children(v) {
                for &c in cs {
                    assert_eq!(t.parent(c), Some(v));
                    assert_eq!(t.level(c), t.level(v) + 1);
                    let rel = (t.cond(c) - t.cond(v) * t.mark(c)).abs() / t.cond(c);
                    assert!(rel <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn expand_frontier_appends_brood_once() {
        let law = MarkLaw::deterministic([0.2, 0.3, 0.5]).unwrap();
        let mut t = MarkedTree::new(Arc::new(law), 3);
        t.expand_frontier(0).unwrap();
        let marks: Vec<f64> = t.children(0).unwrap().iter().map(|&c| t.mark(c)).collect();
        assert_eq!(marks, vec![0.2, 0.3, 0.5]);
        assert!(matches!(t.expand_frontier(0), Err(Error::NotFrontier(0))));
    }

    #[test]
    fn size_cap_is_enforced() {
        let mut t = MarkedTree::new(Arc::new(binary_half()), 1).with_cap(10);
        assert!(matches!(
            t.expand_to_depth(5),
            Err(Error::SizeLimit { cap: 10 })
        ));
    }

    #[test]
    fn regrowth_reproduces_the_same_tree() {
        let law = Arc::new(two_atom_critical());
        let mut a = MarkedTree::new(law.clone(), 99);
        a.expand_to_depth(5).unwrap();
        let mut b = a.regrow();
        b.expand_to_depth(5).unwrap();
        let (mut da, mut db) = (Vec::new(), Vec::new());
        a.dump_jsonl(&mut da).unwrap();
        b.dump_jsonl(&mut db).unwrap();
        assert_eq!(da, db);
        assert_ne!(a.uid(), b.uid());
    }

    #[test]
    fn expansion_order_does_not_change_broods() {
        let law = Arc::new(two_atom_critical());
        let mut a = MarkedTree::new(law.clone(), 5);
        a.expand_to_depth(2).unwrap();
        let mut b = MarkedTree::new(law, 5);
        b.ensure_expanded(0).unwrap();
        let cs: Vec<_> = b.children(0).unwrap().to_vec();
        for &c in cs.iter().rev() {
            b.ensure_expanded(c).unwrap();
        }
        let marks = |t: &MarkedTree, v: VertexId| -> Vec<f64> {
            t.children(v).unwrap().iter().map(|&c| t.mark(c)).collect()
        };
        let ca: Vec<_> = a.children(0).unwrap().to_vec();
        for (x, y) in ca.iter().zip(&cs) {
            assert_eq!(marks(&a, *x), marks(&b, *y));
        }
    }

    #[test]
    fn extinction_frequency_matches_survival_probability() {
        // P(N=0) = 1/4, P(N=2) = 3/4: survival probability 2/3.
        let law = Arc::new(
            MarkLaw::finite(vec![Atom::new(0.25, []), Atom::new(0.75, [0.5, 0.5])]).unwrap(),
        );
        let q = survival_probability(&law);
        assert!((q - 2.0 / 3.0).abs() < 1e-12);
        let reps = 4000;
        let mut survived = 0;
        for i in 0..reps {
            let mut t = MarkedTree::new(law.clone(), i);
            // Grow only surviving lineages until depth 20.
            let mut level = vec![0];
            for _ in 0..20 {
                let mut next = Vec::new();
                for v in level {
                    t.ensure_expanded(v).unwrap();
                    next.extend_from_slice(t.children(v).unwrap());
                }
                next.truncate(64);
                level = next;
            }
            if !level.is_empty() {
                survived += 1;
            }
        }
        let p = survived as f64 / reps as f64;
        // Survival to depth 20 exceeds survival forever by a negligible amount here.
        let se = (q * (1.0 - q) / reps as f64).sqrt();
        assert!((p - q).abs() <= 4.0 * se, "p = {p}, q = {q}");
    }

    #[test]
    fn rayed_tree_spine_coordinates() {
        let mut t = RayedTree::new(Arc::new(binary_half()), 7, 5).unwrap();
        for j in 0..=5 {
            assert_eq!(t.level(t.ray_vertex(j).unwrap()), -(j as i64));
        }
        for j in 1..=5 {
            let v = t.ray_vertex(j).unwrap();
            assert_eq!(t.children(v).unwrap().len(), 2);
            assert!(t
                .children(v)
                .unwrap()
                .contains(&t.ray_vertex(j - 1).unwrap()));
        }
        t.expand_subtrees(3).unwrap();
        for v in 0..t.len() {
            if let Some(p) = t.parent(v) {
                assert_eq!(t.level(p), t.level(v) - 1);
                assert!(t.children(p).unwrap().contains(&v));
                let rel = (t.cond(v) - t.cond(p) * t.mark(v)).abs() / t.cond(v);
                assert!(rel <= 1e-12);
            }
        }
    }

    #[test]
    fn ray_grows_on_demand() {
        let mut t = RayedTree::new(Arc::new(binary_half()), 7, 2).unwrap();
        let top = t.ray_vertex(2).unwrap();
        assert_eq!(t.parent(top), None);
        let p = t.parent_or_grow(top).unwrap().unwrap();
        assert_eq!(t.level(p), -3);
        assert_eq!(t.ray_len(), 4);
    }

    #[test]
    fn ray_atom_frequencies_follow_size_bias() {
        let t = RayedTree::new(Arc::new(two_atom_critical()), 11, 10_000).unwrap();
        let high = (1..=10_000)
            .filter(|&j| {
                let v = t.ray_vertex(j).unwrap();
                t.mark(t.children(v).unwrap()[0]) == 0.75
            })
            .count();
        let n: f64 = 10_000.0;
        let se = (0.75 * 0.25 / n).sqrt();
        assert!((high as f64 / n - 0.75).abs() <= 4.0 * se);
    }

    #[test]
    fn shift_views() {
        let mut t = RayedTree::new(Arc::new(binary_half()), 3, 3).unwrap();
        t.ensure_expanded(t.root()).unwrap();
        let root = t.root();
        let view = t.shift(root);
        assert!(view.is_identity());
        let c = t.children(root).unwrap()[0];
        let moved = view.shift(c);
        assert_eq!(moved.h(root), -1);
        assert_eq!(moved.h(c), 0);
        let back = moved.shift(root);
        assert!(back.is_identity());
        assert_eq!(back.h(c), 1);
    }

    #[test]
    fn distance_to_ray() {
        let mut t = RayedTree::new(Arc::new(binary_half()), 3, 3).unwrap();
        t.expand_subtrees(2).unwrap();
        let v2 = t.ray_vertex(2).unwrap();
        assert_eq!(t.distance_to_ray(v2), 0);
        let off = *t
            .children(v2)
            .unwrap()
            .iter()
            .find(|&&c| !t.is_on_ray(c))
            .unwrap();
        assert_eq!(t.distance_to_ray(off), 1);
        let g = t.children(off).unwrap()[0];
        assert_eq!(t.distance_to_ray(g), 2);
    }
}
