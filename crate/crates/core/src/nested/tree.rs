//! Rooted leaf-labelled trees grown by the alpha-gamma rule, the up-down
//! chain on them, and the spinal decomposition along the path from the
//! root to leaf 1.
//!
//! Each branch point keeps an ordered child list. On the spine the first
//! child always continues the spine and the rest form the bush in its
//! left-to-right order; off the spine the order carries no meaning.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde_json::{json, Value};

use super::NestedPair;
use crate::error::{invalid, Result};
use crate::partition::Composition;

const NONE: usize = usize::MAX;
const ROOT: usize = 0;

/// Tolerance of the per-step weight audit.
const AUDIT_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct LabeledTree {
    parent: Vec<usize>,
    children: Vec<Vec<usize>>,
    /// Leaf label, 0 for the root and branch points.
    label: Vec<u32>,
    alive: Vec<bool>,
    free: Vec<usize>,
    /// Node of the leaf labelled `i + 1`.
    leaf_of: Vec<usize>,
}

/// Where a new leaf attaches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Site {
    /// The edge from a node up to its parent.
    Edge(usize),
    /// A branch point.
    Vertex(usize),
}

fn check_rule(alpha: f64, gamma: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(0.0..=alpha).contains(&gamma) {
        return Err(invalid(format!("gamma must lie in [0, alpha], got {gamma}")));
    }
    Ok(())
}

impl LabeledTree {
    /// The root joined to leaf 1.
    pub fn single() -> Self {
        Self {
            parent: vec![NONE, ROOT],
            children: vec![vec![1], Vec::new()],
            label: vec![0, 1],
            alive: vec![true, true],
            free: Vec::new(),
            leaf_of: vec![1],
        }
    }

    /// A tree grown from a single leaf to `n` leaves.
    pub fn grow<R: Rng + ?Sized>(n: usize, alpha: f64, gamma: f64, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(invalid("a tree has at least one leaf"));
        }
        let mut t = Self::single();
        for _ in 1..n {
            t.grow_tree(alpha, gamma, rng)?;
        }
        Ok(t)
    }

    pub fn leaves(&self) -> usize {
        self.leaf_of.len()
    }

    fn alloc(&mut self, parent: usize, label: u32) -> usize {
        match self.free.pop() {
            Some(v) => {
                self.parent[v] = parent;
                self.children[v].clear();
                self.label[v] = label;
                self.alive[v] = true;
                v
            }
            None => {
                self.parent.push(parent);
                self.children.push(Vec::new());
                self.label.push(label);
                self.alive.push(true);
                self.parent.len() - 1
            }
        }
    }

    fn release(&mut self, v: usize) {
        self.alive[v] = false;
        self.children[v].clear();
        self.free.push(v);
    }

    fn is_leaf(&self, v: usize) -> bool {
        self.label[v] != 0
    }

    fn on_spine(&self, v: usize) -> bool {
        let mut x = self.leaf_of[0];
        while x != NONE {
            if x == v {
                return true;
            }
            x = self.parent[x];
        }
        false
    }

    fn replace_child(&mut self, p: usize, old: usize, new: usize) {
        let slot = self.children[p]
            .iter()
            .position(|&c| c == old)
            .expect("child of parent");
        self.children[p][slot] = new;
        self.parent[new] = p;
    }

    /// Attachment sites with their weights: `1 - α` for an edge above a
    /// leaf, `γ` for any other edge, `(d - 2)α - γ` for a branch point of
    /// degree `d`. The weights sum to `k - α` with `k` leaves.
    fn sites(&self, alpha: f64, gamma: f64) -> Vec<(Site, f64)> {
        let mut out = Vec::new();
        for v in 1..self.parent.len() {
            if !self.alive[v] {
                continue;
            }
            if self.is_leaf(v) {
                out.push((Site::Edge(v), 1.0 - alpha));
            } else {
                out.push((Site::Edge(v), gamma));
                let c = self.children[v].len() as f64;
                out.push((Site::Vertex(v), (c - 1.0) * alpha - gamma));
            }
        }
        out
    }

    /// Adds leaf `k + 1` by the alpha-gamma growth rule.
    pub fn grow_tree<R: Rng + ?Sized>(&mut self, alpha: f64, gamma: f64, rng: &mut R) -> Result<()> {
        check_rule(alpha, gamma)?;
        let sites = self.sites(alpha, gamma);
        let total: f64 = sites.iter().map(|s| s.1).sum();
        let k = self.leaves() as f64;
        assert!(
            (total - (k - alpha)).abs() < AUDIT_TOL,
            "site weights sum to {total}, expected {}",
            k - alpha
        );
        let mut u = rng.random::<f64>() * total;
        let mut site = sites.iter().rev().find(|s| s.1 > 0.0).expect("positive weight").0;
        for &(s, w) in &sites {
            if u < w {
                site = s;
                break;
            }
            u -= w;
        }
        let label = self.leaves() as u32 + 1;
        match site {
            Site::Edge(v) => {
                let p = self.parent[v];
                let w = self.alloc(p, 0);
                self.replace_child(p, v, w);
                self.parent[v] = w;
                let leaf = self.alloc(w, label);
                self.children[w] = vec![v, leaf];
                self.leaf_of.push(leaf);
            }
            Site::Vertex(v) => {
                let leaf = self.alloc(v, label);
                let pos = if self.on_spine(v) {
                    self.bush_position(v, alpha, gamma, rng)
                } else {
                    self.children[v].len()
                };
                self.children[v].insert(pos, leaf);
                self.leaf_of.push(leaf);
            }
        }
        debug_assert!(self.validate().is_ok());
        Ok(())
    }

    /// Child-list index for a new subtree in the bush at spinal vertex `v`:
    /// weight 0 at the far left, `α` in each of the gaps between bush
    /// members, and `α - γ` at the far right.
    fn bush_position<R: Rng + ?Sized>(&self, v: usize, alpha: f64, gamma: f64, rng: &mut R) -> usize {
        let c = self.children[v].len() - 1;
        let gaps = (c - 1) as f64 * alpha;
        let right = alpha - gamma;
        let total = gaps + right;
        assert!(
            (total - (c as f64 * alpha - gamma)).abs() < AUDIT_TOL,
            "bush seating weights do not match the branch-point weight"
        );
        let u = rng.random::<f64>() * total;
        if u < gaps {
            // Gap between bush members g and g + 1 (child indices g+1, g+2).
            let g = ((u / alpha) as usize).min(c - 2);
            g + 2
        } else {
            c + 1
        }
    }

    /// Removes leaf `label` (not leaf 1), merges a branch point left with
    /// one child, and gives the highest label to the vacated one.
    pub fn delete_leaf(&mut self, label: u32) -> Result<()> {
        let n = self.leaves() as u32;
        if label <= 1 || label > n {
            return Err(invalid(format!("cannot delete leaf {label} of {n}")));
        }
        let x = self.leaf_of[label as usize - 1];
        let p = self.parent[x];
        self.children[p].retain(|&c| c != x);
        self.release(x);
        if p != ROOT && self.children[p].len() == 1 {
            let y = self.children[p][0];
            let g = self.parent[p];
            self.replace_child(g, p, y);
            self.release(p);
        }
        let last = self.leaf_of.pop().expect("leaf");
        if label != n {
            self.leaf_of[label as usize - 1] = last;
            self.label[last] = label;
        }
        debug_assert!(self.validate().is_ok());
        Ok(())
    }

    /// One jump of the up-down chain: with `k` leaves a leaf arrives at
    /// rate `k - α` (placed by the growth rule) and each leaf other than
    /// leaf 1 leaves at rate 1. Returns the holding time before the jump.
    pub fn tree_updown_step<R: Rng + ?Sized>(&mut self, alpha: f64, gamma: f64, rng: &mut R) -> Result<f64> {
        check_rule(alpha, gamma)?;
        let k = self.leaves() as f64;
        let up = k - alpha;
        let rate = up + (k - 1.0);
        let e: f64 = Exp1.sample(rng);
        if rng.random::<f64>() * rate < up {
            self.grow_tree(alpha, gamma, rng)?;
        } else {
            let label = rng.random_range(2..=self.leaves() as u32);
            self.delete_leaf(label)?;
        }
        Ok(e / rate)
    }

    /// Runs the up-down chain for `horizon` time units; returns the state
    /// at the horizon.
    pub fn run_updown<R: Rng + ?Sized>(&mut self, alpha: f64, gamma: f64, horizon: f64, rng: &mut R) -> Result<()> {
        check_rule(alpha, gamma)?;
        let mut t = 0.0;
        loop {
            let k = self.leaves() as f64;
            let rate = 2.0 * k - 1.0 - alpha;
            let e: f64 = Exp1.sample(rng);
            t += e / rate;
            if t > horizon {
                return Ok(());
            }
            if rng.random::<f64>() * rate < k - alpha {
                self.grow_tree(alpha, gamma, rng)?;
            } else {
                let label = rng.random_range(2..=self.leaves() as u32);
                self.delete_leaf(label)?;
            }
        }
    }

    fn leaf_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.parent.len()];
        let mut order = Vec::with_capacity(self.parent.len());
        let mut stack = vec![ROOT];
        while let Some(v) = stack.pop() {
            order.push(v);
            stack.extend(self.children[v].iter().copied());
        }
        for &v in order.iter().rev() {
            counts[v] = if self.is_leaf(v) {
                1
            } else {
                self.children[v].iter().map(|&c| counts[c]).sum()
            };
        }
        counts
    }

    /// Bush sizes at the spinal branch points (farthest from the root
    /// first) and subtree sizes within each bush, concatenated.
    pub fn spinal_decomposition(&self) -> Result<NestedPair> {
        if self.leaves() < 2 {
            return Err(invalid("spinal decomposition needs at least two leaves"));
        }
        let counts = self.leaf_counts();
        let mut clusters = Vec::new();
        let mut prev = self.leaf_of[0];
        let mut v = self.parent[prev];
        while v != ROOT {
            let parts: Vec<u64> = self.children[v]
                .iter()
                .filter(|&&c| c != prev)
                .map(|&c| counts[c])
                .collect();
            clusters.push(Composition::new(parts)?);
            prev = v;
            v = self.parent[v];
        }
        Ok(NestedPair::from_clusters(&clusters))
    }

    /// Checks the structural invariants: a degree-one root, no degree-two
    /// vertices, consistent parent links, labels `1..=n` on the leaves,
    /// and spine continuation first at every spinal branch point.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(invalid(m));
        if self.children[ROOT].len() != 1 {
            return bad("root must have exactly one child".into());
        }
        let mut seen = 0;
        let mut stack = vec![ROOT];
        while let Some(v) = stack.pop() {
            if !self.alive[v] {
                return bad(format!("dead node {v} is reachable"));
            }
            for &c in &self.children[v] {
                if self.parent[c] != v {
                    return bad(format!("node {c} has a stale parent link"));
                }
                stack.push(c);
            }
            if v != ROOT {
                if self.is_leaf(v) {
                    if !self.children[v].is_empty() {
                        return bad(format!("leaf {} has children", self.label[v]));
                    }
                    let l = self.label[v] as usize;
                    if l > self.leaves() || self.leaf_of[l - 1] != v {
                        return bad(format!("label {l} is not bijective"));
                    }
                    seen += 1;
                } else if self.children[v].len() < 2 {
                    return bad(format!("vertex {v} has degree two"));
                }
            }
        }
        if seen != self.leaves() {
            return bad(format!("{seen} reachable leaves, {} labels", self.leaves()));
        }
        let mut x = self.leaf_of[0];
        while self.parent[x] != ROOT {
            let p = self.parent[x];
            if self.children[p][0] != x {
                return bad(format!("spine continuation of vertex {p} is not first"));
            }
            x = p;
        }
        Ok(())
    }

    fn node_json(&self, v: usize) -> Value {
        if self.is_leaf(v) {
            json!({ "leaf": self.label[v] })
        } else {
            let kids: Vec<Value> = self.children[v].iter().map(|&c| self.node_json(c)).collect();
            json!({ "children": kids })
        }
    }

    /// Nested JSON: leaves as `{"leaf": label}`, other vertices as
    /// `{"children": [...]}` in child order, wrapped in a root object.
    pub fn to_json(&self) -> Value {
        json!({ "root": self.node_json(self.children[ROOT][0]) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocrp::{exact_law, CrpParams};
    use crate::pcrp::pcrp_marginals;
    use crate::rng::stream;
    use crate::stats::{chi_square_gof_map, chi_square_homogeneity};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    #[test]
    fn two_leaves_decompose_into_single_bush() {
        let mut rng = stream(1, 0);
        let mut t = LabeledTree::single();
        assert!(t.spinal_decomposition().is_err());
        t.grow_tree(0.5, 0.3, &mut rng).unwrap();
        let d = t.spinal_decomposition().unwrap();
        assert_eq!(d.coarse(), &Composition::single(1));
        assert_eq!(d.fine(), &Composition::single(1));
        assert_eq!(t.to_json(), json!({"root": {"children": [{"leaf": 1}, {"leaf": 2}]}}));
    }

    #[test]
    fn uniform_rule_keeps_trees_binary() {
        let mut rng = stream(2, 0);
        for _ in 0..200 {
            let t = LabeledTree::grow(30, 0.5, 0.5, &mut rng).unwrap();
            t.validate().unwrap();
            for v in 1..t.parent.len() {
                if t.alive[v] && !t.is_leaf(v) {
                    assert_eq!(t.children[v].len(), 2);
                }
            }
        }
    }

    #[test]
    fn invalid_rules_are_rejected() {
        let mut rng = stream(3, 0);
        assert!(LabeledTree::grow(3, 0.5, 0.6, &mut rng).is_err());
        assert!(LabeledTree::grow(3, 1.0, 0.5, &mut rng).is_err());
        let mut t = LabeledTree::grow(3, 0.5, 0.2, &mut rng).unwrap();
        assert!(t.delete_leaf(1).is_err());
        assert!(t.delete_leaf(4).is_err());
    }

    #[test]
    fn deleting_the_newest_leaf_restores_the_tree() {
        let mut rng = stream(4, 0);
        for _ in 0..500 {
            let mut t = LabeledTree::grow(6, 0.6, 0.3, &mut rng).unwrap();
            let before = t.to_json();
            t.grow_tree(0.6, 0.3, &mut rng).unwrap();
            t.delete_leaf(7).unwrap();
            assert_eq!(t.to_json(), before);
        }
    }

    fn spinal_laws(alpha: f64, gamma: f64, n: usize, reps: u64, seed: u64) {
        let mut coarse = BTreeMap::new();
        let mut fine = BTreeMap::new();
        for i in 0..reps {
            let t = LabeledTree::grow(n, alpha, gamma, &mut stream(seed, i)).unwrap();
            let d = t.spinal_decomposition().unwrap();
            *coarse.entry(d.coarse().clone()).or_insert(0u64) += 1;
            *fine.entry(d.fine().clone()).or_insert(0u64) += 1;
        }
        let m = n as u64 - 1;
        let cl = exact_law(m, &CrpParams::new(gamma, 1.0 - alpha, gamma).unwrap()).unwrap();
        let fl = exact_law(m, &CrpParams::new(alpha, 1.0 - alpha, alpha).unwrap()).unwrap();
        let c = chi_square_gof_map(&coarse, &cl.table).unwrap();
        let f = chi_square_gof_map(&fine, &fl.table).unwrap();
        assert!(c.p_value() > 1e-3, "coarse {c:?}");
        assert!(f.p_value() > 1e-3, "fine {f:?}");
    }

    #[test]
    fn spinal_compositions_follow_restaurant_laws() {
        spinal_laws(0.5, 0.4, 5, 100_000, 5);
        spinal_laws(0.7, 0.1, 4, 100_000, 6);
    }

    #[test]
    fn updown_chain_spine_is_updown_restaurant() {
        let (alpha, gamma) = (0.5, 0.3);
        let reps = 40_000;
        let mut rng0 = stream(7, 0);
        let start = LabeledTree::grow(4, alpha, gamma, &mut rng0).unwrap();
        let d0 = start.spinal_decomposition().unwrap();
        let (mut tc, mut tf, mut pc, mut pf) = (BTreeMap::new(), BTreeMap::new(), BTreeMap::new(), BTreeMap::new());
        let cp = CrpParams::new(gamma, 1.0 - alpha, gamma).unwrap();
        let fp = CrpParams::new(alpha, 1.0 - alpha, alpha).unwrap();
        for i in 0..reps {
            let mut t = start.clone();
            t.run_updown(alpha, gamma, 0.4, &mut stream(8, i)).unwrap();
            // The root edge to a lone leaf 1 has no spine branch points.
            let (c, f) = match t.spinal_decomposition() {
                Ok(d) => (d.coarse().clone(), d.fine().clone()),
                Err(_) => (Composition::empty(), Composition::empty()),
            };
            *tc.entry(c).or_insert(0u64) += 1;
            *tf.entry(f).or_insert(0u64) += 1;
            let c = pcrp_marginals(d0.coarse(), &cp, &[0.4], false, &mut stream(9, i)).unwrap();
            *pc.entry(c[0].clone()).or_insert(0u64) += 1;
            let f = pcrp_marginals(d0.fine(), &fp, &[0.4], false, &mut stream(10, i)).unwrap();
            *pf.entry(f[0].clone()).or_insert(0u64) += 1;
        }
        assert!(chi_square_homogeneity(&tc, &pc).unwrap().p_value() > 1e-3);
        assert!(chi_square_homogeneity(&tf, &pf).unwrap().p_value() > 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn updown_steps_preserve_invariants(seed in any::<u64>(), steps in 1usize..200, gamma in 0.0f64..0.6) {
            let alpha = 0.6;
            let mut rng = stream(seed, 0);
            let mut t = LabeledTree::single();
            for _ in 0..steps {
                t.tree_updown_step(alpha, gamma, &mut rng).unwrap();
                prop_assert!(t.validate().is_ok());
                if t.leaves() >= 2 {
                    let d = t.spinal_decomposition().unwrap();
                    prop_assert_eq!(d.fine().total(), t.leaves() as u64 - 1);
                }
            }
        }
    }
}
