//! Finite measurement contexts and the path trees that index response functions.

use crate::error::{Error, Result};
use crate::hilbert::{DimPair, Side};
use crate::measurement::OperationFamily;

/// Finite set of local measurements per side with sequence-length bounds.
#[derive(Debug, Clone)]
pub struct Context {
    side1: Vec<OperationFamily>,
    side2: Vec<OperationFamily>,
    max_len1: usize,
    max_len2: usize,
}

impl Context {
    pub fn new(
        side1: Vec<OperationFamily>,
        side2: Vec<OperationFamily>,
        max_len1: usize,
        max_len2: usize,
    ) -> Result<Self> {
        if side1.is_empty() || side2.is_empty() {
            return Err(Error::InvalidContext("each side needs at least one observable".into()));
        }
        if max_len1 == 0 || max_len2 == 0 {
            return Err(Error::InvalidContext("sequence-length bounds must be at least 1".into()));
        }
        for list in [&side1, &side2] {
            let d = list[0].dim();
            if list.iter().any(|f| f.dim() != d) {
                return Err(Error::InvalidContext("observables on one side differ in dimension".into()));
            }
            if list.iter().any(|f| f.len() > u16::MAX as usize) {
                return Err(Error::InvalidContext("too many outcomes".into()));
            }
        }
        let names: Vec<&str> = side1.iter().chain(&side2).map(|f| f.name.as_str()).collect();
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n.contains('/') {
                return Err(Error::InvalidContext(format!("observable name {n:?} must be non-empty without '/'")));
            }
            if names[..i].contains(n) {
                return Err(Error::InvalidContext(format!("observable name {n:?} used twice")));
            }
        }
        Ok(Self { side1, side2, max_len1, max_len2 })
    }

    pub fn observables(&self, side: Side) -> &[OperationFamily] {
        match side {
            Side::First => &self.side1,
            Side::Second => &self.side2,
        }
    }

    pub fn max_len(&self, side: Side) -> usize {
        match side {
            Side::First => self.max_len1,
            Side::Second => self.max_len2,
        }
    }

    pub fn dims(&self) -> DimPair {
        DimPair { d1: self.side1[0].dim(), d2: self.side2[0].dim() }
    }

    /// Same observables, new length bounds (zero allowed for internal use).
    pub fn with_lengths(&self, max_len1: usize, max_len2: usize) -> Context {
        Context { side1: self.side1.clone(), side2: self.side2.clone(), max_len1, max_len2 }
    }

    /// Same observables and bounds, up to `tol` in operator entries.
    pub fn same_as(&self, other: &Context, tol: f64) -> bool {
        let same_list = |a: &[OperationFamily], b: &[OperationFamily]| {
            a.len() == b.len()
                && a.iter().zip(b).all(|(x, y)| {
                    x.name == y.name
                        && x.labels() == y.labels()
                        && x.operators().iter().zip(y.operators()).all(|(r, s)| r.max_abs_diff(s) <= tol)
                })
        };
        self.max_len1 == other.max_len1
            && self.max_len2 == other.max_len2
            && same_list(&self.side1, &other.side1)
            && same_list(&self.side2, &other.side2)
    }

    /// Looks up an observable by name on either side.
    pub fn find(&self, name: &str) -> Option<(Side, usize)> {
        if let Some(i) = self.side1.iter().position(|f| f.name == name) {
            return Some((Side::First, i));
        }
        self.side2.iter().position(|f| f.name == name).map(|i| (Side::Second, i))
    }

    pub fn tree(&self, side: Side) -> PathTree {
        let counts = self.observables(side).iter().map(OperationFamily::len).collect();
        PathTree::new(counts, self.max_len(side))
    }
}

#[derive(Debug, Clone)]
pub struct PathNode {
    pub parent: Option<usize>,
    /// `(observable, outcome)` of the step that led here.
    pub step: Option<(usize, usize)>,
    pub depth: usize,
    /// `children[obs][outcome]`, empty at maximal depth.
    children: Vec<Vec<usize>>,
    slot_base: Option<usize>,
}

/// All own-pasts of one side up to a length bound, in breadth-first order.
///
/// A slot is a pair (node, next observable); response functions assign an outcome
/// to every slot, which makes them causal by construction: the outcome of a step
/// is looked up from its past only.
#[derive(Debug, Clone)]
pub struct PathTree {
    outcome_counts: Vec<usize>,
    max_len: usize,
    nodes: Vec<PathNode>,
    slot_node: Vec<usize>,
}

impl PathTree {
    pub fn new(outcome_counts: Vec<usize>, max_len: usize) -> Self {
        let mut nodes = vec![PathNode { parent: None, step: None, depth: 0, children: Vec::new(), slot_base: None }];
        let mut slot_node = Vec::new();
        let mut i = 0;
        while i < nodes.len() {
            if nodes[i].depth < max_len {
                nodes[i].slot_base = Some(slot_node.len());
                slot_node.extend(std::iter::repeat_n(i, outcome_counts.len()));
                let mut children = Vec::with_capacity(outcome_counts.len());
                for (obs, &k) in outcome_counts.iter().enumerate() {
                    let mut row = Vec::with_capacity(k);
                    for x in 0..k {
                        row.push(nodes.len());
                        let depth = nodes[i].depth + 1;
                        nodes.push(PathNode { parent: Some(i), step: Some((obs, x)), depth, children: Vec::new(), slot_base: None });
                    }
                    children.push(row);
                }
                nodes[i].children = children;
            }
            i += 1;
        }
        Self { outcome_counts, max_len, nodes, slot_node }
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn num_observables(&self) -> usize {
        self.outcome_counts.len()
    }

    pub fn outcome_count(&self, obs: usize) -> usize {
        self.outcome_counts[obs]
    }

    pub fn outcome_counts(&self) -> &[usize] {
        &self.outcome_counts
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_slots(&self) -> usize {
        self.slot_node.len()
    }

    pub fn node(&self, i: usize) -> &PathNode {
        &self.nodes[i]
    }

    pub fn child(&self, node: usize, obs: usize, outcome: usize) -> usize {
        self.nodes[node].children[obs][outcome]
    }

    pub fn slot(&self, node: usize, obs: usize) -> usize {
        self.nodes[node].slot_base.expect("slot requested at maximal depth") + obs
    }

    pub fn has_slots(&self, node: usize) -> bool {
        self.nodes[node].slot_base.is_some()
    }

    /// `(node, observable)` of a slot.
    pub fn slot_parts(&self, slot: usize) -> (usize, usize) {
        let node = self.slot_node[slot];
        (node, slot - self.nodes[node].slot_base.unwrap())
    }

    /// Steps from the root to `node`.
    pub fn path(&self, node: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.nodes[node].depth);
        let mut cur = node;
        while let Some(step) = self.nodes[cur].step {
            out.push(step);
            cur = self.nodes[cur].parent.unwrap();
        }
        out.reverse();
        out
    }

    /// Node reached by a full path of steps.
    pub fn node_of(&self, path: &[(usize, usize)]) -> Option<usize> {
        let mut cur = 0;
        for &(obs, x) in path {
            let n = self.nodes.get(cur)?;
            cur = *n.children.get(obs)?.get(x)?;
        }
        Some(cur)
    }

    /// Nodes of exactly the given depth.
    pub fn nodes_at_depth(&self, depth: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(move |&i| self.nodes[i].depth == depth)
    }
}

/// Response-function shape of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// One global tree; side-2 responses may read the whole side-1 path (side-1
    /// steps are taken to precede side-2 steps).
    Causal,
    /// Independent per-side trees; neither side reads the other's choices.
    LocalCausal,
}

impl Shape {
    pub fn label(self) -> &'static str {
        match self {
            Shape::Causal => "causal",
            Shape::LocalCausal => "local_causal",
        }
    }
}

/// Slot bookkeeping for a context under a shape.
#[derive(Debug, Clone)]
pub struct Layout {
    pub shape: Shape,
    pub tree1: PathTree,
    pub tree2: PathTree,
}

impl Layout {
    pub fn new(ctx: &Context, shape: Shape) -> Self {
        Self { shape, tree1: ctx.tree(Side::First), tree2: ctx.tree(Side::Second) }
    }

    pub fn slots1(&self) -> usize {
        self.tree1.num_slots()
    }

    /// Side-2 response entries per atom.
    pub fn slots2(&self) -> usize {
        match self.shape {
            Shape::LocalCausal => self.tree2.num_slots(),
            Shape::Causal => self.tree1.num_nodes() * self.tree2.num_slots(),
        }
    }

    /// Index of the side-2 slot `(n2, obs)` given the side-1 node `n1`.
    pub fn slot2(&self, n1: usize, n2: usize, obs: usize) -> usize {
        let s = self.tree2.slot(n2, obs);
        match self.shape {
            Shape::LocalCausal => s,
            Shape::Causal => n1 * self.tree2.num_slots() + s,
        }
    }

    /// Observable of a side-2 response entry.
    pub fn slot2_obs(&self, idx: usize) -> usize {
        let s = match self.shape {
            Shape::LocalCausal => idx,
            Shape::Causal => idx % self.tree2.num_slots(),
        };
        self.tree2.slot_parts(s).1
    }

    pub fn num_node_pairs(&self) -> usize {
        self.tree1.num_nodes() * self.tree2.num_nodes()
    }

    pub fn pair_index(&self, n1: usize, n2: usize) -> usize {
        n1 * self.tree2.num_nodes() + n2
    }

    /// Human-readable sequence and outcomes for a node pair, e.g. `a1=+1 a2=-1 | b1=+1`.
    pub fn describe(&self, ctx: &Context, n1: usize, n2: usize) -> String {
        let side = |tree: &PathTree, n: usize, s: Side| {
            tree.path(n)
                .iter()
                .map(|&(o, x)| {
                    let f = &ctx.observables(s)[o];
                    format!("{}={}", f.name, f.labels()[x])
                })
                .collect::<Vec<_>>()
                .join(" ")
        };
        format!("{} | {}", side(&self.tree1, n1, Side::First), side(&self.tree2, n2, Side::Second))
    }
}
