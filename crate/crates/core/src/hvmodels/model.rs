//! Deterministic and stochastic hidden-variables models over a finite context.

use serde::Serialize;

use super::context::{Context, Layout, PathTree, Shape};
use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, Side};
use crate::measurement::embed_local;
use crate::states::{check_probability_vector, DensityMatrix};

/// Tolerance on sample-space weights summing to one.
pub const WEIGHT_TOL: f64 = 1e-12;
/// Tolerance on each kernel summing to one.
pub const KERNEL_TOL: f64 = 1e-12;
/// Default cap on the number of atoms a construction may create.
pub const DEFAULT_ATOM_BUDGET: usize = 1_000_000;
/// Default verification tolerance.
pub const DEFAULT_VERIFY_TOL: f64 = 1e-10;

/// Common read access used by verification and serialization.
pub trait HvModel {
    fn context(&self) -> &Context;
    fn layout(&self) -> &Layout;
    fn weights(&self) -> &[f64];
    fn atom_ids(&self) -> &[String];
    fn kind_label(&self) -> &'static str;

    /// Probability of every node pair `(n1, n2)`: side-1 steps of `n1` followed by
    /// side-2 steps of `n2`, indexed by [`Layout::pair_index`].
    fn node_table(&self) -> Vec<f64>;

    /// Largest `|sum - 1|` over all kernels, for stochastic models.
    fn kernel_error(&self) -> Option<f64> {
        None
    }

    fn num_atoms(&self) -> usize {
        self.weights().len()
    }

    /// Probability of a pair of step lists `(observable, outcome)`.
    fn sequence_probability(&self, seq1: &[(usize, usize)], seq2: &[(usize, usize)]) -> Option<f64> {
        let l = self.layout();
        let n1 = l.tree1.node_of(seq1)?;
        let n2 = l.tree2.node_of(seq2)?;
        Some(self.node_table()[l.pair_index(n1, n2)])
    }
}

/// Side-1 nodes reached by an atom, root first.
fn reach_det(tree: &PathTree, resp: impl Fn(usize) -> usize) -> Vec<usize> {
    let mut out = vec![0];
    let mut i = 0;
    while i < out.len() {
        let n = out[i];
        if tree.has_slots(n) {
            for obs in 0..tree.num_observables() {
                out.push(tree.child(n, obs, resp(tree.slot(n, obs))));
            }
        }
        i += 1;
    }
    out
}

/// Path probabilities of every node under per-slot kernels.
fn reach_stoch<'a>(tree: &PathTree, kernel: impl Fn(usize) -> &'a [f64]) -> Vec<f64> {
    let mut p = vec![0.0; tree.num_nodes()];
    p[0] = 1.0;
    for n in 0..tree.num_nodes() {
        if p[n] == 0.0 || !tree.has_slots(n) {
            continue;
        }
        for obs in 0..tree.num_observables() {
            let k = kernel(tree.slot(n, obs));
            for (x, &q) in k.iter().enumerate() {
                p[tree.child(n, obs, x)] = p[n] * q;
            }
        }
    }
    p
}

/// Finite deterministic model: per atom, an outcome for every slot.
#[derive(Debug, Clone)]
pub struct DeterministicModel {
    context: Context,
    layout: Layout,
    atoms: Vec<String>,
    weights: Vec<f64>,
    resp1: Vec<u16>,
    resp2: Vec<u16>,
}

impl DeterministicModel {
    /// Builds a model from flat atom-major response arrays.
    pub fn from_parts(
        context: Context,
        shape: Shape,
        atoms: Vec<String>,
        weights: Vec<f64>,
        resp1: Vec<u16>,
        resp2: Vec<u16>,
    ) -> Result<Self> {
        let layout = Layout::new(&context, shape);
        let n = weights.len();
        if atoms.len() != n || resp1.len() != n * layout.slots1() || resp2.len() != n * layout.slots2() {
            return Err(Error::ModelMismatch("response arrays do not match the atom count".into()));
        }
        check_probability_vector(&weights, WEIGHT_TOL)?;
        let s1 = layout.slots1().max(1);
        for (i, &r) in resp1.iter().enumerate() {
            let obs = layout.tree1.slot_parts(i % s1).1;
            if r as usize >= layout.tree1.outcome_count(obs) {
                return Err(Error::ModelMismatch(format!("side-1 response {r} out of range")));
            }
        }
        let s2 = layout.slots2().max(1);
        for (i, &r) in resp2.iter().enumerate() {
            if r as usize >= layout.tree2.outcome_count(layout.slot2_obs(i % s2)) {
                return Err(Error::ModelMismatch(format!("side-2 response {r} out of range")));
            }
        }
        Ok(Self { context, layout, atoms, weights, resp1, resp2 })
    }

    pub fn shape(&self) -> Shape {
        self.layout.shape
    }

    pub fn responses1(&self, atom: usize) -> &[u16] {
        let s = self.layout.slots1();
        &self.resp1[atom * s..(atom + 1) * s]
    }

    pub fn responses2(&self, atom: usize) -> &[u16] {
        let s = self.layout.slots2();
        &self.resp2[atom * s..(atom + 1) * s]
    }

    /// Replaces the weight vector (must stay a probability vector).
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.weights.len() {
            return Err(Error::ModelMismatch("weight count differs from atom count".into()));
        }
        check_probability_vector(&weights, WEIGHT_TOL)?;
        Ok(Self { weights, ..self.clone() })
    }

    /// Outcomes of one atom for a side-1 then side-2 sequence of observable indices.
    pub fn outcomes(&self, atom: usize, obs1: &[usize], obs2: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
        let l = &self.layout;
        if obs1.len() > l.tree1.max_len() || obs2.len() > l.tree2.max_len() {
            return Err(Error::InvalidContext("sequence longer than the context bound".into()));
        }
        let r1 = self.responses1(atom);
        let r2 = self.responses2(atom);
        let mut n1 = 0;
        let mut out1 = Vec::with_capacity(obs1.len());
        for &o in obs1 {
            if o >= l.tree1.num_observables() {
                return Err(Error::InvalidContext(format!("no side-1 observable {o}")));
            }
            let x = r1[l.tree1.slot(n1, o)] as usize;
            out1.push(x);
            n1 = l.tree1.child(n1, o, x);
        }
        let mut n2 = 0;
        let mut out2 = Vec::with_capacity(obs2.len());
        for &o in obs2 {
            if o >= l.tree2.num_observables() {
                return Err(Error::InvalidContext(format!("no side-2 observable {o}")));
            }
            let x = r2[l.slot2(n1, n2, o)] as usize;
            out2.push(x);
            n2 = l.tree2.child(n2, o, x);
        }
        Ok((out1, out2))
    }

    /// Probability that the atom's side-1 response at a root slot equals `outcome`.
    pub fn first_step_probability(&self, side: Side, obs: usize, outcome: usize) -> f64 {
        let l = &self.layout;
        (0..self.weights.len())
            .filter(|&a| match side {
                Side::First => self.responses1(a)[l.tree1.slot(0, obs)] as usize == outcome,
                Side::Second => self.responses2(a)[l.slot2(0, 0, obs)] as usize == outcome,
            })
            .map(|a| self.weights[a])
            .sum()
    }
}

impl HvModel for DeterministicModel {
    fn context(&self) -> &Context {
        &self.context
    }

    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn atom_ids(&self) -> &[String] {
        &self.atoms
    }

    fn kind_label(&self) -> &'static str {
        self.layout.shape.label()
    }

    fn node_table(&self) -> Vec<f64> {
        let l = &self.layout;
        let mut table = vec![0.0; l.num_node_pairs()];
        for (a, &w) in self.weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let r1 = self.responses1(a);
            let r2 = self.responses2(a);
            let reach1 = reach_det(&l.tree1, |s| r1[s] as usize);
            match l.shape {
                Shape::LocalCausal => {
                    let reach2 = reach_det(&l.tree2, |s| r2[s] as usize);
                    for &n1 in &reach1 {
                        for &n2 in &reach2 {
                            table[l.pair_index(n1, n2)] += w;
                        }
                    }
                }
                Shape::Causal => {
                    let s2 = l.tree2.num_slots();
                    for &n1 in &reach1 {
                        for n2 in reach_det(&l.tree2, |s| r2[n1 * s2 + s] as usize) {
                            table[l.pair_index(n1, n2)] += w;
                        }
                    }
                }
            }
        }
        table
    }
}

/// Finite stochastic model: per atom, an outcome distribution for every slot.
#[derive(Debug, Clone)]
pub struct StochasticModel {
    context: Context,
    layout: Layout,
    atoms: Vec<String>,
    weights: Vec<f64>,
    kern1: Vec<f64>,
    kern2: Vec<f64>,
    off1: Vec<usize>,
    off2: Vec<usize>,
}

fn offsets(n: usize, count: impl Fn(usize) -> usize) -> Vec<usize> {
    let mut off = Vec::with_capacity(n + 1);
    off.push(0);
    for i in 0..n {
        off.push(off[i] + count(i));
    }
    off
}

impl StochasticModel {
    /// Kernel entries per atom and side, in slot order.
    pub fn kernel_widths(context: &Context, shape: Shape) -> (usize, usize) {
        let l = Layout::new(context, shape);
        let o1 = offsets(l.slots1(), |s| l.tree1.outcome_count(l.tree1.slot_parts(s).1));
        let o2 = offsets(l.slots2(), |s| l.tree2.outcome_count(l.slot2_obs(s)));
        (*o1.last().unwrap(), *o2.last().unwrap())
    }

    /// Builds a model from flat atom-major kernel arrays.
    pub fn from_parts(
        context: Context,
        shape: Shape,
        atoms: Vec<String>,
        weights: Vec<f64>,
        kern1: Vec<f64>,
        kern2: Vec<f64>,
    ) -> Result<Self> {
        let layout = Layout::new(&context, shape);
        let off1 = offsets(layout.slots1(), |s| layout.tree1.outcome_count(layout.tree1.slot_parts(s).1));
        let off2 = offsets(layout.slots2(), |s| layout.tree2.outcome_count(layout.slot2_obs(s)));
        let n = weights.len();
        if atoms.len() != n || kern1.len() != n * off1.last().unwrap() || kern2.len() != n * off2.last().unwrap() {
            return Err(Error::ModelMismatch("kernel arrays do not match the atom count".into()));
        }
        check_probability_vector(&weights, WEIGHT_TOL)?;
        if let Some(&q) = kern1.iter().chain(&kern2).find(|q| !(**q >= 0.0 && **q <= 1.0 + KERNEL_TOL)) {
            return Err(Error::ModelMismatch(format!("kernel entry {q} is not a probability")));
        }
        let m = Self { context, layout, atoms, weights, kern1, kern2, off1, off2 };
        if let Some(e) = m.kernel_error() {
            if e > KERNEL_TOL {
                return Err(Error::ModelMismatch(format!("kernel sums deviate from 1 by {e:e}")));
            }
        }
        Ok(m)
    }

    pub fn shape(&self) -> Shape {
        self.layout.shape
    }

    pub fn kernel1(&self, atom: usize, slot: usize) -> &[f64] {
        let w = *self.off1.last().unwrap();
        &self.kern1[atom * w + self.off1[slot]..atom * w + self.off1[slot + 1]]
    }

    /// Side-2 kernel at a response index (see [`Layout::slot2`]).
    pub fn kernel2(&self, atom: usize, idx: usize) -> &[f64] {
        let w = *self.off2.last().unwrap();
        &self.kern2[atom * w + self.off2[idx]..atom * w + self.off2[idx + 1]]
    }

    /// Per-node path probabilities of side 1 for one atom.
    pub(crate) fn side1_path_probs(&self, atom: usize) -> Vec<f64> {
        reach_stoch(&self.layout.tree1, |s| self.kernel1(atom, s))
    }

    /// Per-node path probabilities of side 2 for one atom after side-1 node `n1`.
    pub(crate) fn side2_path_probs(&self, atom: usize, n1: usize) -> Vec<f64> {
        let l = &self.layout;
        let base = match l.shape {
            Shape::LocalCausal => 0,
            Shape::Causal => n1 * l.tree2.num_slots(),
        };
        reach_stoch(&l.tree2, |s| self.kernel2(atom, base + s))
    }

    /// True when every kernel is a point mass.
    pub fn is_degenerate(&self) -> bool {
        self.kern1.iter().chain(&self.kern2).all(|&q| q == 0.0 || q == 1.0)
    }
}

impl HvModel for StochasticModel {
    fn context(&self) -> &Context {
        &self.context
    }

    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn atom_ids(&self) -> &[String] {
        &self.atoms
    }

    fn kind_label(&self) -> &'static str {
        "stochastic"
    }

    fn node_table(&self) -> Vec<f64> {
        let l = &self.layout;
        let mut table = vec![0.0; l.num_node_pairs()];
        for (a, &w) in self.weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let p1 = self.side1_path_probs(a);
            let local2 = (l.shape == Shape::LocalCausal).then(|| self.side2_path_probs(a, 0));
            for (n1, &q1) in p1.iter().enumerate() {
                if q1 == 0.0 {
                    continue;
                }
                let p2 = match &local2 {
                    Some(p) => p.clone(),
                    None => self.side2_path_probs(a, n1),
                };
                for (n2, &q2) in p2.iter().enumerate() {
                    table[l.pair_index(n1, n2)] += w * q1 * q2;
                }
            }
        }
        table
    }

    fn kernel_error(&self) -> Option<f64> {
        let mut worst: f64 = 0.0;
        for (kern, off) in [(&self.kern1, &self.off1), (&self.kern2, &self.off2)] {
            let w = *off.last().unwrap();
            for a in 0..self.weights.len() {
                for s in 0..off.len() - 1 {
                    let sum: f64 = kern[a * w + off[s]..a * w + off[s + 1]].iter().sum();
                    worst = worst.max((sum - 1.0).abs());
                }
            }
        }
        Some(worst)
    }
}

/// Quantum probability of every node pair of the context, side-1 steps first.
pub fn quantum_node_table(rho: &CMatrix, ctx: &Context, layout: &Layout) -> Result<Vec<f64>> {
    let dims = ctx.dims();
    if rho.rows() != dims.total() {
        return Err(Error::DimensionMismatch(format!(
            "state is {}x{}, context acts on {}",
            rho.rows(),
            rho.cols(),
            dims.total()
        )));
    }
    let embed = |side: Side| -> Result<Vec<Vec<CMatrix>>> {
        ctx.observables(side)
            .iter()
            .map(|f| f.operators().iter().map(|r| embed_local(r, side, dims)).collect())
            .collect()
    };
    let ops1 = embed(Side::First)?;
    let ops2 = embed(Side::Second)?;
    let mut table = vec![0.0; layout.num_node_pairs()];
    let mut stack1 = vec![(0usize, rho.clone())];
    while let Some((n1, s1)) = stack1.pop() {
        let mut stack2 = vec![(0usize, s1.clone())];
        while let Some((n2, s2)) = stack2.pop() {
            let p = s2.trace().re;
            table[layout.pair_index(n1, n2)] = p;
            if layout.tree2.has_slots(n2) && p > 0.0 {
                for (o, ops) in ops2.iter().enumerate() {
                    for (x, r) in ops.iter().enumerate() {
                        stack2.push((layout.tree2.child(n2, o, x), s2.sandwich(r)));
                    }
                }
            }
        }
        if layout.tree1.has_slots(n1) && s1.trace().re > 0.0 {
            for (o, ops) in ops1.iter().enumerate() {
                for (x, r) in ops.iter().enumerate() {
                    stack1.push((layout.tree1.child(n1, o, x), s1.sandwich(r)));
                }
            }
        }
    }
    Ok(table)
}

/// Outcome of comparing a model against quantum sequence probabilities.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub passed: bool,
    pub shape: String,
    /// Side-1 responses never read side-2 choices.
    pub local: bool,
    /// Responses are keyed by past steps only.
    pub causal: bool,
    pub tolerance: f64,
    pub max_deviation: f64,
    pub worst_sequence: Option<String>,
    pub sequences_checked: usize,
    pub weight_sum_error: f64,
    pub kernel_normalization_error: Option<f64>,
    pub problems: Vec<String>,
}

/// Compares every sequence of the model's context against the quantum prediction.
pub fn verify_model(m: &dyn HvModel, rho: &DensityMatrix, tol: f64) -> VerificationReport {
    let layout = m.layout();
    let ctx = m.context();
    let mut problems = Vec::new();
    let weight_sum_error = (m.weights().iter().sum::<f64>() - 1.0).abs();
    if weight_sum_error > WEIGHT_TOL {
        problems.push(format!("weights sum to 1 + {weight_sum_error:e}"));
    }
    let kernel_error = m.kernel_error();
    if let Some(e) = kernel_error {
        if e > KERNEL_TOL {
            problems.push(format!("kernel normalization off by {e:e}"));
        }
    }
    let mut max_dev = 0.0;
    let mut worst = None;
    let mut checked = 0;
    if rho.dims() != ctx.dims() {
        problems.push(format!("state dims {:?} differ from context dims {:?}", rho.dims(), ctx.dims()));
    } else {
        match quantum_node_table(rho.matrix(), ctx, layout) {
            Err(e) => problems.push(e.to_string()),
            Ok(q) => {
                let model = m.node_table();
                checked = q.len();
                for n1 in 0..layout.tree1.num_nodes() {
                    for n2 in 0..layout.tree2.num_nodes() {
                        let i = layout.pair_index(n1, n2);
                        let dev = (model[i] - q[i]).abs();
                        if dev > max_dev || dev.is_nan() {
                            max_dev = dev;
                            worst = Some(layout.describe(ctx, n1, n2));
                        }
                    }
                }
            }
        }
    }
    let passed = problems.is_empty() && max_dev <= tol;
    if !passed {
        log::debug!("verification failed: max deviation {max_dev:e} at {worst:?}; {problems:?}");
    }
    VerificationReport {
        passed,
        shape: m.kind_label().to_string(),
        local: layout.shape == Shape::LocalCausal,
        causal: true,
        tolerance: tol,
        max_deviation: max_dev,
        worst_sequence: worst,
        sequences_checked: checked,
        weight_sum_error,
        kernel_normalization_error: kernel_error,
        problems,
    }
}
