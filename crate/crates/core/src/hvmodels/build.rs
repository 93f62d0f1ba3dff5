//! Model constructions: interval splitting, mixing, collapse, coupling, and the
//! deterministic/stochastic conversions.

use std::ops::Range;

use super::context::{Context, Layout, PathTree, Shape};
use super::model::{quantum_node_table, DeterministicModel, HvModel, StochasticModel};
use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, Side};
use crate::measurement::{commuting_decompose, Decomposition, FamilyKind, OperationFamily, Povm};
use crate::states::{check_local_state, check_probability_vector, DensityMatrix, PROB_FLOOR};

/// Common refinement of a set of breakpoints in `[0, 1]`.
struct Cells {
    points: Vec<f64>,
}

impl Cells {
    fn new(mut points: Vec<f64>) -> Self {
        points.push(0.0);
        points.push(1.0);
        points.sort_by(f64::total_cmp);
        points.dedup();
        Self { points }
    }

    fn len(&self) -> usize {
        self.points.len() - 1
    }

    fn weights(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| w[1] - w[0]).collect()
    }

    fn index(&self, v: f64) -> usize {
        self.points.binary_search_by(|p| p.total_cmp(&v)).expect("breakpoint registered")
    }

    fn range(&self, (s, e): (f64, f64)) -> Range<usize> {
        self.index(s)..self.index(e)
    }
}

/// Splits `root` among the nodes of `tree` in proportion to `q` (indexed by node).
fn split_tree(tree: &PathTree, q: impl Fn(usize) -> f64, root: (f64, f64)) -> Vec<(f64, f64)> {
    let mut iv = vec![(0.0, 0.0); tree.num_nodes()];
    iv[0] = root;
    for n in 0..tree.num_nodes() {
        if !tree.has_slots(n) {
            continue;
        }
        let (s, e) = iv[n];
        for obs in 0..tree.num_observables() {
            let k = tree.outcome_count(obs);
            let mut cum = s;
            for x in 0..k {
                let child = tree.child(n, obs, x);
                let end = if x + 1 == k { e } else { (cum + q(child).max(0.0)).min(e) };
                iv[child] = (cum, end);
                cum = end;
            }
        }
    }
    iv
}

/// Assigns, for every slot, the outcome whose child interval contains each cell.
fn fill_tree(tree: &PathTree, iv: &[(f64, f64)], cells: &Cells, mut set: impl FnMut(usize, usize, u16)) {
    for slot in 0..tree.num_slots() {
        let (n, obs) = tree.slot_parts(slot);
        for x in 0..tree.outcome_count(obs) {
            for atom in cells.range(iv[tree.child(n, obs, x)]) {
                set(atom, slot, x as u16);
            }
        }
    }
}

fn check_budget(needed: u128, budget: usize) -> Result<()> {
    if needed > budget as u128 {
        return Err(Error::AtomBudgetExceeded { needed, budget });
    }
    Ok(())
}

/// Exact causal model obtained by splitting the unit interval along conditional
/// probabilities; one atom per cell of the common refinement.
pub fn trivial_causal_model(rho: &DensityMatrix, ctx: &Context, atom_budget: usize) -> Result<DeterministicModel> {
    let layout = Layout::new(ctx, Shape::Causal);
    let q = quantum_node_table(rho.matrix(), ctx, &layout)?;
    let (t1, t2) = (&layout.tree1, &layout.tree2);
    let iv1 = split_tree(t1, |n1| q[layout.pair_index(n1, 0)], (0.0, 1.0));
    let iv2: Vec<Vec<(f64, f64)>> =
        (0..t1.num_nodes()).map(|n1| split_tree(t2, |n2| q[layout.pair_index(n1, n2)], iv1[n1])).collect();
    let mut points: Vec<f64> = iv1.iter().flat_map(|&(s, e)| [s, e]).collect();
    points.extend(iv2.iter().flatten().flat_map(|&(s, e)| [s, e]));
    let cells = Cells::new(points);
    let n = cells.len();
    check_budget(n as u128, atom_budget)?;
    let (s1, s2) = (layout.slots1(), layout.slots2());
    let mut resp1 = vec![0u16; n * s1];
    let mut resp2 = vec![0u16; n * s2];
    fill_tree(t1, &iv1, &cells, |a, s, x| resp1[a * s1 + s] = x);
    for (n1, iv) in iv2.iter().enumerate() {
        let base = n1 * t2.num_slots();
        fill_tree(t2, iv, &cells, |a, s, x| resp2[a * s2 + base + s] = x);
    }
    let atoms = (0..n).map(|i| format!("c{i}")).collect();
    DeterministicModel::from_parts(ctx.clone(), Shape::Causal, atoms, cells.weights(), resp1, resp2)
}

/// Probabilities of every node of one side's tree for a local state.
fn local_node_probs(sigma: &CMatrix, tree: &PathTree, fams: &[OperationFamily]) -> Vec<f64> {
    let mut p = vec![0.0; tree.num_nodes()];
    let mut stack = vec![(0usize, sigma.clone())];
    while let Some((n, s)) = stack.pop() {
        let t = s.trace().re;
        p[n] = t;
        if tree.has_slots(n) && t > 0.0 {
            for (o, f) in fams.iter().enumerate() {
                for (x, r) in f.operators().iter().enumerate() {
                    stack.push((tree.child(n, o, x), s.sandwich(r)));
                }
            }
        }
    }
    p
}

/// Several one-side causal models sharing one finite sample space.
#[derive(Debug, Clone)]
pub struct SharedSideModels {
    pub tree: PathTree,
    pub weights: Vec<f64>,
    /// `responses[state][atom * slots + slot]`.
    pub responses: Vec<Vec<u16>>,
}

impl SharedSideModels {
    /// Interval-splitting models of each local state on a common refinement.
    pub fn build(states: &[CMatrix], fams: &[OperationFamily], max_len: usize, atom_budget: usize) -> Result<Self> {
        let tree = PathTree::new(fams.iter().map(OperationFamily::len).collect(), max_len);
        let mut ivs = Vec::with_capacity(states.len());
        for s in states {
            check_local_state(s)?;
            if fams.iter().any(|f| f.dim() != s.rows()) {
                return Err(Error::DimensionMismatch("local state and observables differ in dimension".into()));
            }
            let p = local_node_probs(s, &tree, fams);
            ivs.push(split_tree(&tree, |n| p[n], (0.0, 1.0)));
        }
        let cells = Cells::new(ivs.iter().flatten().flat_map(|&(s, e)| [s, e]).collect());
        let n = cells.len();
        check_budget(n as u128, atom_budget)?;
        let slots = tree.num_slots();
        let responses = ivs
            .iter()
            .map(|iv| {
                let mut r = vec![0u16; n * slots];
                fill_tree(&tree, iv, &cells, |a, s, x| r[a * slots + s] = x);
                r
            })
            .collect();
        Ok(Self { tree, weights: cells.weights(), responses })
    }

    pub fn response(&self, state: usize, atom: usize) -> &[u16] {
        let s = self.tree.num_slots();
        &self.responses[state][atom * s..(atom + 1) * s]
    }
}

/// Local causal model of a product state `rho1 ⊗ rho2` from per-side interval models.
pub fn product_state_model(
    rho1: &CMatrix,
    rho2: &CMatrix,
    ctx: &Context,
    atom_budget: usize,
) -> Result<DeterministicModel> {
    let m1 = SharedSideModels::build(&[rho1.clone()], ctx.observables(Side::First), ctx.max_len(Side::First), atom_budget)?;
    let m2 = SharedSideModels::build(&[rho2.clone()], ctx.observables(Side::Second), ctx.max_len(Side::Second), atom_budget)?;
    let (n1, n2) = (m1.weights.len(), m2.weights.len());
    check_budget(n1 as u128 * n2 as u128, atom_budget)?;
    let mut atoms = Vec::with_capacity(n1 * n2);
    let mut weights = Vec::with_capacity(n1 * n2);
    let mut resp1 = Vec::new();
    let mut resp2 = Vec::new();
    for i in 0..n1 {
        for j in 0..n2 {
            atoms.push(format!("c{i}x{j}"));
            weights.push(m1.weights[i] * m2.weights[j]);
            resp1.extend_from_slice(m1.response(0, i));
            resp2.extend_from_slice(m2.response(0, j));
        }
    }
    DeterministicModel::from_parts(ctx.clone(), Shape::LocalCausal, atoms, weights, resp1, resp2)
}

/// Local causal model of a separable state `sum_i p_i rho1_i ⊗ rho2_i`.
pub fn separable_model(
    components: &[(f64, CMatrix, CMatrix)],
    ctx: &Context,
    atom_budget: usize,
) -> Result<DeterministicModel> {
    let models = components
        .iter()
        .map(|(_, a, b)| product_state_model(a, b, ctx, atom_budget))
        .collect::<Result<Vec<_>>>()?;
    let weights: Vec<f64> = components.iter().map(|c| c.0).collect();
    mix_models(&models, &weights)
}

/// Tagged disjoint union of models, each weighted by its mixing probability.
pub fn mix_models(models: &[DeterministicModel], weights: &[f64]) -> Result<DeterministicModel> {
    let first = models.first().ok_or_else(|| Error::ModelMismatch("nothing to mix".into()))?;
    if models.len() != weights.len() {
        return Err(Error::ModelMismatch("one weight per model required".into()));
    }
    check_probability_vector(weights, 1e-12)?;
    for m in &models[1..] {
        if m.shape() != first.shape() {
            return Err(Error::ModelMismatch("models have different shapes".into()));
        }
        if !m.context().same_as(first.context(), 1e-12) {
            return Err(Error::ModelMismatch("models have different contexts".into()));
        }
    }
    let mut atoms = Vec::new();
    let mut w = Vec::new();
    let mut resp1 = Vec::new();
    let mut resp2 = Vec::new();
    for (nu, (m, &p)) in models.iter().zip(weights).enumerate() {
        for (a, id) in m.atom_ids().iter().enumerate() {
            atoms.push(format!("{nu}.{id}"));
            w.push(p * m.weights()[a]);
            resp1.extend_from_slice(m.responses1(a));
            resp2.extend_from_slice(m.responses2(a));
        }
    }
    DeterministicModel::from_parts(first.context().clone(), first.shape(), atoms, w, resp1, resp2)
}

/// Maps each node of a shortened tree to the old node below the first step.
fn node_map(old: &PathTree, new: &PathTree, first: (usize, usize)) -> Vec<usize> {
    let mut map = vec![0; new.num_nodes()];
    map[0] = old.child(0, first.0, first.1);
    for n in 1..new.num_nodes() {
        let node = new.node(n);
        let (o, x) = node.step.unwrap();
        map[n] = old.child(map[node.parent.unwrap()], o, x);
    }
    map
}

/// Model of the state collapsed by the first step `(side, observable, outcome)`.
///
/// Keeps the atoms whose response to the first step is `outcome`, renormalizes,
/// and re-roots that side's response trees below the step.
pub fn collapse_model(m: &DeterministicModel, side: Side, obs: usize, outcome: usize) -> Result<DeterministicModel> {
    let ctx = m.context();
    let layout = m.layout();
    if obs >= ctx.observables(side).len() || outcome >= ctx.observables(side)[obs].len() {
        return Err(Error::InvalidContext(format!("no first step ({obs}, {outcome}) on side {}", side.index())));
    }
    if ctx.max_len(side) < 2 {
        return Err(Error::InvalidContext("collapsing needs sequence length at least 2 on that side".into()));
    }
    if m.shape() == Shape::Causal && side == Side::Second {
        return Err(Error::ModelMismatch(
            "causal-shape models order side-1 steps first; collapse them on side 1 only".into(),
        ));
    }
    let prob = m.first_step_probability(side, obs, outcome);
    if prob <= PROB_FLOOR {
        return Err(Error::ZeroProbabilityBranch(prob));
    }
    let (l1, l2) = match side {
        Side::First => (ctx.max_len(Side::First) - 1, ctx.max_len(Side::Second)),
        Side::Second => (ctx.max_len(Side::First), ctx.max_len(Side::Second) - 1),
    };
    let new_ctx = ctx.with_lengths(l1, l2);
    let new_layout = Layout::new(&new_ctx, m.shape());
    let (old_tree, new_tree) = match side {
        Side::First => (&layout.tree1, &new_layout.tree1),
        Side::Second => (&layout.tree2, &new_layout.tree2),
    };
    let map = node_map(old_tree, new_tree, (obs, outcome));
    let slot_map: Vec<usize> = (0..new_tree.num_slots())
        .map(|s| {
            let (n, o) = new_tree.slot_parts(s);
            old_tree.slot(map[n], o)
        })
        .collect();
    let s2 = layout.tree2.num_slots();
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    let mut resp1 = Vec::new();
    let mut resp2 = Vec::new();
    for a in 0..m.num_atoms() {
        let r1 = m.responses1(a);
        let r2 = m.responses2(a);
        let hit = match side {
            Side::First => r1[layout.tree1.slot(0, obs)] as usize == outcome,
            Side::Second => r2[layout.slot2(0, 0, obs)] as usize == outcome,
        };
        if !hit {
            continue;
        }
        atoms.push(m.atom_ids()[a].clone());
        weights.push(m.weights()[a] / prob);
        match (side, m.shape()) {
            (Side::First, Shape::LocalCausal) => {
                resp1.extend(slot_map.iter().map(|&s| r1[s]));
                resp2.extend_from_slice(r2);
            }
            (Side::First, Shape::Causal) => {
                resp1.extend(slot_map.iter().map(|&s| r1[s]));
                for &old in &map {
                    resp2.extend_from_slice(&r2[old * s2..(old + 1) * s2]);
                }
            }
            (Side::Second, _) => {
                resp1.extend_from_slice(r1);
                resp2.extend(slot_map.iter().map(|&s| r2[s]));
            }
        }
    }
    DeterministicModel::from_parts(new_ctx, m.shape(), atoms, weights, resp1, resp2)
}

/// Interval models of the pure post-measurement states of one side's first steps.
///
/// Every first observable must be an ideal measurement with rank-one projectors,
/// so that each first outcome leaves that side in a known pure state.
#[derive(Debug, Clone)]
pub struct PureStateFamily {
    side: Side,
    observables: Vec<OperationFamily>,
    /// `state_index[obs][outcome]` into `models.responses`.
    state_index: Vec<Vec<usize>>,
    models: SharedSideModels,
}

impl PureStateFamily {
    /// Builds the family for follow-up sequences of the context's length minus one.
    pub fn build(ctx: &Context, side: Side, atom_budget: usize) -> Result<Self> {
        let fams = ctx.observables(side);
        if ctx.max_len(side) < 1 {
            return Err(Error::InvalidContext("side has no measurements".into()));
        }
        let mut states = Vec::new();
        let mut state_index = Vec::new();
        for f in fams {
            if f.kind != FamilyKind::Ideal || !f.is_rank_one_projective() {
                return Err(Error::InvalidMeasurement(format!(
                    "first measurement {} must be ideal with rank-one projectors",
                    f.name
                )));
            }
            if f.len() < 2 {
                return Err(Error::InvalidMeasurement(format!("first measurement {} is trivial", f.name)));
            }
            let mut row = Vec::new();
            for r in f.operators() {
                row.push(states.len());
                states.push(r.adjoint() * r);
            }
            state_index.push(row);
        }
        let models = SharedSideModels::build(&states, fams, ctx.max_len(side) - 1, atom_budget)?;
        Ok(Self { side, observables: fams.to_vec(), state_index, models })
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn num_atoms(&self) -> usize {
        self.models.weights.len()
    }

    pub fn follow_len(&self) -> usize {
        self.models.tree.max_len()
    }
}

enum SlotSource {
    First(usize),
    Follow { state: usize, slot: usize },
}

fn slot_sources(tree: &PathTree, fam: &PureStateFamily) -> Vec<SlotSource> {
    (0..tree.num_slots())
        .map(|s| {
            let (n, o) = tree.slot_parts(s);
            if n == 0 {
                return SlotSource::First(o);
            }
            let path = tree.path(n);
            let (a, x) = path[0];
            let follow = fam.models.tree.node_of(&path[1..]).expect("follow-up path in range");
            SlotSource::Follow { state: fam.state_index[a][x], slot: fam.models.tree.slot(follow, o) }
        })
        .collect()
}

/// Couples a single-measurement local model with pure-state causal models of the
/// collapsed states into a local causal model for sequences.
///
/// Atoms are triples (LHV1 atom, side-1 atom, side-2 atom); follow-up responses of
/// a side read the pure-state model selected by that side's first outcome.
pub fn couple_lchv_d2(
    lhv1: &DeterministicModel,
    fam1: &PureStateFamily,
    fam2: &PureStateFamily,
    atom_budget: usize,
) -> Result<DeterministicModel> {
    let ctx = lhv1.context();
    if lhv1.shape() != Shape::LocalCausal || ctx.max_len(Side::First) != 1 || ctx.max_len(Side::Second) != 1 {
        return Err(Error::ModelMismatch("LHV1 input must be local with length 1 on both sides".into()));
    }
    if fam1.side != Side::First || fam2.side != Side::Second {
        return Err(Error::ModelMismatch("pure-state families are for the wrong sides".into()));
    }
    let probe = ctx.with_lengths(1, 1);
    let fam_ctx = Context::new(fam1.observables.clone(), fam2.observables.clone(), 1, 1)?;
    if !probe.same_as(&fam_ctx, 1e-12) {
        return Err(Error::ModelMismatch("pure-state families use other observables than the LHV1 model".into()));
    }
    let live: Vec<usize> = (0..lhv1.num_atoms()).filter(|&a| lhv1.weights()[a] > 0.0).collect();
    let needed = live.len() as u128 * fam1.num_atoms() as u128 * fam2.num_atoms() as u128;
    check_budget(needed, atom_budget)?;
    let new_ctx = ctx.with_lengths(1 + fam1.follow_len(), 1 + fam2.follow_len());
    let layout = Layout::new(&new_ctx, Shape::LocalCausal);
    let src1 = slot_sources(&layout.tree1, fam1);
    let src2 = slot_sources(&layout.tree2, fam2);
    let old = lhv1.layout();
    let side_resp = |src: &[SlotSource], fam: &PureStateFamily, first: &[u16], first_tree: &PathTree, atom: usize| {
        src.iter()
            .map(|s| match *s {
                SlotSource::First(o) => first[first_tree.slot(0, o)],
                SlotSource::Follow { state, slot } => fam.models.response(state, atom)[slot],
            })
            .collect::<Vec<u16>>()
    };
    let cap = needed as usize;
    let mut atoms = Vec::with_capacity(cap);
    let mut weights = Vec::with_capacity(cap);
    let mut resp1 = Vec::with_capacity(cap * layout.slots1());
    let mut resp2 = Vec::with_capacity(cap * layout.slots2());
    for &w in &live {
        let r1: Vec<Vec<u16>> = (0..fam1.num_atoms())
            .map(|i| side_resp(&src1, fam1, lhv1.responses1(w), &old.tree1, i))
            .collect();
        let r2: Vec<Vec<u16>> = (0..fam2.num_atoms())
            .map(|j| side_resp(&src2, fam2, lhv1.responses2(w), &old.tree2, j))
            .collect();
        for (i, ri) in r1.iter().enumerate() {
            for (j, rj) in r2.iter().enumerate() {
                atoms.push(format!("{}x{i}x{j}", lhv1.atom_ids()[w]));
                weights.push(lhv1.weights()[w] * fam1.models.weights[i] * fam2.models.weights[j]);
                resp1.extend_from_slice(ri);
                resp2.extend_from_slice(rj);
            }
        }
    }
    DeterministicModel::from_parts(new_ctx, Shape::LocalCausal, atoms, weights, resp1, resp2)
}

/// Same sample space, indicator kernels.
pub fn deterministic_to_stochastic(m: &DeterministicModel) -> StochasticModel {
    let layout = m.layout();
    let indicators = |resp: &[u16], count: &dyn Fn(usize) -> usize, out: &mut Vec<f64>| {
        for (s, &r) in resp.iter().enumerate() {
            let k = count(s);
            out.extend((0..k).map(|x| if x == r as usize { 1.0 } else { 0.0 }));
        }
    };
    let c1 = |s: usize| layout.tree1.outcome_count(layout.tree1.slot_parts(s).1);
    let c2 = |s: usize| layout.tree2.outcome_count(layout.slot2_obs(s));
    let mut k1 = Vec::new();
    let mut k2 = Vec::new();
    for a in 0..m.num_atoms() {
        indicators(m.responses1(a), &c1, &mut k1);
        indicators(m.responses2(a), &c2, &mut k2);
    }
    StochasticModel::from_parts(
        m.context().clone(),
        m.shape(),
        m.atom_ids().to_vec(),
        m.weights().to_vec(),
        k1,
        k2,
    )
    .expect("indicator kernels of a valid model are valid")
}

/// Per-slot outcome choices of one stochastic atom: either fixed or a support list.
struct SlotChoices {
    fixed: Vec<u16>,
    /// `(slot, [(outcome, probability)])` for slots with more than one live outcome.
    free: Vec<(usize, Vec<(u16, f64)>)>,
}

fn slot_choices(n: usize, kernel: impl Fn(usize) -> Vec<f64>, live: impl Fn(usize) -> bool) -> SlotChoices {
    let mut fixed = vec![0u16; n];
    let mut free = Vec::new();
    for s in 0..n {
        let k = kernel(s);
        let support: Vec<(u16, f64)> =
            k.iter().enumerate().filter(|(_, &q)| q > 0.0).map(|(x, &q)| (x as u16, q)).collect();
        fixed[s] = support.first().map_or(0, |p| p.0);
        if live(s) && support.len() > 1 {
            free.push((s, support));
        }
    }
    SlotChoices { fixed, free }
}

/// Deterministic model on the product of the stochastic sample space with one
/// independent outcome variable per live slot.
///
/// Slots that the atom cannot reach, or whose kernel is a point mass, add no factor,
/// so a degenerate input maps back to a model of the same size.
pub fn stochastic_to_deterministic(s: &StochasticModel, atom_budget: usize) -> Result<DeterministicModel> {
    let layout = s.layout();
    let s2n = layout.tree2.num_slots();
    let mut plans = Vec::new();
    let mut needed: u128 = 0;
    for a in 0..s.num_atoms() {
        let w = s.weights()[a];
        if w == 0.0 {
            continue;
        }
        let p1 = s.side1_path_probs(a);
        let c1 = slot_choices(layout.slots1(), |sl| s.kernel1(a, sl).to_vec(), |sl| p1[layout.tree1.slot_parts(sl).0] > 0.0);
        let c2 = match layout.shape {
            Shape::LocalCausal => {
                let p2 = s.side2_path_probs(a, 0);
                slot_choices(layout.slots2(), |sl| s.kernel2(a, sl).to_vec(), |sl| p2[layout.tree2.slot_parts(sl).0] > 0.0)
            }
            Shape::Causal => {
                let p2: Vec<Vec<f64>> = (0..layout.tree1.num_nodes())
                    .map(|n1| if p1[n1] > 0.0 { s.side2_path_probs(a, n1) } else { Vec::new() })
                    .collect();
                slot_choices(
                    layout.slots2(),
                    |sl| s.kernel2(a, sl).to_vec(),
                    |sl| {
                        let n1 = sl / s2n;
                        p1[n1] > 0.0 && p2[n1][layout.tree2.slot_parts(sl % s2n).0] > 0.0
                    },
                )
            }
        };
        let mut count: u128 = 1;
        for (_, sup) in c1.free.iter().chain(&c2.free) {
            count = count.saturating_mul(sup.len() as u128);
        }
        needed = needed.saturating_add(count);
        check_budget(needed, atom_budget)?;
        plans.push((a, c1, c2));
    }
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    let mut resp1 = Vec::new();
    let mut resp2 = Vec::new();
    for (a, c1, c2) in plans {
        let free: Vec<(bool, usize, &Vec<(u16, f64)>)> = c1
            .free
            .iter()
            .map(|(sl, sup)| (true, *sl, sup))
            .chain(c2.free.iter().map(|(sl, sup)| (false, *sl, sup)))
            .collect();
        let mut digits = vec![0usize; free.len()];
        let mut r1 = c1.fixed.clone();
        let mut r2 = c2.fixed.clone();
        for k in 0.. {
            let mut w = s.weights()[a];
            for (d, &(first, sl, sup)) in digits.iter().zip(&free) {
                let (x, q) = sup[*d];
                w *= q;
                if first {
                    r1[sl] = x;
                } else {
                    r2[sl] = x;
                }
            }
            atoms.push(format!("{}#{k}", s.atom_ids()[a]));
            weights.push(w);
            resp1.extend_from_slice(&r1);
            resp2.extend_from_slice(&r2);
            let mut i = 0;
            while i < digits.len() {
                digits[i] += 1;
                if digits[i] < free[i].2.len() {
                    break;
                }
                digits[i] = 0;
                i += 1;
            }
            if i == digits.len() {
                break;
            }
        }
    }
    DeterministicModel::from_parts(s.context().clone(), s.shape(), atoms, weights, resp1, resp2)
}

/// Conditional distribution over children, with round-off below `1e-14` cleared.
fn conditional(children: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut c: Vec<f64> = children.map(|q| q.max(0.0)).collect();
    let total: f64 = c.iter().sum();
    if total <= 0.0 {
        c.iter_mut().for_each(|q| *q = 0.0);
        c[0] = 1.0;
        return c;
    }
    c.iter_mut().for_each(|q| *q /= total);
    c.iter_mut().filter(|q| **q < 1e-14).for_each(|q| *q = 0.0);
    let total: f64 = c.iter().sum();
    c.iter_mut().for_each(|q| *q /= total);
    c
}

/// Single-atom causal stochastic model whose kernels are the quantum conditionals.
pub fn quantum_kernel_model(rho: &DensityMatrix, ctx: &Context) -> Result<StochasticModel> {
    let layout = Layout::new(ctx, Shape::Causal);
    let q = quantum_node_table(rho.matrix(), ctx, &layout)?;
    let (t1, t2) = (&layout.tree1, &layout.tree2);
    let mut k1 = Vec::new();
    for s in 0..t1.num_slots() {
        let (n, o) = t1.slot_parts(s);
        k1.extend(conditional((0..t1.outcome_count(o)).map(|x| q[layout.pair_index(t1.child(n, o, x), 0)])));
    }
    let mut k2 = Vec::new();
    for n1 in 0..t1.num_nodes() {
        for s in 0..t2.num_slots() {
            let (n, o) = t2.slot_parts(s);
            k2.extend(conditional((0..t2.outcome_count(o)).map(|x| q[layout.pair_index(n1, t2.child(n, o, x))])));
        }
    }
    StochasticModel::from_parts(ctx.clone(), Shape::Causal, vec!["q".into()], vec![1.0], k1, k2)
}

/// For each projector of `basis`, the index of the joint spectral projector containing it.
fn basis_map(basis: &OperationFamily, projectors: &[CMatrix]) -> Option<Vec<usize>> {
    if basis.kind != FamilyKind::Ideal {
        return None;
    }
    basis
        .operators()
        .iter()
        .map(|q| projectors.iter().position(|p| (p * q).max_abs_diff(q) <= 1e-9))
        .collect()
}

/// Coefficient rows `m[alpha][j]` over joint spectral classes, the index of the
/// basis observable used for one side, and the class of each basis outcome.
fn side_extension(fams: &[OperationFamily], povm: &Povm, what: &str) -> Result<(usize, Vec<Vec<f64>>, Vec<usize>)> {
    let dec = match commuting_decompose(povm) {
        Decomposition::Commuting(d) => d,
        Decomposition::NotCommuting { max_commutator } => return Err(Error::NotCommuting(max_commutator)),
    };
    // Rank-one projectors with equal coefficient columns span one joint eigenspace.
    let column = |j: usize| dec.coefficients.iter().map(|row| row[j]).collect::<Vec<f64>>();
    let mut classes: Vec<(Vec<f64>, CMatrix)> = Vec::new();
    for (j, p) in dec.projectors.iter().enumerate() {
        let col = column(j);
        match classes.iter_mut().find(|(c, _)| c.iter().zip(&col).all(|(a, b)| (a - b).abs() <= 1e-9)) {
            Some((_, q)) => *q = &*q + p,
            None => classes.push((col, p.clone())),
        }
    }
    let projectors: Vec<CMatrix> = classes.iter().map(|c| c.1.clone()).collect();
    let coefficients = (0..povm.len()).map(|a| classes.iter().map(|c| c.0[a]).collect()).collect();
    for (i, f) in fams.iter().enumerate() {
        if f.dim() != povm.dim() {
            continue;
        }
        if let Some(map) = basis_map(f, &projectors) {
            return Ok((i, coefficients, map));
        }
    }
    Err(Error::MissingBasisObservable(what.to_string()))
}

/// Kernel rows aligned with the outcomes kept by the operation family.
fn kept_rows(ops: &OperationFamily, povm: &Povm, m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    ops.labels()
        .iter()
        .map(|l| m[povm.labels().iter().position(|k| k.id == l.id).expect("label kept")].clone())
        .collect()
}

/// Stochastic single-measurement model for two commuting POVMs built on the
/// sample space of a local model that contains a jointly diagonalizing observable.
///
/// The kernel of outcome `alpha` at an atom is `m_alpha^j` where `j` is the joint
/// spectral projector containing the basis outcome the atom assigns.
pub fn extend_commuting_povm(lhv1: &DeterministicModel, povm1: &Povm, povm2: &Povm) -> Result<StochasticModel> {
    if lhv1.shape() != Shape::LocalCausal {
        return Err(Error::ModelMismatch("extension needs a local model".into()));
    }
    let ctx = lhv1.context();
    let (b1, m1, map1) = side_extension(ctx.observables(Side::First), povm1, "side-1 POVM")?;
    let (b2, m2, map2) = side_extension(ctx.observables(Side::Second), povm2, "side-2 POVM")?;
    let ops1 = povm1.sqrt_operations("povm1")?;
    let ops2 = povm2.sqrt_operations("povm2")?;
    let (m1, m2) = (kept_rows(&ops1, povm1, &m1), kept_rows(&ops2, povm2, &m2));
    let new_ctx = Context::new(vec![ops1], vec![ops2], 1, 1)?;
    let old = lhv1.layout();
    let (slot1, slot2) = (old.tree1.slot(0, b1), old.slot2(0, 0, b2));
    let mut k1 = Vec::new();
    let mut k2 = Vec::new();
    for a in 0..lhv1.num_atoms() {
        let j1 = map1[lhv1.responses1(a)[slot1] as usize];
        let j2 = map2[lhv1.responses2(a)[slot2] as usize];
        k1.extend(m1.iter().map(|row| row[j1]));
        k2.extend(m2.iter().map(|row| row[j2]));
    }
    StochasticModel::from_parts(
        new_ctx,
        Shape::LocalCausal,
        lhv1.atom_ids().to_vec(),
        lhv1.weights().to_vec(),
        k1,
        k2,
    )
}
