//! Deterministic local causal strategies and the LCHV_k feasibility LP.

use serde::Serialize;

use super::lp::phase1;
use crate::error::{Error, Result};
use crate::hilbert::Side;
use crate::hvmodels::{quantum_node_table, verify_model, Context, DeterministicModel, Layout, PathTree, Shape, VerificationReport};
use crate::states::DensityMatrix;

/// Default LP tolerance.
pub const LP_TOL: f64 = 1e-9;
/// Default cap on the number of strategy pairs.
pub const DEFAULT_STRATEGY_BUDGET: usize = 1_000_000;

/// One deterministic response tree per side (single atom).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LocalStrategy {
    pub side1: Vec<u16>,
    pub side2: Vec<u16>,
}

/// Per-side strategy lists; pairs are formed lazily.
#[derive(Debug, Clone)]
pub struct StrategySet {
    pub tree1: PathTree,
    pub tree2: PathTree,
    pub side1: Vec<Vec<u16>>,
    pub side2: Vec<Vec<u16>>,
}

impl StrategySet {
    pub fn num_pairs(&self) -> usize {
        self.side1.len() * self.side2.len()
    }

    pub fn pair(&self, i: usize) -> LocalStrategy {
        let n2 = self.side2.len();
        LocalStrategy { side1: self.side1[i / n2].clone(), side2: self.side2[i % n2].clone() }
    }

    pub fn pairs(&self) -> impl Iterator<Item = LocalStrategy> + '_ {
        (0..self.num_pairs()).map(|i| self.pair(i))
    }
}

/// Number of complete response trees: product of outcome counts over all slots.
fn full_count(tree: &PathTree) -> u128 {
    (0..tree.num_slots()).fold(1u128, |acc, s| acc.saturating_mul(tree.outcome_count(tree.slot_parts(s).1) as u128))
}

/// Every assignment of an outcome to every slot, in lexicographic order.
fn full_trees(tree: &PathTree) -> Vec<Vec<u16>> {
    let n = tree.num_slots();
    let radix: Vec<usize> = (0..n).map(|s| tree.outcome_count(tree.slot_parts(s).1)).collect();
    let mut out = Vec::new();
    let mut cur = vec![0u16; n];
    loop {
        out.push(cur.clone());
        let mut i = n;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            cur[i] += 1;
            if (cur[i] as usize) < radix[i] {
                break;
            }
            cur[i] = 0;
        }
    }
}

/// Exhaustive, duplicate-free deterministic causal strategy pairs up to depth `k`.
pub fn enumerate_strategies(ctx: &Context, k: usize, budget: usize) -> Result<StrategySet> {
    let c = ctx.with_lengths(k, k);
    let (tree1, tree2) = (c.tree(Side::First), c.tree(Side::Second));
    let needed = full_count(&tree1).saturating_mul(full_count(&tree2));
    if needed > budget as u128 {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    let side1 = full_trees(&tree1);
    let side2 = full_trees(&tree2);
    Ok(StrategySet { tree1, tree2, side1, side2 })
}

/// Number of strategies that differ in reachable behaviour below `depth`.
fn reduced_count(tree: &PathTree, depth: usize) -> u128 {
    if depth >= tree.max_len() {
        return 1;
    }
    let below = reduced_count(tree, depth + 1);
    tree.outcome_counts().iter().fold(1u128, |acc, &k| acc.saturating_mul((k as u128).saturating_mul(below)))
}

/// Strategies that differ on reachable slots; unreachable slots are set to 0.
fn reduced_trees(tree: &PathTree, node: usize, acc: Vec<Vec<u16>>) -> Vec<Vec<u16>> {
    if !tree.has_slots(node) {
        return acc;
    }
    let mut acc = acc;
    for obs in 0..tree.num_observables() {
        let slot = tree.slot(node, obs);
        let mut next = Vec::new();
        for partial in acc {
            for x in 0..tree.outcome_count(obs) {
                let mut q = partial.clone();
                q[slot] = x as u16;
                next.extend(reduced_trees(tree, tree.child(node, obs, x), vec![q]));
            }
        }
        acc = next;
    }
    acc
}

/// Nodes at maximal depth reached by a strategy.
fn leaves(tree: &PathTree, resp: &[u16]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack = vec![0];
    while let Some(n) = stack.pop() {
        if !tree.has_slots(n) {
            out.push(n);
            continue;
        }
        for obs in 0..tree.num_observables() {
            stack.push(tree.child(n, obs, resp[tree.slot(n, obs)] as usize));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FeasibilityStatus {
    Feasible,
    Infeasible,
}

/// Weighted strategy pair of a feasible certificate.
#[derive(Debug, Clone, Serialize)]
pub struct WeightedStrategy {
    pub side1: Vec<u16>,
    pub side2: Vec<u16>,
    pub weight: f64,
}

/// One term `coefficient · P(sequence)` of a separating functional.
#[derive(Debug, Clone, Serialize)]
pub struct WitnessTerm {
    pub sequence: String,
    pub coefficient: f64,
}

/// Affine functional `f` with `f(local) <= local_max` for every strategy while
/// `f(quantum) = quantum_value > local_max`.
#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub terms: Vec<WitnessTerm>,
    pub constant: f64,
    pub quantum_value: f64,
    pub local_max: f64,
    pub description: String,
}

#[derive(Debug, Clone)]
pub struct FeasibilityResult {
    pub status: FeasibilityStatus,
    pub k: usize,
    pub certificate: Vec<WeightedStrategy>,
    pub witness: Option<Witness>,
    pub max_residual: f64,
    pub phase1_objective: f64,
    pub model: Option<DeterministicModel>,
    pub verification: Option<VerificationReport>,
    pub strategies_per_side: (usize, usize),
}

/// Decides whether a deterministic local causal model exists for sequences of
/// length at most `k` per side.
///
/// Constraints are imposed on sequences of exactly `k` steps per side; shorter
/// sequences are their marginals for both the model and the quantum prediction.
/// Strategies are enumerated up to reachable behaviour.
pub fn lchv_feasibility(
    rho: &DensityMatrix,
    ctx: &Context,
    k: usize,
    strategy_budget: usize,
    lp_tol: f64,
) -> Result<FeasibilityResult> {
    if k == 0 {
        return Err(Error::InvalidContext("sequence length must be at least 1".into()));
    }
    if rho.dims() != ctx.dims() {
        return Err(Error::DimensionMismatch("state and context dimensions differ".into()));
    }
    let c = ctx.with_lengths(k, k);
    let layout = Layout::new(&c, Shape::LocalCausal);
    let (t1, t2) = (&layout.tree1, &layout.tree2);
    let needed = reduced_count(t1, 0).saturating_mul(reduced_count(t2, 0));
    if needed > strategy_budget as u128 {
        return Err(Error::BudgetExceeded { needed, budget: strategy_budget });
    }
    let s1 = reduced_trees(t1, 0, vec![vec![0; t1.num_slots()]]);
    let s2 = reduced_trees(t2, 0, vec![vec![0; t2.num_slots()]]);
    let q = quantum_node_table(rho.matrix(), &c, &layout)?;
    let leaves1: Vec<usize> = t1.nodes_at_depth(k).collect();
    let leaves2: Vec<usize> = t2.nodes_at_depth(k).collect();
    let pos = |leaves: &[usize], n: usize| leaves.binary_search(&n).unwrap();
    let reach1: Vec<Vec<usize>> = s1.iter().map(|r| leaves(t1, r).into_iter().map(|n| pos(&leaves1, n)).collect()).collect();
    let reach2: Vec<Vec<usize>> = s2.iter().map(|r| leaves(t2, r).into_iter().map(|n| pos(&leaves2, n)).collect()).collect();
    let m = leaves1.len() * leaves2.len() + 1;
    let mut b = Vec::with_capacity(m);
    for &n1 in &leaves1 {
        for &n2 in &leaves2 {
            b.push(q[layout.pair_index(n1, n2)]);
        }
    }
    b.push(1.0);
    let row = |i1: usize, i2: usize| i1 * leaves2.len() + i2;
    let mut cols = Vec::with_capacity(s1.len() * s2.len());
    for r1 in &reach1 {
        for r2 in &reach2 {
            let mut col = vec![0.0; m];
            for &i1 in r1 {
                for &i2 in r2 {
                    col[row(i1, i2)] = 1.0;
                }
            }
            col[m - 1] = 1.0;
            cols.push(col);
        }
    }
    let sol = phase1(&cols, &b);
    log::debug!(
        "LP k={k}: {} columns, {m} rows, {} pivots, objective {:e}",
        cols.len(),
        sol.iterations,
        sol.objective
    );
    let per_side = (s1.len(), s2.len());
    if sol.objective <= lp_tol {
        let mut x: Vec<f64> = sol.x.iter().map(|v| v.max(0.0)).collect();
        let total: f64 = x.iter().sum();
        x.iter_mut().for_each(|v| *v /= total);
        let residual = (0..m)
            .map(|i| (cols.iter().zip(&x).map(|(c, w)| c[i] * w).sum::<f64>() - b[i]).abs())
            .fold(0.0, f64::max);
        if residual > lp_tol {
            return Err(Error::LpNumericalFailure { residual });
        }
        let n2 = s2.len();
        let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] > 0.0).collect();
        let certificate: Vec<WeightedStrategy> = support
            .iter()
            .map(|&i| WeightedStrategy { side1: s1[i / n2].clone(), side2: s2[i % n2].clone(), weight: x[i] })
            .collect();
        let model = DeterministicModel::from_parts(
            c.clone(),
            Shape::LocalCausal,
            support.iter().map(|i| format!("s{}_{}", i / n2, i % n2)).collect(),
            certificate.iter().map(|w| w.weight).collect(),
            certificate.iter().flat_map(|w| w.side1.iter().copied()).collect(),
            certificate.iter().flat_map(|w| w.side2.iter().copied()).collect(),
        )?;
        let report = verify_model(&model, rho, 1e-8);
        return Ok(FeasibilityResult {
            status: FeasibilityStatus::Feasible,
            k,
            certificate,
            witness: None,
            max_residual: residual,
            phase1_objective: sol.objective,
            model: Some(model),
            verification: Some(report),
            strategies_per_side: per_side,
        });
    }
    if sol.objective <= 100.0 * lp_tol {
        return Err(Error::LpNumericalFailure { residual: sol.objective });
    }
    let y = &sol.y;
    let local_max = cols
        .iter()
        .map(|c| c.iter().zip(y).map(|(a, w)| a * w).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    let value: f64 = b.iter().zip(y).map(|(a, w)| a * w).sum();
    // Normalization row contributes a constant offset.
    let constant = y[m - 1];
    let mut terms = Vec::new();
    for (i1, &n1) in leaves1.iter().enumerate() {
        for (i2, &n2) in leaves2.iter().enumerate() {
            let coef = y[row(i1, i2)];
            if coef.abs() > 1e-12 {
                terms.push(WitnessTerm { sequence: layout.describe(&c, n1, n2), coefficient: coef });
            }
        }
    }
    if value - local_max <= lp_tol {
        return Err(Error::LpNumericalFailure { residual: value - local_max });
    }
    let description = format!(
        "sum of coefficient * P(sequence) + {constant:.6} is at most {local_max:.3e} for every local causal strategy but equals {value:.6} for the state"
    );
    Ok(FeasibilityResult {
        status: FeasibilityStatus::Infeasible,
        k,
        certificate: Vec::new(),
        witness: Some(Witness { terms, constant, quantum_value: value, local_max, description }),
        max_residual: sol.objective,
        phase1_objective: sol.objective,
        model: None,
        verification: None,
        strategies_per_side: per_side,
    })
}
