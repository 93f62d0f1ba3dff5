//! End-to-end reproduction checks, one per quantitative claim.

use std::f64::consts::SQRT_2;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::feasibility::{
    bell_polytope_oracle, chsh_maximize, chsh_maximize_angles, classify_evidence, correlation_table, lchv_feasibility,
    max_chsh_facet, plane_context, standard_rank_two, FeasibilityStatus, NBound, PolytopeMembership,
    DEFAULT_STRATEGY_BUDGET,
};
use crate::hilbert::{psd_min_eigenvalue, CMatrix, DimPair, Side};
use crate::hvmodels::{
    collapse_model, couple_lchv_d2, deterministic_to_stochastic, extend_commuting_povm, product_state_model,
    quantum_kernel_model, stochastic_to_deterministic, trivial_causal_model, verify_model, Context, HvModel,
    PureStateFamily, DEFAULT_ATOM_BUDGET,
};
use crate::measurement::{pauli, smeared_povm, spin_along, Observable, OperationFamily, OutcomeLabel, Povm};
use crate::sampling::{gaussian, random_context, random_density, random_local_state, random_mixed_context, random_unitary_columns, rng};
use crate::states::{
    collapse_and_refit, collapse_local, collapsed_c_prime, cross_term_norms, entanglement_threshold, flip_expectation,
    normalization_bound, ppt_entangled, product, singlet, werner, werner_gen, DensityMatrix, WernerParams,
};

/// LP tolerance used throughout the acceptance runs.
pub const ACCEPTANCE_LP_TOL: f64 = 1e-9;
/// Distance kept from exact boundaries.
const BOUNDARY_GAP: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct CriterionOutcome {
    pub number: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type Check = fn(u64) -> Result<(bool, String)>;

const CRITERIA: [(&str, Check); 11] = [
    ("Werner normalization and positivity", werner_normalization),
    ("entanglement threshold", entanglement_threshold_check),
    ("collapse algebra", collapse_algebra),
    ("hidden nonlocality after rank-2 projection", popescu),
    ("LP vs polytope oracle", lp_vs_oracle),
    ("Werner locality at k=1", werner_locality),
    ("d=2 LCHV construction", d2_construction),
    ("Fine equivalence", fine_equivalence),
    ("commuting POVM extension", povm_extension),
    ("collapsed-model compatibility", collapsed_models),
    ("classification table", classification),
];

pub fn num_criteria() -> usize {
    CRITERIA.len()
}

/// Runs criterion `number` (1-based).
pub fn run_criterion(number: usize, seed: u64) -> CriterionOutcome {
    let (name, check) = CRITERIA[number - 1];
    let start = Instant::now();
    let (passed, detail) = match check(seed) {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionOutcome { number, name, passed, detail, seconds: start.elapsed().as_secs_f64() }
}

pub fn run_all(seed: u64) -> Vec<CriterionOutcome> {
    (1..=CRITERIA.len()).map(|n| run_criterion(n, seed)).collect()
}

/// `PASS`/`FAIL` line for one outcome.
pub fn format_line(o: &CriterionOutcome) -> String {
    format!(
        "[{}] {:>2}. {} ({:.2}s): {}",
        if o.passed { "PASS" } else { "FAIL" },
        o.number,
        o.name,
        o.seconds,
        o.detail
    )
}

fn wg(d: usize, c: f64) -> Result<DensityMatrix> {
    werner_gen(WernerParams::new(d, c)?)
}

fn sigma(name: &str, axis: char) -> Result<OperationFamily> {
    Ok(Observable::new(name, pauli(axis)?)?.family())
}

fn qubits() -> DimPair {
    DimPair { d1: 2, d2: 2 }
}

fn werner_normalization(_: u64) -> Result<(bool, String)> {
    let mut worst_trace = 0.0f64;
    let mut worst_eig = f64::INFINITY;
    let mut count = 0;
    for d in 2..=6 {
        let bound = normalization_bound(d);
        let mut states = vec![werner(d)?];
        for i in 0..20 {
            states.push(wg(d, bound * i as f64 / 19.0)?);
        }
        for s in &states {
            worst_trace = worst_trace.max((s.matrix().trace().re - 1.0).abs());
            worst_eig = worst_eig.min(psd_min_eigenvalue(s.matrix())?);
            count += 1;
        }
    }
    let ok = worst_trace < 1e-12 && worst_eig >= -1e-10;
    Ok((ok, format!("{count} states, max |tr-1| = {worst_trace:.2e}, min eigenvalue = {worst_eig:.2e}")))
}

fn entanglement_threshold_check(_: u64) -> Result<(bool, String)> {
    let mut ok = true;
    for d in 2..=6 {
        let t = entanglement_threshold(d);
        let below = flip_expectation(WernerParams::new(d, t - BOUNDARY_GAP)?);
        let above = flip_expectation(WernerParams::new(d, t + BOUNDARY_GAP)?);
        ok &= below > 0.0 && above < 0.0;
    }
    let t2 = entanglement_threshold(2);
    let mut agree = 0;
    let mut tested = 0;
    for i in 0..50 {
        let c = normalization_bound(2) * i as f64 / 49.0;
        if (c - t2).abs() < BOUNDARY_GAP {
            continue;
        }
        tested += 1;
        if ppt_entangled(&wg(2, c)?) == Some(c > t2) {
            agree += 1;
        }
    }
    ok &= agree == tested;
    Ok((ok, format!("flip sign changes at 1/(d(d²-1)) for d=2..6; PPT agrees on {agree}/{tested} grid points")))
}

fn collapse_algebra(seed: u64) -> Result<(bool, String)> {
    let mut r = rng(seed ^ 0x3);
    let mut worst_cross = 0.0f64;
    for d in 3..=5 {
        let cols = random_unitary_columns(d, &mut r);
        let proj = cols[..d - 1].iter().fold(CMatrix::zeros(d, d), |acc, v| acc + CMatrix::projector_onto(v));
        let p = WernerParams::new(d, r.random_range(0.0..normalization_bound(d)))?;
        worst_cross = cross_term_norms(p, &proj)?.iter().fold(worst_cross, |a, &b| a.max(b));
    }
    let mut worst_fit = 0.0f64;
    for i in 0..10 {
        let d = 3 + i % 4;
        let c = normalization_bound(d) * (0.1 + 0.08 * i as f64);
        let p = WernerParams::new(d, c)?;
        let mut diag = vec![1.0; d];
        diag[d - 1] = 0.0;
        let (fit, residual) = collapse_and_refit(p, &CMatrix::from_real_diag(&diag))?;
        worst_fit = worst_fit.max((fit - collapsed_c_prime(p)?).abs()).max(residual);
    }
    let boundary = collapsed_c_prime(WernerParams::new(3, 1.0 / 15.0)?)?;
    let hit = (boundary - 1.0 / 6.0).abs() < 1e-15 && (boundary - entanglement_threshold(2)).abs() < 1e-15;
    let ok = worst_cross < 1e-12 && worst_fit < 1e-10 && hit;
    Ok((ok, format!("cross terms {worst_cross:.1e}, c' fit error {worst_fit:.1e}, c'(3, 1/15) = {boundary:.15}")))
}

fn popescu(seed: u64) -> Result<(bool, String)> {
    let mut values = Vec::new();
    let mut ok = true;
    for d in 2..=6 {
        let t = standard_rank_two(d);
        let (v, _) = chsh_maximize(&werner(d)?, &t, &t, seed)?;
        ok &= if d >= 5 { v > 2.0 + 1e-3 } else { v <= 2.0 + BOUNDARY_GAP };
        values.push(format!("d={d}: {v:.6}"));
    }
    Ok((ok, values.join(", ")))
}

fn table_of(rho: &DensityMatrix, ctx: &Context) -> Result<crate::feasibility::CorrelationTable> {
    let a = ctx.observables(Side::First);
    let b = ctx.observables(Side::Second);
    correlation_table(rho, [a[0].operators(), a[1].operators()], [b[0].operators(), b[1].operators()])
}

/// Random two-setting instance; half of them sit near the state's planar CHSH optimum.
fn two_setting_instance(seed: u64) -> Result<(DensityMatrix, Context)> {
    let mut r = rng(seed);
    let near = r.random_bool(0.5);
    let rank = if near { 1 } else { r.random_range(1..=4) };
    let rho = random_density(qubits(), rank, &mut r)?;
    let ctx = if near {
        let id = CMatrix::identity(2);
        let mut angles = chsh_maximize_angles(&rho, &id, &id, 0)?.angles;
        for a in &mut angles {
            *a += 0.15 * gaussian(&mut r);
        }
        plane_context(angles)?
    } else {
        random_context(qubits(), 2, 2, 1, 1, &mut r)?
    };
    Ok((rho, ctx))
}

fn lp_vs_oracle(seed: u64) -> Result<(bool, String)> {
    let (mut checked, mut disagreements, mut outside, mut next) = (0, 0, 0, seed.wrapping_mul(1_000_003));
    while checked < 200 {
        let (rho, ctx) = two_setting_instance(next)?;
        next += 1;
        let p = table_of(&rho, &ctx)?;
        if (max_chsh_facet(&p) - 2.0).abs() < BOUNDARY_GAP {
            continue;
        }
        let oracle = bell_polytope_oracle(&p, ACCEPTANCE_LP_TOL)?;
        let lp = lchv_feasibility(&rho, &ctx, 1, DEFAULT_STRATEGY_BUDGET, ACCEPTANCE_LP_TOL)?;
        if (lp.status == FeasibilityStatus::Feasible) != (oracle == PolytopeMembership::Inside) {
            disagreements += 1;
        }
        outside += usize::from(oracle == PolytopeMembership::Outside);
        checked += 1;
    }
    let id = CMatrix::identity(2);
    let opt = chsh_maximize_angles(&singlet(), &id, &id, 0)?;
    let ctx = plane_context(opt.angles)?;
    let singlet_lp = lchv_feasibility(&singlet(), &ctx, 1, DEFAULT_STRATEGY_BUDGET, ACCEPTANCE_LP_TOL)?.status;
    let singlet_oracle = bell_polytope_oracle(&table_of(&singlet(), &ctx)?, ACCEPTANCE_LP_TOL)?;
    let ok = disagreements == 0
        && singlet_lp == FeasibilityStatus::Infeasible
        && singlet_oracle == PolytopeMembership::Outside;
    Ok((ok, format!("{disagreements} disagreements on {checked} instances ({outside} outside); singlet {singlet_lp:?}")))
}

fn werner_locality(seed: u64) -> Result<(bool, String)> {
    let mut ok = true;
    let mut worst = 0.0f64;
    let mut runs = 0;
    for c in [0.10, 0.20, 0.25] {
        let rho = wg(2, c)?;
        for i in 0..5 {
            let ctx = random_context(qubits(), 3, 3, 1, 1, &mut rng(seed.wrapping_add(600 + i)))?;
            let res = lchv_feasibility(&rho, &ctx, 1, DEFAULT_STRATEGY_BUDGET, ACCEPTANCE_LP_TOL)?;
            let verified = res.model.as_ref().map(|m| verify_model(m, &rho, 1e-8));
            ok &= res.status == FeasibilityStatus::Feasible && verified.as_ref().is_some_and(|v| v.passed);
            if let Some(v) = verified {
                worst = worst.max(v.max_deviation);
            }
            runs += 1;
        }
    }
    Ok((ok, format!("{runs} feasibility runs, worst model deviation {worst:.1e}")))
}

fn d2_construction(seed: u64) -> Result<(bool, String)> {
    let mut contexts = vec![Context::new(
        vec![sigma("A1", 'z')?, sigma("A2", 'x')?],
        vec![sigma("B1", 'z')?, sigma("B2", 'x')?],
        2,
        2,
    )?];
    let mut r = rng(seed ^ 0x7);
    for _ in 0..2 {
        contexts.push(random_context(qubits(), 2, 2, 2, 2, &mut r)?);
    }
    let mut ok = true;
    let mut worst = 0.0f64;
    let mut atoms = 0;
    for c in [0.20, 0.25] {
        let rho = wg(2, c)?;
        ok &= c > entanglement_threshold(2);
        for ctx in &contexts {
            let lhv = lchv_feasibility(&rho, ctx, 1, DEFAULT_STRATEGY_BUDGET, ACCEPTANCE_LP_TOL)?;
            let Some(lhv1) = lhv.model else {
                ok = false;
                continue;
            };
            let f1 = PureStateFamily::build(ctx, Side::First, DEFAULT_ATOM_BUDGET)?;
            let f2 = PureStateFamily::build(ctx, Side::Second, DEFAULT_ATOM_BUDGET)?;
            let m = couple_lchv_d2(&lhv1, &f1, &f2, DEFAULT_ATOM_BUDGET)?;
            let rep = verify_model(&m, &rho, 1e-10);
            ok &= rep.passed && rep.local && rep.causal;
            worst = worst.max(rep.max_deviation);
            atoms = atoms.max(m.num_atoms());
        }
    }
    Ok((ok, format!("6 coupled models, worst deviation {worst:.1e}, up to {atoms} atoms")))
}

fn fine_equivalence(seed: u64) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for i in 0..10 {
        let mut r = rng(seed.wrapping_add(800 + i));
        let dims = DimPair::new(r.random_range(2..=3), 2)?;
        let rho = random_density(dims, r.random_range(1..=dims.total()), &mut r)?;
        let (n1, n2, l1, l2) = (r.random_range(1..=2), r.random_range(1..=2), r.random_range(1..=2), r.random_range(1..=2));
        let ctx = random_mixed_context(dims, n1, n2, l1, l2, &mut r)?;
        let m = trivial_causal_model(&rho, &ctx, DEFAULT_ATOM_BUDGET)?;
        let back = stochastic_to_deterministic(&deterministic_to_stochastic(&m), DEFAULT_ATOM_BUDGET)?;
        let (a, b) = (m.node_table(), back.node_table());
        worst = a.iter().zip(&b).fold(worst, |w, (x, y)| w.max((x - y).abs()));
    }
    let rho = werner(2)?;
    let ctx = random_context(qubits(), 2, 2, 1, 1, &mut rng(seed ^ 0x8))?;
    let q = quantum_kernel_model(&rho, &ctx)?;
    let det = stochastic_to_deterministic(&q, DEFAULT_ATOM_BUDGET)?;
    let rep = verify_model(&det, &rho, 1e-12);
    let ok = worst <= 1e-12 && rep.passed;
    Ok((
        ok,
        format!("round-trip deviation {worst:.1e} on 10 contexts; werner(2) kernel model -> {} atoms, deviation {:.1e}", det.num_atoms(), rep.max_deviation),
    ))
}

fn random_smearing(r: &mut impl Rng) -> Vec<Vec<f64>> {
    let (a, b) = (r.random_range(0.5..1.0), r.random_range(0.5..1.0));
    vec![vec![a, 1.0 - b], vec![1.0 - a, b]]
}

fn povm_extension(seed: u64) -> Result<(bool, String)> {
    let rho = werner(2)?;
    let mut ok = true;
    let mut worst = 0.0f64;
    let mut worst_kernel = 0.0f64;
    for i in 0..5 {
        let mut r = rng(seed.wrapping_add(900 + i));
        let mut dir = || [gaussian(&mut r), gaussian(&mut r), gaussian(&mut r)];
        let (n1, n2, e1, e2) = (dir(), dir(), dir(), dir());
        let o1 = Observable::new("A1", spin_along(n1)?)?;
        let o2 = Observable::new("B1", spin_along(n2)?)?;
        let ctx = Context::new(
            vec![o1.family(), Observable::new("A2", spin_along(e1)?)?.family()],
            vec![o2.family(), Observable::new("B2", spin_along(e2)?)?.family()],
            1,
            1,
        )?;
        let lhv = lchv_feasibility(&rho, &ctx, 1, DEFAULT_STRATEGY_BUDGET, ACCEPTANCE_LP_TOL)?;
        let Some(lhv1) = lhv.model else {
            ok = false;
            continue;
        };
        let p1 = smeared_povm(&o1, &random_smearing(&mut r))?;
        let p2 = smeared_povm(&o2, &random_smearing(&mut r))?;
        let s = extend_commuting_povm(&lhv1, &p1, &p2)?;
        let rep = verify_model(&s, &rho, 1e-10);
        let ke = s.kernel_error().unwrap_or(f64::INFINITY);
        ok &= rep.passed && ke <= 1e-14;
        worst = worst.max(rep.max_deviation);
        worst_kernel = worst_kernel.max(ke);
    }
    let id = CMatrix::identity(2);
    let (x, z) = (pauli('x')?, pauli('z')?);
    let effects = vec![(&id + &z).scale(0.25), (&id + &x).scale(0.25), (&id - &z).scale(0.25), (&id - &x).scale(0.25)];
    let bad = Povm::new((0..4).map(|i| OutcomeLabel::named(format!("e{i}"))).collect(), effects)?;
    let half = id.scale(0.5);
    let ctx = Context::new(vec![sigma("A1", 'z')?], vec![sigma("B1", 'z')?], 1, 1)?;
    let lhv1 = product_state_model(&half, &half, &ctx, DEFAULT_ATOM_BUDGET)?;
    let z_obs = Observable::new("z", z)?;
    let rejected = matches!(
        extend_commuting_povm(&lhv1, &bad, &smeared_povm(&z_obs, &[vec![1.0, 0.0], vec![0.0, 1.0]])?),
        Err(crate::Error::NotCommuting(_))
    );
    ok &= rejected;
    Ok((ok, format!("5 POVM pairs, worst deviation {worst:.1e}, kernel error {worst_kernel:.1e}, non-commuting rejected: {rejected}")))
}

fn collapsed_models(seed: u64) -> Result<(bool, String)> {
    let mut ok = true;
    let mut worst = 0.0f64;
    for i in 0..10 {
        let mut r = rng(seed.wrapping_add(1000 + i));
        let dims = qubits();
        let (rho, m, side, ctx) = if i % 2 == 0 {
            let rho = random_density(dims, 4, &mut r)?;
            let ctx = random_mixed_context(dims, 2, 2, 2, 2, &mut r)?;
            let m = trivial_causal_model(&rho, &ctx, DEFAULT_ATOM_BUDGET)?;
            (rho, m, Side::First, ctx)
        } else {
            let (a, b) = (random_local_state(2, &mut r), random_local_state(2, &mut r));
            let ctx = random_mixed_context(dims, 2, 2, 2, 2, &mut r)?;
            let m = product_state_model(&a, &b, &ctx, DEFAULT_ATOM_BUDGET)?;
            (product(&a, &b)?, m, Side::Second, ctx)
        };
        let obs = r.random_range(0..2);
        let fam = &ctx.observables(side)[obs];
        let outcome = (0..fam.len()).find(|&x| m.first_step_probability(side, obs, x) > 1e-6).unwrap_or(0);
        let c = collapse_model(&m, side, obs, outcome)?;
        let target = collapse_local(&rho, side, fam, outcome)?;
        let rep = verify_model(&c, &target, 1e-10);
        ok &= rep.passed;
        worst = worst.max(rep.max_deviation);
    }
    Ok((ok, format!("10 collapsed models, worst deviation {worst:.1e}")))
}

fn classification(_: u64) -> Result<(bool, String)> {
    let s = classify_evidence(&singlet())?;
    let w5 = classify_evidence(&werner(5)?)?;
    let w2 = classify_evidence(&wg(2, 0.2)?)?;
    let mut ok = s.n_evidence.bound == NBound::Exactly(1)
        && w5.n_evidence.bound == NBound::AtMost(2)
        && w2.n_evidence.bound == NBound::Infinite
        && w2.table_row.contains("W_{d=2}");
    let mut open = 0;
    let cs = [1.0 / 24.0 + BOUNDARY_GAP, 0.05, 0.06, 1.0 / 15.0];
    for c in cs {
        let rec = classify_evidence(&wg(3, c)?)?;
        if rec.n_evidence.bound == NBound::Open {
            open += 1;
        }
    }
    ok &= open == cs.len();
    let chsh = s.n_evidence.witness["chsh"].as_f64().unwrap_or(f64::NAN);
    ok &= (chsh - 2.0 * SQRT_2).abs() < 1e-6;
    Ok((
        ok,
        format!(
            "singlet {:?} [{}], werner(5) {:?} [{}], werner_gen(2,0.2) {:?} [{}], W_3 open {open}/{}",
            s.n_evidence.bound,
            s.table_row,
            w5.n_evidence.bound,
            w5.table_row,
            w2.n_evidence.bound,
            w2.table_row,
            cs.len()
        ),
    ))
}
