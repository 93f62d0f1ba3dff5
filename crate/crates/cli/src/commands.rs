//! Subcommand implementations.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use nonloc_core::acceptance::{format_line, run_all, CriterionOutcome};
use nonloc_core::feasibility::{
    chsh_maximize_angles, classify_evidence_with, lchv_feasibility, standard_rank_two, ClassifyOptions,
    FeasibilityResult,
};
use nonloc_core::hilbert::{partial_trace, psd_min_eigenvalue, CMatrix, Side};
use nonloc_core::hvmodels::{
    couple_lchv_d2, extend_commuting_povm, quantum_kernel_model, separable_model, stochastic_to_deterministic,
    trivial_causal_model, verify_model, Context, DeterministicModel, HvModel, PureStateFamily, VerificationReport,
};
use nonloc_core::io::{
    context_from_json, deterministic_model_to_json, named_state, povm_from_json, povm_to_json, read_json,
    stochastic_model_to_json,
};
use nonloc_core::measurement::{commuting_decompose, Decomposition, FamilyKind, OperationFamily, OutcomeLabel, Povm};
use nonloc_core::states::{
    collapse_separable_bound, collapsed_c_prime, entanglement_threshold, flip_expectation, lhv1_bound,
    normalization_bound, ppt_entangled, ppt_min_eigenvalue, werner, werner_gen, DensityMatrix, WernerParams,
};
use nonloc_core::{Error, Result};

use crate::report::Report;

/// Module defaults overridden by global flags.
#[derive(Debug, Clone, Copy)]
pub struct Globals {
    pub tol: Option<f64>,
    pub seed: u64,
    pub atom_budget: usize,
    pub strategy_budget: usize,
}

fn parent(p: &Path) -> PathBuf {
    p.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn cwd() -> PathBuf {
    PathBuf::from(".")
}

fn state_summary(rho: &DensityMatrix) -> Value {
    let d = rho.dims();
    json!({"dims": [d.d1, d.d2], "ppt_min_eigenvalue": ppt_min_eigenvalue(rho), "ppt_entangled": ppt_entangled(rho)})
}

pub fn werner_cmd(d: usize, c: Option<f64>, g: &Globals) -> Result<Report> {
    let (rho, c) = match c {
        Some(c) => (werner_gen(WernerParams::new(d, c)?)?, c),
        None => (werner(d)?, lhv1_bound(d)),
    };
    let p = WernerParams::new(d, c)?;
    let results = json!({
        "state": rho,
        "c": c,
        "flip_expectation": flip_expectation(p),
        "entangled": flip_expectation(p) < 0.0,
        "entanglement_threshold": entanglement_threshold(d),
        "ppt_min_eigenvalue": ppt_min_eigenvalue(&rho),
        "ppt_entangled": ppt_entangled(&rho),
        "min_eigenvalue": psd_min_eigenvalue(rho.matrix())?,
        "within_lhv1_bound": c <= lhv1_bound(d),
    });
    Ok(Report { command: "werner", inputs: json!({"d": d, "c": c}), results, tolerances: json!({}), seed: g.seed })
}

pub fn thresholds_cmd(d: usize, g: &Globals) -> Result<Report> {
    WernerParams::new(d, 0.0)?;
    let mut samples = Vec::new();
    if d >= 3 {
        for i in 0..=4 {
            let c = collapse_separable_bound(d) * i as f64 / 4.0;
            samples.push(json!({"c": c, "c_prime": collapsed_c_prime(WernerParams::new(d, c)?)?}));
        }
    }
    let results = json!({
        "normalization": normalization_bound(d),
        "entanglement": entanglement_threshold(d),
        "lhv1": lhv1_bound(d),
        "collapse_separable": collapse_separable_bound(d),
        "c_prime_samples": samples,
    });
    Ok(Report { command: "thresholds", inputs: json!({"d": d}), results, tolerances: json!({}), seed: g.seed })
}

pub fn popescu_cmd(d: usize, g: &Globals) -> Result<Report> {
    let margin = g.tol.unwrap_or(1e-6);
    let t = standard_rank_two(d);
    let opt = chsh_maximize_angles(&werner(d)?, &t, &t, g.seed)?;
    let c_prime = if d >= 3 { Some(collapsed_c_prime(WernerParams::original(d)?)?) } else { None };
    let results = json!({
        "chsh": opt.value,
        "violation": opt.value > 2.0 + margin,
        "angles": opt.angles,
        "post_selection_probability": opt.post_selection_probability,
        "c_prime": c_prime,
        "projector": "span of the first two basis vectors on each side",
    });
    Ok(Report {
        command: "popescu",
        inputs: json!({"d": d}),
        results,
        tolerances: json!({"violation_margin": margin}),
        seed: g.seed,
    })
}

fn load_context(path: &Path) -> Result<Context> {
    context_from_json(&read_json(path)?, &parent(path))
}

/// JSON for a feasibility result; `LpNumericalFailure` maps to `indeterminate`.
pub fn feasibility_json(r: &Result<FeasibilityResult>) -> Value {
    match r {
        Ok(r) => json!({
            "status": r.status,
            "k": r.k,
            "certificate": r.certificate,
            "max_residual": r.max_residual,
            "phase1_objective": r.phase1_objective,
            "witness": r.witness,
            "verification": r.verification,
            "strategies_per_side": [r.strategies_per_side.0, r.strategies_per_side.1],
        }),
        Err(Error::LpNumericalFailure { residual }) => json!({"status": "indeterminate", "max_residual": residual}),
        Err(e) => json!({"status": "error", "message": e.to_string()}),
    }
}

pub fn lhv_check_cmd(state: &str, context: &Path, k: usize, g: &Globals) -> Result<(Report, bool)> {
    let lp_tol = g.tol.unwrap_or(nonloc_core::feasibility::LP_TOL);
    let rho = named_state(state, &cwd())?;
    let ctx = load_context(context)?;
    let r = lchv_feasibility(&rho, &ctx, k, g.strategy_budget, lp_tol);
    let indeterminate = matches!(r, Err(Error::LpNumericalFailure { .. }));
    if let Err(e) = &r {
        if !indeterminate {
            return Err(e.clone());
        }
    }
    let report = Report {
        command: "lhv-check",
        inputs: json!({"state": state, "context": context.display().to_string(), "k": k, "strategy_budget": g.strategy_budget}),
        results: feasibility_json(&r),
        tolerances: json!({"lp_tol": lp_tol, "model_verification": 1e-8}),
        seed: g.seed,
    };
    Ok((report, indeterminate))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelKind {
    Trivial,
    Mix,
    CoupleD2,
    Fine,
}

impl ModelKind {
    fn label(self) -> &'static str {
        match self {
            ModelKind::Trivial => "trivial",
            ModelKind::Mix => "mix",
            ModelKind::CoupleD2 => "couple-d2",
            ModelKind::Fine => "fine",
        }
    }
}

/// Components `[{"weight": w, "rho1": M, "rho2": M}, ...]`, or the state's own
/// marginals when it is a product.
fn separable_components(rho: &DensityMatrix, components: Option<&Path>) -> Result<Vec<(f64, CMatrix, CMatrix)>> {
    if let Some(path) = components {
        let v = read_json(path)?;
        let arr = v.as_array().ok_or_else(|| Error::InvalidInput("components file must hold an array".into()))?;
        return arr
            .iter()
            .map(|c| {
                let w = c.get("weight").and_then(Value::as_f64);
                let m = |k: &str| -> Result<CMatrix> {
                    serde_json::from_value(c.get(k).cloned().unwrap_or(Value::Null))
                        .map_err(|e| Error::InvalidInput(format!("component {k}: {e}")))
                };
                Ok((w.ok_or_else(|| Error::InvalidInput("component without weight".into()))?, m("rho1")?, m("rho2")?))
            })
            .collect();
    }
    let r1 = partial_trace(rho.matrix(), rho.dims(), Side::First)?;
    let r2 = partial_trace(rho.matrix(), rho.dims(), Side::Second)?;
    let dev = nonloc_core::hilbert::kron(&r1, &r2).max_abs_diff(rho.matrix());
    if dev > 1e-10 {
        return Err(Error::InvalidInput(format!(
            "state is not a product (deviation {dev:.2e}); pass --components with a separable decomposition"
        )));
    }
    Ok(vec![(1.0, r1, r2)])
}

pub struct ModelOutput {
    pub model: Value,
    pub verification: VerificationReport,
    pub notes: Vec<String>,
}

fn finish(m: &DeterministicModel, rho: &DensityMatrix, tol: f64, notes: Vec<String>) -> ModelOutput {
    ModelOutput { model: deterministic_model_to_json(m), verification: verify_model(m, rho, tol), notes }
}

pub fn build_model(rho: &DensityMatrix, ctx: &Context, kind: ModelKind, components: Option<&Path>, g: &Globals) -> Result<ModelOutput> {
    let tol = g.tol.unwrap_or(nonloc_core::hvmodels::DEFAULT_VERIFY_TOL);
    match kind {
        ModelKind::Trivial => Ok(finish(&trivial_causal_model(rho, ctx, g.atom_budget)?, rho, tol, vec![])),
        ModelKind::Mix => {
            let comps = separable_components(rho, components)?;
            Ok(finish(&separable_model(&comps, ctx, g.atom_budget)?, rho, tol, vec![]))
        }
        ModelKind::CoupleD2 => {
            let lhv = lchv_feasibility(rho, ctx, 1, g.strategy_budget, nonloc_core::feasibility::LP_TOL)?;
            let lhv1 = lhv.model.ok_or_else(|| {
                Error::ModelMismatch("no local model for single measurements exists on this context".into())
            })?;
            let f1 = PureStateFamily::build(ctx, Side::First, g.atom_budget)?;
            let f2 = PureStateFamily::build(ctx, Side::Second, g.atom_budget)?;
            let notes = vec![format!("single-measurement model from LP with {} atoms", lhv1.num_atoms())];
            Ok(finish(&couple_lchv_d2(&lhv1, &f1, &f2, g.atom_budget)?, rho, tol, notes))
        }
        ModelKind::Fine => {
            let q = quantum_kernel_model(rho, ctx)?;
            let notes = vec![format!("stochastic model with {} atom(s) expanded to deterministic atoms", q.num_atoms())];
            Ok(finish(&stochastic_to_deterministic(&q, g.atom_budget)?, rho, tol, notes))
        }
    }
}

pub fn build_model_cmd(
    state: &str,
    context: &Path,
    kind: ModelKind,
    components: Option<&Path>,
    out: Option<&Path>,
    g: &Globals,
) -> Result<Report> {
    let rho = named_state(state, &cwd())?;
    let ctx = load_context(context)?;
    let o = build_model(&rho, &ctx, kind, components, g)?;
    let mut results = json!({"verification": o.verification, "notes": o.notes});
    match out {
        Some(p) => {
            std::fs::write(p, serde_json::to_string_pretty(&o.model).expect("model JSON serializes"))
                .map_err(|e| Error::InvalidInput(format!("{}: {e}", p.display())))?;
            results["model_file"] = json!(p.display().to_string());
        }
        None => results["model"] = o.model,
    }
    Ok(Report {
        command: "build-model",
        inputs: json!({
            "state": state,
            "context": context.display().to_string(),
            "kind": kind.label(),
            "components": components.map(|p| p.display().to_string()),
            "atom_budget": g.atom_budget,
        }),
        results,
        tolerances: json!({"verify": g.tol.unwrap_or(nonloc_core::hvmodels::DEFAULT_VERIFY_TOL)}),
        seed: g.seed,
    })
}

/// Ideal rank-one family diagonalizing a commuting POVM.
fn basis_family(povm: &Povm, name: &str) -> Result<OperationFamily> {
    match commuting_decompose(povm) {
        Decomposition::Commuting(dec) => {
            let labels = (0..dec.projectors.len()).map(|j| OutcomeLabel::named(format!("b{j}"))).collect();
            OperationFamily::new(name, FamilyKind::Ideal, labels, dec.projectors)
        }
        Decomposition::NotCommuting { max_commutator } => Err(Error::NotCommuting(max_commutator)),
    }
}

pub fn extend_povm_cmd(state: &str, povm1: &Path, povm2: &Path, context: Option<&Path>, g: &Globals) -> Result<Report> {
    let tol = g.tol.unwrap_or(nonloc_core::hvmodels::DEFAULT_VERIFY_TOL);
    let rho = named_state(state, &cwd())?;
    let p1 = povm_from_json(&read_json(povm1)?)?;
    let p2 = povm_from_json(&read_json(povm2)?)?;
    let ctx = match context {
        Some(p) => load_context(p)?,
        None => Context::new(vec![basis_family(&p1, "basis1")?], vec![basis_family(&p2, "basis2")?], 1, 1)?,
    };
    let lhv = lchv_feasibility(&rho, &ctx, 1, g.strategy_budget, nonloc_core::feasibility::LP_TOL)?;
    let lhv1 = lhv
        .model
        .ok_or_else(|| Error::ModelMismatch("no local model for single measurements exists on this context".into()))?;
    let s = extend_commuting_povm(&lhv1, &p1, &p2)?;
    let rep = verify_model(&s, &rho, tol);
    let results = json!({
        "verification": rep,
        "kernel_normalization_error": s.kernel_error(),
        "model": stochastic_model_to_json(&s),
        "povm1": povm_to_json(&p1),
        "povm2": povm_to_json(&p2),
        "notes": [format!("single-measurement model from LP with {} atoms", lhv1.num_atoms())],
    });
    Ok(Report {
        command: "extend-povm",
        inputs: json!({
            "state": state,
            "povm1": povm1.display().to_string(),
            "povm2": povm2.display().to_string(),
            "context": context.map(|p| p.display().to_string()),
        }),
        results,
        tolerances: json!({"verify": tol}),
        seed: g.seed,
    })
}

pub fn classify_cmd(state: &str, g: &Globals) -> Result<Report> {
    let rho = named_state(state, &cwd())?;
    let opts = ClassifyOptions {
        seed: g.seed,
        lp_tol: g.tol.unwrap_or(nonloc_core::feasibility::LP_TOL),
        atom_budget: g.atom_budget,
        strategy_budget: g.strategy_budget,
    };
    let rec = classify_evidence_with(&rho, &opts)?;
    let results = json!({"record": rec, "state_summary": state_summary(&rho)});
    Ok(Report {
        command: "classify",
        inputs: json!({"state": state}),
        results,
        tolerances: json!({"lp_tol": opts.lp_tol}),
        seed: g.seed,
    })
}

pub fn reproduce_cmd(g: &Globals) -> (Report, Vec<CriterionOutcome>) {
    let outcomes = run_all(g.seed);
    let passed = outcomes.iter().filter(|o| o.passed).count();
    let criteria: Vec<Value> = outcomes
        .iter()
        .map(|o| json!({"number": o.number, "name": o.name, "passed": o.passed, "detail": o.detail}))
        .collect();
    let results = json!({
        "criteria": criteria,
        "passed": passed,
        "total": outcomes.len(),
    });
    let report = Report {
        command: "reproduce",
        inputs: json!({}),
        results,
        tolerances: json!({"lp_tol": nonloc_core::acceptance::ACCEPTANCE_LP_TOL}),
        seed: g.seed,
    };
    (report, outcomes)
}

pub fn table(outcomes: &[CriterionOutcome]) -> String {
    let mut s: String = outcomes.iter().map(|o| format_line(o) + "\n").collect();
    let passed = outcomes.iter().filter(|o| o.passed).count();
    s.push_str(&format!("{passed} of {} criteria passed\n", outcomes.len()));
    s
}
