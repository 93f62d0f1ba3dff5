//! JSON encodings of contexts, measurement families and models, and the named
//! state and observable constructors used by the command line.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, Side};
use crate::hvmodels::{Context, DeterministicModel, HvModel, Layout, PathTree, Shape, StochasticModel};
use crate::measurement::{pauli, smeared_povm, FamilyKind, Observable, OperationFamily, OutcomeLabel, Povm};
use crate::states::{maximally_mixed, product, singlet, werner, werner_gen, DensityMatrix, WernerParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub labels: Vec<String>,
    pub operators: Vec<CMatrix>,
    pub kind: FamilyKind,
}

impl FamilyJson {
    pub fn from_family(f: &OperationFamily) -> Self {
        Self {
            name: Some(f.name.clone()),
            labels: f.labels().iter().map(|l| l.id.clone()).collect(),
            operators: f.operators().to_vec(),
            kind: f.kind,
        }
    }

    pub fn into_family(self, fallback_name: &str) -> Result<OperationFamily> {
        let name = self.name.unwrap_or_else(|| fallback_name.to_string());
        let labels = self.labels.into_iter().map(OutcomeLabel::named).collect();
        OperationFamily::new(name, self.kind, labels, self.operators)
    }
}

fn schema(what: &str, e: impl std::fmt::Display) -> Error {
    Error::InvalidInput(format!("{what}: {e}"))
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| schema(&path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| schema(&path.display().to_string(), e))
}

pub fn read_matrix(path: &Path) -> Result<CMatrix> {
    serde_json::from_value(read_json(path)?).map_err(|e| schema(&path.display().to_string(), e))
}

/// Family JSON; operators are operations `R_δ`.
pub fn family_from_json(v: &Value, fallback_name: &str) -> Result<OperationFamily> {
    let j: FamilyJson = serde_json::from_value(v.clone()).map_err(|e| schema("measurement family", e))?;
    j.into_family(fallback_name)
}

/// Povm JSON; operators are effects `M(δ)`.
pub fn povm_from_json(v: &Value) -> Result<Povm> {
    let j: FamilyJson = serde_json::from_value(v.clone()).map_err(|e| schema("POVM", e))?;
    Povm::new(j.labels.into_iter().map(OutcomeLabel::named).collect(), j.operators)
}

pub fn povm_to_json(p: &Povm) -> Value {
    json!({
        "labels": p.labels().iter().map(|l| l.id.clone()).collect::<Vec<_>>(),
        "operators": p.effects(),
        "kind": "general",
    })
}

/// Measurement given by name: `pauli:x|y|z`, `proj:<file>` (projector `P`, outcomes
/// `1` and `0`) or `smear:<obs>:<t-file>`.
pub fn named_measurement(spec: &str, name: &str, base: &Path) -> Result<Povm> {
    let fam = |spec: &str| -> Result<OperationFamily> {
        match spec.split_once(':') {
            Some(("pauli", axis)) if axis.len() == 1 => Ok(Observable::new(name, pauli(axis.chars().next().unwrap())?)?.family()),
            Some(("proj", file)) => {
                let p = read_matrix(&base.join(file))?;
                let q = &CMatrix::identity(p.rows()) - &p;
                OperationFamily::new(name, FamilyKind::Ideal, vec![OutcomeLabel::named("1"), OutcomeLabel::named("0")], vec![p, q])
            }
            _ => Err(Error::InvalidInput(format!("unknown observable {spec:?}"))),
        }
    };
    if let Some(rest) = spec.strip_prefix("smear:") {
        let (obs, tfile) = rest
            .rsplit_once(':')
            .ok_or_else(|| Error::InvalidInput(format!("expected smear:<obs>:<t-file>, got {spec:?}")))?;
        let base_fam = fam(obs)?;
        let matrix = base_fam
            .labels()
            .iter()
            .zip(base_fam.operators())
            .fold(CMatrix::zeros(base_fam.dim(), base_fam.dim()), |acc, (l, p)| {
                acc + p.scale(l.value.unwrap_or(0.0))
            });
        let t: Vec<Vec<f64>> =
            serde_json::from_value(read_json(&base.join(tfile))?).map_err(|e| schema("smearing matrix", e))?;
        return smeared_povm(&Observable::new(name, matrix)?, &t);
    }
    Ok(crate::measurement::povm_from_operations(&fam(spec)?))
}

fn side_from_json(v: &Value, prefix: &str, base: &Path) -> Result<Vec<OperationFamily>> {
    let arr = v.as_array().ok_or_else(|| schema("context", format!("{prefix} side must be an array")))?;
    arr.iter()
        .enumerate()
        .map(|(i, e)| {
            let fallback = format!("{prefix}{}", i + 1);
            let name = e.get("name").and_then(Value::as_str).unwrap_or(&fallback).to_string();
            match e.get("observable").and_then(Value::as_str) {
                Some(spec) => {
                    let povm = named_measurement(spec, &name, base)?;
                    let ideal = spec.starts_with("pauli:") || spec.starts_with("proj:");
                    if ideal {
                        let ops = povm.effects().to_vec();
                        OperationFamily::new(name, FamilyKind::Ideal, povm.labels().to_vec(), ops)
                    } else {
                        povm.sqrt_operations(name)
                    }
                }
                None => family_from_json(e, &fallback),
            }
        })
        .collect()
}

/// Context JSON `{"side1": [...], "side2": [...], "max_len1": k1, "max_len2": k2}`.
///
/// Side entries are family objects or `{"name": .., "observable": "<named>"}`;
/// relative file names resolve against `base`.
pub fn context_from_json(v: &Value, base: &Path) -> Result<Context> {
    let len = |k: &str| -> Result<usize> {
        v.get(k)
            .and_then(Value::as_u64)
            .map(|x| x as usize)
            .ok_or_else(|| schema("context", format!("missing integer {k:?}")))
    };
    let s1 = side_from_json(v.get("side1").unwrap_or(&Value::Null), "A", base)?;
    let s2 = side_from_json(v.get("side2").unwrap_or(&Value::Null), "B", base)?;
    Context::new(s1, s2, len("max_len1")?, len("max_len2")?)
}

pub fn context_to_json(ctx: &Context) -> Value {
    let side = |s: Side| ctx.observables(s).iter().map(FamilyJson::from_family).collect::<Vec<_>>();
    json!({
        "side1": side(Side::First),
        "side2": side(Side::Second),
        "max_len1": ctx.max_len(Side::First),
        "max_len2": ctx.max_len(Side::Second),
    })
}

/// `obs/outcome/.../obs` key of a slot.
fn slot_key(ctx: &Context, side: Side, tree: &PathTree, slot: usize) -> String {
    let (node, obs) = tree.slot_parts(slot);
    let mut parts = node_segments(ctx, side, tree, node);
    parts.push(ctx.observables(side)[obs].name.clone());
    parts.join("/")
}

fn node_segments(ctx: &Context, side: Side, tree: &PathTree, node: usize) -> Vec<String> {
    tree.path(node)
        .iter()
        .flat_map(|&(o, x)| {
            let f = &ctx.observables(side)[o];
            [f.name.clone(), f.labels()[x].id.clone()]
        })
        .collect()
}

/// Keys of the side-2 response entries; causal entries are prefixed by the side-1 history.
fn side2_keys(ctx: &Context, layout: &Layout) -> Vec<String> {
    let s2 = layout.tree2.num_slots();
    let local: Vec<String> = (0..s2).map(|s| slot_key(ctx, Side::Second, &layout.tree2, s)).collect();
    match layout.shape {
        Shape::LocalCausal => local,
        Shape::Causal => (0..layout.tree1.num_nodes())
            .flat_map(|n1| {
                let prefix = node_segments(ctx, Side::First, &layout.tree1, n1);
                local.iter().map(move |k| prefix.iter().cloned().chain([k.clone()]).collect::<Vec<_>>().join("/"))
            })
            .collect(),
    }
}

fn header(m: &dyn HvModel, shape: &str) -> Map<String, Value> {
    let mut o = Map::new();
    o.insert("atoms".into(), json!(m.atom_ids()));
    o.insert("weights".into(), json!(m.weights()));
    o.insert("shape".into(), json!(shape));
    o.insert("context".into(), context_to_json(m.context()));
    o
}

/// Model JSON with deterministic response trees.
pub fn deterministic_model_to_json(m: &DeterministicModel) -> Value {
    let ctx = m.context();
    let l = m.layout();
    let keys1: Vec<String> = (0..l.slots1()).map(|s| slot_key(ctx, Side::First, &l.tree1, s)).collect();
    let keys2 = side2_keys(ctx, l);
    let label = |side: Side, obs: usize, x: u16| ctx.observables(side)[obs].labels()[x as usize].id.clone();
    let responses: Vec<Value> = (0..m.num_atoms())
        .map(|a| {
            let r1: Map<String, Value> = m
                .responses1(a)
                .iter()
                .enumerate()
                .map(|(s, &x)| (keys1[s].clone(), json!(label(Side::First, l.tree1.slot_parts(s).1, x))))
                .collect();
            let r2: Map<String, Value> = m
                .responses2(a)
                .iter()
                .enumerate()
                .map(|(s, &x)| (keys2[s].clone(), json!(label(Side::Second, l.slot2_obs(s), x))))
                .collect();
            json!({"side1": r1, "side2": r2})
        })
        .collect();
    let mut o = header(m, m.shape().label());
    o.insert("responses".into(), Value::Array(responses));
    Value::Object(o)
}

/// Model JSON with kernels `{outcome: probability}` per slot.
pub fn stochastic_model_to_json(m: &StochasticModel) -> Value {
    let ctx = m.context();
    let l = m.layout();
    let keys1: Vec<String> = (0..l.slots1()).map(|s| slot_key(ctx, Side::First, &l.tree1, s)).collect();
    let keys2 = side2_keys(ctx, l);
    let dist = |side: Side, obs: usize, q: &[f64]| -> Value {
        let labels = ctx.observables(side)[obs].labels();
        Value::Object(labels.iter().zip(q).map(|(lab, p)| (lab.id.clone(), json!(p))).collect())
    };
    let kernels: Vec<Value> = (0..m.num_atoms())
        .map(|a| {
            let k1: Map<String, Value> = (0..l.slots1())
                .map(|s| (keys1[s].clone(), dist(Side::First, l.tree1.slot_parts(s).1, m.kernel1(a, s))))
                .collect();
            let k2: Map<String, Value> = (0..l.slots2())
                .map(|s| (keys2[s].clone(), dist(Side::Second, l.slot2_obs(s), m.kernel2(a, s))))
                .collect();
            json!({"side1": k1, "side2": k2})
        })
        .collect();
    let mut o = header(m, "stochastic");
    o.insert("causal_shape".into(), json!(m.shape().label()));
    o.insert("kernels".into(), Value::Array(kernels));
    Value::Object(o)
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::InvalidInput(format!("{what}: cannot parse {s:?}")))
}

/// State given by name: `werner:d`, `werner_gen:d:c`, `singlet`, `maximally_mixed:d1:d2`,
/// `product:<file>:<file>`, or a path to a DensityMatrix JSON file.
pub fn named_state(spec: &str, base: &Path) -> Result<DensityMatrix> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        ["singlet"] => Ok(singlet()),
        ["werner", d] => werner(parse_num(d, "werner dimension")?),
        ["werner_gen", d, c] => werner_gen(WernerParams::new(parse_num(d, "dimension")?, parse_num(c, "c")?)?),
        ["maximally_mixed", d1, d2] => maximally_mixed(parse_num(d1, "d1")?, parse_num(d2, "d2")?),
        ["product", f1, f2] => product(&read_matrix(&base.join(f1))?, &read_matrix(&base.join(f2))?),
        _ if spec.ends_with(".json") => {
            let p = base.join(spec);
            serde_json::from_value(read_json(&p)?).map_err(|e| schema(&p.display().to_string(), e))
        }
        _ => Err(Error::InvalidInput(format!("unknown state {spec:?}"))),
    }
}
