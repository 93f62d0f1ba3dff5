//! Ideal and generalized measurements and exact sequence probabilities.
//!
//! An [`OperationFamily`] is the list of operations `R_δ` of one measurement; ideal
//! measurements are the special case where every `R_δ` is the eigenprojector of an
//! [`Observable`]. A [`MeasurementSequence`] is a time-ordered list of steps, and
//! [`sequence_distribution`] evaluates `tr(Rⁿ…R¹ ρ R¹†…Rⁿ†)` for every outcome tuple.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{kron, spectral_decompose, CMatrix, DimPair, Side, SpectralDecomposition};
use crate::states::DensityMatrix;

/// Entry tolerance for effect and completeness checks.
pub const MEASUREMENT_TOL: f64 = 1e-10;
/// Commutators accumulate two products of rounding error.
pub const COMMUTATOR_TOL: f64 = 1e-9;
/// Operators below this entry size are treated as zero (outside the generalized spectrum).
const ZERO_OPERATOR_TOL: f64 = 1e-14;

/// Opaque outcome identifier, optionally carrying the real value it stands for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeLabel {
    pub id: String,
    pub value: Option<f64>,
}

impl OutcomeLabel {
    pub fn named(id: impl Into<String>) -> Self {
        let id = id.into();
        let value = id.parse::<f64>().ok();
        Self { id, value }
    }

    /// Label for a spectral value, e.g. `+1`, `-1`, `0.5`.
    pub fn from_value(v: f64) -> Self {
        let r = (v * 1e9).round() / 1e9;
        let r = if r == 0.0 { 0.0 } else { r };
        let id = if r > 0.0 { format!("+{r}") } else { format!("{r}") };
        Self { id, value: Some(v) }
    }
}

impl fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

/// Whether a family came from an ideal (projective) measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Ideal,
    General,
}

/// Operations `R_δ` of one (possibly generalized) measurement.
#[derive(Debug, Clone)]
pub struct OperationFamily {
    pub name: String,
    pub kind: FamilyKind,
    labels: Vec<OutcomeLabel>,
    operators: Vec<CMatrix>,
}

impl OperationFamily {
    /// Validates `Σ R_δ† R_δ = I`. Zero operators are dropped, so every stored label
    /// belongs to the generalized spectrum.
    pub fn new(
        name: impl Into<String>,
        kind: FamilyKind,
        labels: Vec<OutcomeLabel>,
        operators: Vec<CMatrix>,
    ) -> Result<Self> {
        let name = name.into();
        if labels.len() != operators.len() {
            return Err(Error::InvalidMeasurement(format!(
                "{name}: {} labels for {} operators",
                labels.len(),
                operators.len()
            )));
        }
        let n = operators.first().map_or(0, CMatrix::rows);
        if n == 0 || operators.iter().any(|r| r.rows() != n || r.cols() != n) {
            return Err(Error::InvalidMeasurement(format!(
                "{name}: operators must be non-empty and share one square shape"
            )));
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].iter().any(|b| b.id == a.id) {
                return Err(Error::InvalidMeasurement(format!("{name}: duplicate label {a}")));
            }
        }
        let (labels, operators): (Vec<_>, Vec<_>) = labels
            .into_iter()
            .zip(operators)
            .filter(|(_, r)| r.max_abs() > ZERO_OPERATOR_TOL)
            .unzip();
        let total = operators
            .iter()
            .fold(CMatrix::zeros(n, n), |acc, r| acc + r.adjoint() * r);
        let dev = total.max_abs_diff(&CMatrix::identity(n));
        if dev >= MEASUREMENT_TOL {
            return Err(Error::InvalidMeasurement(format!(
                "{name}: sum of R^dagger R deviates from identity by {dev:e}"
            )));
        }
        if kind == FamilyKind::Ideal {
            for r in &operators {
                let idem = (r * r).max_abs_diff(r).max(r.hermitian_deviation());
                if idem >= MEASUREMENT_TOL {
                    return Err(Error::InvalidMeasurement(format!(
                        "{name}: ideal family operator is not an orthogonal projector"
                    )));
                }
            }
        }
        Ok(Self { name, kind, labels, operators })
    }

    pub fn labels(&self) -> &[OutcomeLabel] {
        &self.labels
    }

    pub fn operators(&self) -> &[CMatrix] {
        &self.operators
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.operators[0].rows()
    }

    pub fn label_index(&self, id: &str) -> Option<usize> {
        self.labels.iter().position(|l| l.id == id)
    }

    /// Lifts the family to the bipartite space as `R ⊗ I` or `I ⊗ R`.
    pub fn embed(&self, side: Side, dims: DimPair) -> Result<OperationFamily> {
        let operators = self
            .operators
            .iter()
            .map(|r| embed_local(r, side, dims))
            .collect::<Result<Vec<_>>>()?;
        Ok(OperationFamily {
            name: self.name.clone(),
            kind: self.kind,
            labels: self.labels.clone(),
            operators,
        })
    }

    /// True when every operator is a rank-one orthogonal projector.
    pub fn is_rank_one_projective(&self) -> bool {
        self.kind == FamilyKind::Ideal
            && self
                .operators
                .iter()
                .all(|p| (p.trace().re - 1.0).abs() < 1e-9 && (p * p).max_abs_diff(p) < 1e-9)
    }
}

/// Self-adjoint operator with its spectral data.
#[derive(Debug, Clone)]
pub struct Observable {
    pub label: String,
    pub matrix: CMatrix,
    pub spectral: SpectralDecomposition,
}

impl Observable {
    pub fn new(label: impl Into<String>, matrix: CMatrix) -> Result<Self> {
        let spectral = spectral_decompose(&matrix)?;
        Ok(Self { label: label.into(), matrix, spectral })
    }

    /// Ideal measurement: `R_o = P_o` for each eigenvalue `o`.
    pub fn family(&self) -> OperationFamily {
        let labels = self.spectral.pairs.iter().map(|p| OutcomeLabel::from_value(p.value)).collect();
        let ops = self.spectral.pairs.iter().map(|p| p.projector.clone()).collect();
        OperationFamily::new(self.label.clone(), FamilyKind::Ideal, labels, ops)
            .expect("spectral projectors form a complete projective family")
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.spectral.values()
    }
}

/// Pauli matrix by axis name.
pub fn pauli(axis: char) -> Result<CMatrix> {
    use crate::hilbert::{c, cr};
    let e = |v: [Complex64; 4]| CMatrix::from_row_major(2, 2, &v);
    match axis {
        'x' => e([cr(0.0), cr(1.0), cr(1.0), cr(0.0)]),
        'y' => e([cr(0.0), c(0.0, -1.0), c(0.0, 1.0), cr(0.0)]),
        'z' => e([cr(1.0), cr(0.0), cr(0.0), cr(-1.0)]),
        _ => Err(Error::InvalidInput(format!("unknown Pauli axis {axis:?}"))),
    }
}

/// Qubit spin observable along the Bloch direction `n` (normalized internally).
pub fn spin_along(n: [f64; 3]) -> Result<CMatrix> {
    let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if norm < 1e-12 {
        return Err(Error::InvalidInput("zero Bloch vector".into()));
    }
    let m = pauli('x')?.scale(n[0] / norm) + pauli('y')?.scale(n[1] / norm) + pauli('z')?.scale(n[2] / norm);
    Ok(m)
}

/// Positive operator valued measure: labelled effects summing to the identity.
#[derive(Debug, Clone)]
pub struct Povm {
    labels: Vec<OutcomeLabel>,
    effects: Vec<CMatrix>,
}

impl Povm {
    pub fn new(labels: Vec<OutcomeLabel>, effects: Vec<CMatrix>) -> Result<Self> {
        if labels.len() != effects.len() || effects.is_empty() {
            return Err(Error::InvalidMeasurement("labels and effects must pair up".into()));
        }
        let n = effects[0].rows();
        for (l, e) in labels.iter().zip(&effects) {
            if e.rows() != n || !e.is_square() {
                return Err(Error::InvalidMeasurement("effects must share one square shape".into()));
            }
            let dev = e.hermitian_deviation();
            if dev >= MEASUREMENT_TOL {
                return Err(Error::InvalidMeasurement(format!("effect {l} not Hermitian ({dev:e})")));
            }
            let min = crate::hilbert::psd_min_eigenvalue(e)?;
            if min < -MEASUREMENT_TOL {
                return Err(Error::InvalidMeasurement(format!(
                    "effect {l} not positive (min eigenvalue {min:e})"
                )));
            }
        }
        let total = effects.iter().fold(CMatrix::zeros(n, n), |acc, e| acc + e.clone());
        let dev = total.max_abs_diff(&CMatrix::identity(n));
        if dev >= MEASUREMENT_TOL {
            return Err(Error::InvalidMeasurement(format!(
                "effects sum to identity only within {dev:e}"
            )));
        }
        Ok(Self { labels, effects })
    }

    pub fn labels(&self) -> &[OutcomeLabel] {
        &self.labels
    }

    pub fn effects(&self) -> &[CMatrix] {
        &self.effects
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.effects[0].rows()
    }

    /// Operation family with the square-root operations `R_δ = M(δ)^{1/2}`.
    pub fn sqrt_operations(&self, name: impl Into<String>) -> Result<OperationFamily> {
        let ops = self
            .effects
            .iter()
            .map(|e| {
                let spec = spectral_decompose(e)?;
                let n = e.rows();
                Ok(spec.pairs.iter().fold(CMatrix::zeros(n, n), |acc, p| {
                    acc + p.projector.scale(p.value.max(0.0).sqrt())
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        OperationFamily::new(name, FamilyKind::General, self.labels.clone(), ops)
    }
}

/// `M(δ) = R_δ† R_δ`.
pub fn povm_from_operations(fam: &OperationFamily) -> Povm {
    let effects = fam.operators().iter().map(|r| r.adjoint() * r).collect();
    Povm { labels: fam.labels().to_vec(), effects }
}

/// Joint spectral data of a commuting POVM: `M(α) = Σ_j m_α^j P_j`.
#[derive(Debug, Clone)]
pub struct CommutingDecomposition {
    /// Rank-one orthogonal projectors, independent of the outcome.
    pub projectors: Vec<CMatrix>,
    /// `coefficients[α][j] = m_α^j`.
    pub coefficients: Vec<Vec<f64>>,
}

/// Outcome of [`commuting_decompose`].
#[derive(Debug, Clone)]
pub enum Decomposition {
    Commuting(CommutingDecomposition),
    NotCommuting { max_commutator: f64 },
}

/// Jointly diagonalizes a commuting POVM.
///
/// Diagonalizes `Σ_i w_i M_i` with generic weights `w_i = π^{-i}` and reads the
/// coefficient table off the resulting eigenbasis.
pub fn commuting_decompose(povm: &Povm) -> Decomposition {
    let effects = povm.effects();
    let mut worst: f64 = 0.0;
    for i in 0..effects.len() {
        for j in i + 1..effects.len() {
            worst = worst.max(effects[i].commutator(&effects[j]).max_abs());
        }
    }
    if worst >= COMMUTATOR_TOL {
        return Decomposition::NotCommuting { max_commutator: worst };
    }
    let n = povm.dim();
    let generic = effects.iter().enumerate().fold(CMatrix::zeros(n, n), |acc, (i, e)| {
        acc + e.scale(std::f64::consts::PI.powi(-(i as i32 + 1)))
    });
    let (_, vectors) = crate::hilbert::eigh(&generic).expect("weighted sum of effects is Hermitian");
    let projectors: Vec<CMatrix> = vectors.iter().map(|v| CMatrix::projector_onto(v)).collect();
    let coefficients = effects
        .iter()
        .map(|e| {
            projectors
                .iter()
                .map(|p| e.trace_product_re(p).clamp(0.0, 1.0))
                .collect()
        })
        .collect();
    Decomposition::Commuting(CommutingDecomposition { projectors, coefficients })
}

impl CommutingDecomposition {
    pub fn recombine(&self) -> Vec<CMatrix> {
        let n = self.projectors.first().map_or(0, CMatrix::rows);
        self.coefficients
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&self.projectors)
                    .fold(CMatrix::zeros(n, n), |acc, (m, p)| acc + p.scale(*m))
            })
            .collect()
    }
}

/// Smeared-out projections `M(o_i) = Σ_j t_ij P_{o_j}`; columns of `t` must be distributions.
pub fn smeared_povm(obs: &Observable, t: &[Vec<f64>]) -> Result<Povm> {
    let k = obs.spectral.pairs.len();
    if t.len() != k || t.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidInput(format!(
            "smearing matrix must be {k}x{k} to match the spectrum of {}",
            obs.label
        )));
    }
    for j in 0..k {
        let col: f64 = t.iter().map(|r| r[j]).sum();
        if (col - 1.0).abs() > 1e-12 || t.iter().any(|r| r[j] < 0.0) {
            return Err(Error::InvalidInput(format!(
                "smearing matrix column {j} is not a probability distribution"
            )));
        }
    }
    let n = obs.matrix.rows();
    let effects = t
        .iter()
        .map(|row| {
            row.iter()
                .zip(&obs.spectral.pairs)
                .fold(CMatrix::zeros(n, n), |acc, (w, p)| acc + p.projector.scale(*w))
        })
        .collect();
    let labels = obs.spectral.pairs.iter().map(|p| OutcomeLabel::from_value(p.value)).collect();
    Povm::new(labels, effects)
}

/// `A ⊗ I` for side one or `I ⊗ B` for side two.
pub fn embed_local(op: &CMatrix, side: Side, dims: DimPair) -> Result<CMatrix> {
    let d = dims.of(side);
    if op.rows() != d || op.cols() != d {
        return Err(Error::DimensionMismatch(format!(
            "side {} operator must be {d}x{d}, got {}x{}",
            side.index() + 1,
            op.rows(),
            op.cols()
        )));
    }
    Ok(match side {
        Side::First => kron(op, &CMatrix::identity(dims.d2)),
        Side::Second => kron(&CMatrix::identity(dims.d1), op),
    })
}

/// Where a measurement step acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepSite {
    Local(Side),
    Global,
}

#[derive(Debug, Clone)]
pub struct MeasurementStep {
    pub site: StepSite,
    pub payload: OperationFamily,
    pub time: u64,
}

/// Time-ordered list of measurement steps.
#[derive(Debug, Clone, Default)]
pub struct MeasurementSequence {
    steps: Vec<MeasurementStep>,
}

impl MeasurementSequence {
    /// Times must increase; equal consecutive times need commuting payloads.
    pub fn new(steps: Vec<MeasurementStep>) -> Result<Self> {
        for w in steps.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if b.time < a.time {
                return Err(Error::InvalidInput("measurement times must not decrease".into()));
            }
            if b.time == a.time && !payloads_commute(a, b) {
                return Err(Error::InvalidInput(format!(
                    "steps {} and {} share a time but do not commute",
                    a.payload.name, b.payload.name
                )));
            }
        }
        Ok(Self { steps })
    }

    /// Steps at successive integer times.
    pub fn ordered(steps: impl IntoIterator<Item = (StepSite, OperationFamily)>) -> Result<Self> {
        Self::new(
            steps
                .into_iter()
                .enumerate()
                .map(|(i, (site, payload))| MeasurementStep { site, payload, time: i as u64 })
                .collect(),
        )
    }

    pub fn steps(&self) -> &[MeasurementStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn payloads_commute(a: &MeasurementStep, b: &MeasurementStep) -> bool {
    if let (StepSite::Local(x), StepSite::Local(y)) = (a.site, b.site) {
        if x != y {
            return true;
        }
    }
    if a.site != b.site {
        // a global step next to a local one: compare only when shapes agree
        return false;
    }
    a.payload.operators().iter().all(|r| {
        b.payload
            .operators()
            .iter()
            .all(|s| r.commutator(s).max_abs() < COMMUTATOR_TOL && r.commutator(&s.adjoint()).max_abs() < COMMUTATOR_TOL)
    })
}

/// Probability of one outcome tuple of a sequence.
#[derive(Debug, Clone)]
pub struct OutcomeProbability {
    pub outcomes: Vec<usize>,
    pub labels: Vec<OutcomeLabel>,
    pub probability: f64,
}

/// Table over all outcome tuples of a sequence, in lexicographic outcome order.
#[derive(Debug, Clone)]
pub struct SequenceTable {
    pub entries: Vec<OutcomeProbability>,
}

impl SequenceTable {
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.probability).sum()
    }

    pub fn probability(&self, outcomes: &[usize]) -> Option<f64> {
        self.entries.iter().find(|e| e.outcomes == outcomes).map(|e| e.probability)
    }
}

/// Exact sequence probabilities `tr(Rⁿ_{δn} ⋯ R¹_{δ1} ρ R¹†_{δ1} ⋯ Rⁿ†_{δn})`.
pub fn sequence_distribution(rho: &DensityMatrix, seq: &MeasurementSequence) -> Result<SequenceTable> {
    let dims = rho.dims();
    let lifted = seq
        .steps()
        .iter()
        .map(|s| match s.site {
            StepSite::Local(side) => s.payload.embed(side, dims),
            StepSite::Global => Ok(s.payload.clone()),
        })
        .collect::<Result<Vec<_>>>()?;
    distribution_of_families(rho.matrix(), &lifted)
}

/// Same as [`sequence_distribution`] for a bare state matrix and full-space operations.
pub fn sequence_distribution_matrix(rho: &CMatrix, seq: &MeasurementSequence) -> Result<SequenceTable> {
    if seq.steps().iter().any(|s| s.site != StepSite::Global) {
        return Err(Error::InvalidInput("bare-matrix sequences take global steps only".into()));
    }
    let fams: Vec<OperationFamily> = seq.steps().iter().map(|s| s.payload.clone()).collect();
    distribution_of_families(rho, &fams)
}

fn distribution_of_families(rho: &CMatrix, fams: &[OperationFamily]) -> Result<SequenceTable> {
    let n = rho.rows();
    if let Some(f) = fams.iter().find(|f| f.dim() != n) {
        return Err(Error::DimensionMismatch(format!(
            "operation family {} acts on dimension {}, state has {n}",
            f.name,
            f.dim()
        )));
    }
    let mut entries = Vec::new();
    let mut path = Vec::with_capacity(fams.len());
    descend(rho, fams, &mut path, &mut entries);
    Ok(SequenceTable { entries })
}

fn descend(state: &CMatrix, fams: &[OperationFamily], path: &mut Vec<usize>, out: &mut Vec<OutcomeProbability>) {
    let depth = path.len();
    if depth == fams.len() {
        let labels = path.iter().zip(fams).map(|(&i, f)| f.labels()[i].clone()).collect();
        out.push(OutcomeProbability {
            outcomes: path.clone(),
            labels,
            probability: state.trace().re,
        });
        return;
    }
    for (i, r) in fams[depth].operators().iter().enumerate() {
        let next = state.sandwich(r);
        path.push(i);
        descend(&next, fams, path, out);
        path.pop();
    }
}
