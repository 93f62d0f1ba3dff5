//! Density matrices, the Werner families, entanglement tests and collapse.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    compress_bipartite, cr, flip, kron, partial_transpose_second, projector_range_basis,
    psd_min_eigenvalue, CMatrix, DimPair, Side, HERMITIAN_TOL,
};
use crate::measurement::OperationFamily;

/// Probabilities at or below this are not conditioned on.
pub const PROB_FLOOR: f64 = 1e-12;
const STATE_TOL: f64 = 1e-10;

/// Hermitian, unit-trace, positive semidefinite operator on a bipartite space.
#[derive(Debug, Clone, Serialize)]
pub struct DensityMatrix {
    dims: DimPair,
    matrix: CMatrix,
}

#[derive(Deserialize)]
struct DensityJson {
    dims: [usize; 2],
    matrix: CMatrix,
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = DensityJson::deserialize(d)?;
        let dims = DimPair::new(j.dims[0], j.dims[1]).map_err(D::Error::custom)?;
        make_density(j.matrix, dims).map_err(D::Error::custom)
    }
}

impl DensityMatrix {
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dims(&self) -> DimPair {
        self.dims
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// Expectation `tr(ρ A)` of a full-space operator.
    pub fn expectation(&self, op: &CMatrix) -> f64 {
        self.matrix.trace_product_re(op)
    }
}

/// Validates and wraps a state matrix.
pub fn make_density(matrix: CMatrix, dims: DimPair) -> Result<DensityMatrix> {
    let n = dims.total();
    if matrix.rows() != n || matrix.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "dims ({}, {}) need a {n}x{n} matrix, got {}x{}",
            dims.d1,
            dims.d2,
            matrix.rows(),
            matrix.cols()
        )));
    }
    let dev = matrix.hermitian_deviation();
    if dev >= HERMITIAN_TOL {
        return Err(Error::NotHermitian(dev));
    }
    let tr = matrix.trace();
    if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
        return Err(Error::TraceNotOne(tr.re));
    }
    let min = psd_min_eigenvalue(&matrix)?;
    if min < -STATE_TOL {
        return Err(Error::NotPositive(min));
    }
    Ok(DensityMatrix { dims, matrix })
}

/// Parameters of the generalized Werner family `(1/d)(1/d + c) I - c F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WernerParams {
    pub d: usize,
    pub c: f64,
}

impl WernerParams {
    pub fn new(d: usize, c: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::ParameterOutOfRange(format!("dimension {d} < 2")));
        }
        let bound = normalization_bound(d);
        if !(0.0..=bound * (1.0 + 1e-12)).contains(&c) {
            return Err(Error::ParameterOutOfRange(format!(
                "c = {c} outside [0, {bound}] for d = {d}"
            )));
        }
        Ok(Self { d, c })
    }

    /// The original Werner state, `c = 1/d²`.
    pub fn original(d: usize) -> Result<Self> {
        Self::new(d, 1.0 / (d * d) as f64)
    }
}

/// Largest `c` for which the generalized Werner matrix is a state: `1/(d²-d)`.
pub fn normalization_bound(d: usize) -> f64 {
    let d = d as f64;
    1.0 / (d * d - d)
}

/// Entangled iff `c` exceeds `1/(d(d²-1))`.
pub fn entanglement_threshold(d: usize) -> f64 {
    let d = d as f64;
    1.0 / (d * (d * d - 1.0))
}

/// Mixtures of the original Werner state with white noise: `c ≤ 1/d²`.
pub fn lhv1_bound(d: usize) -> f64 {
    1.0 / (d * d) as f64
}

/// Above the entanglement threshold and up to `1/(d(d²-1) - d²)`, one local
/// rank-`(d-1)` measurement leaves a separable state.
pub fn collapse_separable_bound(d: usize) -> f64 {
    let d = d as f64;
    1.0 / (d * (d * d - 1.0) - d * d)
}

/// `((d+1)/d³) I - (1/d²) F`.
pub fn werner(d: usize) -> Result<DensityMatrix> {
    let dims = DimPair::new(d, d)?;
    let df = d as f64;
    let m = CMatrix::identity(d * d).scale((df + 1.0) / (df * df * df)) - flip(d).scale(1.0 / (df * df));
    make_density(m, dims)
}

/// Generalized Werner state for admissible parameters.
pub fn werner_gen(p: WernerParams) -> Result<DensityMatrix> {
    let p = WernerParams::new(p.d, p.c)?;
    let dims = DimPair::new(p.d, p.d)?;
    let df = p.d as f64;
    let m = CMatrix::identity(p.d * p.d).scale((1.0 / df) * (1.0 / df + p.c)) - flip(p.d).scale(p.c);
    make_density(m, dims)
}

/// `tr(F W) = 1/d + c(1 - d²)`; negative exactly when the state is entangled.
pub fn flip_expectation(p: WernerParams) -> f64 {
    let d = p.d as f64;
    1.0 / d + p.c * (1.0 - d * d)
}

/// Minimum eigenvalue of the partial transpose over the second factor.
pub fn ppt_min_eigenvalue(rho: &DensityMatrix) -> f64 {
    let pt = partial_transpose_second(rho.matrix(), rho.dims()).expect("state matrix matches its dims");
    psd_min_eigenvalue(&pt).expect("partial transpose of a Hermitian matrix is Hermitian")
}

/// Conclusive PPT verdict where the test is necessary and sufficient.
pub fn ppt_entangled(rho: &DensityMatrix) -> Option<bool> {
    let d = rho.dims();
    let neg = ppt_min_eigenvalue(rho) < -STATE_TOL;
    if neg {
        Some(true)
    } else if d.total() <= 6 {
        Some(false)
    } else {
        None
    }
}

/// State after outcome `outcome` of a full-space measurement: `R ρ R† / tr(ρ R†R)`.
pub fn collapse(rho: &DensityMatrix, ops: &OperationFamily, outcome: usize) -> Result<DensityMatrix> {
    let n = rho.dims().total();
    if ops.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "operations act on dimension {}, state has {n}",
            ops.dim()
        )));
    }
    let r = ops
        .operators()
        .get(outcome)
        .ok_or_else(|| Error::InvalidInput(format!("outcome index {outcome} out of range")))?;
    let un = rho.matrix().sandwich(r);
    let p = un.trace().re;
    if p <= PROB_FLOOR {
        return Err(Error::ZeroProbabilityOutcome(p));
    }
    let m = un.scale(1.0 / p);
    let m = (&m + &m.adjoint()).scale(0.5);
    make_density(m, rho.dims())
}

/// Collapse under a local measurement on `side`.
pub fn collapse_local(
    rho: &DensityMatrix,
    side: Side,
    ops: &OperationFamily,
    outcome: usize,
) -> Result<DensityMatrix> {
    collapse(rho, &ops.embed(side, rho.dims())?, outcome)
}

/// Closed-form parameter of the generalized Werner state left after a rank-`(d-1)`
/// projection on both sides: `c' = c d² / ((d-1)(d - c d - 1))`.
pub fn collapsed_c_prime(p: WernerParams) -> Result<f64> {
    if p.d < 3 {
        return Err(Error::ParameterOutOfRange(format!("collapse formula needs d >= 3, got {}", p.d)));
    }
    let d = p.d as f64;
    Ok(p.c * d * d / ((d - 1.0) * (d - p.c * d - 1.0)))
}

/// Fits a `d²`-square matrix to the form `a I - c F` after normalization.
///
/// Returns `(c, residual)`. The parameter is read from the two flip eigenspaces; the
/// residual is the max entry deviation from the fitted form.
pub fn fit_werner(m: &CMatrix, d: usize) -> Result<(f64, f64)> {
    if m.rows() != d * d || m.cols() != d * d {
        return Err(Error::DimensionMismatch(format!("expected {0}x{0}", d * d)));
    }
    let tr = m.trace().re;
    if tr.abs() <= PROB_FLOOR {
        return Err(Error::TraceNotOne(tr));
    }
    let m = m.scale(1.0 / tr);
    let f = flip(d);
    let id = CMatrix::identity(d * d);
    let sym = (&id + &f).scale(0.5);
    let anti = (&id - &f).scale(0.5);
    let df = d as f64;
    let dim_sym = df * (df + 1.0) / 2.0;
    let dim_anti = df * (df - 1.0) / 2.0;
    let lam_sym = m.trace_product_re(&sym) / dim_sym;
    let lam_anti = m.trace_product_re(&anti) / dim_anti;
    let c = (lam_anti - lam_sym) / 2.0;
    let a = (lam_anti + lam_sym) / 2.0;
    let fitted = id.scale(a) - f.scale(c);
    let c = if c.abs() < 1e-15 { 0.0 } else { c };
    Ok((c, fitted.max_abs_diff(&m)))
}

/// Operator norms of `(P⊗P⊥)F(P⊗P⊥)`, `(P⊗P⊥)F(P⊗P)` and `(P⊗P)F(P⊗P⊥)`.
pub fn cross_term_norms(p: WernerParams, proj: &CMatrix) -> Result<[f64; 3]> {
    let d = p.d;
    if proj.rows() != d || proj.cols() != d {
        return Err(Error::DimensionMismatch(format!("projector must be {d}x{d}")));
    }
    if proj.hermitian_deviation() >= HERMITIAN_TOL || (proj * proj).max_abs_diff(proj) >= 1e-10 {
        return Err(Error::InvalidInput("cross terms need an orthogonal projector".into()));
    }
    let perp = &CMatrix::identity(d) - proj;
    let pp = kron(proj, proj);
    let pq = kron(proj, &perp);
    let f = flip(d);
    let term = |l: &CMatrix, r: &CMatrix| (&(l * &f) * r).scale(p.c).operator_norm();
    Ok([term(&pq, &pq), term(&pq, &pp), term(&pp, &pq)])
}

/// Convex combination of states with matching dims.
pub fn mixture(states: &[DensityMatrix], weights: &[f64]) -> Result<DensityMatrix> {
    check_probability_vector(weights, 1e-12)?;
    if states.len() != weights.len() || states.is_empty() {
        return Err(Error::InvalidWeights(format!(
            "{} states for {} weights",
            states.len(),
            weights.len()
        )));
    }
    let dims = states[0].dims();
    if states.iter().any(|s| s.dims() != dims) {
        return Err(Error::DimensionMismatch("mixture components differ in dims".into()));
    }
    let n = dims.total();
    let m = states
        .iter()
        .zip(weights)
        .fold(CMatrix::zeros(n, n), |acc, (s, w)| acc + s.matrix().scale(*w));
    make_density(m, dims)
}

pub(crate) fn check_probability_vector(w: &[f64], tol: f64) -> Result<()> {
    if let Some(x) = w.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::InvalidWeights(format!("negative or NaN weight {x}")));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > tol {
        return Err(Error::InvalidWeights(format!("weights sum to {s}")));
    }
    Ok(())
}

/// `|ψ⟩⟨ψ|` for a normalized vector on the given dims.
pub fn pure(psi: &[Complex64], dims: DimPair) -> Result<DensityMatrix> {
    let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(Error::InvalidInput("zero state vector".into()));
    }
    let v: Vec<Complex64> = psi.iter().map(|z| z / norm).collect();
    make_density(CMatrix::projector_onto(&v), dims)
}

/// `(|01⟩ - |10⟩)/√2`.
pub fn singlet() -> DensityMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    pure(&[cr(0.0), cr(s), cr(-s), cr(0.0)], DimPair { d1: 2, d2: 2 }).expect("singlet is a state")
}

pub fn maximally_mixed(d1: usize, d2: usize) -> Result<DensityMatrix> {
    let dims = DimPair::new(d1, d2)?;
    make_density(CMatrix::identity(dims.total()).scale(1.0 / dims.total() as f64), dims)
}

/// `ρ₁ ⊗ ρ₂` from two single-system density matrices.
pub fn product(rho1: &CMatrix, rho2: &CMatrix) -> Result<DensityMatrix> {
    let dims = DimPair::new(rho1.rows(), rho2.rows())?;
    make_density(kron(rho1, rho2), dims)
}

/// Validates a single-system density matrix (any dimension ≥ 1).
pub fn check_local_state(m: &CMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch("local state must be square".into()));
    }
    let dev = m.hermitian_deviation();
    if dev >= HERMITIAN_TOL {
        return Err(Error::NotHermitian(dev));
    }
    let tr = m.trace().re;
    if (tr - 1.0).abs() > STATE_TOL {
        return Err(Error::TraceNotOne(tr));
    }
    let min = psd_min_eigenvalue(m)?;
    if min < -STATE_TOL {
        return Err(Error::NotPositive(min));
    }
    Ok(())
}

/// Collapses a generalized Werner state under `P ⊗ P` and refits it on `Ran P ⊗ Ran P`.
///
/// Returns the fitted parameter and the fit residual.
pub fn collapse_and_refit(p: WernerParams, proj: &CMatrix) -> Result<(f64, f64)> {
    use crate::measurement::{FamilyKind, OutcomeLabel};
    let w = werner_gen(p)?;
    let perp = &CMatrix::identity(p.d) - proj;
    let fam = OperationFamily::new(
        "P",
        FamilyKind::Ideal,
        vec![OutcomeLabel::named("1"), OutcomeLabel::named("0")],
        vec![proj.clone(), perp],
    )?;
    let after1 = collapse_local(&w, Side::First, &fam, 0)?;
    let after2 = collapse_local(&after1, Side::Second, &fam, 0)?;
    let basis = projector_range_basis(proj)?;
    let small = compress_bipartite(after2.matrix(), &basis, &basis);
    fit_werner(&small, basis.len())
}
