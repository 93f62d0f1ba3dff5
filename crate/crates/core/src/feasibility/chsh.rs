//! CHSH values on (post-selected) two-qubit subspaces.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{compress_bipartite, kron, projector_range_basis, CMatrix};
use crate::hvmodels::Context;
use crate::measurement::{pauli, Observable, OperationFamily};
use crate::states::{DensityMatrix, PROB_FLOOR};

/// Tsirelson's bound plus slack; exceeding it signals a numerical defect.
pub const TSIRELSON_GUARD: f64 = 2.0 * std::f64::consts::SQRT_2 + 1e-6;
const INVOLUTION_TOL: f64 = 1e-10;
const GRID_POINTS: usize = 24;
const STOP_STEP: f64 = 1e-7;

/// Two ±1 observables per side, each an involution on the range of that side's projector.
#[derive(Debug, Clone)]
pub struct ChshSettings {
    pub t1: CMatrix,
    pub t2: CMatrix,
    pub a: [CMatrix; 2],
    pub b: [CMatrix; 2],
    /// Angles in the real plane of each subspace basis, when the settings came from one.
    pub angles: Option<[f64; 4]>,
}

impl ChshSettings {
    pub fn new(t1: CMatrix, t2: CMatrix, a: [CMatrix; 2], b: [CMatrix; 2]) -> Result<Self> {
        for (t, ops) in [(&t1, &a), (&t2, &b)] {
            if (t * t).max_abs_diff(t) > INVOLUTION_TOL || !t.is_hermitian() {
                return Err(Error::InvalidMeasurement("subspace operator is not a projector".into()));
            }
            for o in ops.iter() {
                if o.rows() != t.rows() || !o.is_hermitian() {
                    return Err(Error::InvalidMeasurement("setting must be Hermitian on the side space".into()));
                }
                if (o * o).max_abs_diff(t) > INVOLUTION_TOL || (&(t * o) * t).max_abs_diff(o) > INVOLUTION_TOL {
                    return Err(Error::InvalidMeasurement("setting does not square to the subspace identity".into()));
                }
            }
        }
        Ok(Self { t1, t2, a, b, angles: None })
    }

    /// Settings `cos θ Z + sin θ X` in the computational-like basis of each projector.
    pub fn from_angles(t1: &CMatrix, t2: &CMatrix, angles: [f64; 4]) -> Result<Self> {
        let basis1 = two_dim_basis(t1)?;
        let basis2 = two_dim_basis(t2)?;
        let lift = |basis: &[Vec<num_complex::Complex64>], th: f64| -> Result<CMatrix> {
            let local = plane_observable(th)?;
            let d = basis[0].len();
            Ok(CMatrix::from_fn(d, d, |i, j| {
                let mut s = num_complex::Complex64::new(0.0, 0.0);
                for (p, u) in basis.iter().enumerate() {
                    for (q, v) in basis.iter().enumerate() {
                        s += u[i] * local.get(p, q) * v[j].conj();
                    }
                }
                s
            }))
        };
        let mut s = Self::new(
            t1.clone(),
            t2.clone(),
            [lift(&basis1, angles[0])?, lift(&basis1, angles[1])?],
            [lift(&basis2, angles[2])?, lift(&basis2, angles[3])?],
        )?;
        s.angles = Some(angles);
        Ok(s)
    }
}

fn two_dim_basis(t: &CMatrix) -> Result<Vec<Vec<num_complex::Complex64>>> {
    let basis = projector_range_basis(t)?;
    if basis.len() != 2 {
        return Err(Error::InvalidMeasurement(format!("subspace projector has rank {}, expected 2", basis.len())));
    }
    Ok(basis)
}

fn plane_observable(theta: f64) -> Result<CMatrix> {
    Ok(pauli('z')?.scale(theta.cos()) + pauli('x')?.scale(theta.sin()))
}

/// Post-selected state `(T1⊗T2) ρ (T1⊗T2) / p` and its probability `p`.
pub fn post_select(rho: &DensityMatrix, t1: &CMatrix, t2: &CMatrix) -> Result<(CMatrix, f64)> {
    let dims = rho.dims();
    if t1.rows() != dims.d1 || t2.rows() != dims.d2 {
        return Err(Error::DimensionMismatch("subspace projectors do not match the state".into()));
    }
    let t = kron(t1, t2);
    let m = rho.matrix().sandwich(&t);
    let p = m.trace().re;
    if p <= PROB_FLOOR {
        return Err(Error::ZeroProbabilityOutcome(p));
    }
    Ok((m.scale(1.0 / p), p))
}

/// `E(a1 b1) + E(a1 b2) + E(a2 b1) - E(a2 b2)` on the post-selected state.
pub fn chsh_value(rho: &DensityMatrix, s: &ChshSettings) -> Result<f64> {
    let (post, _) = post_select(rho, &s.t1, &s.t2)?;
    let e = |a: &CMatrix, b: &CMatrix| post.trace_product_re(&kron(a, b));
    Ok(e(&s.a[0], &s.b[0]) + e(&s.a[0], &s.b[1]) + e(&s.a[1], &s.b[0]) - e(&s.a[1], &s.b[1]))
}

/// Correlators `⟨σ_i ⊗ σ_j⟩` for `i, j ∈ {z, x}` of a two-qubit state.
fn plane_correlators(post2: &CMatrix) -> Result<[[f64; 2]; 2]> {
    let ops = [pauli('z')?, pauli('x')?];
    let mut c = [[0.0; 2]; 2];
    for (i, a) in ops.iter().enumerate() {
        for (j, b) in ops.iter().enumerate() {
            c[i][j] = post2.trace_product_re(&kron(a, b));
        }
    }
    Ok(c)
}

fn correlation(c: &[[f64; 2]; 2], ta: f64, tb: f64) -> f64 {
    let (ca, sa, cb, sb) = (ta.cos(), ta.sin(), tb.cos(), tb.sin());
    ca * cb * c[0][0] + ca * sb * c[0][1] + sa * cb * c[1][0] + sa * sb * c[1][1]
}

fn chsh_angles(c: &[[f64; 2]; 2], th: &[f64; 4]) -> f64 {
    correlation(c, th[0], th[2]) + correlation(c, th[0], th[3]) + correlation(c, th[1], th[2])
        - correlation(c, th[1], th[3])
}

#[derive(Debug, Clone, Serialize)]
pub struct ChshOptimum {
    pub value: f64,
    pub angles: [f64; 4],
    pub post_selection_probability: f64,
}

/// Best CHSH value over real-plane settings on the ranges of `t1`, `t2`.
///
/// A 24-point grid per angle is followed by coordinate descent down to a step of
/// `1e-7`. Seed 0 uses the aligned grid; other seeds shift it by a random offset.
pub fn chsh_maximize(rho: &DensityMatrix, t1: &CMatrix, t2: &CMatrix, seed: u64) -> Result<(f64, ChshSettings)> {
    let opt = chsh_maximize_angles(rho, t1, t2, seed)?;
    let settings = ChshSettings::from_angles(t1, t2, opt.angles)?;
    Ok((opt.value, settings))
}

/// Same as [`chsh_maximize`], returning only the optimum's numbers.
pub fn chsh_maximize_angles(rho: &DensityMatrix, t1: &CMatrix, t2: &CMatrix, seed: u64) -> Result<ChshOptimum> {
    let (post, p) = post_select(rho, t1, t2)?;
    let basis1 = two_dim_basis(t1)?;
    let basis2 = two_dim_basis(t2)?;
    let post2 = compress_bipartite(&post, &basis1, &basis2);
    let c = plane_correlators(&post2)?;
    let step = std::f64::consts::TAU / GRID_POINTS as f64;
    let offset = if seed == 0 { 0.0 } else { crate::sampling::rng(seed).random::<f64>() * step };
    let grid: Vec<f64> = (0..GRID_POINTS).map(|i| offset + i as f64 * step).collect();
    let mut table = vec![[0.0; GRID_POINTS]; GRID_POINTS];
    for (i, &ta) in grid.iter().enumerate() {
        for (j, &tb) in grid.iter().enumerate() {
            table[i][j] = correlation(&c, ta, tb);
        }
    }
    let mut best = (f64::NEG_INFINITY, [0usize; 4]);
    for i0 in 0..GRID_POINTS {
        for i1 in 0..GRID_POINTS {
            for j0 in 0..GRID_POINTS {
                for j1 in 0..GRID_POINTS {
                    let v = table[i0][j0] + table[i0][j1] + table[i1][j0] - table[i1][j1];
                    if v > best.0 {
                        best = (v, [i0, i1, j0, j1]);
                    }
                }
            }
        }
    }
    let mut th = best.1.map(|i| grid[i]);
    let mut value = chsh_angles(&c, &th);
    let mut h = step / 2.0;
    while h >= STOP_STEP {
        let mut moved = false;
        for k in 0..4 {
            for dir in [1.0, -1.0] {
                let mut cand = th;
                cand[k] += dir * h;
                let v = chsh_angles(&c, &cand);
                if v > value + 1e-15 {
                    th = cand;
                    value = v;
                    moved = true;
                }
            }
        }
        if !moved {
            h /= 2.0;
        }
    }
    if value > TSIRELSON_GUARD {
        log::error!("CHSH optimum {value} exceeds Tsirelson's bound");
    }
    debug_assert!(value <= TSIRELSON_GUARD, "CHSH optimum {value} exceeds Tsirelson's bound");
    let angles = th.map(|t| t.rem_euclid(std::f64::consts::TAU));
    Ok(ChshOptimum { value, angles, post_selection_probability: p })
}

/// Post-selected state compressed to the two-qubit space of the projectors' ranges.
pub fn post_selected_qubits(rho: &DensityMatrix, t1: &CMatrix, t2: &CMatrix) -> Result<DensityMatrix> {
    let (post, _) = post_select(rho, t1, t2)?;
    let m = compress_bipartite(&post, &two_dim_basis(t1)?, &two_dim_basis(t2)?);
    let m = (&m + &m.adjoint()).scale(0.5);
    crate::states::make_density(m, crate::hilbert::DimPair { d1: 2, d2: 2 })
}

/// Two-qubit context of the real-plane settings `A1, A2 | B1, B2` with length 1.
pub fn plane_context(angles: [f64; 4]) -> Result<Context> {
    let fam = |name: &str, th: f64| -> Result<OperationFamily> { Ok(Observable::new(name, plane_observable(th)?)?.family()) };
    Context::new(
        vec![fam("A1", angles[0])?, fam("A2", angles[1])?],
        vec![fam("B1", angles[2])?, fam("B2", angles[3])?],
        1,
        1,
    )
}

/// Projector onto the first two computational basis vectors of a `d`-dimensional side.
pub fn standard_rank_two(d: usize) -> CMatrix {
    let mut diag = vec![0.0; d];
    diag[0] = 1.0;
    diag[1] = 1.0;
    CMatrix::from_real_diag(&diag)
}

/// Joint table `p[x][y][a][b]` for two ±1 settings per side (index 0 is outcome +1).
pub type CorrelationTable = [[[[f64; 2]; 2]; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PolytopeMembership {
    Inside,
    Outside,
}

/// Largest of the eight CHSH expressions of a table.
pub fn max_chsh_facet(p: &CorrelationTable) -> f64 {
    let e = |x: usize, y: usize| p[x][y][0][0] - p[x][y][0][1] - p[x][y][1][0] + p[x][y][1][1];
    let mut best = f64::NEG_INFINITY;
    for minus in 0..4 {
        let mut s = 0.0;
        for x in 0..2 {
            for y in 0..2 {
                let sign = if 2 * x + y == minus { -1.0 } else { 1.0 };
                s += sign * e(x, y);
            }
        }
        best = best.max(s.abs());
    }
    best
}

/// Membership in the local polytope of the two-setting, two-outcome scenario via
/// positivity, normalization, no-signalling and the eight CHSH facets.
pub fn bell_polytope_oracle(p: &CorrelationTable, tol: f64) -> Result<PolytopeMembership> {
    for x in 0..2 {
        for y in 0..2 {
            let block = &p[x][y];
            let sum: f64 = block.iter().flatten().sum();
            if block.iter().flatten().any(|v| !v.is_finite() || *v < -tol) || (sum - 1.0).abs() > tol {
                return Err(Error::InvalidInput(format!("setting pair ({x},{y}) is not a distribution")));
            }
        }
    }
    let marg1 = |x: usize, y: usize, a: usize| p[x][y][a][0] + p[x][y][a][1];
    let marg2 = |x: usize, y: usize, b: usize| p[x][y][0][b] + p[x][y][1][b];
    for o in 0..2 {
        for v in 0..2 {
            if (marg1(o, 0, v) - marg1(o, 1, v)).abs() > tol || (marg2(0, o, v) - marg2(1, o, v)).abs() > tol {
                return Ok(PolytopeMembership::Outside);
            }
        }
    }
    if max_chsh_facet(p) > 2.0 + tol {
        return Ok(PolytopeMembership::Outside);
    }
    Ok(PolytopeMembership::Inside)
}

/// Table of a state for two ideal two-outcome measurements per side.
pub fn correlation_table(rho: &DensityMatrix, a: [&[CMatrix]; 2], b: [&[CMatrix]; 2]) -> Result<CorrelationTable> {
    let mut p = [[[[0.0; 2]; 2]; 2]; 2];
    for x in 0..2 {
        for y in 0..2 {
            if a[x].len() != 2 || b[y].len() != 2 {
                return Err(Error::InvalidMeasurement("settings need exactly two outcomes".into()));
            }
            for i in 0..2 {
                for j in 0..2 {
                    let e1 = a[x][i].adjoint() * &a[x][i];
                    let e2 = b[y][j].adjoint() * &b[y][j];
                    p[x][y][i][j] = rho.matrix().trace_product_re(&kron(&e1, &e2));
                }
            }
        }
    }
    Ok(p)
}
