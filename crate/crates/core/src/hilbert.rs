//! Dense complex linear algebra over finite-dimensional tensor-product spaces.
//!
//! [`CMatrix`] wraps a dense `nalgebra` matrix of `Complex64` entries and adds the
//! handful of operations the rest of the crate needs: Kronecker products, partial
//! traces and transposes over a [`DimPair`], the flip (swap) operator, and a
//! Hermitian spectral decomposition with degenerate eigenvalues merged into a
//! single projector.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Maximum entrywise deviation from `M = M^dagger` accepted as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues closer than this (times the spectral radius) are merged.
pub const DEGENERACY_TOL: f64 = 1e-8;

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Dense complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMatrix(DMatrix<Complex64>);

impl CMatrix {
    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, entries: &[Complex64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        Ok(Self(DMatrix::from_row_slice(rows, cols, entries)))
    }

    /// Builds a matrix from nested rows of real numbers.
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let entries: Vec<Complex64> = rows.iter().flatten().map(|&x| cr(x)).collect();
        Self::from_row_major(n, m, &entries)
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> Complex64) -> Self {
        Self(DMatrix::from_fn(rows, cols, f))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| if i == j { cr(diag[i]) } else { cr(0.0) })
    }

    /// Outer product `|v><v|` of a column vector with itself.
    pub fn projector_onto(v: &[Complex64]) -> Self {
        let n = v.len();
        Self::from_fn(n, n, |i, j| v[i] * v[j].conj())
    }

    pub fn from_inner(m: DMatrix<Complex64>) -> Self {
        Self(m)
    }

    pub fn inner(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.0[(i, j)] = v;
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn scale_c(&self, s: Complex64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    /// Real part of the trace of `self * other` without forming the product.
    pub fn trace_product_re(&self, other: &CMatrix) -> f64 {
        let n = self.rows();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for k in 0..self.cols() {
                acc += self.0[(i, k)] * other.0[(k, i)];
            }
        }
        acc.re
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        if self.rows() != other.rows() || self.cols() != other.cols() {
            return f64::INFINITY;
        }
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `max |M - M^dagger|`, infinite for non-square input.
    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        self.max_abs_diff(&self.adjoint())
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_deviation() < HERMITIAN_TOL
    }

    pub fn commutator(&self, other: &CMatrix) -> CMatrix {
        &(self * other) - &(other * self)
    }

    /// Spectral (largest singular value) norm.
    pub fn operator_norm(&self) -> f64 {
        let gram = self.adjoint() * self;
        let eig = SymmetricEigen::new(gram.0);
        eig.eigenvalues.iter().copied().fold(0.0, f64::max).max(0.0).sqrt()
    }

    /// Conjugates by `op`: `op * self * op^dagger`.
    pub fn sandwich(&self, op: &CMatrix) -> CMatrix {
        &(op * self) * &op.adjoint()
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows(), self.cols())?;
        for i in 0..self.rows() {
            write!(f, "  ")?;
            for j in 0..self.cols() {
                let z = self.get(i, j);
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 * &rhs.0)
    }
}

impl Mul for CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: CMatrix) -> CMatrix {
        CMatrix(self.0 * rhs.0)
    }
}

impl Mul<&CMatrix> for CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(self.0 * &rhs.0)
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 + &rhs.0)
    }
}

impl Add for CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: CMatrix) -> CMatrix {
        CMatrix(self.0 + rhs.0)
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 - &rhs.0)
    }
}

impl Sub for CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: CMatrix) -> CMatrix {
        CMatrix(self.0 - rhs.0)
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        CMatrix(-&self.0)
    }
}

#[derive(Serialize, Deserialize)]
struct CMatrixJson {
    rows: usize,
    cols: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl Serialize for CMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let re = (0..self.rows())
            .map(|i| (0..self.cols()).map(|j| self.get(i, j).re).collect())
            .collect();
        let im = (0..self.rows())
            .map(|i| (0..self.cols()).map(|j| self.get(i, j).im).collect())
            .collect();
        CMatrixJson { rows: self.rows(), cols: self.cols(), re, im }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = CMatrixJson::deserialize(d)?;
        let shape_ok = |a: &Vec<Vec<f64>>| a.len() == j.rows && a.iter().all(|r| r.len() == j.cols);
        if !shape_ok(&j.re) || !shape_ok(&j.im) {
            return Err(D::Error::custom(format!(
                "matrix arrays do not match declared shape {}x{}",
                j.rows, j.cols
            )));
        }
        Ok(CMatrix::from_fn(j.rows, j.cols, |r, col| c(j.re[r][col], j.im[r][col])))
    }
}

/// Dimensions of the two factors of a bipartite space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimPair {
    pub d1: usize,
    pub d2: usize,
}

impl DimPair {
    pub fn new(d1: usize, d2: usize) -> Result<Self> {
        if d1 < 2 || d2 < 2 {
            return Err(Error::DimensionMismatch(format!(
                "subsystem dimensions must be at least 2, got ({d1}, {d2})"
            )));
        }
        Ok(Self { d1, d2 })
    }

    pub fn total(&self) -> usize {
        self.d1 * self.d2
    }

    pub fn of(&self, side: Side) -> usize {
        match side {
            Side::First => self.d1,
            Side::Second => self.d2,
        }
    }
}

/// One of the two subsystems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "1")]
    First,
    #[serde(rename = "2")]
    Second,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::First => Side::Second,
            Side::Second => Side::First,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::First => 0,
            Side::Second => 1,
        }
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    CMatrix(a.0.kronecker(&b.0))
}

/// Partial trace of a `(d1*d2)`-square matrix, keeping the factor on `keep`.
pub fn partial_trace(m: &CMatrix, dims: DimPair, keep: Side) -> Result<CMatrix> {
    let n = dims.total();
    if m.rows() != n || m.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "partial trace over ({}, {}) needs a {n}x{n} matrix, got {}x{}",
            dims.d1,
            dims.d2,
            m.rows(),
            m.cols()
        )));
    }
    let (d1, d2) = (dims.d1, dims.d2);
    Ok(match keep {
        Side::First => CMatrix::from_fn(d1, d1, |i, k| {
            (0..d2).map(|j| m.get(i * d2 + j, k * d2 + j)).sum()
        }),
        Side::Second => CMatrix::from_fn(d2, d2, |j, l| {
            (0..d1).map(|i| m.get(i * d2 + j, i * d2 + l)).sum()
        }),
    })
}

/// Partial transpose over the second factor.
pub fn partial_transpose_second(m: &CMatrix, dims: DimPair) -> Result<CMatrix> {
    let n = dims.total();
    if m.rows() != n || m.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "partial transpose needs a {n}x{n} matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let d2 = dims.d2;
    Ok(CMatrix::from_fn(n, n, |r, s| {
        let (i, j) = (r / d2, r % d2);
        let (k, l) = (s / d2, s % d2);
        m.get(i * d2 + l, k * d2 + j)
    }))
}

/// The swap operator on `C^d ⊗ C^d`: `F[(i,j),(k,l)] = δ_il δ_jk`.
pub fn flip(d: usize) -> CMatrix {
    let n = d * d;
    CMatrix::from_fn(n, n, |r, s| {
        let (i, j) = (r / d, r % d);
        let (k, l) = (s / d, s % d);
        if i == l && j == k {
            cr(1.0)
        } else {
            cr(0.0)
        }
    })
}

/// One eigenvalue together with the projector onto its (merged) eigenspace.
#[derive(Debug, Clone)]
pub struct SpectralPair {
    pub value: f64,
    pub projector: CMatrix,
}

impl SpectralPair {
    pub fn rank(&self) -> usize {
        self.projector.trace().re.round() as usize
    }
}

/// Eigenvalues in strictly descending order with their eigenprojectors.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub pairs: Vec<SpectralPair>,
}

impl SpectralDecomposition {
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.pairs.first().map_or(0, |p| p.projector.rows());
        self.pairs
            .iter()
            .fold(CMatrix::zeros(n, n), |acc, p| acc + p.projector.scale(p.value))
    }

    pub fn values(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.value).collect()
    }
}

/// Eigenvalues (descending) and the matching orthonormal eigenvectors of a Hermitian matrix.
pub fn eigh(h: &CMatrix) -> Result<(Vec<f64>, Vec<Vec<Complex64>>)> {
    let dev = h.hermitian_deviation();
    if dev >= HERMITIAN_TOL {
        return Err(Error::NotHermitian(dev));
    }
    // symmetrize away rounding before the solver sees it
    let sym = (h + &h.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(sym.0);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    Ok((values, vectors))
}

/// Hermitian spectral decomposition with degeneracy grouping.
pub fn spectral_decompose(h: &CMatrix) -> Result<SpectralDecomposition> {
    let (values, vectors) = eigh(h)?;
    let radius = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tol = DEGENERACY_TOL * radius.max(f64::MIN_POSITIVE);
    let n = h.rows();
    let mut pairs: Vec<SpectralPair> = Vec::new();
    let mut group: Vec<usize> = Vec::new();
    let flush = |group: &mut Vec<usize>, pairs: &mut Vec<SpectralPair>| {
        if group.is_empty() {
            return;
        }
        let value = group.iter().map(|&i| values[i]).sum::<f64>() / group.len() as f64;
        let projector = group.iter().fold(CMatrix::zeros(n, n), |acc, &i| {
            acc + CMatrix::projector_onto(&vectors[i])
        });
        pairs.push(SpectralPair { value, projector });
        group.clear();
    };
    for i in 0..values.len() {
        if let Some(&last) = group.last() {
            if values[last] - values[i] > tol {
                flush(&mut group, &mut pairs);
            }
        }
        group.push(i);
    }
    flush(&mut group, &mut pairs);
    Ok(SpectralDecomposition { pairs })
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn psd_min_eigenvalue(m: &CMatrix) -> Result<f64> {
    let (values, _) = eigh(m)?;
    Ok(values.last().copied().unwrap_or(0.0))
}

/// Orthonormal basis (as columns) of the range of an orthogonal projector.
pub fn projector_range_basis(p: &CMatrix) -> Result<Vec<Vec<Complex64>>> {
    let n = p.rows();
    // computational basis vectors when the projector is diagonal, so callers get a
    // canonical frame for standard subspaces
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || p.get(i, j).norm() < 1e-12));
    if diagonal {
        return Ok((0..n)
            .filter(|&i| (p.get(i, i).re - 1.0).abs() < 1e-9)
            .map(|i| (0..n).map(|k| cr(if k == i { 1.0 } else { 0.0 })).collect())
            .collect());
    }
    let (values, vectors) = eigh(p)?;
    Ok(values
        .iter()
        .zip(vectors)
        .filter(|(v, _)| **v > 0.5)
        .map(|(_, mut vec)| {
            // fix the global phase: first significant component real positive
            if let Some(z) = vec.iter().find(|z| z.norm() > 1e-9).copied() {
                let phase = z.conj() / z.norm();
                for x in vec.iter_mut() {
                    *x *= phase;
                }
            }
            vec
        })
        .collect())
}

/// Compresses `m` to the subspace spanned by the columns `basis` of each factor.
pub fn compress_bipartite(
    m: &CMatrix,
    basis1: &[Vec<Complex64>],
    basis2: &[Vec<Complex64>],
) -> CMatrix {
    let iso = |b: &[Vec<Complex64>]| {
        let rows = b.first().map_or(0, Vec::len);
        CMatrix::from_fn(rows, b.len(), |i, j| b[j][i])
    };
    let v = kron(&iso(basis1), &iso(basis2));
    &(&v.adjoint() * m) * &v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sz() -> CMatrix {
        CMatrix::from_real_diag(&[1.0, -1.0])
    }

    #[test]
    fn kron_of_identities_and_basis_projectors() {
        assert_eq!(kron(&CMatrix::identity(2), &CMatrix::identity(2)), CMatrix::identity(4));
        let p0 = CMatrix::from_real_diag(&[1.0, 0.0]);
        let p1 = CMatrix::from_real_diag(&[0.0, 1.0]);
        assert_eq!(kron(&p0, &p1), CMatrix::from_real_diag(&[0.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn flip_two_has_expected_pattern() {
        let f = flip(2);
        let ones = [(0, 0), (1, 2), (2, 1), (3, 3)];
        for i in 0..4 {
            for j in 0..4 {
                let want = if ones.contains(&(i, j)) { 1.0 } else { 0.0 };
                assert_eq!(f.get(i, j), cr(want));
            }
        }
    }

    #[test]
    fn flip_trace_and_involution() {
        for d in 2..=6 {
            let f = flip(d);
            assert_eq!(f.trace().re, d as f64);
            assert_eq!(&f * &f, CMatrix::identity(d * d));
            assert!(f.hermitian_deviation() < 1e-12);
        }
    }

    #[test]
    fn partial_trace_of_identity_and_singlet() {
        let dims = DimPair::new(2, 3).unwrap();
        let pt = partial_trace(&CMatrix::identity(6), dims, Side::First).unwrap();
        assert!(pt.max_abs_diff(&CMatrix::identity(2).scale(3.0)) < 1e-15);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi = [cr(0.0), cr(s), cr(-s), cr(0.0)];
        let singlet = CMatrix::projector_onto(&psi);
        let r = partial_trace(&singlet, DimPair::new(2, 2).unwrap(), Side::First).unwrap();
        assert!(r.max_abs_diff(&CMatrix::identity(2).scale(0.5)) < 1e-15);
        assert!(partial_trace(&CMatrix::identity(5), dims, Side::First).is_err());
    }

    #[test]
    fn spectral_decomposition_of_small_cases() {
        let d = spectral_decompose(&sz()).unwrap();
        assert_eq!(d.values(), vec![1.0, -1.0]);
        assert!(d.pairs[0].projector.max_abs_diff(&CMatrix::from_real_diag(&[1.0, 0.0])) < 1e-12);

        let d = spectral_decompose(&CMatrix::identity(3)).unwrap();
        assert_eq!(d.pairs.len(), 1);
        assert!(d.pairs[0].projector.max_abs_diff(&CMatrix::identity(3)) < 1e-12);

        let d = spectral_decompose(&flip(2)).unwrap();
        assert_eq!(d.pairs.len(), 2);
        assert!((d.pairs[0].value - 1.0).abs() < 1e-12);
        assert_eq!(d.pairs[0].rank(), 3);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let singlet = CMatrix::projector_onto(&[cr(0.0), cr(s), cr(-s), cr(0.0)]);
        assert!(d.pairs[1].projector.max_abs_diff(&singlet) < 1e-12);
    }

    #[test]
    fn non_hermitian_input_is_rejected() {
        let m = CMatrix::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(spectral_decompose(&m), Err(Error::NotHermitian(_))));
        assert!(matches!(psd_min_eigenvalue(&m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn min_eigenvalue_cases() {
        assert!((psd_min_eigenvalue(&CMatrix::identity(2)).unwrap() - 1.0).abs() < 1e-15);
        let m = CMatrix::from_real_diag(&[1.0, -0.5]);
        assert!((psd_min_eigenvalue(&m).unwrap() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip_keeps_entries() {
        let m = CMatrix::from_fn(2, 3, |i, j| c(i as f64, j as f64 - 0.5));
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"rows\":2"));
        let back: CMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        let bad = r#"{"rows":2,"cols":2,"re":[[1,0]],"im":[[0,0],[0,0]]}"#;
        assert!(serde_json::from_str::<CMatrix>(bad).is_err());
    }
}
