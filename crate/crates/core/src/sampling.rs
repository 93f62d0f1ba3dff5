//! Seeded random states, observables and contexts for tests and scans.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::hilbert::{c, CMatrix, DimPair};
use crate::hvmodels::Context;
use crate::measurement::{FamilyKind, OperationFamily, OutcomeLabel};
use crate::states::{make_density, DensityMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal sample (Box-Muller).
pub fn gaussian(rng: &mut impl Rng) -> f64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    let v: f64 = rng.random();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

fn complex_gaussian(rng: &mut impl Rng) -> Complex64 {
    c(gaussian(rng), gaussian(rng))
}

/// Haar-random unitary from Gram-Schmidt on a complex Gaussian matrix; columns are returned.
pub fn random_unitary_columns(d: usize, rng: &mut impl Rng) -> Vec<Vec<Complex64>> {
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v: Vec<Complex64> = (0..d).map(|_| complex_gaussian(rng)).collect();
        for u in &cols {
            let dot: Complex64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            v.iter_mut().zip(u).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            cols.push(v);
        }
    }
    cols
}

/// Random mixed state `G G† / tr` with a Ginibre matrix of the given rank.
pub fn random_density(dims: DimPair, rank: usize, rng: &mut impl Rng) -> Result<DensityMatrix> {
    let n = dims.total();
    let g = CMatrix::from_fn(n, rank.max(1), |_, _| complex_gaussian(rng));
    let m = &g * &g.adjoint();
    let t = m.trace().re;
    make_density(m.scale(1.0 / t), dims)
}

/// Random local density matrix of dimension `d`.
pub fn random_local_state(d: usize, rng: &mut impl Rng) -> CMatrix {
    let g = CMatrix::from_fn(d, d, |_, _| complex_gaussian(rng));
    let m = &g * &g.adjoint();
    let t = m.trace().re;
    m.scale(1.0 / t)
}

/// Ideal measurement in a random orthonormal basis, with `outcomes` groups of basis vectors.
pub fn random_ideal_family(name: &str, d: usize, outcomes: usize, rng: &mut impl Rng) -> Result<OperationFamily> {
    let k = outcomes.clamp(1, d);
    let cols = random_unitary_columns(d, rng);
    let mut ops = vec![CMatrix::zeros(d, d); k];
    for (i, v) in cols.iter().enumerate() {
        let g = if i < k { i } else { rng.random_range(0..k) };
        ops[g] = &ops[g] + &CMatrix::projector_onto(v);
    }
    let labels = (0..k).map(|i| OutcomeLabel::named(format!("o{i}"))).collect();
    OperationFamily::new(name, FamilyKind::Ideal, labels, ops)
}

/// Non-ideal measurement `R_i = U_i sqrt(M_i)` for a random POVM with `outcomes` effects.
pub fn random_general_family(name: &str, d: usize, outcomes: usize, rng: &mut impl Rng) -> Result<OperationFamily> {
    let k = outcomes.max(1);
    let basis = random_unitary_columns(d, rng);
    // Effects diagonal in one random basis, weights from a random stochastic matrix.
    let mut weights = vec![vec![0.0; d]; k];
    for j in 0..d {
        let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
        let s: f64 = raw.iter().sum();
        for i in 0..k {
            weights[i][j] = raw[i] / s;
        }
    }
    let mut ops = Vec::with_capacity(k);
    for row in &weights {
        let root = basis
            .iter()
            .zip(row)
            .fold(CMatrix::zeros(d, d), |acc, (v, w)| acc + CMatrix::projector_onto(v).scale(w.sqrt()));
        let u = random_unitary_columns(d, rng);
        let u = CMatrix::from_fn(d, d, |r, col| u[col][r]);
        ops.push(&u * &root);
    }
    let labels = (0..k).map(|i| OutcomeLabel::named(format!("o{i}"))).collect();
    OperationFamily::new(name, FamilyKind::General, labels, ops)
}

/// Random qubit projective observable along a uniformly random Bloch direction.
pub fn random_qubit_observable(name: &str, rng: &mut impl Rng) -> Result<OperationFamily> {
    let n = [gaussian(rng), gaussian(rng), gaussian(rng)];
    Ok(crate::measurement::Observable::new(name, crate::measurement::spin_along(n)?)?.family())
}

/// Context of random two-outcome ideal measurements (`n1`, `n2` per side).
pub fn random_context(dims: DimPair, n1: usize, n2: usize, len1: usize, len2: usize, rng: &mut impl Rng) -> Result<Context> {
    let mut side = |prefix: &str, d: usize, n: usize| -> Result<Vec<OperationFamily>> {
        (0..n).map(|i| random_ideal_family(&format!("{prefix}{}", i + 1), d, 2, rng)).collect()
    };
    let s1 = side("A", dims.d1, n1)?;
    let s2 = side("B", dims.d2, n2)?;
    Context::new(s1, s2, len1, len2)
}

/// Random context mixing ideal and non-ideal measurements with two or three outcomes.
pub fn random_mixed_context(
    dims: DimPair,
    n1: usize,
    n2: usize,
    len1: usize,
    len2: usize,
    rng: &mut impl Rng,
) -> Result<Context> {
    let mut side = |prefix: &str, d: usize, n: usize| -> Result<Vec<OperationFamily>> {
        (0..n)
            .map(|i| {
                let name = format!("{prefix}{}", i + 1);
                let k = rng.random_range(2..=3usize.min(d.max(2)));
                if rng.random_bool(0.5) {
                    random_ideal_family(&name, d, k, rng)
                } else {
                    random_general_family(&name, d, k, rng)
                }
            })
            .collect()
    };
    let s1 = side("A", dims.d1, n1)?;
    let s2 = side("B", dims.d2, n2)?;
    Context::new(s1, s2, len1, len2)
}
