use nonloc_core::hilbert::{
    c, compress_bipartite, cr, eigh, flip, kron, partial_trace, partial_transpose_second, psd_min_eigenvalue,
    spectral_decompose, CMatrix, DimPair, Side,
};
use nonloc_core::Error;
use proptest::prelude::*;

fn random_matrix(n: usize, entries: &[f64]) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| c(entries[2 * (i * n + j)], entries[2 * (i * n + j) + 1]))
}

fn hermitian(n: usize, entries: &[f64]) -> CMatrix {
    let m = random_matrix(n, entries);
    (&m + &m.adjoint()).scale(0.5)
}

#[test]
fn flip_squares_to_identity_with_symmetric_spectrum() {
    for d in 2..=5 {
        let f = flip(d);
        assert!((&f * &f).max_abs_diff(&CMatrix::identity(d * d)) < 1e-15);
        assert!((f.trace().re - d as f64).abs() < 1e-15);
        let s = spectral_decompose(&f).unwrap();
        let v = s.values();
        assert!(v.len() == 2 && (v[0] - 1.0).abs() < 1e-14 && (v[1] + 1.0).abs() < 1e-14);
        assert_eq!(s.pairs[0].rank(), d * (d + 1) / 2);
        assert_eq!(s.pairs[1].rank(), d * (d - 1) / 2);
    }
}

#[test]
fn partial_transpose_of_flip_is_unnormalized_max_entangled_projector() {
    for d in 2..=4 {
        let dims = DimPair::new(d, d).unwrap();
        let pt = partial_transpose_second(&flip(d), dims).unwrap();
        let phi: Vec<_> = (0..d * d).map(|r| cr(if r / d == r % d { 1.0 } else { 0.0 })).collect();
        let want = CMatrix::projector_onto(&phi);
        assert!(pt.max_abs_diff(&want) < 1e-15);
    }
}

#[test]
fn partial_trace_rejects_wrong_shape() {
    let dims = DimPair::new(2, 3).unwrap();
    assert!(matches!(partial_trace(&CMatrix::identity(5), dims, Side::First), Err(Error::DimensionMismatch(_))));
    assert!(DimPair::new(0, 2).is_err());
}

#[test]
fn pauli_like_norms_and_degenerate_spectra() {
    let x = CMatrix::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    assert!((x.operator_norm() - 1.0).abs() < 1e-14);
    let d = CMatrix::from_real_diag(&[2.0, 2.0, -1.0]);
    let s = spectral_decompose(&d).unwrap();
    assert_eq!(s.pairs.len(), 2);
    assert_eq!(s.pairs[0].rank(), 2);
    assert!(s.reconstruct().max_abs_diff(&d) < 1e-14);
}

#[test]
fn non_hermitian_input_is_rejected() {
    let m = CMatrix::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
    assert!(matches!(spectral_decompose(&m), Err(Error::NotHermitian(_))));
}

#[test]
fn compress_with_full_basis_is_identity_map() {
    let m = kron(&CMatrix::from_real_diag(&[0.3, 0.7]), &CMatrix::from_real_diag(&[0.1, 0.2, 0.7]));
    let e = |n: usize| (0..n).map(|i| (0..n).map(|j| cr(if i == j { 1.0 } else { 0.0 })).collect()).collect::<Vec<_>>();
    assert!(compress_bipartite(&m, &e(2), &e(3)).max_abs_diff(&m) < 1e-15);
    let small = compress_bipartite(&m, &e(2)[..1], &e(3)[..2]);
    assert_eq!((small.rows(), small.cols()), (2, 2));
    assert!((small.get(1, 1).re - 0.3 * 0.2).abs() < 1e-15);
}

proptest! {
    #[test]
    fn kron_mixed_product(a in prop::collection::vec(-1.0f64..1.0, 8), b in prop::collection::vec(-1.0f64..1.0, 18),
                          cc in prop::collection::vec(-1.0f64..1.0, 8), dd in prop::collection::vec(-1.0f64..1.0, 18)) {
        let (a, b, cm, dm) = (random_matrix(2, &a), random_matrix(3, &b), random_matrix(2, &cc), random_matrix(3, &dd));
        let lhs = &kron(&a, &b) * &kron(&cm, &dm);
        let rhs = kron(&(&a * &cm), &(&b * &dm));
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-13);
    }

    #[test]
    fn partial_traces_of_products(a in prop::collection::vec(-1.0f64..1.0, 8), b in prop::collection::vec(-1.0f64..1.0, 18)) {
        let (a, b) = (random_matrix(2, &a), random_matrix(3, &b));
        let dims = DimPair::new(2, 3).unwrap();
        let k = kron(&a, &b);
        let first = partial_trace(&k, dims, Side::First).unwrap();
        let second = partial_trace(&k, dims, Side::Second).unwrap();
        prop_assert!(first.max_abs_diff(&a.scale_c(b.trace())) < 1e-13);
        prop_assert!(second.max_abs_diff(&b.scale_c(a.trace())) < 1e-13);
    }

    #[test]
    fn spectral_reconstruction(e in prop::collection::vec(-1.0f64..1.0, 32)) {
        let h = hermitian(4, &e);
        let s = spectral_decompose(&h).unwrap();
        prop_assert!(s.reconstruct().max_abs_diff(&h) < 1e-12);
        let ranks: usize = s.pairs.iter().map(|p| p.rank()).sum();
        prop_assert_eq!(ranks, 4);
        let (vals, _) = eigh(&h).unwrap();
        prop_assert!((psd_min_eigenvalue(&h).unwrap() - vals[3]).abs() < 1e-12);
        prop_assert!((vals.iter().sum::<f64>() - h.trace().re).abs() < 1e-12);
    }

    #[test]
    fn partial_transpose_is_involutive(e in prop::collection::vec(-1.0f64..1.0, 72)) {
        let m = random_matrix(6, &e);
        let dims = DimPair::new(2, 3).unwrap();
        let twice = partial_transpose_second(&partial_transpose_second(&m, dims).unwrap(), dims).unwrap();
        prop_assert!(twice.max_abs_diff(&m) < 1e-15);
    }
}
