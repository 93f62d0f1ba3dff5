use nonloc_core::hilbert::{cr, CMatrix, DimPair, Side};
use nonloc_core::hvmodels::*;
use nonloc_core::measurement::{pauli, smeared_povm, Observable, OperationFamily, OutcomeLabel, Povm};
use nonloc_core::sampling::{random_density, random_local_state, random_mixed_context, rng};
use nonloc_core::states::{collapse_local, maximally_mixed, mixture, product, singlet, werner, DensityMatrix};
use nonloc_core::Error;
use proptest::prelude::*;
use rand::Rng;

const BUDGET: usize = DEFAULT_ATOM_BUDGET;

fn sigma(name: &str, axis: char) -> OperationFamily {
    Observable::new(name, pauli(axis).unwrap()).unwrap().family()
}

fn zx_context(len1: usize, len2: usize) -> Context {
    Context::new(vec![sigma("A1", 'z'), sigma("A2", 'x')], vec![sigma("B1", 'z'), sigma("B2", 'x')], len1, len2).unwrap()
}

fn ket(bits: &[usize]) -> CMatrix {
    let n = 1 << bits.len();
    let idx = bits.iter().fold(0, |acc, b| acc * 2 + b);
    let mut v = vec![cr(0.0); n];
    v[idx] = cr(1.0);
    CMatrix::projector_onto(&v)
}

fn random_case(seed: u64) -> (DensityMatrix, Context) {
    let mut r = rng(seed);
    let dims = DimPair::new(r.random_range(2..=3), 2).unwrap();
    let rank = r.random_range(1..=dims.total());
    let rho = random_density(dims, rank, &mut r).unwrap();
    let n1 = r.random_range(1..=2);
    let n2 = r.random_range(1..=2);
    let l1 = r.random_range(1..=2);
    let l2 = r.random_range(1..=2);
    let ctx = random_mixed_context(dims, n1, n2, l1, l2, &mut r).unwrap();
    (rho, ctx)
}

#[test]
fn trivial_model_of_half_mixed_qubit_has_two_equal_atoms() {
    let dims = DimPair::new(2, 2).unwrap();
    let rho = nonloc_core::states::make_density(
        nonloc_core::hilbert::kron(&CMatrix::identity(2).scale(0.5), &ket(&[0])),
        dims,
    )
    .unwrap();
    let ctx = Context::new(vec![sigma("A", 'z')], vec![sigma("B", 'z')], 1, 1).unwrap();
    let m = trivial_causal_model(&rho, &ctx, BUDGET).unwrap();
    assert_eq!(m.num_atoms(), 2);
    assert_eq!(m.weights(), &[0.5, 0.5]);
    assert!(verify_model(&m, &rho, 1e-12).passed);
}

#[test]
fn trivial_model_of_singlet_has_anticorrelated_atoms() {
    let rho = singlet();
    let ctx = Context::new(vec![sigma("A", 'z')], vec![sigma("B", 'z')], 1, 1).unwrap();
    let m = trivial_causal_model(&rho, &ctx, BUDGET).unwrap();
    assert_eq!(m.num_atoms(), 2);
    for a in 0..2 {
        assert!((m.weights()[a] - 0.5).abs() < 1e-15);
        let (x, y) = m.outcomes(a, &[0], &[0]).unwrap();
        assert_ne!(x[0], y[0]);
    }
    assert!(verify_model(&m, &rho, 1e-12).passed);
}

#[test]
fn trivial_model_reproduces_random_cases_exactly() {
    for seed in 0..25 {
        let (rho, ctx) = random_case(seed);
        let m = trivial_causal_model(&rho, &ctx, BUDGET).unwrap();
        let rep = verify_model(&m, &rho, 1e-12);
        assert!(rep.passed, "seed {seed}: {rep:?}");
        assert!(rep.causal && !rep.local);
    }
}

#[test]
fn atom_budget_is_enforced() {
    let (rho, ctx) = random_case(3);
    match trivial_causal_model(&rho, &ctx, 1) {
        Err(Error::AtomBudgetExceeded { needed, budget: 1 }) => assert!(needed > 1),
        other => panic!("expected budget error, got {other:?}"),
    }
}

#[test]
fn corrupted_weights_fail_verification_with_a_sequence() {
    let rho = werner(2).unwrap();
    let m = trivial_causal_model(&rho, &zx_context(1, 1), BUDGET).unwrap();
    let mut w = m.weights().to_vec();
    let last = w.len() - 1;
    let shift = w[0].min(w[last]) * 0.5;
    w[0] -= shift;
    w[last] += shift;
    let bad = m.with_weights(w).unwrap();
    let rep = verify_model(&bad, &rho, 1e-10);
    assert!(!rep.passed);
    assert!(rep.max_deviation > 1e-3);
    assert!(rep.worst_sequence.is_some());
}

#[test]
fn dimension_mismatch_is_reported_not_raised() {
    let m = trivial_causal_model(&singlet(), &zx_context(1, 1), BUDGET).unwrap();
    let rep = verify_model(&m, &maximally_mixed(3, 2).unwrap(), 1e-10);
    assert!(!rep.passed);
    assert!(!rep.problems.is_empty());
}

#[test]
fn mixing_product_models_gives_classically_correlated_model() {
    let ctx = zx_context(2, 2);
    let m00 = product_state_model(&ket(&[0]), &ket(&[0]), &ctx, BUDGET).unwrap();
    let m11 = product_state_model(&ket(&[1]), &ket(&[1]), &ctx, BUDGET).unwrap();
    let mixed = mix_models(&[m00, m11], &[0.5, 0.5]).unwrap();
    assert_eq!(mixed.shape(), Shape::LocalCausal);
    let target = nonloc_core::states::make_density(
        ket(&[0, 0]).scale(0.5) + ket(&[1, 1]).scale(0.5),
        DimPair::new(2, 2).unwrap(),
    )
    .unwrap();
    let rep = verify_model(&mixed, &target, 1e-12);
    assert!(rep.passed && rep.local, "{rep:?}");
}

#[test]
fn mixing_a_single_model_changes_nothing() {
    let (rho, ctx) = random_case(7);
    let m = trivial_causal_model(&rho, &ctx, BUDGET).unwrap();
    let same = mix_models(std::slice::from_ref(&m), &[1.0]).unwrap();
    let (a, b) = (m.node_table(), same.node_table());
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() == 0.0));
}

#[test]
fn mixing_is_convex_for_local_models() {
    let mut r = rng(11);
    let ctx = zx_context(2, 1);
    let (a1, b1) = (random_local_state(2, &mut r), random_local_state(2, &mut r));
    let (a2, b2) = (random_local_state(2, &mut r), random_local_state(2, &mut r));
    let rho1 = product(&a1, &b1).unwrap();
    let rho2 = product(&a2, &b2).unwrap();
    let m1 = product_state_model(&a1, &b1, &ctx, BUDGET).unwrap();
    let m2 = product_state_model(&a2, &b2, &ctx, BUDGET).unwrap();
    let m = mix_models(&[m1, m2], &[0.3, 0.7]).unwrap();
    let target = mixture(&[rho1, rho2], &[0.3, 0.7]).unwrap();
    assert!(verify_model(&m, &target, 1e-12).passed);
}

#[test]
fn mixing_rejects_shape_and_context_mismatch() {
    let ctx = zx_context(1, 1);
    let local = product_state_model(&ket(&[0]), &ket(&[0]), &ctx, BUDGET).unwrap();
    let causal = trivial_causal_model(&singlet(), &ctx, BUDGET).unwrap();
    assert!(matches!(mix_models(&[local.clone(), causal], &[0.5, 0.5]), Err(Error::ModelMismatch(_))));
    let other = product_state_model(&ket(&[0]), &ket(&[0]), &zx_context(2, 1), BUDGET).unwrap();
    assert!(matches!(mix_models(&[local, other], &[0.5, 0.5]), Err(Error::ModelMismatch(_))));
}

#[test]
fn separable_model_matches_its_state() {
    let ctx = zx_context(2, 2);
    let mut r = rng(5);
    let comps: Vec<(f64, CMatrix, CMatrix)> =
        [0.2, 0.5, 0.3].iter().map(|&p| (p, random_local_state(2, &mut r), random_local_state(2, &mut r))).collect();
    let m = separable_model(&comps, &ctx, BUDGET).unwrap();
    let states: Vec<DensityMatrix> = comps.iter().map(|(_, a, b)| product(a, b).unwrap()).collect();
    let rho = mixture(&states, &[0.2, 0.5, 0.3]).unwrap();
    assert!(verify_model(&m, &rho, 1e-12).passed);
}

#[test]
fn collapsing_singlet_model_on_up_gives_up_down() {
    let rho = singlet();
    let ctx = zx_context(2, 2);
    let m = trivial_causal_model(&rho, &ctx, BUDGET).unwrap();
    let plus = 0;
    let c = collapse_model(&m, Side::First, 0, plus).unwrap();
    let total: f64 = c.weights().iter().sum();
    assert!((total - 1.0).abs() < 1e-12);
    let expected = nonloc_core::states::make_density(ket(&[0, 1]), DimPair::new(2, 2).unwrap()).unwrap();
    let rep = verify_model(&c, &expected, 1e-10);
    assert!(rep.passed, "{rep:?}");
    let via_state = collapse_local(&rho, Side::First, &ctx.observables(Side::First)[0], plus).unwrap();
    assert!(verify_model(&c, &via_state, 1e-10).passed);
}

#[test]
fn collapsing_on_certain_outcome_keeps_all_atoms() {
    let dims = DimPair::new(2, 2).unwrap();
    let rho = nonloc_core::states::make_density(ket(&[0, 0]), dims).unwrap();
    let ctx = zx_context(2, 2);
    let m = product_state_model(&ket(&[0]), &ket(&[0]), &ctx, BUDGET).unwrap();
    let c = collapse_model(&m, Side::Second, 0, 0).unwrap();
    assert_eq!(c.num_atoms(), m.num_atoms());
    assert!(verify_model(&c, &rho, 1e-12).passed);
}

#[test]
fn collapsing_on_impossible_outcome_is_an_error() {
    let dims = DimPair::new(2, 2).unwrap();
    let rho = nonloc_core::states::make_density(ket(&[0, 0]), dims).unwrap();
    let m = trivial_causal_model(&rho, &zx_context(2, 2), BUDGET).unwrap();
    assert!(matches!(collapse_model(&m, Side::First, 0, 1), Err(Error::ZeroProbabilityBranch(_))));
    assert!(matches!(collapse_model(&m, Side::Second, 0, 0), Err(Error::ModelMismatch(_))));
}

#[test]
fn collapse_matches_collapsed_state_on_random_cases() {
    for seed in 0..12 {
        let mut r = rng(100 + seed);
        let dims = DimPair::new(2, 2).unwrap();
        let rho = random_density(dims, 4, &mut r).unwrap();
        let ctx = random_mixed_context(dims, 2, 2, 2, 2, &mut r).unwrap();
        let (side, m) = if seed % 2 == 0 {
            (Side::First, trivial_causal_model(&rho, &ctx, BUDGET).unwrap())
        } else {
            let a = random_local_state(2, &mut r);
            let b = random_local_state(2, &mut r);
            let rho_p = product(&a, &b).unwrap();
            let m = product_state_model(&a, &b, &ctx, BUDGET).unwrap();
            let c = collapse_model(&m, Side::Second, 1, 0).unwrap();
            let target = collapse_local(&rho_p, Side::Second, &ctx.observables(Side::Second)[1], 0).unwrap();
            assert!(verify_model(&c, &target, 1e-10).passed, "seed {seed}");
            continue;
        };
        let c = collapse_model(&m, side, 1, 1).unwrap();
        let target = collapse_local(&rho, side, &ctx.observables(side)[1], 1).unwrap();
        let rep = verify_model(&c, &target, 1e-10);
        assert!(rep.passed, "seed {seed}: {rep:?}");
    }
}

#[test]
fn coupling_at_zero_correlation_matches_product_mixing() {
    let ctx = zx_context(2, 2);
    let mm = maximally_mixed(2, 2).unwrap();
    let half = CMatrix::identity(2).scale(0.5);
    let lhv1 = product_state_model(&half, &half, &ctx.with_lengths(1, 1), BUDGET).unwrap();
    let f1 = PureStateFamily::build(&ctx, Side::First, BUDGET).unwrap();
    let f2 = PureStateFamily::build(&ctx, Side::Second, BUDGET).unwrap();
    let m = couple_lchv_d2(&lhv1, &f1, &f2, BUDGET).unwrap();
    assert_eq!(m.shape(), Shape::LocalCausal);
    let rep = verify_model(&m, &mm, 1e-10);
    assert!(rep.passed, "{rep:?}");
    let reference = product_state_model(&half, &half, &ctx, BUDGET).unwrap();
    let (a, b) = (m.node_table(), reference.node_table());
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
}

#[test]
fn coupled_model_follow_ups_see_pure_product_states() {
    let ctx = zx_context(2, 2);
    let half = CMatrix::identity(2).scale(0.5);
    let lhv1 = product_state_model(&half, &half, &ctx.with_lengths(1, 1), BUDGET).unwrap();
    let f1 = PureStateFamily::build(&ctx, Side::First, BUDGET).unwrap();
    let f2 = PureStateFamily::build(&ctx, Side::Second, BUDGET).unwrap();
    let m = couple_lchv_d2(&lhv1, &f1, &f2, BUDGET).unwrap();
    // After A1 = +1 and B2 = -1 the conditional statistics are those of |0> ⊗ |->.
    let c = collapse_model(&collapse_model(&m, Side::First, 0, 0).unwrap(), Side::Second, 1, 1).unwrap();
    let minus = {
        let v = [cr(std::f64::consts::FRAC_1_SQRT_2), cr(-std::f64::consts::FRAC_1_SQRT_2)];
        CMatrix::projector_onto(&v)
    };
    let target = product(&ket(&[0]), &minus).unwrap();
    assert!(verify_model(&c, &target, 1e-10).passed);
}

#[test]
fn coupling_rejects_non_rank_one_first_measurements() {
    let mut r = rng(2);
    let ctx = random_mixed_context(DimPair::new(3, 3).unwrap(), 1, 1, 2, 2, &mut r).unwrap();
    assert!(matches!(PureStateFamily::build(&ctx, Side::First, BUDGET), Err(Error::InvalidMeasurement(_))));
}

#[test]
fn indicator_kernels_preserve_distributions() {
    let (rho, ctx) = random_case(21);
    let m = trivial_causal_model(&rho, &ctx, BUDGET).unwrap();
    let s = deterministic_to_stochastic(&m);
    assert!(s.is_degenerate());
    assert_eq!(s.num_atoms(), m.num_atoms());
    let (a, b) = (m.node_table(), s.node_table());
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-14));
    assert!(verify_model(&s, &rho, 1e-12).passed);
}

#[test]
fn single_atom_quantum_model_is_deterministic_only_for_zero_one_tables() {
    let dims = DimPair::new(2, 2).unwrap();
    let rho = nonloc_core::states::make_density(ket(&[0, 1]), dims).unwrap();
    let ctx = Context::new(vec![sigma("A", 'z')], vec![sigma("B", 'z')], 1, 1).unwrap();
    let q = quantum_kernel_model(&rho, &ctx).unwrap();
    assert!(q.is_degenerate());
    let zx = quantum_kernel_model(&rho, &zx_context(1, 1)).unwrap();
    assert!(!zx.is_degenerate());
}

#[test]
fn quantum_kernel_model_of_werner_two_becomes_deterministic() {
    let rho = werner(2).unwrap();
    let ctx = zx_context(1, 1);
    let q = quantum_kernel_model(&rho, &ctx).unwrap();
    assert_eq!(q.num_atoms(), 1);
    let d = stochastic_to_deterministic(&q, BUDGET).unwrap();
    assert!(d.num_atoms() > 1);
    let rep = verify_model(&d, &rho, 1e-12);
    assert!(rep.passed, "{rep:?}");
}

#[test]
fn chain_rule_over_independent_outcome_variables() {
    // P(X_{A1,A2} = (a1, a2)) = Q_{A1}(a1) Q_{A1 A2}(a2 | a1) on a single atom.
    let rho = werner(2).unwrap();
    let unit = OperationFamily::new(
        "B0",
        nonloc_core::measurement::FamilyKind::Ideal,
        vec![OutcomeLabel::named("1")],
        vec![CMatrix::identity(2)],
    )
    .unwrap();
    let ctx = Context::new(vec![sigma("A1", 'z'), sigma("A2", 'x')], vec![unit], 2, 1).unwrap();
    let q = quantum_kernel_model(&rho, &ctx).unwrap();
    let d = stochastic_to_deterministic(&q, BUDGET).unwrap();
    // Repeating an ideal measurement is certain, so only 6 of the 10 slots are free.
    assert_eq!(d.num_atoms(), 1 << 6);
    let l = q.layout();
    for a1 in 0..2 {
        for a2 in 0..2 {
            let first = q.kernel1(0, l.tree1.slot(0, 0))[a1];
            let node = l.tree1.child(0, 0, a1);
            let second = q.kernel1(0, l.tree1.slot(node, 1))[a2];
            let p = d.sequence_probability(&[(0, a1), (1, a2)], &[]).unwrap();
            assert!((p - first * second).abs() < 1e-12);
        }
    }
}

#[test]
fn stochastic_to_deterministic_respects_budget() {
    let q = quantum_kernel_model(&werner(2).unwrap(), &zx_context(2, 2)).unwrap();
    assert!(matches!(stochastic_to_deterministic(&q, 1000), Err(Error::AtomBudgetExceeded { .. })));
}

#[test]
fn responses_never_depend_on_later_choices() {
    let (_, ctx) = random_case(4);
    let rho = random_density(ctx.dims(), 2, &mut rng(9)).unwrap();
    let ctx = ctx.with_lengths(2, 2);
    let m = trivial_causal_model(&rho, &ctx, BUDGET).unwrap();
    let n1 = ctx.observables(Side::First).len();
    let n2 = ctx.observables(Side::Second).len();
    for a in 0..m.num_atoms() {
        for o in 0..n1 {
            let (base, _) = m.outcomes(a, &[o], &[]).unwrap();
            for later in 0..n1 {
                let (ext, _) = m.outcomes(a, &[o, later], &[]).unwrap();
                assert_eq!(ext[0], base[0]);
                for b in 0..n2 {
                    let (with_b, _) = m.outcomes(a, &[o, later], &[b]).unwrap();
                    assert_eq!(with_b, ext);
                }
            }
        }
    }
}

fn smeared_z(t: &[Vec<f64>]) -> Povm {
    smeared_povm(&Observable::new("z", pauli('z').unwrap()).unwrap(), t).unwrap()
}

#[test]
fn povm_extension_on_separable_model() {
    let ctx = zx_context(1, 1);
    let mut r = rng(8);
    let (a, b) = (random_local_state(2, &mut r), random_local_state(2, &mut r));
    let rho = product(&a, &b).unwrap();
    let lhv1 = product_state_model(&a, &b, &ctx, BUDGET).unwrap();
    let t = vec![vec![0.8, 0.3], vec![0.2, 0.7]];
    let s = extend_commuting_povm(&lhv1, &smeared_z(&t), &smeared_z(&t)).unwrap();
    assert!(s.kernel_error().unwrap() <= 1e-14);
    let rep = verify_model(&s, &rho, 1e-10);
    assert!(rep.passed, "{rep:?}");
}

#[test]
fn povm_extension_with_identity_smearing_is_degenerate() {
    let ctx = zx_context(1, 1);
    let half = CMatrix::identity(2).scale(0.5);
    let lhv1 = product_state_model(&half, &ket(&[1]), &ctx, BUDGET).unwrap();
    let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let s = extend_commuting_povm(&lhv1, &smeared_z(&id), &smeared_z(&id)).unwrap();
    assert!(s.is_degenerate());
    let back = stochastic_to_deterministic(&s, BUDGET).unwrap();
    assert_eq!(back.num_atoms(), lhv1.num_atoms());
}

#[test]
fn povm_extension_errors() {
    let ctx = Context::new(vec![sigma("A1", 'x')], vec![sigma("B1", 'z')], 1, 1).unwrap();
    let half = CMatrix::identity(2).scale(0.5);
    let lhv1 = product_state_model(&half, &half, &ctx, BUDGET).unwrap();
    let t = vec![vec![0.9, 0.4], vec![0.1, 0.6]];
    assert!(matches!(
        extend_commuting_povm(&lhv1, &smeared_z(&t), &smeared_z(&t)),
        Err(Error::MissingBasisObservable(_))
    ));
    let x = pauli('x').unwrap();
    let z = pauli('z').unwrap();
    let id = CMatrix::identity(2);
    let effects = vec![(&id + &z).scale(0.25), (&id + &x).scale(0.25), (&id - &z).scale(0.25), (&id - &x).scale(0.25)];
    let labels = (0..4).map(|i| OutcomeLabel::named(format!("e{i}"))).collect();
    let bad = Povm::new(labels, effects).unwrap();
    assert!(matches!(extend_commuting_povm(&lhv1, &bad, &smeared_z(&t)), Err(Error::NotCommuting(_))));
}

#[test]
fn two_valued_povm_is_always_accepted() {
    let ctx = Context::new(vec![sigma("A1", 'x')], vec![sigma("B1", 'z')], 1, 1).unwrap();
    let half = CMatrix::identity(2).scale(0.5);
    let lhv1 = product_state_model(&half, &half, &ctx, BUDGET).unwrap();
    let x = pauli('x').unwrap();
    let e = (&CMatrix::identity(2) + &x.scale(0.6)).scale(0.5);
    let f = &CMatrix::identity(2) - &e;
    let two = Povm::new(vec![OutcomeLabel::named("yes"), OutcomeLabel::named("no")], vec![e, f]).unwrap();
    let t = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let s = extend_commuting_povm(&lhv1, &two, &smeared_z(&t)).unwrap();
    assert!(verify_model(&s, &maximally_mixed(2, 2).unwrap(), 1e-10).passed);
}

#[test]
fn kernel_normalization_is_exact_for_rational_smearing() {
    use num_rational::Ratio;
    // Kernels are columns of the smearing table, so they sum to one exactly.
    let t = [[Ratio::new(4i64, 5), Ratio::new(3, 10)], [Ratio::new(1, 5), Ratio::new(7, 10)]];
    for j in 0..2 {
        assert_eq!(t[0][j] + t[1][j], Ratio::from_integer(1));
    }
    let tf: Vec<Vec<f64>> = t.iter().map(|r| r.iter().map(|q| *q.numer() as f64 / *q.denom() as f64).collect()).collect();
    let ctx = zx_context(1, 1);
    let half = CMatrix::identity(2).scale(0.5);
    let lhv1 = product_state_model(&half, &half, &ctx, BUDGET).unwrap();
    let s = extend_commuting_povm(&lhv1, &smeared_z(&tf), &smeared_z(&tf)).unwrap();
    assert!(s.kernel_error().unwrap() <= 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn round_trip_preserves_distributions(seed in 0u64..10_000) {
        let (rho, ctx) = random_case(seed);
        let m = trivial_causal_model(&rho, &ctx, BUDGET).unwrap();
        let back = stochastic_to_deterministic(&deterministic_to_stochastic(&m), BUDGET).unwrap();
        let (a, b) = (m.node_table(), back.node_table());
        prop_assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-12));
    }

    #[test]
    fn collapsed_weights_total_one(seed in 0u64..10_000) {
        let (rho, ctx) = random_case(seed);
        let ctx = ctx.with_lengths(2, ctx.max_len(Side::Second));
        let m = trivial_causal_model(&rho, &ctx, BUDGET).unwrap();
        let fam = &ctx.observables(Side::First)[0];
        let outcome = (0..fam.len()).find(|&x| m.first_step_probability(Side::First, 0, x) > 1e-9).unwrap();
        let c = collapse_model(&m, Side::First, 0, outcome).unwrap();
        prop_assert!((c.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let target = collapse_local(&rho, Side::First, fam, outcome).unwrap();
        prop_assert!(verify_model(&c, &target, 1e-10).passed);
    }

    #[test]
    fn mixtures_of_verified_models_verify(seed in 0u64..10_000, t in 0.0f64..=1.0) {
        let (rho1, ctx) = random_case(seed);
        let rho2 = random_density(ctx.dims(), 2, &mut rng(seed ^ 0xabcd)).unwrap();
        let m1 = trivial_causal_model(&rho1, &ctx, BUDGET).unwrap();
        let m2 = trivial_causal_model(&rho2, &ctx, BUDGET).unwrap();
        let m = mix_models(&[m1, m2], &[t, 1.0 - t]).unwrap();
        let target = mixture(&[rho1, rho2], &[t, 1.0 - t]).unwrap();
        prop_assert!(verify_model(&m, &target, 1e-12).passed);
    }

    #[test]
    fn stochastic_kernels_are_normalized(seed in 0u64..10_000) {
        let (rho, ctx) = random_case(seed);
        let q = quantum_kernel_model(&rho, &ctx).unwrap();
        prop_assert!(q.kernel_error().unwrap() <= 1e-12);
        prop_assert!(verify_model(&q, &rho, 1e-12).passed);
    }
}
