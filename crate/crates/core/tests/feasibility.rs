use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

use nonloc_core::feasibility::*;
use nonloc_core::hilbert::{kron, CMatrix, DimPair, Side};
use nonloc_core::hvmodels::*;
use nonloc_core::measurement::{pauli, smeared_povm, Observable, OperationFamily};
use nonloc_core::sampling::{gaussian, random_context, random_density, random_local_state, rng};
use nonloc_core::states::{product, singlet, werner, werner_gen, DensityMatrix, WernerParams};
use nonloc_core::Error;
use proptest::prelude::*;
use rand::Rng;

fn sigma(name: &str, axis: char) -> OperationFamily {
    Observable::new(name, pauli(axis).unwrap()).unwrap().family()
}

fn zx_context(len: usize) -> Context {
    Context::new(vec![sigma("A1", 'z'), sigma("A2", 'x')], vec![sigma("B1", 'z'), sigma("B2", 'x')], len, len).unwrap()
}

fn wg(d: usize, c: f64) -> DensityMatrix {
    werner_gen(WernerParams::new(d, c).unwrap()).unwrap()
}

fn qubits() -> DimPair {
    DimPair::new(2, 2).unwrap()
}

fn table_of(rho: &DensityMatrix, ctx: &Context) -> CorrelationTable {
    let a = ctx.observables(Side::First);
    let b = ctx.observables(Side::Second);
    correlation_table(rho, [a[0].operators(), a[1].operators()], [b[0].operators(), b[1].operators()]).unwrap()
}

#[test]
fn strategy_counts() {
    let one = Context::new(vec![sigma("A", 'z')], vec![sigma("B", 'z')], 1, 1).unwrap();
    assert_eq!(enumerate_strategies(&zx_context(1), 1, DEFAULT_STRATEGY_BUDGET).unwrap().num_pairs(), 16);
    assert_eq!(enumerate_strategies(&one, 1, DEFAULT_STRATEGY_BUDGET).unwrap().num_pairs(), 4);
    let s = enumerate_strategies(&zx_context(2), 2, 1 << 20).unwrap();
    assert_eq!((s.side1.len(), s.side2.len()), (1024, 1024));
}

#[test]
fn strategies_are_distinct() {
    let s = enumerate_strategies(&zx_context(2), 2, 1 << 20).unwrap();
    let set: std::collections::HashSet<_> = s.side1.iter().collect();
    assert_eq!(set.len(), s.side1.len());
}

#[test]
fn strategy_budget_reports_count() {
    match enumerate_strategies(&zx_context(2), 2, 1000) {
        Err(Error::BudgetExceeded { needed, budget }) => {
            assert_eq!(needed, 1024 * 1024);
            assert_eq!(budget, 1000);
        }
        other => panic!("expected budget error, got {other:?}"),
    }
    assert!(matches!(lchv_feasibility(&singlet(), &zx_context(2), 2, 100, LP_TOL), Err(Error::BudgetExceeded { .. })));
}

#[test]
fn local_strategy_tables_obey_chsh_bound() {
    let s = enumerate_strategies(&zx_context(1), 1, DEFAULT_STRATEGY_BUDGET).unwrap();
    for st in s.pairs() {
        let mut p = [[[[0.0; 2]; 2]; 2]; 2];
        for x in 0..2 {
            for y in 0..2 {
                p[x][y][st.side1[x] as usize][st.side2[y] as usize] = 1.0;
            }
        }
        let v = max_chsh_facet(&p);
        assert!(v <= 2.0, "strategy {st:?} gives {v}");
        assert_eq!(bell_polytope_oracle(&p, 1e-12).unwrap(), PolytopeMembership::Inside);
    }
}

#[test]
fn singlet_closed_form_chsh() {
    let id = CMatrix::identity(2);
    let angles = [0.0, FRAC_PI_2, FRAC_PI_4, -FRAC_PI_4];
    let s = ChshSettings::from_angles(&id, &id, angles).unwrap();
    let v = chsh_value(&singlet(), &s).unwrap();
    // E(a, b) = -cos(θa - θb) for the singlet.
    let e = |a: f64, b: f64| -(a - b).cos();
    let expected = e(angles[0], angles[2]) + e(angles[0], angles[3]) + e(angles[1], angles[2]) - e(angles[1], angles[3]);
    assert!((v - expected).abs() < 1e-12);
    assert!((v.abs() - 2.0 * SQRT_2).abs() < 1e-12);
    let flipped = ChshSettings::from_angles(&id, &id, [0.0, FRAC_PI_2, FRAC_PI_4 + std::f64::consts::PI, 3.0 * FRAC_PI_4])
        .unwrap();
    assert!((chsh_value(&singlet(), &flipped).unwrap() - 2.0 * SQRT_2).abs() < 1e-12);
}

#[test]
fn product_diagonal_states_stay_within_two() {
    let mut r = rng(3);
    let id = CMatrix::identity(2);
    for _ in 0..20 {
        let p: f64 = r.random();
        let q: f64 = r.random();
        let rho = product(&CMatrix::from_real_diag(&[p, 1.0 - p]), &CMatrix::from_real_diag(&[q, 1.0 - q])).unwrap();
        let angles = [0, 1, 2, 3].map(|_| r.random_range(0.0..std::f64::consts::TAU));
        let v = chsh_value(&rho, &ChshSettings::from_angles(&id, &id, angles).unwrap()).unwrap();
        assert!(v.abs() <= 2.0 + 1e-12);
    }
}

#[test]
fn settings_validation() {
    let id = CMatrix::identity(2);
    let z = pauli('z').unwrap();
    let bad = z.scale(0.5);
    assert!(matches!(
        ChshSettings::new(id.clone(), id.clone(), [z.clone(), bad], [z.clone(), z.clone()]),
        Err(Error::InvalidMeasurement(_))
    ));
    assert!(matches!(
        ChshSettings::from_angles(&standard_rank_two(3), &CMatrix::from_real_diag(&[1.0, 0.0, 0.0]), [0.0; 4]),
        Err(Error::InvalidMeasurement(_))
    ));
}

#[test]
fn zero_post_selection_probability_is_an_error() {
    // |00><00| has no weight on the span of |2>.
    let mut diag = vec![0.0; 9];
    diag[0] = 1.0;
    let rho = nonloc_core::states::make_density(CMatrix::from_real_diag(&diag), DimPair::new(3, 3).unwrap()).unwrap();
    let t = CMatrix::from_real_diag(&[0.0, 1.0, 1.0]);
    assert!(matches!(post_select(&rho, &t, &t), Err(Error::ZeroProbabilityOutcome(_))));
}

#[test]
fn singlet_maximum_is_tsirelson() {
    let id = CMatrix::identity(2);
    let (v, s) = chsh_maximize(&singlet(), &id, &id, 0).unwrap();
    assert!((v - 2.0 * SQRT_2).abs() < 1e-6);
    assert!((chsh_value(&singlet(), &s).unwrap() - v).abs() < 1e-12);
}

#[test]
fn popescu_values_match_singlet_weight_oracle() {
    // Collapsed W' has singlet weight p = 5/7, 3/4, 2/3 for d = 5, 6, 4.
    for (d, p) in [(5, 5.0 / 7.0), (6, 0.75), (4, 2.0 / 3.0)] {
        let t = standard_rank_two(d);
        let (v, _) = chsh_maximize(&werner(d).unwrap(), &t, &t, 0).unwrap();
        assert!((v - 2.0 * SQRT_2 * p).abs() < 1e-6, "d = {d}: {v}");
    }
}

#[test]
fn maximization_is_deterministic_per_seed() {
    let rho = random_density(qubits(), 2, &mut rng(9)).unwrap();
    let id = CMatrix::identity(2);
    let a = chsh_maximize_angles(&rho, &id, &id, 5).unwrap();
    let b = chsh_maximize_angles(&rho, &id, &id, 5).unwrap();
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert_eq!(a.angles, b.angles);
}

/// Largest CHSH value over real-plane settings: `2 sqrt(s1² + s2²)` for the
/// singular values of the z/x correlation block.
fn plane_oracle(rho: &DensityMatrix) -> f64 {
    let ops = [pauli('z').unwrap(), pauli('x').unwrap()];
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = rho.matrix().trace_product_re(&kron(&ops[i], &ops[j]));
        }
    }
    let frob = c.iter().flatten().map(|v| v * v).sum::<f64>();
    let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
    let disc = (frob * frob - 4.0 * det * det).max(0.0).sqrt();
    let (s1, s2) = (((frob + disc) / 2.0).sqrt(), ((frob - disc) / 2.0).max(0.0).sqrt());
    2.0 * (s1 * s1 + s2 * s2).sqrt()
}

#[test]
fn maximization_matches_plane_oracle() {
    let id = CMatrix::identity(2);
    for seed in 0..10 {
        let rho = random_density(qubits(), 1 + seed as usize % 4, &mut rng(seed)).unwrap();
        let v = chsh_maximize_angles(&rho, &id, &id, 0).unwrap().value;
        assert!((v - plane_oracle(&rho)).abs() < 1e-6, "seed {seed}: {v} vs {}", plane_oracle(&rho));
        assert!(v <= TSIRELSON_GUARD);
    }
}

#[test]
fn polytope_oracle_examples() {
    let uniform = [[[[0.25; 2]; 2]; 2]; 2];
    assert_eq!(bell_polytope_oracle(&uniform, 1e-9).unwrap(), PolytopeMembership::Inside);
    let id = CMatrix::identity(2);
    let opt = chsh_maximize_angles(&singlet(), &id, &id, 0).unwrap();
    let p = table_of(&singlet(), &plane_context(opt.angles).unwrap());
    assert_eq!(bell_polytope_oracle(&p, 1e-9).unwrap(), PolytopeMembership::Outside);
    let mut bad = uniform;
    bad[0][0][0][0] = 0.5;
    assert!(matches!(bell_polytope_oracle(&bad, 1e-9), Err(Error::InvalidInput(_))));
    // A signalling table: B's marginal depends on A's setting.
    let mut sig = [[[[0.0; 2]; 2]; 2]; 2];
    for y in 0..2 {
        sig[0][y][0][0] = 1.0;
        sig[1][y][0][1] = 1.0;
    }
    assert_eq!(bell_polytope_oracle(&sig, 1e-9).unwrap(), PolytopeMembership::Outside);
}

#[test]
fn singlet_at_chsh_optimum_is_infeasible() {
    let id = CMatrix::identity(2);
    let opt = chsh_maximize_angles(&singlet(), &id, &id, 0).unwrap();
    let r = lchv_feasibility(&singlet(), &plane_context(opt.angles).unwrap(), 1, DEFAULT_STRATEGY_BUDGET, LP_TOL).unwrap();
    assert_eq!(r.status, FeasibilityStatus::Infeasible);
    let w = r.witness.unwrap();
    assert!(w.quantum_value > w.local_max + 1e-3);
    assert!(r.model.is_none() && r.certificate.is_empty());
}

#[test]
fn product_states_are_feasible() {
    let mut r = rng(4);
    for k in 1..=2 {
        let rho = product(&random_local_state(2, &mut r), &random_local_state(2, &mut r)).unwrap();
        let ctx = random_context(qubits(), 2, 2, 1, 1, &mut r).unwrap();
        let res = lchv_feasibility(&rho, &ctx, k, DEFAULT_STRATEGY_BUDGET, LP_TOL).unwrap();
        assert_eq!(res.status, FeasibilityStatus::Feasible);
        assert!(res.verification.unwrap().passed);
        let total: f64 = res.certificate.iter().map(|w| w.weight).sum();
        assert!((total - 1.0).abs() < LP_TOL);
        assert!(res.certificate.iter().all(|w| w.weight >= -LP_TOL));
        assert!(res.max_residual <= LP_TOL);
    }
}

#[test]
fn werner_two_is_locally_feasible_for_three_settings() {
    let ctx = random_context(qubits(), 3, 3, 1, 1, &mut rng(12)).unwrap();
    let res = lchv_feasibility(&werner(2).unwrap(), &ctx, 1, DEFAULT_STRATEGY_BUDGET, LP_TOL).unwrap();
    assert_eq!(res.status, FeasibilityStatus::Feasible);
    assert_eq!(res.strategies_per_side, (8, 8));
    let model = res.model.unwrap();
    assert_eq!(model.shape(), Shape::LocalCausal);
    assert!(verify_model(&model, &werner(2).unwrap(), 1e-8).passed);
}

#[test]
fn infeasibility_persists_to_longer_sequences() {
    let id = CMatrix::identity(2);
    let opt = chsh_maximize_angles(&singlet(), &id, &id, 0).unwrap();
    let ctx = plane_context(opt.angles).unwrap();
    for k in 1..=2 {
        let r = lchv_feasibility(&singlet(), &ctx, k, DEFAULT_STRATEGY_BUDGET, LP_TOL).unwrap();
        assert_eq!(r.status, FeasibilityStatus::Infeasible, "k = {k}");
    }
}

#[test]
fn feasibility_rejects_bad_input() {
    let ctx = zx_context(1);
    assert!(matches!(lchv_feasibility(&singlet(), &ctx, 0, DEFAULT_STRATEGY_BUDGET, LP_TOL), Err(Error::InvalidContext(_))));
    assert!(matches!(
        lchv_feasibility(&werner(3).unwrap(), &ctx, 1, DEFAULT_STRATEGY_BUDGET, LP_TOL),
        Err(Error::DimensionMismatch(_))
    ));
}

fn random_instance(seed: u64) -> (DensityMatrix, Context) {
    let mut r = rng(seed);
    let near_optimum = r.random_bool(0.5);
    let rank = if near_optimum { 1 } else { r.random_range(1..=4) };
    let rho = random_density(qubits(), rank, &mut r).unwrap();
    // Settings near the state's planar optimum make violations common.
    let ctx = if near_optimum {
        let id = CMatrix::identity(2);
        let mut angles = chsh_maximize_angles(&rho, &id, &id, 0).unwrap().angles;
        for a in &mut angles {
            *a += 0.15 * gaussian(&mut r);
        }
        plane_context(angles).unwrap()
    } else {
        random_context(qubits(), 2, 2, 1, 1, &mut r).unwrap()
    };
    (rho, ctx)
}

#[test]
fn lp_agrees_with_polytope_oracle() {
    let (mut inside, mut outside, mut skipped) = (0, 0, 0);
    for seed in 0..200 {
        let (rho, ctx) = random_instance(seed);
        let p = table_of(&rho, &ctx);
        if (max_chsh_facet(&p) - 2.0).abs() < 1e-6 {
            skipped += 1;
            continue;
        }
        let oracle = bell_polytope_oracle(&p, LP_TOL).unwrap();
        let lp = lchv_feasibility(&rho, &ctx, 1, DEFAULT_STRATEGY_BUDGET, LP_TOL).unwrap();
        let lp_inside = lp.status == FeasibilityStatus::Feasible;
        assert_eq!(lp_inside, oracle == PolytopeMembership::Inside, "seed {seed}");
        if lp_inside {
            inside += 1;
        } else {
            outside += 1;
        }
    }
    assert!(inside >= 10 && outside >= 10, "inside {inside}, outside {outside}, skipped {skipped}");
}

#[test]
fn classification_of_singlet() {
    let r = classify_evidence(&singlet()).unwrap();
    assert_eq!(r.n_evidence.bound, NBound::Exactly(1));
    assert_eq!(r.entangled, Some(true));
    assert_eq!(r.table_row, "(1,1) entangled pure states");
    assert!((r.n_evidence.witness["chsh"].as_f64().unwrap() - 2.0 * SQRT_2).abs() < 1e-6);
    assert!(r.n_evidence.context_relative);
}

#[test]
fn classification_of_werner_five() {
    let r = classify_evidence(&werner(5).unwrap()).unwrap();
    assert_eq!(r.n_evidence.bound, NBound::AtMost(2));
    assert_eq!(r.small_n_evidence, Some(1));
    assert!(r.table_row.contains("Werner states for d≥5"));
    assert_eq!(r.n_evidence.witness["lp_k1_on_collapsed_state"]["status"], "infeasible");
    assert!((r.werner_c.unwrap() - 1.0 / 25.0).abs() < 1e-12);
}

#[test]
fn classification_of_local_two_qubit_werner() {
    let r = classify_evidence(&wg(2, 0.2)).unwrap();
    assert_eq!(r.entangled, Some(true));
    assert_eq!(r.n_evidence.bound, NBound::Infinite);
    assert!(r.table_row.contains("W_{d=2}"));
    assert!(r.n_evidence.witness["max_deviation"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn classification_of_three_dim_werner_is_open() {
    for c in [1.0 / 24.0 + 1e-6, 0.05, 1.0 / 15.0 - 1e-6] {
        let r = classify_evidence(&wg(3, c)).unwrap();
        assert_eq!(r.n_evidence.bound, NBound::Open, "c = {c}");
        assert_eq!(r.entangled, Some(true));
    }
}

#[test]
fn classification_of_separable_states() {
    let r = classify_evidence(&wg(3, 0.01)).unwrap();
    assert_eq!(r.entangled, Some(false));
    assert_eq!(r.n_evidence.bound, NBound::Infinite);
    let big = nonloc_core::states::maximally_mixed(7, 2).unwrap();
    assert!(matches!(classify_evidence(&big), Err(Error::InvalidInput(_))));
}

#[test]
fn lp_werner_model_couples_to_causal_model() {
    for c in [0.2, 0.25 - 1e-6] {
        let rho = wg(2, c);
        let ctx = zx_context(2);
        let lhv1 = lchv_feasibility(&rho, &ctx, 1, DEFAULT_STRATEGY_BUDGET, LP_TOL).unwrap().model.unwrap();
        let f1 = PureStateFamily::build(&ctx, Side::First, DEFAULT_ATOM_BUDGET).unwrap();
        let f2 = PureStateFamily::build(&ctx, Side::Second, DEFAULT_ATOM_BUDGET).unwrap();
        let m = couple_lchv_d2(&lhv1, &f1, &f2, DEFAULT_ATOM_BUDGET).unwrap();
        let rep = verify_model(&m, &rho, 1e-10);
        assert!(rep.passed, "c = {c}: {rep:?}");
        assert!(rep.local && rep.causal);
    }
}

#[test]
fn commuting_povm_extension_of_lp_model() {
    let rho = werner(2).unwrap();
    let lhv1 = lchv_feasibility(&rho, &zx_context(1), 1, DEFAULT_STRATEGY_BUDGET, LP_TOL).unwrap().model.unwrap();
    let z = Observable::new("z", pauli('z').unwrap()).unwrap();
    let t = vec![vec![0.8, 0.3], vec![0.2, 0.7]];
    let povm = smeared_povm(&z, &t).unwrap();
    let s = extend_commuting_povm(&lhv1, &povm, &povm).unwrap();
    assert!(s.kernel_error().unwrap() <= 1e-14);
    assert!(verify_model(&s, &rho, 1e-10).passed);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn feasible_certificates_verify(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let rho = random_density(qubits(), 4, &mut r).unwrap();
        let ctx = random_context(qubits(), 2, 2, 1, 1, &mut r).unwrap();
        let p = table_of(&rho, &ctx);
        prop_assume!((max_chsh_facet(&p) - 2.0).abs() > 1e-6);
        let res = lchv_feasibility(&rho, &ctx, 1, DEFAULT_STRATEGY_BUDGET, LP_TOL).unwrap();
        if res.status == FeasibilityStatus::Feasible {
            prop_assert!(res.verification.unwrap().passed);
        } else {
            let w = res.witness.unwrap();
            prop_assert!(w.quantum_value > w.local_max);
        }
    }

    #[test]
    fn chsh_optimum_is_bounded(seed in 0u64..10_000) {
        let rho = random_density(qubits(), 1, &mut rng(seed)).unwrap();
        let id = CMatrix::identity(2);
        let v = chsh_maximize_angles(&rho, &id, &id, seed).unwrap().value;
        prop_assert!(v <= TSIRELSON_GUARD);
    }
}
