//! Closed-form oracles exercised through the public API.

mod common;

use common::tol;
use qsemigroup::adjoint::{detailed_balance_decomposition, j_correlation, kms_adjoint, modular_data};
use qsemigroup::algebra::{
    block_structure, commutant, conditional_expectation, generated_algebra, Block, StarSubalgebra,
};
use qsemigroup::asymptotics::{
    conjecture_probe, correlation, k_property_test, spectral_classification, spectral_data, CORRELATION_TOL,
};
use qsemigroup::dilation::{
    build_dilation_space, default_tails, k_shift_probe, markov_property_check, shift_isometry_check, TimeGrid,
    DEFAULT_CAP,
};
use qsemigroup::fixedpoints::{
    cal_e_map, fixed_point_set, g_algebra, irreducibility_report, multiplicative_domain_algebra, state_times_identity,
};
use qsemigroup::matrixcore::{
    c, from_real, gram_quotient, identity, kron, matrix_exp, matrix_unit, nullspace, pauli_x, pauli_z, psd_power,
    sigma_minus, zeros, CMat, C64,
};
use qsemigroup::models::{builtin, classical_chain_embed, LoadedModel};
use qsemigroup::semigroup::{build_generator, Kind, OpenSystemModel};
use qsemigroup::states::{
    certificate_alphabet, invariant_states, is_subharmonic, reachability_tower, subharmonic_limit, DensityState,
};
use qsemigroup::superop::{is_cp_unital, transpose_permutation, SuperOp};

fn load(name: &str) -> LoadedModel {
    builtin(name, &tol()).unwrap()
}

fn diag(values: &[f64]) -> CMat {
    let d = values.len();
    let mut m = zeros(d, d);
    for (k, &v) in values.iter().enumerate() {
        m[(k, k)] = c(v, 0.0);
    }
    m
}

fn diagonal_algebra(d: usize) -> StarSubalgebra {
    let units: Vec<CMat> = (0..d).map(|k| matrix_unit(d, k, k)).collect();
    StarSubalgebra::from_matrices(d, &units)
}

#[test]
fn matrix_functions() {
    let t = tol();
    let mut a = zeros(2, 2);
    a[(0, 0)] = c(0.0, std::f64::consts::PI);
    assert!((matrix_exp(&a).unwrap() - diag(&[-1.0, 1.0])).norm() < 1e-12);
    assert!((psd_power(&diag(&[4.0, 1.0]), 0.5, &t).unwrap() - diag(&[2.0, 1.0])).norm() < 1e-12);
    assert!((psd_power(&identity(3), -0.5, &t).unwrap() - identity(3)).norm() < 1e-12);
    assert_eq!(nullspace(&identity(3), &t).ncols(), 0);
    assert_eq!(nullspace(&matrix_unit(2, 0, 0), &t).ncols(), 1);
    let ones = from_real(2, 2, &[1.0, 1.0, 1.0, 1.0]);
    assert_eq!(gram_quotient(&ones, &t).unwrap().dim, 1);
    assert_eq!(gram_quotient(&identity(3), &t).unwrap().dim, 3);
}

#[test]
fn generator_and_evolution_closed_forms() {
    let t = tol();
    let deph = OpenSystemModel::new(zeros(2, 2), vec![pauli_z() * c(0.5f64.sqrt(), 0.0)], &t).unwrap();
    let q = build_generator(&deph, &t).unwrap();
    let l = q.generator().unwrap();
    assert!((l.apply(&pauli_x()) + pauli_x()).norm() < 1e-12);
    assert!((q.evolve(1.0).unwrap().apply(&pauli_x()) - pauli_x() * c((-1f64).exp(), 0.0)).norm() < 1e-12);

    let damp = OpenSystemModel::new(zeros(2, 2), vec![sigma_minus()], &t).unwrap();
    let q = build_generator(&damp, &t).unwrap();
    let excited = matrix_unit(2, 1, 1);
    assert!((q.generator().unwrap().apply(&excited) + &excited).norm() < 1e-12);
    let half = q.evolve(2f64.ln()).unwrap().apply(&excited);
    assert!((half - &excited * c(0.5, 0.0)).norm() < 1e-12);
    let population = q.evolve(1.3).unwrap().predual().apply(&excited)[(1, 1)].re;
    assert!((population - (-1.3f64).exp()).abs() < 1e-12);

    let zero = OpenSystemModel::new(zeros(2, 2), vec![], &t).unwrap();
    assert!(build_generator(&zero, &t).unwrap().generator().unwrap().norm() < 1e-15);
}

#[test]
fn complete_positivity_gate() {
    let t = tol();
    assert!(is_cp_unital(&SuperOp::identity(2), &t).passed);
    let transpose = SuperOp::new(transpose_permutation(2), 2).unwrap();
    let v = is_cp_unital(&transpose, &t);
    assert!(!v.completely_positive);
    assert!((v.choi_min_eigenvalue + 1.0).abs() < 1e-12);
    let m = load("thermal_qubit(2,1)");
    assert!(is_cp_unital(&m.qms.evolve(1.0).unwrap(), &t).passed);
}

#[test]
fn invariant_states_of_builtins() {
    let t = tol();
    let thermal = load("thermal_qubit(2,1)");
    assert!((thermal.state.rho() - diag(&[2.0 / 3.0, 1.0 / 3.0])).norm() < 1e-12);
    assert!(thermal.state.is_faithful());
    assert!((thermal.state.support() - identity(2)).norm() < 1e-12);

    let damp = load("amplitude_damping(1)");
    assert!((damp.state.rho() - matrix_unit(2, 0, 0)).norm() < 1e-12);
    assert!((damp.state.support() - matrix_unit(2, 0, 0)).norm() < 1e-12);

    let unitary = load("unitary(1)");
    assert_eq!(invariant_states(&unitary.qms, &t).unwrap().kernel_basis.len(), 2);
    assert!((unitary.state.rho() - identity(2) * c(0.5, 0.0)).norm() < 1e-12);

    let chain = load("two_state_symmetric_chain");
    assert_eq!(chain.qms.kind(), Kind::Discrete);
    assert!((chain.state.rho() - identity(2) * c(0.5, 0.0)).norm() < 1e-12);
}

#[test]
fn subharmonic_projections() {
    let t = tol();
    let damp = load("amplitude_damping(1)");
    let alphabet = certificate_alphabet(&damp.qms, damp.gksl.as_ref(), &t).unwrap();
    let p = matrix_unit(2, 0, 0);
    assert!(is_subharmonic(&p, &damp.qms, &alphabet, &t).unwrap().is_subharmonic);
    let limit = subharmonic_limit(&p, &damp.qms, &alphabet, &t).unwrap();
    assert!((limit.y - identity(2)).norm() < 1e-9);
    assert!(reachability_tower(&p, &alphabet, 4).spans_all);

    let deph = load("dephasing(0.5)");
    let alphabet = certificate_alphabet(&deph.qms, deph.gksl.as_ref(), &t).unwrap();
    let plus = from_real(2, 2, &[0.5, 0.5, 0.5, 0.5]);
    assert!(!is_subharmonic(&plus, &deph.qms, &alphabet, &t).unwrap().is_subharmonic);
    let i = identity(2);
    let v = is_subharmonic(&i, &deph.qms, &alphabet, &t).unwrap();
    assert!(v.is_subharmonic);

    let chain = load("three_state_chain");
    let p = chain_indicator();
    let alphabet = certificate_alphabet(&chain.qms, None, &t).unwrap();
    assert!(reachability_tower(&identity(3), &alphabet, 9).spans_all);
    assert!(!reachability_tower(&p, &alphabet, 9).spans_all);
}

fn chain_indicator() -> CMat {
    matrix_unit(3, 0, 0)
}

#[test]
fn classical_identity_chain_embeds_as_identity() {
    let p = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let q = classical_chain_embed(&p, &tol()).unwrap();
    assert!(q.defining_map().distance(&SuperOp::identity(2)) < 1e-12);
}

#[test]
fn algebra_oracles() {
    let t = tol();
    assert!(generated_algebra(2, &[]).is_scalar());
    assert_eq!(generated_algebra(2, &[pauli_z()]).dimension(), 2);
    assert_eq!(generated_algebra(2, &[sigma_minus()]).dimension(), 4);
    assert_eq!(commutant(&StarSubalgebra::scalars(3), &t).dimension(), 9);
    assert!(commutant(&StarSubalgebra::full(3), &t).is_scalar());
    assert!(commutant(&diagonal_algebra(2), &t).equality_residual(&diagonal_algebra(2)) < 1e-12);

    let gibbs = DensityState::new(diag(&[2.0 / 3.0, 1.0 / 3.0]), &t).unwrap();
    let (e, checks) = conditional_expectation(&diagonal_algebra(2), &gibbs, &t).unwrap();
    assert!(e.apply(&pauli_x()).norm() < 1e-12);
    assert!((e.apply(&pauli_z()) - pauli_z()).norm() < 1e-12);
    assert!(checks.idempotence < 1e-12);

    let blocks = block_structure(&diagonal_algebra(2), &t).unwrap();
    assert_eq!(
        blocks.blocks,
        vec![
            Block {
                size: 1,
                multiplicity: 1
            };
            2
        ]
    );
    let zi = StarSubalgebra::from_matrices(4, &[kron(&pauli_z(), &identity(2))]);
    let blocks = block_structure(&commutant(&zi, &t), &t).unwrap();
    assert_eq!(
        blocks.blocks,
        vec![
            Block {
                size: 2,
                multiplicity: 1
            };
            2
        ]
    );
}

#[test]
fn fixed_point_algebras() {
    let t = tol();
    for (name, n_dim, f_dim, g_dim) in [
        ("dephasing(0.5)", 2, 2, 2),
        ("thermal_qubit(2,1)", 1, 1, 1),
        ("unitary(1)", 2, 4, 4),
    ] {
        let m = load(name);
        let n = fixed_point_set(&m.qms, &m.state, &t).unwrap().algebra;
        let f = multiplicative_domain_algebra(&m.qms, &m.state, &t).unwrap().algebra;
        let (adj, _, _) = kms_adjoint(&m.qms, &m.state, &t).unwrap();
        let g = g_algebra(&m.qms, &adj, &m.qms.sample_times(), &t).unwrap().algebra;
        assert_eq!(
            (n.dimension(), f.dimension(), g.dimension()),
            (n_dim, f_dim, g_dim),
            "{name}"
        );
    }
    let deph = load("dephasing(0.5)");
    let irr = irreducibility_report(deph.gksl.as_ref(), &deph.qms, &deph.state, &t).unwrap();
    assert!(!irr.fixed_is_scalar);
    assert_eq!(irr.invariant_projections.len(), 2);
    let damp = load("amplitude_damping(1)");
    let irr = irreducibility_report(damp.gksl.as_ref(), &damp.qms, &damp.state, &t).unwrap();
    assert!(irr.fixed_is_scalar);
}

#[test]
fn modular_and_adjoint_oracles() {
    let t = tol();
    let gibbs = DensityState::new(diag(&[2.0 / 3.0, 1.0 / 3.0]), &t).unwrap();
    let modular = modular_data(&gibbs, &t).unwrap();
    let e01 = matrix_unit(2, 0, 1);
    assert!((modular.delta().apply(&e01) - &e01 * c(2.0, 0.0)).norm() < 1e-12);
    assert!(modular.tomita_residual() < 1e-10);

    let thermal = load("thermal_qubit(2,1)");
    let (adj, _, _) = kms_adjoint(&thermal.qms, &thermal.state, &t).unwrap();
    assert!(adj.defining_map().distance(thermal.qms.defining_map()) < 1e-12);
    assert!(
        detailed_balance_decomposition(&thermal.qms, &adj)
            .unwrap()
            .detailed_balance
    );

    let unitary = load("unitary(1)");
    let (adj, _, _) = kms_adjoint(&unitary.qms, &unitary.state, &t).unwrap();
    let reversed = unitary.qms.defining_map().scale(-1.0);
    assert!(adj.defining_map().distance(&reversed) < 1e-12);

    let deph = load("dephasing(0.5)");
    let (adj, modular, _) = kms_adjoint(&deph.qms, &deph.state, &t).unwrap();
    assert!(adj.defining_map().distance(&deph.qms.defining_map().hs_adjoint()) < 1e-12);
    let db = detailed_balance_decomposition(&deph.qms, &adj).unwrap();
    assert!(db.detailed_balance);
    let x = pauli_x() + pauli_z() * c(0.3, 0.1);
    let y = matrix_unit(2, 0, 1);
    let tau = deph.qms.evolve(0.7).unwrap();
    let tracial = (tau.apply(&x).adjoint() * tau.apply(&y)).trace() * c(0.5, 0.0);
    let v = j_correlation(&deph.qms, &modular, &x, &y, 0.7).unwrap();
    assert!((v - tracial).norm() < 1e-12);
    let unit = j_correlation(&deph.qms, &modular, &identity(2), &identity(2), 0.0).unwrap();
    assert!((unit - c(1.0, 0.0)).norm() < 1e-12);
}

#[test]
fn cal_e_limits() {
    let t = tol();
    let thermal = load("thermal_qubit(2,1)");
    let (adj, _, _) = kms_adjoint(&thermal.qms, &thermal.state, &t).unwrap();
    let cal = cal_e_map(&thermal.qms, &adj, 40.0, None, true).unwrap();
    assert!(cal.map.distance(&state_times_identity(&thermal.state)) < 1e-9);

    let unitary = load("unitary(1)");
    let (adj, _, _) = kms_adjoint(&unitary.qms, &unitary.state, &t).unwrap();
    let cal = cal_e_map(&unitary.qms, &adj, 5.0, None, true).unwrap();
    assert!(cal.map.distance(&SuperOp::identity(2)) < 1e-9);
}

#[test]
fn correlations_and_mixing() {
    let t = tol();
    let thermal = load("thermal_qubit(2,1)");
    let one = correlation(&thermal.qms, &thermal.state, &identity(2), &identity(2), 3.0).unwrap();
    assert!((one.plain - c(1.0, 0.0)).norm() < 1e-12 && (one.twopoint - c(1.0, 0.0)).norm() < 1e-12);
    let mean = thermal.state.expect(&pauli_z());
    let centered = pauli_z() - identity(2) * mean;
    let late = correlation(&thermal.qms, &thermal.state, &centered, &centered, 30.0).unwrap();
    assert!(late.plain.norm() < 1e-12 && late.twopoint.norm() < 1e-12);

    let spectrum = spectral_data(&thermal.qms).unwrap();
    assert!((spectrum.gap - 1.5).abs() < 1e-10);
    let report = spectral_classification(&thermal.qms, &thermal.state, &t).unwrap();
    assert!(report.ergodic.holds && report.weak_mixing.holds && report.strong_mixing.holds);
    assert!(report.k_property.holds);

    let deph = load("dephasing(0.5)");
    let centered = matrix_unit(2, 0, 0) - identity(2) * c(0.5, 0.0);
    for time in [1.0, 10.0, 100.0] {
        let v = correlation(&deph.qms, &deph.state, &centered, &centered, time).unwrap();
        assert!((v.twopoint - c(0.25, 0.0)).norm() < 1e-12);
    }
    assert!(
        !spectral_classification(&deph.qms, &deph.state, &t)
            .unwrap()
            .ergodic
            .holds
    );

    let unitary = load("unitary(1)");
    let spectrum = spectral_data(&unitary.qms).unwrap();
    let imag: Vec<f64> = spectrum.peripheral.iter().map(|z: &C64| z.im).collect();
    assert!(imag.iter().any(|v| (v - 2.0).abs() < 1e-10) && imag.iter().any(|v| (v + 2.0).abs() < 1e-10));
    assert!(
        !spectral_classification(&unitary.qms, &unitary.state, &t)
            .unwrap()
            .strong_mixing
            .holds
    );

    let chain = load("three_state_chain");
    assert!(
        !k_property_test(&chain.qms, &chain.state, 40.0, CORRELATION_TOL)
            .unwrap()
            .holds
    );
    let sym = load("two_state_symmetric_chain");
    assert!(
        spectral_classification(&sym.qms, &sym.state, &t)
            .unwrap()
            .strong_mixing
            .holds
    );
}

#[test]
fn conjecture_probe_on_builtins() {
    let t = tol();
    for (name, expected) in [("thermal_qubit(2,1)", (true, true)), ("dephasing(0.5)", (false, false))] {
        let m = load(name);
        let (adj, _, _) = kms_adjoint(&m.qms, &m.state, &t).unwrap();
        let r = conjecture_probe(&m.qms, &m.state, &adj).unwrap();
        assert_eq!((r.forward_k, r.adjoint_k), expected, "{name}");
    }
}

#[test]
fn dilation_oracles() {
    let t = tol();
    let thermal = load("thermal_qubit(2,1)");
    let zero = TimeGrid::new(vec![0.0]).unwrap();
    let space = build_dilation_space(&thermal.qms, &thermal.state, &zero, DEFAULT_CAP, &t).unwrap();
    assert_eq!(space.dim(), 4);
    let damp = load("amplitude_damping(1)");
    let space = build_dilation_space(&damp.qms, &damp.state, &zero, DEFAULT_CAP, &t).unwrap();
    assert_eq!(space.dim(), 2);

    let deph = load("dephasing(0.5)");
    let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
    let space = build_dilation_space(&deph.qms, &deph.state, &grid, DEFAULT_CAP, &t).unwrap();
    assert!(space.dim() <= 16);
    assert!(space.reproduction_residual() < 1e-10);
    let f0 = space.filtration_projection(0.0, &t);
    assert!((f0.trace().re - 4.0).abs() < 1e-9);
    assert!((space.filtration_projection(5.0, &t) - identity(space.dim())).norm() < 1e-12);
    assert!((space.represent_j(1.0, &identity(2)).unwrap() - identity(space.dim())).norm() < 1e-9);

    let space = build_dilation_space(&damp.qms, &damp.state, &grid, DEFAULT_CAP, &t).unwrap();
    let r = markov_property_check(&space, 0.0, 1.0, &matrix_unit(2, 1, 1), &t).unwrap();
    assert!(r < 1e-8);

    let three = TimeGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
    let space = build_dilation_space(&thermal.qms, &thermal.state, &three, DEFAULT_CAP, &t).unwrap();
    let x = pauli_x() + matrix_unit(2, 0, 1) * c(0.0, 0.4);
    assert!(markov_property_check(&space, 0.0, 2.0, &x, &t).unwrap() < 1e-8);

    assert!(shift_isometry_check(&thermal.qms, &thermal.state, &grid, 5.0, DEFAULT_CAP, &t).unwrap() < 1e-12);
    let mixed = TimeGrid::new(vec![0.0, 0.5, 1.0]).unwrap();
    assert!(shift_isometry_check(&deph.qms, &deph.state, &mixed, -3.0, DEFAULT_CAP, &t).unwrap() < 1e-12);
}

#[test]
fn k_shift_decay_profiles() {
    let t = tol();
    let zero = TimeGrid::new(vec![0.0]).unwrap();
    let thermal = load("thermal_qubit(2,1)");
    let probe = k_shift_probe(
        &thermal.qms,
        &thermal.state,
        &zero,
        &[-1.0, -2.0, -4.0, -8.0],
        DEFAULT_CAP,
        &t,
    )
    .unwrap();
    assert!(probe.evidence);
    assert!((probe.rate.unwrap() - 1.5).abs() < 0.3);
    let deltas: Vec<f64> = probe.rows.iter().map(|r| r.1).collect();
    assert!(deltas.windows(2).all(|w| w[1] < w[0]));

    for name in ["dephasing(0.5)", "unitary(1)"] {
        let m = load(name);
        let tails = default_tails(&m.qms, 0.0, 50.0);
        let probe = k_shift_probe(&m.qms, &m.state, &zero, &tails, DEFAULT_CAP, &t).unwrap();
        assert!(!probe.evidence, "{name}");
        assert!(probe.rows.iter().all(|r| r.1 > 0.1), "{name}: {:?}", probe.rows);
    }
}
