//! End-to-end solves on small instances with independent audits.

use deconflict::geometry::{AircraftState, Instance};
use deconflict::instances::{gen_cp, gen_rcp, CpConfig, RcpConfig};
use deconflict::model::{build_deterministic, build_robust, ControlSpec, UncertaintySpec};
use deconflict::solver::{solve, solve_with_warm, SolveParams, SolveStatus};
use deconflict::verify::{grid_oracle, monte_carlo, verify_deterministic, verify_robust};
use deconflict::Error;

fn control() -> ControlSpec {
    ControlSpec::default_bounds(0.5).unwrap()
}

fn params() -> SolveParams {
    SolveParams { time_limit: 120.0, ..SolveParams::default() }
}

#[test]
fn already_separated_instance_keeps_nominal_controls() {
    let inst = Instance::new(
        "separated",
        5.0,
        vec![
            AircraftState::new(0.0, 0.0, 500.0, 0.0).unwrap(),
            AircraftState::new(0.0, 50.0, 500.0, 0.0).unwrap(),
            AircraftState::new(0.0, -50.0, 480.0, 0.1).unwrap(),
        ],
    )
    .unwrap();
    let ir = build_deterministic(&inst, &control()).unwrap();
    let (sol, rep) = solve(&ir, &params()).unwrap();
    let sol = sol.unwrap();
    assert_eq!(rep.status, SolveStatus::Optimal);
    assert!(sol.objective_surrogate.abs() < 1e-12);
    for &(dx, dy) in &sol.deltas {
        assert!((dx - 1.0).abs() < 1e-9 && dy.abs() < 1e-9);
    }
}

#[test]
fn head_on_pair_resolves_symmetrically() {
    let inst = gen_cp(&CpConfig { n: 2, ..CpConfig::default() }).unwrap();
    let ir = build_deterministic(&inst, &control()).unwrap();
    let (sol, rep) = solve(&ir, &params()).unwrap();
    let sol = sol.unwrap();
    assert_eq!(rep.status, SolveStatus::Optimal);
    assert!(sol.objective_surrogate > 0.0);
    // both aircraft turn by the same amount (symmetric resolution)
    let t0 = sol.controls[0].theta;
    let t1 = sol.controls[1].theta;
    assert!(
        (t0.abs() - t1.abs()).abs() < 2e-3,
        "asymmetric headings {t0} vs {t1}"
    );
    let audit = verify_deterministic(&inst, &sol.controls, 1e-6);
    assert!(audit.passed, "audit failed: {:?}", audit.violations);
    assert!(audit.worst_margin >= -1e-6);
    // frozen after the first certified solve: turning the relative velocity
    // out of a cone of half-angle asin(5/400) costs about sin^2 of it
    let expected = 1.5625e-4;
    assert!(
        (sol.objective_surrogate - expected).abs() < 0.05 * expected,
        "objective {} drifted from {expected}",
        sol.objective_surrogate
    );
}

#[test]
fn cp4_deterministic_matches_reference_scale() {
    let inst = gen_cp(&CpConfig { n: 4, ..CpConfig::default() }).unwrap();
    let ir = build_deterministic(&inst, &control()).unwrap();
    let (sol, rep) = solve(&ir, &params()).unwrap();
    let sol = sol.unwrap();
    assert_eq!(rep.status, SolveStatus::Optimal);
    let audit = verify_deterministic(&inst, &sol.controls, 1e-6);
    assert!(audit.passed, "audit failed: {:?}", audit.violations);
    // reference scale for the four-aircraft circle at w = 0.5
    let reference = 6.25e-4;
    assert!(
        (sol.objective_surrogate - reference).abs() <= 0.25 * reference,
        "objective {} outside 25% of {reference}",
        sol.objective_surrogate
    );
}

#[test]
fn impossible_geometry_is_proven_infeasible() {
    // three aircraft meeting at the origin at the same time with zero
    // control freedom
    let inst = Instance::new(
        "rigid",
        5.0,
        vec![
            AircraftState::new(200.0, 0.0, 500.0, std::f64::consts::PI).unwrap(),
            AircraftState::new(-200.0, 0.0, 500.0, 0.0).unwrap(),
            AircraftState::new(0.0, 200.0, 500.0, -std::f64::consts::FRAC_PI_2).unwrap(),
        ],
    )
    .unwrap();
    let c = ControlSpec::new(1.0, 1.0, 0.0, 0.0, 0.5).unwrap();
    let ir = build_deterministic(&inst, &c).unwrap();
    let (sol, rep) = solve(&ir, &params()).unwrap();
    assert!(sol.is_none());
    assert_eq!(rep.status, SolveStatus::Infeasible);
}

#[test]
fn reduction_identities_zero_budget_and_zero_uncertainty() {
    for n in [4usize, 5] {
        let inst = gen_cp(&CpConfig { n, ..CpConfig::default() }).unwrap();
        let det = build_deterministic(&inst, &control()).unwrap();
        let (dsol, _) = solve(&det, &params()).unwrap();
        let dobj = dsol.unwrap().objective_surrogate;

        let zero_gamma = build_robust(
            &inst,
            &control(),
            &UncertaintySpec::uniform(0.05, 0.0).unwrap(),
        )
        .unwrap();
        let (gsol, _) = solve(&zero_gamma, &params()).unwrap();
        let gobj = gsol.unwrap().objective_surrogate;

        let zero_eps =
            build_robust(&inst, &control(), &UncertaintySpec::uniform(0.0, 4.0).unwrap()).unwrap();
        let (esol, _) = solve(&zero_eps, &params()).unwrap();
        let eobj = esol.unwrap().objective_surrogate;

        let tol = 1e-6 * dobj.abs().max(1e-12);
        assert!((gobj - dobj).abs() <= tol, "gamma=0: {gobj} vs {dobj}");
        assert!((eobj - dobj).abs() <= tol, "eps=0: {eobj} vs {dobj}");
    }
}

#[test]
fn robust_objective_grows_with_budget_and_uncertainty() {
    let inst = gen_cp(&CpConfig { n: 4, ..CpConfig::default() }).unwrap();
    let mut last = -1.0;
    for gamma in 0..=4 {
        let ir = build_robust(
            &inst,
            &control(),
            &UncertaintySpec::uniform(0.05, gamma as f64).unwrap(),
        )
        .unwrap();
        let (sol, rep) = solve(&ir, &params()).unwrap();
        assert_eq!(rep.status, SolveStatus::Optimal, "gamma={gamma}");
        let obj = sol.unwrap().objective_surrogate;
        assert!(
            obj >= last - 1e-9,
            "objective decreased at gamma={gamma}: {obj} < {last}"
        );
        last = obj;
    }
    let mut last = -1.0;
    for eps in [0.0, 0.025, 0.05, 0.075] {
        let ir = build_robust(&inst, &control(), &UncertaintySpec::uniform(eps, 4.0).unwrap())
            .unwrap();
        let (sol, _) = solve(&ir, &params()).unwrap();
        let obj = sol.unwrap().objective_surrogate;
        assert!(obj >= last - 1e-9, "objective decreased at eps={eps}");
        last = obj;
    }
}

#[test]
fn robust_solution_survives_vertex_and_monte_carlo_audits() {
    let inst = gen_cp(&CpConfig { n: 5, ..CpConfig::default() }).unwrap();
    let u = UncertaintySpec::uniform(0.05, 4.0).unwrap();
    let ir = build_robust(&inst, &control(), &u).unwrap();
    let (sol, rep) = solve(&ir, &params()).unwrap();
    let sol = sol.unwrap();
    assert_eq!(rep.status, SolveStatus::Optimal);
    let audit = verify_robust(&inst, &sol, &u, 1e-6).unwrap();
    assert!(audit.passed, "vertex audit failed: {:?}", audit.violations);
    let mc = monte_carlo(&inst, &sol.controls, u.eps_x, u.eps_y, 10_000, 7);
    assert_eq!(mc.violating, 0);
}

#[test]
fn deterministic_solution_fails_audit_at_higher_uncertainty() {
    // a tight deterministic solution is not robust for free
    let inst = gen_cp(&CpConfig { n: 7, ..CpConfig::default() }).unwrap();
    let ir = build_deterministic(&inst, &control()).unwrap();
    let (sol, _) = solve(&ir, &params()).unwrap();
    let sol = sol.unwrap();
    let audit =
        verify_robust(&inst, &sol, &UncertaintySpec::uniform(0.10, 4.0).unwrap(), 1e-6).unwrap();
    assert!(
        !audit.passed,
        "expected at least one scenario violation at 10% uncertainty"
    );
}

#[test]
fn repeated_solves_are_identical() {
    let inst = gen_rcp(&RcpConfig::new(8, 3)).unwrap();
    let ir = build_deterministic(&inst, &control()).unwrap();
    let (a_sol, a_rep) = solve(&ir, &params()).unwrap();
    let (b_sol, b_rep) = solve(&ir, &params()).unwrap();
    let (a, b) = (a_sol.unwrap(), b_sol.unwrap());
    assert_eq!(a.deltas, b.deltas);
    assert_eq!(a.z, b.z);
    assert_eq!(a_rep.nodes, b_rep.nodes);
    assert_eq!(a_rep.n_cut_rounds, b_rep.n_cut_rounds);
    assert_eq!(a_rep.ub, b_rep.ub);
    assert_eq!(a_rep.lb, b_rep.lb);
}

#[test]
fn warm_start_changes_nothing_but_work() {
    let inst = gen_cp(&CpConfig { n: 4, ..CpConfig::default() }).unwrap();
    let base = build_robust(&inst, &control(), &UncertaintySpec::uniform(0.05, 0.0).unwrap())
        .unwrap();
    let (warm_sol, _) = solve(&base, &params()).unwrap();
    let warm_sol = warm_sol.unwrap();

    let target =
        build_robust(&inst, &control(), &UncertaintySpec::uniform(0.05, 1.0).unwrap()).unwrap();
    let (cold, cold_rep) = solve(&target, &params()).unwrap();
    let (warm, warm_rep) = solve_with_warm(&target, &params(), Some(&warm_sol)).unwrap();
    let (cold, warm) = (cold.unwrap(), warm.unwrap());
    let tol = 0.02 * cold.objective_surrogate.max(1e-12);
    assert!(
        (cold.objective_surrogate - warm.objective_surrogate).abs() <= tol,
        "warm {} vs cold {}",
        warm.objective_surrogate,
        cold.objective_surrogate
    );
    // the warm incumbent may prune work but never adds any
    assert!(warm_rep.nodes <= cold_rep.nodes + 2);
}

#[test]
fn warm_start_rejects_mismatched_shape() {
    let a = gen_cp(&CpConfig { n: 4, ..CpConfig::default() }).unwrap();
    let b = gen_cp(&CpConfig { n: 5, ..CpConfig::default() }).unwrap();
    let ir_a = build_deterministic(&a, &control()).unwrap();
    let ir_b = build_deterministic(&b, &control()).unwrap();
    let (sol_a, _) = solve(&ir_a, &params()).unwrap();
    let err = solve_with_warm(&ir_b, &params(), Some(&sol_a.unwrap()));
    assert!(matches!(err, Err(Error::ShapeMismatch(_))));
}

#[test]
fn certify_mode_agrees_with_default_on_small_circles() {
    for n in [4usize, 5] {
        let inst = gen_cp(&CpConfig { n, ..CpConfig::default() }).unwrap();
        let ir = build_deterministic(&inst, &control()).unwrap();
        let (d_sol, _) = solve(&ir, &params()).unwrap();
        let (c_sol, c_rep) =
            solve(&ir, &SolveParams { certify: true, ..params() }).unwrap();
        assert_eq!(c_rep.status, SolveStatus::Optimal);
        let d_obj = d_sol.unwrap().objective_surrogate;
        let c_obj = c_sol.unwrap().objective_surrogate;
        let tol = 0.01 * d_obj.abs().max(1e-9);
        assert!(
            (d_obj - c_obj).abs() <= tol,
            "default {d_obj} vs certify {c_obj} on n={n}"
        );
    }
}

#[test]
fn solver_never_beats_the_grid_oracle() {
    for seed in [11u64, 12, 13] {
        let inst = gen_rcp(&RcpConfig::new(3, seed)).unwrap();
        let ir = build_deterministic(&inst, &control()).unwrap();
        let p = SolveParams { rel_gap: 1e-5, ..params() };
        let (sol, rep) = solve(&ir, &p).unwrap();
        assert_eq!(rep.status, SolveStatus::Optimal, "seed {seed}");
        let sol = sol.unwrap();
        let oracle = grid_oracle(&inst, &control(), 21, 21, 400_000_000).unwrap();
        assert!(
            sol.objective_exact <= oracle.best_objective + 1e-8,
            "seed {seed}: solver {} vs oracle {}",
            sol.objective_exact,
            oracle.best_objective
        );
        let audit = verify_deterministic(&inst, &sol.controls, 1e-6);
        assert!(audit.passed);
    }
}
