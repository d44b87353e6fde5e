mod common;

use bckm_core::constraints::{audit, ConstraintSet};
use bckm_core::data::DistanceMatrix;
use bckm_core::penalty::{
    assign_with_costs, update_penalties, update_s, update_v, AssignmentConfig, PenaltyState,
};
use common::{distances, exhaustive_assignment, nearest_start, tiny_instance};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn y_from(rows: &[&[f64]]) -> DistanceMatrix {
    DistanceMatrix::from_raw(DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])).unwrap()
}

#[test]
fn two_far_pairs_match_enumeration() {
    // points 0,1 near centroid 0; points 2,3 near centroid 1
    let y = y_from(&[&[0.1, 0.2, 9.0, 8.0], &[7.0, 9.5, 0.3, 0.1]]);
    let cs = ConstraintSet::with_sizes(vec![2, 2], vec![Some(2), Some(2)]).unwrap();
    let out = assign_with_costs(&y, &DMatrix::from_element(2, 4, 0.5), &cs, &Default::default())
        .unwrap();
    let (best, labels) = exhaustive_assignment(&y, &cs).unwrap();
    assert!(out.diagnostics.converged);
    assert_eq!(labels, vec![0, 0, 1, 1]);
    assert!((out.diagnostics.objective - best).abs() < 1e-12);
}

#[test]
fn must_link_pulls_distant_points_together() {
    let y = y_from(&[&[0.0, 10.0], &[10.0, 0.5]]);
    let cs = ConstraintSet::new(vec![0, 0], vec![None, None], vec![(0, 1)], vec![]).unwrap();
    let s0 = DMatrix::identity(2, 2);
    let out = assign_with_costs(&y, &s0, &cs, &Default::default()).unwrap();
    let (best, labels) = exhaustive_assignment(&y, &cs).unwrap();
    assert!(out.diagnostics.converged);
    assert_eq!(labels, vec![0, 0]);
    assert!((out.diagnostics.objective - best).abs() < 1e-12);
}

#[test]
fn tiny_instances_against_enumeration() {
    let cfg = AssignmentConfig::default();
    for seed in 0..60 {
        let (x, c, cs) = tiny_instance(seed);
        let y = distances(x.as_matrix(), &c);
        let out = assign_with_costs(&y, &nearest_start(&y), &cs, &cfg).unwrap();
        let (best, _) = exhaustive_assignment(&y, &cs).unwrap();
        if out.diagnostics.converged {
            assert!(audit(&out.assignment, &cs, 1e-9).unwrap().is_empty(), "seed {seed}");
            assert!(out.assignment.is_binary());
            assert!(out.diagnostics.objective >= best - 1e-9, "seed {seed}");
        }
    }
}

#[test]
fn intermediate_s_stays_in_polytope() {
    for seed in 0..20 {
        let (x, c, cs) = tiny_instance(seed);
        let y = distances(x.as_matrix(), &c);
        let cfg = AssignmentConfig::default();
        let mut state = PenaltyState::new(&nearest_start(&y), cfg.rho0, cfg.kappa);
        for _ in 0..15 {
            let s = update_s(&y, &cs, &state, &cfg).unwrap();
            let report = audit(&s, &cs, 1e-7).unwrap();
            assert!(report.size_violations.is_empty(), "seed {seed}: {report:?}");
            assert!(report.must_link_violations.is_empty());
            assert!(report.cannot_link_violations.is_empty());
            assert!(report.column_sum_violations.is_empty());
            let v = update_v(s.as_matrix(), &state);
            state = update_penalties(state, v);
        }
    }
}

#[test]
fn size_only_first_step_is_binary() {
    let mut r = common::rng(7);
    for _ in 0..40 {
        let k = r.random_range(2..=5);
        let n = r.random_range(k..=30);
        let y = DistanceMatrix::from_raw(DMatrix::from_fn(k, n, |_, _| r.random_range(0.0..5.0)))
            .unwrap();
        let lower: Vec<usize> = (0..k).map(|_| r.random_range(0..=n / k)).collect();
        let upper: Vec<Option<usize>> = lower
            .iter()
            .map(|&l| r.random_bool(0.5).then(|| l + r.random_range(n / k..=n)))
            .collect();
        let cs = ConstraintSet::with_sizes(lower, upper).unwrap();
        if !bckm_core::constraints::precheck_feasibility(&cs, n, k).is_ok() {
            continue;
        }
        let cfg = AssignmentConfig::default();
        let state = PenaltyState::new(&nearest_start(&y), cfg.rho0, cfg.kappa);
        let s = update_s(&y, &cs, &state, &cfg).unwrap();
        assert_eq!(s.nonbinary_count(1e-6), 0);
        let out = assign_with_costs(&y, &nearest_start(&y), &cs, &cfg).unwrap();
        assert!(out.diagnostics.converged && out.diagnostics.pump_converged);
        assert!(out.diagnostics.iterations <= 2, "{:?}", out.diagnostics);
    }
}

proptest! {
    #[test]
    fn v_step_is_two_point_optimal(
        s in 0.0f64..=1.0,
        rp in 0.01f64..100.0,
        rm in 0.01f64..100.0,
    ) {
        let mut state = PenaltyState::new(&DMatrix::zeros(1, 1), 1.0, 2.0);
        // reach penalties near rp, rm by escalation
        let tp = (rp.ln() / 2f64.ln()).round().max(0.0) as usize;
        let tm = (rm.ln() / 2f64.ln()).round().max(0.0) as usize;
        for _ in 0..tp { state = update_penalties(state, DMatrix::from_element(1, 1, 1.0)); }
        for _ in 0..tm { state = update_penalties(state, DMatrix::from_element(1, 1, 0.0)); }
        let rho_p = state.rho_plus()[(0, 0)];
        let rho_m = state.rho_minus()[(0, 0)];
        let cost = |v: f64| rho_p * (v - s).max(0.0) + rho_m * (s - v).max(0.0);
        let expected = if cost(0.0) <= cost(1.0) { 0.0 } else { 1.0 };
        let v = update_v(&DMatrix::from_element(1, 1, s), &state);
        prop_assert_eq!(v[(0, 0)], expected);
    }

    #[test]
    fn penalties_follow_power_schedule(
        pattern in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 6), 1..25),
    ) {
        let (rho0, kappa) = (0.5, 1.1);
        let mut state = PenaltyState::new(&DMatrix::zeros(2, 3), rho0, kappa);
        let mut tp = [0i32; 6];
        let mut tm = [0i32; 6];
        let mut prev_p = state.rho_plus().clone();
        let mut prev_m = state.rho_minus().clone();
        for step in &pattern {
            let v = DMatrix::from_fn(2, 3, |i, j| if step[j * 2 + i] { 1.0 } else { 0.0 });
            for idx in 0..6 {
                if v[idx] == 1.0 { tp[idx] += 1 } else { tm[idx] += 1 }
            }
            state = update_penalties(state, v.clone());
            prop_assert_eq!(state.v(), &v);
            for idx in 0..6 {
                prop_assert_eq!(state.rho_plus()[idx], rho0 * kappa.powi(tp[idx]));
                prop_assert_eq!(state.rho_minus()[idx], rho0 * kappa.powi(tm[idx]));
                prop_assert!(state.rho_plus()[idx] >= prev_p[idx]);
                prop_assert!(state.rho_minus()[idx] >= prev_m[idx]);
            }
            prev_p = state.rho_plus().clone();
            prev_m = state.rho_minus().clone();
        }
    }
}
