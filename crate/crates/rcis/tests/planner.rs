use nalgebra::DVector;
use proptest::prelude::*;
use rcis::harness::build_scenario_1;
use rcis::planner::{
    compute_equilibrium, obstacle_free_halfspaces, recenter, ObstacleBox, Side, Waypoint,
};
use rcis::ellipsoid::Ellipsoid;
use rcis::synthesis::VertexModel;
use rcis::vehicle::build_vertex_model;

fn lead() -> ObstacleBox {
    ObstacleBox { x_rel: 0.0, y: -2.0, l_ego: 4.5, l_lead: 4.5, eps_x: 1.5, w_ego: 1.8, w_lead: 1.8, eps_y: 0.2, keep_out: 6.0 }
}

#[test]
fn box_extents() {
    let ob = lead();
    assert!((ob.delta_x() - 6.0).abs() < 1e-12);
    assert!((ob.delta_y() - 2.0).abs() < 1e-12);
    assert!(ob.contains(-2.0, 5.9));
    assert!(!ob.contains(0.01, 0.0));
}

#[test]
fn sides_give_one_row_each() {
    let ob = lead();
    let x = |x5: f64, x6: f64| DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, x5, x6]);
    let left = &obstacle_free_halfspaces(&ob, Side::Left)[0];
    assert!(left.margin(&x(0.0, 0.0)) >= 0.0 && left.margin(&x(-0.1, 0.0)) < 0.0);
    let right = &obstacle_free_halfspaces(&ob, Side::Right)[0];
    assert!(right.margin(&x(-4.0, 0.0)) >= 0.0 && right.margin(&x(-3.9, 0.0)) < 0.0);
    let behind = &obstacle_free_halfspaces(&ob, Side::Behind)[0];
    assert!(behind.margin(&x(-2.0, -12.0)) >= 0.0 && behind.margin(&x(-2.0, -11.9)) < 0.0);
    let ahead = &obstacle_free_halfspaces(&ob, Side::Ahead)[0];
    assert!(ahead.margin(&x(-2.0, 12.0)) >= 0.0 && ahead.margin(&x(-2.0, 11.9)) < 0.0);
    assert!(obstacle_free_halfspaces(&ob, Side::None).is_empty());
}

fn model() -> (VertexModel, rcis::harness::Scenario) {
    let scn = build_scenario_1();
    let ctx = scn.plan_context(Default::default());
    (ctx.model.clone(), scn)
}

#[test]
fn equilibrium_holds_state_at_rest() {
    let (m, scn) = model();
    let ctx = scn.plan_context(Default::default());
    let x = Waypoint::at(2.0, -20.0, vec![]).x();
    let (xe, ue) = compute_equilibrium(&x, &m, &ctx.params, &ctx.gamma).unwrap();
    assert_eq!(xe, x);
    assert!(ue.norm() < 1e-9);
    let moving = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.1, 0.0, 0.0]);
    assert!(compute_equilibrium(&moving, &m, &ctx.params, &ctx.gamma).is_err());
}

#[test]
fn vertex_model_has_eight_vertices() {
    let scn = build_scenario_1();
    let vm = build_vertex_model(&scn.vehicle, &scn.gamma, scn.ts);
    assert_eq!(vm.phi.len(), 8);
    assert_eq!(vm.g.shape(), (6, 2));
}

proptest! {
    #[test]
    fn recenter_stays_inside_and_moves_toward_target(
        tx in -30.0f64..30.0, ty in -30.0f64..30.0, a in 1.0f64..20.0, b in 1.0f64..20.0, pb in 0.0f64..0.9,
    ) {
        let mut shape = nalgebra::DMatrix::identity(6, 6) * 0.01;
        shape[(4, 4)] = a;
        shape[(5, 5)] = b;
        shape[(4, 5)] = 0.3 * (a * b).sqrt();
        shape[(5, 4)] = shape[(4, 5)];
        let c = DVector::zeros(6);
        let e = Ellipsoid::new(c.clone(), shape).unwrap();
        let target = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, tx, ty]);
        let next = recenter(&e, &c, &target, pb).unwrap();
        prop_assert!(e.membership_value(&next).unwrap() <= 1.0 + 1e-9);
        for i in [0, 1, 2, 3] {
            prop_assert_eq!(next[i], 0.0);
        }
        let d0 = (&target - &c).norm();
        let d1 = (&target - &next).norm();
        prop_assert!(d1 <= d0 + 1e-9);
    }
}
