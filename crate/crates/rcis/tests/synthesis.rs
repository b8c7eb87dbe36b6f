use nalgebra::DMatrix;
use rcis::synthesis::*;
use rcis::Error;
use rcis::ellipsoid::{box_halfspaces, BoxSet, Halfspace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn double_integrator(d: f64, bx: f64) -> (VertexModel, SynthesisConstraints) {
    let vm = VertexModel {
        phi: vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0])],
        g: DMatrix::from_row_slice(2, 1, &[0.005, 0.1]),
        gd: DMatrix::identity(2, 2),
        ts: 0.1,
    };
    let cons = SynthesisConstraints::new(
        &vm,
        box_halfspaces(&BoxSet::symmetric(&[bx, bx])),
        BoxSet::symmetric(&[1.0]),
        BoxSet::symmetric(&[d, d]),
    )
    .unwrap();
    (vm, cons)
}

#[test]
fn terminal_pair_is_invariant_in_simulation() {
    let (vm, cons) = double_integrator(0.0, 1.0);
    let pair = synthesize_terminal_pair(&vm, &cons).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let acl = &vm.phi[0] + &vm.g * &pair.gain;
    for _ in 0..1000 {
        let mut x = pair.terminal.sample_interior(&mut rng);
        for _ in 0..20 {
            assert!((&pair.gain * &x)[0].abs() <= 1.0 + 1e-9);
            x = &acl * x;
            assert!(pair.terminal.membership_value(&x).unwrap() <= 1.0 + 1e-9);
        }
    }
}

#[test]
fn no_input_authority_is_infeasible() {
    let vm = VertexModel {
        phi: vec![DMatrix::from_row_slice(2, 2, &[1.2, 0.0, 0.0, 1.1])],
        g: DMatrix::zeros(2, 1),
        gd: DMatrix::identity(2, 2),
        ts: 0.1,
    };
    let cons = SynthesisConstraints::new(
        &vm,
        box_halfspaces(&BoxSet::symmetric(&[1.0, 1.0])),
        BoxSet::symmetric(&[1.0]),
        BoxSet::symmetric(&[0.0, 0.0]),
    )
    .unwrap();
    assert!(matches!(synthesize_terminal_pair(&vm, &cons), Err(Error::InfeasibleSynthesis(_))));
}

#[test]
fn backward_step_grows_and_verifies() {
    let (vm, small) = double_integrator(0.01, 1.0);
    let (_, cons) = double_integrator(0.01, 10.0);
    let st = SynthesisSettings::default();
    let pair = synthesize_terminal_pair(&vm, &small).unwrap();
    let s1 = backward_step(&pair.terminal, &vm, &cons, Some((&pair.gain, pair.tau)), &st).unwrap();
    assert!(s1.ellipsoid.log_det() > pair.terminal.log_det());
    assert!(rcis::ellipsoid::concentric_contains(&pair.terminal, &s1.ellipsoid).unwrap());
    assert!(constraint_excess(&s1.ellipsoid, &cons.state_halfspaces) <= 1e-8);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rep = verify_one_step(&s1.ellipsoid, &pair.terminal, Some(&s1.gain), &vm, &cons, 500, 1e-8, &mut rng).unwrap();
    assert_eq!(rep.feasible, 500);
    let fat = s1.ellipsoid.scaled(4.0).unwrap();
    let rep = verify_one_step(&fat, &pair.terminal, Some(&s1.gain), &vm, &cons, 500, 1e-8, &mut rng).unwrap();
    assert!(rep.fraction() < 1.0);
}

#[test]
fn tangent_row_saturates() {
    let (vm, cons) = double_integrator(0.0, 1.0);
    let st = SynthesisSettings::default();
    let pair = synthesize_terminal_pair(&vm, &cons).unwrap();
    // Row tangent to E_0 along x₁.
    let b = pair.terminal.shape()[(0, 0)].sqrt();
    let mut rows = cons.state_halfspaces.clone();
    rows.push(Halfspace::axis(2, 0, b, true));
    let tight = SynthesisConstraints::new(&vm, rows, cons.input_box.clone(), cons.disturbance.clone()).unwrap();
    let s1 = backward_step(&pair.terminal, &vm, &tight, Some((&pair.gain, pair.tau)), &st).unwrap();
    assert!((s1.ellipsoid.shape()[(0, 0)] - b * b).abs() < 1e-6 * b * b);
}
