use nalgebra::{DMatrix, DVector};
use rcis::ellipsoid::*;
use rcis::Error;
use nalgebra::dvector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ball(n: usize, r: f64) -> Ellipsoid {
    Ellipsoid::ball(DVector::zeros(n), r).unwrap()
}

fn diag(d: &[f64]) -> Ellipsoid {
    Ellipsoid::new(DVector::zeros(d.len()), DMatrix::from_diagonal(&DVector::from_column_slice(d))).unwrap()
}

#[test]
fn membership_examples() {
    let e = ball(2, 1.0);
    assert_eq!(e.membership_value(&dvector![0.0, 0.0]).unwrap(), 0.0);
    assert_eq!(e.membership_value(&dvector![1.0, 0.0]).unwrap(), 1.0);
    let e = diag(&[4.0, 1.0]);
    assert!((e.membership_value(&dvector![1.0, 0.5]).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn concentric_examples() {
    assert!(concentric_contains(&ball(3, 0.5f64.sqrt()), &ball(3, 1.0)).unwrap());
    assert!(!concentric_contains(&ball(3, 1.0), &ball(3, 0.5f64.sqrt())).unwrap());
    assert!(!concentric_contains(&diag(&[1.0, 4.0]), &diag(&[4.0, 1.0])).unwrap());
    let shifted = Ellipsoid::ball(dvector![1.0, 0.0], 1.0).unwrap();
    assert!(matches!(concentric_contains(&shifted, &ball(2, 2.0)), Err(Error::CenterMismatch(_))));
}

#[test]
fn affine_image_examples() {
    let u = ball(2, 1.0);
    assert!(affine_image_contained(&DMatrix::zeros(2, 2), &u, &diag(&[3.0, 0.1])).unwrap());
    assert!(affine_image_contained(&DMatrix::identity(2, 2), &u, &u).unwrap());
    let a = DMatrix::from_diagonal(&dvector![2.0, 1.0]);
    assert!(!affine_image_contained(&a, &u, &u).unwrap());
}

#[test]
fn shrink_examples() {
    let s = shrink_by_disturbance(&ball(2, 1.0), &ball(2, 0.2)).unwrap();
    assert!((s.shape()[(0, 0)] - 0.64).abs() < 1e-12);
    let point = Ellipsoid::new(DVector::zeros(2), DMatrix::identity(2, 2) * 1e-300).unwrap();
    let s = shrink_by_disturbance(&ball(2, 1.0), &point).unwrap();
    assert!((s.shape()[(0, 0)] - 1.0).abs() < 1e-12);
    assert!(matches!(
        shrink_by_disturbance(&ball(2, 1.0), &ball(2, 1.0)),
        Err(Error::InfeasibleShrink { .. })
    ));
}

#[test]
fn shrink_is_inside_difference_along_random_directions() {
    let e = ball(2, 1.0);
    let d = ball(2, 0.2);
    let s = shrink_by_disturbance(&e, &d).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let a = e.sample_boundary(&mut rng);
        assert!(s.support(&a) + d.support(&a) <= e.support(&a) + 1e-12);
    }
}

#[test]
fn cover_examples() {
    let b = BoxSet::symmetric(&[1.0, 1.0]);
    let c = cover_box_image(&DMatrix::identity(2, 2), &b).unwrap();
    assert!((c.shape()[(0, 0)] - 2.0).abs() < 1e-11);
    assert!((c.membership_value(&dvector![1.0, 1.0]).unwrap() - 1.0).abs() < 1e-9);
    let z = cover_box_image(&DMatrix::identity(2, 2), &BoxSet::symmetric(&[0.0, 0.0])).unwrap();
    assert_eq!(z.shape()[(1, 1)], COVER_EPS);
}

#[test]
fn projection_onto_ellipsoid_is_nearest_boundary_point() {
    let e = diag(&[4.0, 1.0]);
    let y = dvector![3.0, 2.0];
    let p = e.project(&y).unwrap();
    assert!((e.membership_value(&p).unwrap() - 1.0).abs() < 1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..2000 {
        let q = e.sample_boundary(&mut rng);
        assert!((q - &y).norm() >= (&p - &y).norm() - 1e-9);
    }
    assert_eq!(e.project(&dvector![0.1, 0.1]).unwrap(), dvector![0.1, 0.1]);
}

#[test]
fn slice_of_ball_is_disc() {
    let e = ball(3, 2.0);
    let s = e.slice(&[0, 1], &dvector![0.0, 0.0, 1.0]).unwrap().unwrap();
    assert!((s.shape()[(0, 0)] - 3.0).abs() < 1e-12);
    assert!(e.slice(&[0, 1], &dvector![0.0, 0.0, 2.5]).unwrap().is_none());
}

#[test]
fn json_round_trip_is_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = DMatrix::from_fn(4, 4, |_, _| rng.gen::<f64>() - 0.5);
    let p = symmetrize(&(&a * a.transpose() + DMatrix::identity(4, 4) * 0.1));
    let e = Ellipsoid::new(DVector::from_fn(4, |_, _| rng.gen::<f64>() * 1e3), p).unwrap();
    let s = serde_json::to_string(&e).unwrap();
    let back: Ellipsoid = serde_json::from_str(&s).unwrap();
    assert!(e.center().iter().zip(back.center().iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(e.shape().iter().zip(back.shape().iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
}
