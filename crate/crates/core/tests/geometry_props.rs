use coaug_core::geometry::{angle_between, compose, invert, rotate, transform_point, RigidTransform, UnitQuaternion, Vec3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plain Hamilton product on `[w, x, y, z]`, independent of the library.
fn hamilton(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

fn sandwich(q: UnitQuaternion, p: Vec3) -> Vec3 {
    let q = q.to_array();
    let conj = [q[0], -q[1], -q[2], -q[3]];
    let r = hamilton(hamilton(q, [0.0, p.x, p.y, p.z]), conj);
    Vec3::new(r[1], r[2], r[3])
}

fn arccos_oracle(u: Vec3, v: Vec3) -> f64 {
    let dot = u.x * v.x + u.y * v.y + u.z * v.z;
    let nu = (u.x * u.x + u.y * u.y + u.z * u.z).sqrt();
    let nv = (v.x * v.x + v.y * v.y + v.z * v.z).sqrt();
    (dot / (nu * nv)).clamp(-1.0, 1.0).acos().to_degrees()
}

fn random_vec(rng: &mut impl Rng, scale: f64) -> Vec3 {
    Vec3::new(
        rng.gen_range(-scale..scale),
        rng.gen_range(-scale..scale),
        rng.gen_range(-scale..scale),
    )
}

fn random_quat(rng: &mut impl Rng) -> UnitQuaternion {
    loop {
        let c: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        if let Ok(q) = UnitQuaternion::new(c[0], c[1], c[2], c[3]) {
            return q;
        }
    }
}

fn random_transform(rng: &mut impl Rng) -> RigidTransform {
    RigidTransform::new(random_quat(rng), random_vec(rng, 3.0))
}

fn close(a: Vec3, b: Vec3, eps: f64) -> bool {
    (a - b).norm() <= eps
}

#[test]
fn hand_oracle_for_rotation_examples() {
    let h = std::f64::consts::FRAC_PI_4;
    let qz90 = UnitQuaternion::new(h.cos(), 0.0, 0.0, h.sin()).unwrap();
    assert!(close(sandwich(qz90, Vec3::X), Vec3::Y, 1e-15));
    assert!(close(rotate(qz90, Vec3::X), sandwich(qz90, Vec3::X), 1e-15));
    let qz180 = UnitQuaternion::new(0.0, 0.0, 0.0, 1.0).unwrap();
    let p = Vec3::new(1.0, 1.0, 0.0);
    assert!(close(sandwich(qz180, p), Vec3::new(-1.0, -1.0, 0.0), 1e-15));
}

#[test]
fn rotate_matches_sandwich_and_preserves_distances() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let q = random_quat(&mut rng);
        let p = random_vec(&mut rng, 5.0);
        let r = random_vec(&mut rng, 5.0);
        let rp = rotate(q, p);
        assert!(close(rp, sandwich(q, p), 1e-12));
        assert!((rp.norm() - p.norm()).abs() < 1e-9);
        assert!((rp.distance(rotate(q, r)) - p.distance(r)).abs() < 1e-9);
    }
}

#[test]
fn compose_matches_pointwise_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let a = random_transform(&mut rng);
        let b = random_transform(&mut rng);
        let ab = compose(&a, &b);
        for _ in 0..100 {
            let p = random_vec(&mut rng, 2.0);
            assert!(close(
                transform_point(&ab, p),
                transform_point(&a, transform_point(&b, p)),
                1e-9
            ));
        }
    }
}

#[test]
fn invert_round_trips_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let t = random_transform(&mut rng);
        let inv = invert(&t);
        let id = compose(&t, &inv);
        for _ in 0..100 {
            let p = random_vec(&mut rng, 2.0);
            assert!(close(transform_point(&inv, transform_point(&t, p)), p, 1e-9));
            assert!(close(transform_point(&id, p), p, 1e-9));
        }
    }
}

#[test]
fn compose_is_associative() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let (a, b, c) = (random_transform(&mut rng), random_transform(&mut rng), random_transform(&mut rng));
        let left = compose(&compose(&a, &b), &c);
        let right = compose(&a, &compose(&b, &c));
        for _ in 0..5 {
            let p = random_vec(&mut rng, 2.0);
            assert!(close(transform_point(&left, p), transform_point(&right, p), 1e-9));
        }
    }
}

#[test]
fn angle_between_matches_arccos_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let u = random_vec(&mut rng, 1.0);
        let v = random_vec(&mut rng, 1.0);
        let a = angle_between(u, v).unwrap();
        assert!((a - arccos_oracle(u, v)).abs() < 1e-9);
        assert!((0.0..=180.0).contains(&a));
    }
}

proptest! {
    #[test]
    fn angle_symmetric_and_scale_invariant(
        u in prop::array::uniform3(-10.0f64..10.0),
        v in prop::array::uniform3(-10.0f64..10.0),
    ) {
        let (u, v) = (Vec3::from(u), Vec3::from(v));
        prop_assume!(u.norm() > 1e-3 && v.norm() > 1e-3);
        let a = angle_between(u, v).unwrap();
        prop_assert_eq!(a, angle_between(v, u).unwrap());
        // doubling is exact in binary floating point; tripling may round
        prop_assert_eq!(a, angle_between(u * 2.0, v).unwrap());
        prop_assert!((a - angle_between(u * 2.0, v * 3.0).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn quaternion_construction_is_unit(c in prop::array::uniform4(-100.0f64..100.0)) {
        if let Ok(q) = UnitQuaternion::new(c[0], c[1], c[2], c[3]) {
            let n: f64 = q.to_array().iter().map(|x| x * x).sum();
            prop_assert!((n - 1.0).abs() < 1e-9);
        }
    }
}
