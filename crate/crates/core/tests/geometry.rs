use dinterp::geometry::{fk, matrix_to_rot6, norm, rot6_to_matrix, slerp, sub, Quaternion, Rot6, Skeleton};
use proptest::prelude::*;

fn unit_quat() -> impl Strategy<Value = Quaternion> {
    prop::array::uniform4(-1.0f64..1.0)
        .prop_filter("away from zero", |a| a.iter().map(|x| x * x).sum::<f64>() > 1e-2)
        .prop_map(|a| Quaternion::from_array(a).normalize())
}

fn rot6() -> impl Strategy<Value = Rot6> {
    prop::array::uniform6(-2.0f64..2.0)
        .prop_filter("non-degenerate", |r| {
            let a = [r[0], r[1], r[2]];
            let b = [r[3], r[4], r[5]];
            let c = dinterp::geometry::cross(a, b);
            norm(a) > 1e-2 && norm(c) > 1e-2 * norm(a) * norm(b)
        })
        .prop_map(Rot6)
}

proptest! {
    #[test]
    fn rot6_yields_proper_rotations(r in rot6()) {
        let m = rot6_to_matrix(&r).unwrap();
        prop_assert!(m.orthonormality_error() < 1e-12);
        prop_assert!((m.det() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rot6_round_trip(r in rot6()) {
        let m = rot6_to_matrix(&r).unwrap();
        let back = rot6_to_matrix(&matrix_to_rot6(&m)).unwrap();
        prop_assert!(back.max_abs_diff(&m) < 1e-12);
    }

    #[test]
    fn slerp_hits_endpoints_and_stays_unit(a in unit_quat(), b in unit_quat(), t in 0.0f64..1.0) {
        let q = slerp(a, b, t);
        prop_assert!((q.norm() - 1.0).abs() < 1e-12);
        prop_assert!((slerp(a, b, 0.0).dot(a).abs() - 1.0).abs() < 1e-12);
        prop_assert!((slerp(a, b, 1.0).dot(b).abs() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn slerp_has_constant_angular_speed(a in unit_quat(), b in unit_quat(), t in 0.0f64..1.0) {
        let total = a.conjugate().mul(b.aligned_to(a)).angle();
        let part = a.conjugate().mul(slerp(a, b, t)).angle();
        prop_assert!((part - t * total).abs() < 1e-6);
    }

    #[test]
    fn forward_kinematics_preserves_bone_lengths(
        root in prop::array::uniform3(-5.0f64..5.0),
        rots in prop::collection::vec(rot6(), 5),
    ) {
        let skel = Skeleton::biped5();
        let pose = fk(&skel, root, &rots).unwrap();
        prop_assert_eq!(pose.positions[0], root);
        for j in 1..skel.joint_count() {
            let p = skel.parent(j).unwrap();
            let len = norm(sub(pose.positions[j], pose.positions[p]));
            prop_assert!((len - skel.bone_length(j)).abs() < 1e-12);
        }
    }
}

#[test]
fn quaternion_matrix_round_trip_keeps_rotation() {
    let q = Quaternion::from_axis_angle([1.0, 2.0, -0.5], 2.9);
    let back = Quaternion::from_matrix(&q.to_matrix());
    assert!((back.dot(q).abs() - 1.0).abs() < 1e-12);
}
