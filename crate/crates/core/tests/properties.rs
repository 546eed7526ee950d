//! Property tests over randomized inputs.

use proptest::prelude::*;

use lidar_normals::estimate::orient_viewpoint;
use lidar_normals::frame::{Frame, NormalField};
use lidar_normals::geom::{Pose, UnitVec3, Vec3};
use lidar_normals::graph::{build_knn_graph, gaussian_weight};
use lidar_normals::io::{read_frame, write_frame};

fn finite_f32_coord() -> impl Strategy<Value = f64> {
    // f32-representable values, so the f32 payload round-trips losslessly.
    (-1e4f32..1e4f32).prop_map(|v| v as f64)
}

fn arb_pose() -> impl Strategy<Value = Pose> {
    (
        -3.0f64..3.0,
        -3.0f64..3.0,
        -3.0f64..3.0,
        -100.0f64..100.0,
        -100.0f64..100.0,
        -100.0f64..100.0,
    )
        .prop_map(|(r, p, y, x, ty, z)| {
            Pose::new(
                *nalgebra::Rotation3::from_euler_angles(r, p, y).matrix(),
                Vec3::new(x, ty, z),
            )
            .expect("euler rotation is proper")
        })
}

fn arb_unit() -> impl Strategy<Value = UnitVec3> {
    (0.0f64..std::f64::consts::TAU, -1.0f64..1.0).prop_map(|(theta, z)| {
        let r = (1.0 - z * z).max(0.0).sqrt();
        let v = Vec3::new(
            ((r * theta.cos()) as f32) as f64,
            ((r * theta.sin()) as f32) as f64,
            ((z) as f32) as f64,
        );
        UnitVec3::try_new(v).expect("f32 rounding keeps unit tolerance")
    })
}

fn arb_frame() -> impl Strategy<Value = Frame> {
    (
        proptest::collection::vec(
            (finite_f32_coord(), finite_f32_coord(), finite_f32_coord()),
            0..40,
        ),
        arb_pose(),
        proptest::option::of(proptest::bool::ANY),
        -1e6f64..1e6,
    )
        .prop_flat_map(|(coords, pose, with_normals, timestamp)| {
            let n = coords.len();
            let points: Vec<Vec3> = coords
                .into_iter()
                .map(|(x, y, z)| Vec3::new(x, y, z))
                .collect();
            let normals = if with_normals.unwrap_or(false) {
                proptest::collection::vec(arb_unit(), n..=n)
                    .prop_map(Some)
                    .boxed()
            } else {
                Just(None).boxed()
            };
            (Just(points), Just(pose), normals, Just(timestamp))
        })
        .prop_map(|(points, pose, gt_normals, timestamp)| Frame {
            points,
            gt_normals,
            pose,
            timestamp,
            frame_id: 0,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frame_files_round_trip(frame in arb_frame()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.lsnf");
        write_frame(&frame, &path).unwrap();
        let back = read_frame(&path).unwrap();
        prop_assert_eq!(&back, &frame);

        // And the byte stream is a fixed point of read/write.
        let path2 = dir.path().join("frame2.lsnf");
        write_frame(&back, &path2).unwrap();
        prop_assert_eq!(std::fs::read(path).unwrap(), std::fs::read(path2).unwrap());
    }

    #[test]
    fn pose_inverse_roundtrips_points(pose in arb_pose(), x in -50.0f64..50.0, y in -50.0f64..50.0, z in -50.0f64..50.0) {
        let p = Vec3::new(x, y, z);
        let back = pose.inverse().transform_point(&pose.transform_point(&p));
        prop_assert!((back - p).norm() < 1e-9 * (1.0 + p.norm()));

        let n = Vec3::new(0.3, -0.4, 0.86);
        let rotated = pose.transform_normal(&n);
        prop_assert!((rotated.norm() - n.norm()).abs() < 1e-9);
    }

    #[test]
    fn orientation_is_idempotent_and_facing(
        coords in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..-0.1), 1..30),
        normals in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 30),
    ) {
        let n = coords.len();
        let points: Vec<Vec3> = coords.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect();
        let field = NormalField::new(
            normals.into_iter().take(n).map(|(x, y, z)| Vec3::new(x, y, z)).collect(),
            0,
        );
        let frame = Frame {
            points,
            gt_normals: None,
            pose: Pose::identity(),
            timestamp: 0.0,
            frame_id: 0,
        };
        let once = orient_viewpoint(&field, &frame).unwrap();
        let twice = orient_viewpoint(&once, &frame).unwrap();
        prop_assert_eq!(&once, &twice);
        for (p, n) in frame.points.iter().zip(&once.normals) {
            prop_assert!(n.dot(p) <= 0.0);
        }
    }

    #[test]
    fn knn_edge_weights_recompute_from_endpoints(
        coords in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), 5..60),
        k in 1usize..6,
        sigma in 0.05f64..1.0,
    ) {
        let points: Vec<Vec3> = coords.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect();
        let graph = build_knn_graph(&points, k, sigma).unwrap();
        let k_eff = k.min(points.len() - 1);
        prop_assert_eq!(graph.edge_count(), points.len() * k_eff);
        for e in graph.edges() {
            prop_assert!(e.source != e.target);
            let d2 = (points[e.source as usize] - points[e.target as usize]).norm_squared();
            prop_assert!((e.weight - gaussian_weight(d2, sigma)).abs() < 1e-9);
            // Edges far beyond sigma underflow to exactly 0.0; they are kept.
            prop_assert!(e.weight >= 0.0 && e.weight <= 1.0);
        }
    }
}
