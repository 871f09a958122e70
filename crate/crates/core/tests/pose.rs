use connkit::fixtures::Task;
use connkit::geometry::{random_rotation, AttachmentFeature, RigidTransform};
use connkit::graph::{evaluate_poses, load_poses, solve_graph_poses, GraphError, PosesFile};
use connkit::pose::{pose_metrics, solve_alignment, Degeneracy, MatchedPairs};
use connkit::{Pairs, Pairs32};
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vec3() -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-0.3f64..0.3).prop_map(Vector3::from)
}

fn rotation() -> impl Strategy<Value = Matrix3<f64>> {
    any::<u64>().prop_map(|s| random_rotation(&mut ChaCha8Rng::seed_from_u64(s)))
}

fn unit() -> impl Strategy<Value = Vector3<f64>> {
    rotation().prop_map(|r| r * Vector3::z())
}

fn transform() -> impl Strategy<Value = RigidTransform<f64>> {
    (rotation(), vec3()).prop_map(|(r, t)| RigidTransform::new(r, t).unwrap())
}

fn consistent(features: &[(Vector3<f64>, Vector3<f64>)], truth: &RigidTransform<f64>) -> Pairs {
    MatchedPairs::new(
        features
            .iter()
            .map(|(p, n)| {
                let a = AttachmentFeature { position: *p, normal: *n };
                let b = AttachmentFeature {
                    position: truth.apply_point(p),
                    normal: -truth.apply_vector(n),
                };
                (a, b)
            })
            .collect(),
    )
}

proptest! {
    #[test]
    fn consistent_pairs_are_recovered(
        features in prop::collection::vec((vec3(), unit()), 3..7),
        truth in transform(),
    ) {
        let m = consistent(&features, &truth);
        let r = solve_alignment(&m).unwrap();
        prop_assert!(r.transform.rotation_distance(&truth) < 1e-7);
        prop_assert!(r.transform.translation_distance(&truth) < 1e-9);
        prop_assert!(r.residual < 1e-12);
        r.transform.check().unwrap();
    }

    #[test]
    fn no_nearby_pose_does_better(
        pairs in prop::collection::vec((vec3(), unit(), vec3(), unit()), 1..7),
        alpha in 0.0f64..4.0,
        axis in unit(),
        angle in -0.2f64..0.2,
        shift in vec3(),
    ) {
        let m = MatchedPairs::new(
            pairs
                .iter()
                .map(|(p, n, q, k)| (AttachmentFeature { position: *p, normal: *n }, AttachmentFeature { position: *q, normal: *k }))
                .collect(),
        )
        .with_alpha(alpha);
        let r = solve_alignment(&m).unwrap();
        let best = m.objective(&r.transform);
        prop_assert!((best - r.residual).abs() <= 1e-9 * (1.0 + best));
        let nudge = RigidTransform::from_axis_angle(&axis, angle, shift * 0.1);
        prop_assert!(m.objective(&nudge.compose(&r.transform)) >= best - 1e-9);
    }

    #[test]
    fn relabeling_the_frames_inverts_the_answer(
        features in prop::collection::vec((vec3(), unit()), 3..7),
        truth in transform(),
    ) {
        let m = consistent(&features, &truth);
        let flipped = MatchedPairs::new(m.pairs.iter().map(|(a, b)| (*b, *a)).collect());
        let forward = solve_alignment(&m).unwrap().transform;
        let back = solve_alignment(&flipped).unwrap().transform;
        prop_assert!(forward.compose(&back).rotation_distance(&RigidTransform::identity()) < 1e-7);
    }

    #[test]
    fn metrics_vanish_for_exact_poses_and_are_bounded(
        poses in prop::collection::vec(transform(), 1..5),
        other in prop::collection::vec(transform(), 5),
        clouds in prop::collection::vec(prop::collection::vec(vec3(), 3..8), 5),
    ) {
        let n = poses.len();
        let m = pose_metrics(&poses, &poses, &clouds[..n], 0.01).unwrap();
        prop_assert!(m.gd < 1e-7 && m.rmse < 1e-12 && m.cd < 1e-12 && m.pa == 1.0);
        let m = pose_metrics(&other[..n], &poses, &clouds[..n], 0.01).unwrap();
        prop_assert!(m.gd >= 0.0 && m.gd <= std::f64::consts::PI + 1e-12);
        prop_assert!(m.cd <= m.rmse + 1e-12);
        prop_assert!((0.0..=1.0).contains(&m.pa));
    }
}

#[test]
fn single_precision_agrees_with_double() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let truth = RigidTransform::new(random_rotation(&mut rng), Vector3::new(0.1, 0.0, -0.2)).unwrap();
    let features: Vec<_> = (0..4)
        .map(|i| {
            let p = Vector3::new(0.1 * i as f64, 0.05 * (i % 2) as f64, -0.02 * i as f64);
            (p, (random_rotation::<f64, _>(&mut rng) * Vector3::z()))
        })
        .collect();
    let m = consistent(&features, &truth);
    let m32: Pairs32 = MatchedPairs::new(
        m.pairs
            .iter()
            .map(|(a, b)| {
                let cast = |f: &AttachmentFeature<f64>| AttachmentFeature::normalized(f.position.cast::<f32>(), f.normal.cast::<f32>());
                (cast(a), cast(b))
            })
            .collect(),
    );
    let r = solve_alignment(&m32).unwrap();
    assert_eq!(r.degeneracy, Degeneracy::Full);
    assert!(r.transform.cast::<f64>().rotation_distance(&truth) < 1e-3);
    assert!(r.transform.cast::<f64>().translation_distance(&truth) < 1e-4);
}

#[test]
fn solved_fixtures_evaluate_as_exact() {
    for task in [Task::ShoeShelf, Task::Chair, Task::LegoPerson, Task::PlaneModel] {
        let graph = task.graph();
        let solved = solve_graph_poses(&graph, 1.0).unwrap();
        let m = evaluate_poses(&graph, &solved.edge_transforms(), 0.01).unwrap();
        assert!(m.gd < 1e-9 && m.rmse < 1e-9 && m.pa == 1.0, "{}: {m:?}", task.name());

        let file = PosesFile::new(&graph.name, 1.0, &solved);
        let text = serde_json::to_string_pretty(&file).unwrap();
        assert_eq!(load_poses(&text).unwrap(), file);
    }
}

#[test]
fn perturbed_edge_lowers_part_accuracy() {
    let graph = Task::Chair.graph();
    let mut edges = solve_graph_poses(&graph, 1.0).unwrap().edge_transforms();
    let first = edges.keys().next().unwrap().clone();
    let shift = RigidTransform::from_translation(Vector3::new(0.05, 0.0, 0.0));
    edges.insert(first.clone(), shift.compose(&edges[&first]));
    let m = evaluate_poses(&graph, &edges, 0.01).unwrap();
    assert!(m.pa < 1.0 && m.rmse > 0.0, "{m:?}");
}

#[test]
fn evaluation_needs_ground_truth_and_a_known_version() {
    let mut graph = Task::LegoPerson.graph();
    let edges = solve_graph_poses(&graph, 1.0).unwrap().edge_transforms();
    for part in graph.parts.values_mut() {
        part.assembled_pose = None;
    }
    assert!(matches!(evaluate_poses(&graph, &edges, 0.01), Err(GraphError::NoGroundTruth)));
    let text = "{\"format_version\": 9, \"task\": \"x\", \"alpha\": 1.0, \"edges\": {}}";
    assert!(load_poses(text).is_err());
}
