//! Acceptance gate: prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::time::{Duration, Instant};

use connkit::extraction::{
    random_baseline, score_dataset, score_step, score_steps, ExtractionStep, PointPair, ScoreOptions, StepComponent,
    StepPrediction,
};
use connkit::fixtures::Task;
use connkit::geometry::{random_rotation, AttachmentFeature, RigidTransform};
use connkit::graph::{load_graph, plan_sequence, solve_graph_poses, AttachmentPointId, ConnectorType, NodeId};
use connkit::pose::{pose_metrics, solve_alignment, MatchedPairs};
use connkit::sim::{
    step_sim, Command, HeldBody, HoleGeometry, HoleSpec, JointPhase, JointState, StepCaps, World,
};
use connkit::strategy::{run_benchmark, summarize, BenchmarkOptions, StrategyConfig, StrategyKind};
use connkit::vlm::{prompt_step, run_pipeline, MockClient, ModelClient, PipelineOptions};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed <= limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:.2?}, limit {limit:?}"))
    }
}

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn random_feature(rng: &mut ChaCha8Rng) -> AttachmentFeature<f64> {
    let p = Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
    AttachmentFeature {
        position: p,
        normal: random_rotation::<f64, _>(rng) * Vector3::z(),
    }
}

fn random_transform(rng: &mut ChaCha8Rng) -> RigidTransform<f64> {
    let t = Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
    RigidTransform::new(random_rotation(rng), t).expect("proper rotation")
}

/// Features on `a` and their images under `truth` on `b`, normals opposed,
/// with optional Gaussian noise on the target positions.
fn consistent_instance(rng: &mut ChaCha8Rng, k: usize, truth: &RigidTransform<f64>, noise: f64) -> MatchedPairs<f64> {
    let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let pairs = (0..k)
        .map(|_| {
            let a = random_feature(rng);
            let mut position = truth.apply_point(&a.position);
            if noise > 0.0 {
                position += Vector3::from_fn(|_, _| normal.sample(rng));
            }
            let b = AttachmentFeature {
                position,
                normal: -truth.apply_vector(&a.normal),
            };
            (a, b)
        })
        .collect();
    MatchedPairs::new(pairs)
}

fn solver_exactness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_rot, mut worst_trans) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let k = rng.random_range(3..=6);
        let truth = random_transform(&mut rng);
        let solved = solve_alignment(&consistent_instance(&mut rng, k, &truth, 0.0)).map_err(|e| e.to_string())?;
        worst_rot = worst_rot.max(solved.transform.rotation_distance(&truth));
        worst_trans = worst_trans.max(solved.transform.translation_distance(&truth));
    }

    let (mut predicted, mut expected, mut clouds, mut errors) = (vec![], vec![], vec![], vec![]);
    for _ in 0..1000 {
        let k = rng.random_range(3..=6);
        let truth = random_transform(&mut rng);
        let m = consistent_instance(&mut rng, k, &truth, 0.0005);
        let solved = solve_alignment(&m).map_err(|e| e.to_string())?;
        errors.push(solved.transform.translation_distance(&truth));
        predicted.push(solved.transform);
        expected.push(truth);
        clouds.push(m.pairs.iter().map(|(a, _)| a.position).collect::<Vec<_>>());
    }
    let metrics = pose_metrics(&predicted, &expected, &clouds, 0.01).map_err(|e| e.to_string())?;
    errors.sort_by(f64::total_cmp);
    let median = errors[errors.len() / 2];
    within(start.elapsed(), Duration::from_secs(5))?;
    check(
        worst_rot < 1e-7 && worst_trans < 1e-9 && metrics.pa == 1.0 && median < 0.001,
        format!(
            "noiseless worst rot {worst_rot:.2e} rad, trans {worst_trans:.2e} m; noisy PA {} median trans {:.3} mm",
            metrics.pa,
            median * 1e3
        ),
    )
}

fn solver_optimality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_gap = f64::NEG_INFINITY;
    for i in 0..100 {
        let k = rng.random_range(1..=6);
        let m = if i % 2 == 0 {
            MatchedPairs::new((0..k).map(|_| (random_feature(&mut rng), random_feature(&mut rng))).collect())
        } else {
            let truth = random_transform(&mut rng);
            consistent_instance(&mut rng, k, &truth, 0.002)
        };
        let best = m.objective(&solve_alignment(&m).map_err(|e| e.to_string())?.transform);
        let n = k as f64;
        let ca = m.pairs.iter().map(|(a, _)| a.position).sum::<Vector3<f64>>() / n;
        let cb = m.pairs.iter().map(|(_, b)| b.position).sum::<Vector3<f64>>() / n;
        for _ in 0..100_000 {
            let r: Matrix3<f64> = random_rotation(&mut rng);
            let candidate = RigidTransform::new(r, cb - r * ca).expect("proper rotation");
            worst_gap = worst_gap.max(best - m.objective(&candidate));
        }
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    check(
        worst_gap <= 1e-9,
        format!("largest improvement over the solver by a sampled rotation: {worst_gap:.2e}"),
    )
}

fn component(node: &str, points: &[&str]) -> StepComponent {
    StepComponent {
        node: NodeId::new(node),
        label: node.to_owned(),
        image: Some(format!("{node}.png")),
        candidates: points.iter().map(|p| AttachmentPointId::new(*p)).collect(),
    }
}

fn toy_step(components: Vec<StepComponent>, truth: Vec<PointPair>) -> ExtractionStep {
    let mut budget = BTreeMap::new();
    for p in &truth {
        *budget.entry(p.connector_type).or_default() += 1;
    }
    ExtractionStep {
        step_index: 1,
        edge: None,
        components,
        connector_budget: budget,
        truth_pairs: truth,
        manual_present: true,
        manual_image: Some("manual.png".into()),
    }
}

fn prediction(pairs: Vec<PointPair>) -> StepPrediction {
    StepPrediction {
        step_index: 1,
        pairs,
        flags: vec![],
    }
}

fn metric_fidelity() -> Outcome {
    let step = toy_step(
        vec![component("left", &["A", "C"]), component("right", &["B", "D", "E"])],
        vec![PointPair::new("A", "B", ConnectorType::Dowel), PointPair::new("C", "D", ConnectorType::Dowel)],
    );
    let p = prediction(vec![PointPair::new("A", "B", ConnectorType::Dowel), PointPair::new("C", "E", ConnectorType::Dowel)]);
    let s = score_step(&p, &step, ScoreOptions::default()).map_err(|e| e.to_string())?;

    // A quarter turn on one of two parts averages to an eighth turn.
    let cloud = vec![
        Vector3::new(0.1, 0.0, 0.0),
        Vector3::new(0.0, 0.1, 0.0),
        Vector3::new(-0.1, 0.0, 0.0),
        Vector3::new(0.0, -0.1, 0.05),
    ];
    let truth = vec![RigidTransform::identity(); 2];
    let predicted = vec![RigidTransform::from_axis_angle(&Vector3::z(), FRAC_PI_2, Vector3::zeros()), RigidTransform::identity()];
    let m = pose_metrics(&predicted, &truth, &[cloud.clone(), cloud], 0.01).map_err(|e| e.to_string())?;
    let gd_err = (m.gd - std::f64::consts::FRAC_PI_4).abs();
    check(
        s.pair_f1 == 0.5 && s.set_f1 == 0.75 && gd_err <= 1e-12,
        format!("pair_f1 {} set_f1 {} gd error {gd_err:.1e}", s.pair_f1, s.set_f1),
    )
}

/// Exact baseline pair-success probability by walking every sampling branch:
/// a uniform unordered pair of components that still have free points, then
/// a uniform free point on each.
fn enumerate(step: &ExtractionStep) -> f64 {
    fn walk(step: &ExtractionStep, kinds: &[ConnectorType], used: &mut Vec<String>, pairs: &mut Vec<PointPair>, prob: f64) -> f64 {
        let Some((&kind, rest)) = kinds.split_first() else {
            return prob * score_step(&prediction(pairs.clone()), step, ScoreOptions::default()).expect("matching step").pair_success;
        };
        let free: Vec<Vec<String>> = step
            .components
            .iter()
            .map(|c| c.candidates.iter().map(|p| p.to_string()).filter(|p| !used.contains(p)).collect())
            .collect();
        let eligible: Vec<usize> = (0..free.len()).filter(|&i| !free[i].is_empty()).collect();
        let n_pairs = (eligible.len() * (eligible.len() - 1) / 2) as f64;
        let mut total = 0.0;
        for (x, &i) in eligible.iter().enumerate() {
            for &j in &eligible[x + 1..] {
                for a in &free[i] {
                    for b in &free[j] {
                        let p = prob / n_pairs / (free[i].len() * free[j].len()) as f64;
                        used.extend([a.clone(), b.clone()]);
                        pairs.push(PointPair::new(a, b, kind));
                        total += walk(step, rest, used, pairs, p);
                        pairs.pop();
                        used.truncate(used.len() - 2);
                    }
                }
            }
        }
        total
    }
    let kinds: Vec<ConnectorType> = ConnectorType::ALL
        .into_iter()
        .flat_map(|k| std::iter::repeat_n(k, step.connector_budget.get(&k).copied().unwrap_or(0)))
        .collect();
    walk(step, &kinds, &mut vec![], &mut vec![], 1.0)
}

fn baseline_statistics() -> Outcome {
    use ConnectorType::{Dowel, Screw};
    let toys = [
        toy_step(vec![component("l", &["A", "C"]), component("r", &["B", "D"])], vec![PointPair::new("A", "B", Dowel)]),
        toy_step(
            vec![component("l", &["A", "C"]), component("r", &["B", "D"])],
            vec![PointPair::new("A", "B", Dowel), PointPair::new("C", "D", Dowel)],
        ),
        toy_step(
            vec![component("a", &["A1", "A2"]), component("b", &["B1"]), component("c", &["C1", "C2", "C3"])],
            vec![PointPair::new("A1", "B1", Dowel), PointPair::new("A2", "C2", Screw)],
        ),
    ];
    let samples = 10_000u64;
    let mut details = Vec::new();
    let mut ok = enumerate(&toys[0]) == 0.25;
    for toy in &toys {
        let exact = enumerate(toy);
        let run = |salt: u64| -> Vec<f64> {
            (0..samples)
                .map(|s| {
                    let p = random_baseline(toy, s ^ salt).expect("enough candidates");
                    score_step(&p, toy, ScoreOptions::default()).expect("matching step").pair_success
                })
                .collect()
        };
        let first = run(0);
        ok &= first == run(0);
        let p = first.iter().sum::<f64>() / samples as f64;
        let se = (p * (1.0 - p) / samples as f64).sqrt();
        ok &= (p - exact).abs() <= 2.0 * se;
        details.push(format!("{p:.4} vs {exact:.4} (se {se:.4})"));
    }
    check(ok, format!("Monte Carlo vs exact: {}", details.join(", ")))
}

const TASKS: [(Task, usize); 4] = [(Task::ShoeShelf, 11), (Task::Chair, 22), (Task::LegoPerson, 8), (Task::PlaneModel, 12)];

fn plan_counts() -> Outcome {
    let mut ok = true;
    let mut counts = Vec::new();
    for (task, expected) in TASKS {
        let path = fixtures_dir().join(format!("{}.graph.json", task.name()));
        let bytes = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let graph = load_graph(&bytes).map_err(|e| e.to_string())?;
        let n = plan_sequence(&graph).map_err(|e| e.to_string())?.len();
        ok &= n == expected && graph == task.graph();
        counts.push(format!("{} {n}", task.name()));
    }
    check(ok, counts.join(", "))
}

fn screw_world(rng: &mut ChaCha8Rng) -> World {
    let tip = Vector3::new(rng.random_range(-0.001..0.001), rng.random_range(-0.001..0.001), rng.random_range(0.0..0.008));
    World {
        operation: "fuzz".into(),
        connector_type: ConnectorType::Screw,
        hole: HoleSpec {
            axis_pose: RigidTransform::identity(),
            geometry: HoleGeometry::for_connector(ConnectorType::Screw),
        },
        fixed_pose: RigidTransform::identity(),
        held: HeldBody {
            pose: RigidTransform::from_translation(tip),
            tip_offset: Vector3::zeros(),
            axis: -Vector3::z(),
        },
        joint: JointState::default(),
        caps: StepCaps::default(),
        truth_pose: RigidTransform::identity(),
        nominal_tip: Vector3::zeros(),
        steps: 0,
        trace: None,
    }
}

fn screw_fuzz() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut engaged, mut fixed) = (0, 0);
    for seq in 0..10_000 {
        let mut world = screw_world(&mut rng);
        // Odd sequences mostly drive the screw home so the later phases are
        // exercised too.
        let driving = seq % 2 == 1;
        let len = if driving { rng.random_range(300..1000) } else { rng.random_range(1..300) };
        let mut phase = world.joint.phase;
        for step in 0..len {
            let pick = if driving { [3, 4, 6, 7, 8, 9, 1, 0, 5, 2][rng.random_range(0..10)] } else { rng.random_range(0..10) };
            let command = match pick {
                0 => Command::Translate(Vector3::from_fn(|_, _| rng.random_range(-0.0012..0.0012))),
                1 | 2 => Command::Press(rng.random_range(-0.0012..0.0012)),
                3 | 4 => Command::Press(rng.random_range(0.0..0.0012)),
                5 => Command::RotateAboutAxis(rng.random_range(-0.15..0.15)),
                _ => Command::RotateAboutAxis(rng.random_range(0.0..0.15)),
            };
            let before = world.joint;
            step_sim(&mut world, &command);
            let j = world.joint;
            let fail = |what: &str| Err(format!("sequence {seq} step {step}: {what} after {command:?}: {j:?}"));
            if j.inserted_depth > world.hole.geometry.pitch * j.turns {
                return fail("inserted depth exceeds pitch × turns");
            }
            if j.phase < phase {
                return fail("phase regressed");
            }
            if before.turns <= 0.0 && j.inserted_depth > 0.0 {
                return fail("translation before rotation");
            }
            phase = j.phase;
        }
        engaged += usize::from(phase >= JointPhase::AxisConstrained);
        fixed += usize::from(phase == JointPhase::Fixed);
    }
    within(start.elapsed(), Duration::from_secs(30))?;
    check(
        engaged > 1000 && fixed > 0,
        format!("10000 sequences without violations; {engaged} engaged, {fixed} fastened"),
    )
}

fn strategy_ordering() -> Outcome {
    let start = Instant::now();
    let strategies: Vec<StrategyConfig> = StrategyKind::ALL.into_iter().map(StrategyConfig::new).collect();
    let mut ok = true;
    let mut lines = Vec::new();
    for (task, _) in TASKS {
        let graph = task.graph();
        let poses = solve_graph_poses(&graph, 1.0).map_err(|e| e.to_string())?.edge_transforms();
        let reports = run_benchmark(&graph, &poses, &strategies, 100, 7, &BenchmarkOptions::default()).map_err(|e| e.to_string())?;
        let rate = |k: StrategyKind| summarize(&reports).into_iter().find(|r| r.strategy == k).map_or(0.0, |r| r.success_rate);
        let (random, grid, hybrid) = (rate(StrategyKind::RandomSearch), rate(StrategyKind::GridSearch), rate(StrategyKind::ForcePositionHybrid));
        ok &= hybrid >= grid && grid - random >= 0.4 && random < 0.2;
        lines.push(format!("{} {random:.3}/{grid:.3}/{hybrid:.3}", task.name()));
    }
    within(start.elapsed(), Duration::from_secs(600))?;
    check(ok, format!("random/grid/hybrid: {}", lines.join(", ")))
}

fn pipeline_closure() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (task, _) in TASKS {
        let dataset = task.dataset();
        let oracle = MockClient::oracle(&dataset);
        let run = run_pipeline(&dataset, &oracle, &PipelineOptions::default());
        let s = score_dataset(&run.predictions.predictions, &dataset, ScoreOptions::default());
        ok &= s.pair_f1 == 1.0 && s.set_f1 == 1.0 && s.pair_success == 1.0 && s.set_success == 1.0 && run.diagnostics.is_empty();

        let garbage = dataset.steps[dataset.steps.len() / 2].step_index;
        let broken = MockClient::new(move |prompt| match prompt_step(prompt) {
            Some((step, 2)) if step == garbage => Ok("I am not sure which points connect.".into()),
            _ => oracle.send(prompt),
        });
        let run = run_pipeline(&dataset, &broken, &PipelineOptions::default());
        let steps = score_steps(&run.predictions.predictions, &dataset, ScoreOptions::default());
        for (step, s) in dataset.steps.iter().zip(&steps) {
            let expect = if step.step_index == garbage { 0.0 } else { 1.0 };
            ok &= s.pair_f1 == expect && s.set_f1 == expect;
        }
        ok &= run.diagnostics.len() == 1 && run.diagnostics[0].step_index == garbage;
        lines.push(format!("{} F1 {:.1}", task.name(), s.pair_f1));
    }
    check(ok, format!("{}; one garbage step isolated on each", lines.join(", ")))
}

fn connkit(args: &[&str], dir: &Path) -> Result<(), String> {
    let out = Process::new(env!("CARGO_BIN_EXE_connkit"))
        .args(args)
        .current_dir(dir)
        .env_remove("CONNKIT_CONFIG")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("connkit {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let graph = fixtures_dir().join("plane_model.graph.json");
    let dataset = fixtures_dir().join("chair.dataset.json");
    let (graph, dataset) = (graph.to_str().unwrap(), dataset.to_str().unwrap());
    let read = |name: &str| std::fs::read(d.join(name)).map_err(|e| format!("{name}: {e}"));

    let sim = ["sim", "run", "--graph", graph, "--strategy", "all", "--trials", "5", "--seed", "9"];
    connkit(&[&sim[..], &["--out", "a.jsonl"]].concat(), d)?;
    connkit(&[&sim[..], &["--out", "b.jsonl"]].concat(), d)?;
    let first = read("a.jsonl")?;
    connkit(&["--config", "a.jsonl.config.json", "sim", "run"], d)?;
    let sim_same = first == read("b.jsonl")? && first == read("a.jsonl")? && !first.is_empty();

    let rb = ["extract", "random-baseline", "--dataset", dataset, "--seed", "4"];
    connkit(&[&rb[..], &["--out", "a.json"]].concat(), d)?;
    connkit(&[&rb[..], &["--out", "b.json"]].concat(), d)?;
    let first = read("a.json")?;
    connkit(&["--config", "a.json.config.json", "extract", "random-baseline"], d)?;
    let rb_same = first == read("b.json")? && first == read("a.json")?;

    check(
        sim_same && rb_same,
        format!("sim run identical: {sim_same}; random-baseline identical: {rb_same}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("solver exactness", solver_exactness),
        ("solver optimality", solver_optimality),
        ("metric fidelity", metric_fidelity),
        ("random-baseline statistics", baseline_statistics),
        ("fixture plan counts", plan_counts),
        ("screw mechanism invariants", screw_fuzz),
        ("strategy ordering", strategy_ordering),
        ("offline pipeline closure", pipeline_closure),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("[{}] {name}: PASS ({detail}; {secs:.1} s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("[{}] {name}: FAIL ({detail}; {secs:.1} s)", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
