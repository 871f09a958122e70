use std::collections::BTreeMap;

use connkit::extraction::{
    load_dataset, load_predictions, random_baseline, random_baseline_predictions, score_dataset, score_step,
    to_pretty_json, ExtractionDataset, ExtractionError, ExtractionScore, ExtractionStep, PointPair,
    PredictionsFile, ScoreOptions, StepComponent, StepPrediction, DATASET_FORMAT_VERSION,
};
use connkit::fixtures::Task;
use connkit::graph::{AttachmentPointId, ConnectorType, NodeId};
use proptest::prelude::*;

use ConnectorType::Dowel;

fn component(node: &str, points: &[&str]) -> StepComponent {
    StepComponent {
        node: NodeId::new(node),
        label: node.to_owned(),
        image: Some(format!("{node}.png")),
        candidates: points.iter().map(|p| AttachmentPointId::new(*p)).collect(),
    }
}

fn step(components: Vec<StepComponent>, truth: Vec<PointPair>) -> ExtractionStep {
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

fn pred(pairs: Vec<PointPair>) -> StepPrediction {
    StepPrediction {
        step_index: 1,
        pairs,
        flags: vec![],
    }
}

fn abcd() -> ExtractionStep {
    step(
        vec![component("left", &["A", "C"]), component("right", &["B", "D", "E"])],
        vec![PointPair::new("A", "B", Dowel), PointPair::new("C", "D", Dowel)],
    )
}

#[test]
fn chair_example_scores_perfectly() {
    let ds = Task::Chair.dataset();
    let p = pred(vec![PointPair::new("1B", "5E", Dowel), PointPair::new("1C", "5F", Dowel)]);
    let s = score_step(&p, &ds.steps[0], ScoreOptions::default()).unwrap();
    assert_eq!(s, ExtractionScore { pair_f1: 1.0, pair_success: 1.0, set_f1: 1.0, set_success: 1.0 });
}

#[test]
fn hand_counted_partial_match() {
    let p = pred(vec![PointPair::new("A", "B", Dowel), PointPair::new("C", "E", Dowel)]);
    let s = score_step(&p, &abcd(), ScoreOptions::default()).unwrap();
    assert_eq!(s.pair_f1, 0.5);
    assert_eq!(s.pair_success, 0.0);
    assert_eq!(s.set_f1, 0.75);
    assert_eq!(s.set_success, 0.0);
}

#[test]
fn empty_prediction_scores_zero_and_both_empty_scores_one() {
    let s = score_step(&pred(vec![]), &abcd(), ScoreOptions::default()).unwrap();
    assert_eq!(s, ExtractionScore::default());
    let empty = step(vec![component("l", &["A"]), component("r", &["B"])], vec![]);
    let s = score_step(&pred(vec![]), &empty, ScoreOptions::default()).unwrap();
    assert_eq!(s.pair_f1, 1.0);
    assert_eq!(s.set_success, 1.0);
}

#[test]
fn step_mismatch_and_type_toggle() {
    let mut p = pred(vec![PointPair::new("B", "A", ConnectorType::Screw), PointPair::new("D", "C", Dowel)]);
    let strict = score_step(&p, &abcd(), ScoreOptions::default()).unwrap();
    assert_eq!(strict.pair_f1, 0.5);
    assert_eq!(strict.set_success, 1.0);
    let loose = score_step(&p, &abcd(), ScoreOptions { match_connector_type: false }).unwrap();
    assert_eq!(loose.pair_success, 1.0);
    p.step_index = 2;
    assert!(matches!(
        score_step(&p, &abcd(), ScoreOptions::default()),
        Err(ExtractionError::StepMismatch { predicted: 2, truth: 1 })
    ));
}

#[test]
fn duplicate_predicted_pairs_are_false_positives() {
    let p = pred(vec![
        PointPair::new("A", "B", Dowel),
        PointPair::new("B", "A", Dowel),
        PointPair::new("C", "D", Dowel),
    ]);
    let s = score_step(&p, &abcd(), ScoreOptions::default()).unwrap();
    assert_eq!(s.pair_f1, 4.0 / 5.0);
    assert_eq!(s.pair_success, 0.0);
    assert_eq!(s.set_success, 1.0);
}

#[test]
fn dataset_average_with_half_perfect_half_missing() {
    let mut steps = Vec::new();
    for i in 1..=4 {
        let mut s = abcd();
        s.step_index = i;
        steps.push(s);
    }
    let ds = ExtractionDataset { format_version: DATASET_FORMAT_VERSION, task: "toy".into(), steps };
    let preds: Vec<_> = [1, 3]
        .into_iter()
        .map(|i| StepPrediction { step_index: i, pairs: ds.steps[0].truth_pairs.clone(), flags: vec![] })
        .collect();
    let s = score_dataset(&preds, &ds, ScoreOptions::default());
    assert_eq!(s.pair_success, 0.5);
    assert_eq!(s.set_success, 0.5);
    assert_eq!(s.pair_f1, 0.5);
    assert_eq!(s.percent().pair_success, 50.0);

    let perfect: Vec<_> = ds
        .steps
        .iter()
        .map(|s| StepPrediction { step_index: s.step_index, pairs: s.truth_pairs.clone(), flags: vec![] })
        .collect();
    let s = score_dataset(&perfect, &ds, ScoreOptions::default());
    assert_eq!(s, ExtractionScore { pair_f1: 1.0, pair_success: 1.0, set_f1: 1.0, set_success: 1.0 });
}

#[test]
fn random_baseline_is_deterministic_and_respects_budget() {
    let ds = Task::Chair.dataset();
    for st in &ds.steps {
        let a = random_baseline(st, 11).unwrap();
        assert_eq!(a, random_baseline(st, 11).unwrap());
        assert_eq!(a.pairs.len(), st.budget_total());
        for p in &a.pairs {
            let (ca, cb) = (st.component_of(&p.points[0]).unwrap(), st.component_of(&p.points[1]).unwrap());
            assert_ne!(ca, cb);
        }
    }
    assert_eq!(random_baseline_predictions(&ds, 3).unwrap(), random_baseline_predictions(&ds, 3).unwrap());

    let mut empty = abcd();
    empty.connector_budget.clear();
    assert!(random_baseline(&empty, 1).unwrap().pairs.is_empty());

    let mut tight = abcd();
    tight.connector_budget.insert(Dowel, 3);
    assert!(matches!(random_baseline(&tight, 1), Err(ExtractionError::InsufficientCandidates { .. })));
}

/// Exact distribution of the baseline's pair score by walking every branch of
/// the sampling process: a uniform unordered pair of eligible components,
/// then a uniform unused point on each.
fn enumerate(step: &ExtractionStep) -> (f64, f64) {
    let kinds: Vec<ConnectorType> = ConnectorType::ALL
        .into_iter()
        .flat_map(|k| std::iter::repeat_n(k, step.connector_budget.get(&k).copied().unwrap_or(0)))
        .collect();
    fn walk(
        step: &ExtractionStep,
        kinds: &[ConnectorType],
        used: &mut Vec<String>,
        pairs: &mut Vec<PointPair>,
        prob: f64,
        acc: &mut (f64, f64),
    ) {
        let Some((&kind, rest)) = kinds.split_first() else {
            let s = score_step(&pred(pairs.clone()), step, ScoreOptions::default()).unwrap();
            acc.0 += prob * s.pair_success;
            acc.1 += prob * s.pair_f1;
            return;
        };
        let free: Vec<Vec<String>> = step
            .components
            .iter()
            .map(|c| c.candidates.iter().map(|p| p.to_string()).filter(|p| !used.contains(p)).collect())
            .collect();
        let eligible: Vec<usize> = (0..free.len()).filter(|&i| !free[i].is_empty()).collect();
        let n_pairs = (eligible.len() * (eligible.len() - 1) / 2) as f64;
        for (x, &i) in eligible.iter().enumerate() {
            for &j in &eligible[x + 1..] {
                for a in &free[i] {
                    for b in &free[j] {
                        let p = prob / n_pairs / (free[i].len() * free[j].len()) as f64;
                        used.extend([a.clone(), b.clone()]);
                        pairs.push(PointPair::new(a, b, kind));
                        walk(step, rest, used, pairs, p, acc);
                        pairs.pop();
                        used.truncate(used.len() - 2);
                    }
                }
            }
        }
    }
    let mut acc = (0.0, 0.0);
    walk(step, &kinds, &mut vec![], &mut vec![], 1.0, &mut acc);
    acc
}

fn monte_carlo(step: &ExtractionStep, samples: u64) -> (f64, f64, f64) {
    let (mut hits, mut f1) = (0.0, 0.0);
    for seed in 0..samples {
        let s = score_step(&random_baseline(step, seed).unwrap(), step, ScoreOptions::default()).unwrap();
        hits += s.pair_success;
        f1 += s.pair_f1;
    }
    let n = samples as f64;
    let p = hits / n;
    (p, f1 / n, (p * (1.0 - p) / n).sqrt())
}

#[test]
fn baseline_matches_enumeration_on_toy_steps() {
    let one = step(
        vec![component("l", &["A", "C"]), component("r", &["B", "D"])],
        vec![PointPair::new("A", "B", Dowel)],
    );
    let two = step(
        vec![component("l", &["A", "C"]), component("r", &["B", "D"])],
        vec![PointPair::new("A", "B", Dowel), PointPair::new("C", "D", Dowel)],
    );
    let three = step(
        vec![component("a", &["A1", "A2"]), component("b", &["B1"]), component("c", &["C1", "C2", "C3"])],
        vec![PointPair::new("A1", "B1", Dowel), PointPair::new("A2", "C2", ConnectorType::Screw)],
    );
    assert_eq!(enumerate(&one).0, 0.25);
    assert_eq!(enumerate(&two).0, 0.5);
    for toy in [one, two, three] {
        let (exact_p, exact_f1) = enumerate(&toy);
        let (p, f1, se) = monte_carlo(&toy, 10_000);
        assert!((p - exact_p).abs() <= 2.0 * se.max(1e-12), "{p} vs {exact_p} (se {se})");
        assert!((f1 - exact_f1).abs() < 0.02, "{f1} vs {exact_f1}");
    }
}

#[test]
fn files_round_trip() {
    let ds = Task::PlaneModel.dataset();
    assert_eq!(load_dataset(&to_pretty_json(&ds)).unwrap(), ds);
    let file = PredictionsFile {
        format_version: DATASET_FORMAT_VERSION,
        task: "plane_model".into(),
        predictions: random_baseline_predictions(&ds, 5).unwrap(),
    };
    assert_eq!(load_predictions(&to_pretty_json(&file)).unwrap(), file);
    assert!(load_dataset("{\"format_version\": 1, \"task\": \"x\"").is_err());
}

fn arb_pair() -> impl Strategy<Value = PointPair> {
    let ids = prop::sample::select(vec!["A", "B", "C", "D", "E", "F"]);
    (ids.clone(), ids, 0usize..3).prop_map(|(a, b, k)| PointPair::new(a, b, ConnectorType::ALL[k]))
}

proptest! {
    #[test]
    fn score_bounds_and_symmetry(pairs in prop::collection::vec(arb_pair(), 0..6)) {
        let truth = step(
            vec![component("l", &["A", "C", "E"]), component("r", &["B", "D", "F"])],
            vec![PointPair::new("A", "B", Dowel), PointPair::new("C", "D", ConnectorType::Screw)],
        );
        let s = score_step(&pred(pairs.clone()), &truth, ScoreOptions::default()).unwrap();
        for (success, f1) in [(s.pair_success, s.pair_f1), (s.set_success, s.set_f1)] {
            prop_assert!((0.0..=1.0).contains(&f1));
            prop_assert!(success <= f1);
        }
        if s.pair_success == 1.0 {
            prop_assert_eq!(s.set_success, 1.0);
        }
        let flipped: Vec<_> = pairs
            .iter()
            .map(|p| PointPair { points: [p.points[1].clone(), p.points[0].clone()], connector_type: p.connector_type })
            .collect();
        prop_assert_eq!(score_step(&pred(flipped), &truth, ScoreOptions::default()).unwrap(), s);
    }
}
