use std::collections::{BTreeMap, BTreeSet};

use monoalign::align::ConstraintVector;
use monoalign::data::{generate_synthetic, stratified_split, subsample_train, SplitSpec, SyntheticSpec};
use monoalign::distance::compare;
use monoalign::eval::ModelKind;
use monoalign::experiment::{
    build_bundle, fit_choice_model, ExperimentDesign, PairInput, RaterView, Response, ResponseError,
    ResponseStore, Side,
};
use monoalign::gbt::{fit_dataset, MonotoneDirection, TrainParams};
use monoalign::sweep::PairRecord;

fn small_bundle() -> monoalign::experiment::ExperimentBundle {
    let spec = SyntheticSpec::desk(800, 1, 0.2);
    let data = generate_synthetic(&spec).unwrap();
    let (train, test) = stratified_split(&data, &SplitSpec::default()).unwrap();
    let mut cons = ConstraintVector::unconstrained(data.schema());
    for m in &spec.monotone_features {
        let j = data.schema().index_of(&m.name).unwrap();
        cons.directions[j] = MonotoneDirection::try_from(m.direction).unwrap();
    }
    let free = ConstraintVector::unconstrained(data.schema());
    let params = TrainParams::new(0.3, 30, 3);
    let inputs: Vec<PairInput> = (0..3)
        .map(|r| {
            let sub = subsample_train(&train, 200, r).unwrap();
            let c = fit_dataset(&sub.data, &cons, &params).unwrap();
            let u = fit_dataset(&sub.data, &free, &params).unwrap();
            let report = compare(&c, &u, &test).unwrap();
            PairInput {
                record: PairRecord {
                    size: 200,
                    replicate: r as usize,
                    seed: r,
                    d_pred: report.d_pred,
                    d_rank: report.d_rank,
                    d_shap: report.d_shap,
                    report_path: String::new(),
                },
                report,
                constrained: c,
                unconstrained: u,
            }
        })
        .collect();
    let design = ExperimentDesign {
        n_runs: 3,
        n_pairs: 3,
        patients_per_pair: 4,
        raters: vec!["ann".into(), "bo".into()],
        patients_per_rater: 6,
        train_size: 200,
        seed: 17,
        ..ExperimentDesign::default()
    };
    build_bundle(&design, &inputs, &test).unwrap()
}

#[test]
fn bundle_partitions_patients_and_blinds_views() {
    let b = small_bundle();
    assert_eq!(b.tasks.len(), 12);
    let mut per: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for t in &b.tasks {
        *per.entry((t.rater.as_str(), t.pair_id.as_str())).or_default() += 1;
        assert_eq!(t.payload.left.entries.len(), 5);
        assert_eq!(t.payload.first_on_left, t.left_model == ModelKind::Constrained);
    }
    assert!(per.values().all(|&c| c == 2));
    let uniq: BTreeSet<(&str, &str)> = b.tasks.iter().map(|t| (t.pair_id.as_str(), t.row_id.as_str())).collect();
    assert_eq!(uniq.len(), 12);
    for t in &b.tasks {
        let json = serde_json::to_string(&RaterView::new(t, 1, 6)).unwrap();
        for word in ["constrained", "unconstrained", "left_model", "pair", "first_on_left", "shap_l1"] {
            assert!(!json.contains(word), "{word} leaked in {json}");
        }
    }
    let dir = tempfile::tempdir().unwrap();
    b.save(dir.path()).unwrap();
    let loaded = monoalign::experiment::ExperimentBundle::load(dir.path()).unwrap();
    assert_eq!(loaded.tasks.len(), b.tasks.len());
    assert_eq!(loaded.tokens, b.tokens);
    assert_eq!(loaded.pairs, b.pairs);
}

fn resp(task: &str, rater: &str, choice: Side, confidence: u8) -> Response {
    Response {
        task_id: task.into(),
        rater: rater.into(),
        choice,
        confidence,
        timestamp: 1,
    }
}

#[test]
fn store_enforces_order_and_replays() {
    let b = small_bundle();
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("responses.jsonl");
    let mut store = ResponseStore::open(&log, b.tasks.clone()).unwrap();
    let ann: Vec<String> = b.tasks_of("ann").map(|t| t.task_id.clone()).collect();
    assert_eq!(store.current_task("ann").unwrap().unwrap().task_id, ann[0]);
    assert!(matches!(
        store.submit(resp(&ann[1], "ann", Side::Left, 3)),
        Err(ResponseError::OutOfOrder { .. })
    ));
    assert!(matches!(
        store.submit(resp(&ann[0], "ann", Side::Left, 6)),
        Err(ResponseError::ConfidenceOutOfRange(6))
    ));
    assert!(matches!(
        store.submit(resp(&ann[0], "nobody", Side::Left, 3)),
        Err(ResponseError::UnknownRater(_))
    ));
    store.submit(resp(&ann[0], "ann", Side::Left, 3)).unwrap();
    assert!(matches!(
        store.submit(resp(&ann[0], "ann", Side::Right, 3)),
        Err(ResponseError::Duplicate(_))
    ));
    store.submit(resp(&ann[1], "ann", Side::Right, 5)).unwrap();
    assert_eq!(store.progress("ann").unwrap(), (2, 6));
    let export = store.export_jsonl();
    assert_eq!(export, store.export_jsonl());
    assert_eq!(export.lines().count(), 2);
    drop(store);

    let reopened = ResponseStore::open(&log, b.tasks.clone()).unwrap();
    assert_eq!(reopened.progress("ann").unwrap(), (2, 6));
    assert_eq!(reopened.current_task("ann").unwrap().unwrap().task_id, ann[2]);
    assert_eq!(reopened.export_jsonl(), export);
}

#[test]
fn choice_model_ignores_side_labels() {
    let b = small_bundle();
    // The same decisions recorded with every task's sides swapped.
    let swapped: Vec<_> = b
        .tasks
        .iter()
        .cloned()
        .map(|mut t| {
            t.left_model = if t.left_model == ModelKind::Constrained {
                ModelKind::Unconstrained
            } else {
                ModelKind::Constrained
            };
            std::mem::swap(&mut t.payload.left, &mut t.payload.right);
            t
        })
        .collect();
    let mut store = ResponseStore::in_memory(b.tasks.clone());
    let mut mirror = ResponseStore::in_memory(swapped);
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for rater in ["ann", "bo"] {
        for t in b.tasks_of(rater) {
            let k = seen.entry(t.pair_id.clone()).or_default();
            // Alternate within each pair so no pair is separated.
            let want_constrained = *k % 2 == 0;
            *k += 1;
            let side = if (t.left_model == ModelKind::Constrained) == want_constrained {
                Side::Left
            } else {
                Side::Right
            };
            let other = if side == Side::Left { Side::Right } else { Side::Left };
            store.submit(resp(&t.task_id, rater, side, 3)).unwrap();
            mirror.submit(resp(&t.task_id, rater, other, 3)).unwrap();
        }
    }
    let a = store.choices();
    let m = mirror.choices();
    assert!(a.iter().zip(&m).all(|(x, y)| x.chose_constrained == y.chose_constrained && x.choice != y.choice));
    let fit = fit_choice_model(&a, &b.pair_order()).unwrap();
    let fit2 = fit_choice_model(&m, &b.pair_order()).unwrap();
    assert_eq!(fit.coefficients, fit2.coefficients);
    assert_eq!(fit.n, 12);
    assert_eq!(fit.names.len(), 4);
    assert_eq!(fit.names[2], format!("pair[{}]", b.pairs[1].pair_id));
}

#[test]
fn unanimous_choices_are_flagged_as_separation() {
    let b = small_bundle();
    let mut store = ResponseStore::in_memory(b.tasks.clone());
    for rater in ["ann", "bo"] {
        for t in b.tasks_of(rater) {
            let side = if t.left_model == ModelKind::Constrained { Side::Left } else { Side::Right };
            store.submit(resp(&t.task_id, rater, side, 5)).unwrap();
        }
    }
    assert!(matches!(
        fit_choice_model(&store.choices(), &b.pair_order()),
        Err(monoalign::Error::Separation(_))
    ));
}
