use monoalign::align::ConstraintVector;
use monoalign::data::{generate_synthetic, stratified_split, SplitSpec, SyntheticSpec};
use monoalign::eval::ModelKind;
use monoalign::gbt::{HyperGrid, MonotoneDirection};
use monoalign::sweep::{load_sweep, record_path, run_sweep, SweepConfig};

fn setup(dir: &std::path::Path) -> (SweepConfig, monoalign::data::Dataset, monoalign::data::Dataset) {
    let spec = SyntheticSpec::desk(600, 3, 0.1);
    let data = generate_synthetic(&spec).unwrap();
    let (train, test) = stratified_split(&data, &SplitSpec::default()).unwrap();
    let mut cons = ConstraintVector::unconstrained(data.schema());
    for m in &spec.monotone_features {
        let j = data.schema().index_of(&m.name).unwrap();
        cons.directions[j] = MonotoneDirection::try_from(m.direction).unwrap();
    }
    let cfg = SweepConfig {
        sizes: vec![100, 150],
        seeds_per_size: 2,
        grid: HyperGrid::single(0.3, 20, 2),
        constraints: cons,
        modes: vec![ModelKind::Constrained, ModelKind::Unconstrained],
        out_dir: dir.to_path_buf(),
        base_seed: 5,
        workers: 2,
    };
    (cfg, train, test)
}

#[test]
fn counts_pairing_and_resumption() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, train, test) = setup(dir.path());
    let first = run_sweep(&cfg, &train, &test).unwrap();
    assert_eq!(first.records.len(), 8);
    assert_eq!(first.pairs.len(), 4);
    assert_eq!(first.computed, 4);
    assert_eq!(first.failures().count(), 0);
    for w in first.records.chunks(2) {
        assert_eq!(w[0].subsample_fingerprint, w[1].subsample_fingerprint);
        assert_ne!(w[0].mode, w[1].mode);
    }
    assert!(dir.path().join("curve_auc_roc.csv").exists());
    assert!(dir.path().join("curve_distance.csv").exists());

    let again = run_sweep(&cfg, &train, &test).unwrap();
    assert_eq!(again.computed, 0);
    assert_eq!(again.records, first.records);
    assert_eq!(again.pairs, first.pairs);

    let victim = record_path(dir.path(), 150, 1, ModelKind::Unconstrained);
    let before = std::fs::read(&victim).unwrap();
    let pair_before = std::fs::read(dir.path().join("pairs/n00150_r001.json")).unwrap();
    std::fs::remove_file(&victim).unwrap();
    let third = run_sweep(&cfg, &train, &test).unwrap();
    assert_eq!(third.computed, 1);
    assert_eq!(std::fs::read(&victim).unwrap(), before);
    assert_eq!(std::fs::read(dir.path().join("pairs/n00150_r001.json")).unwrap(), pair_before);
    assert_eq!(third.records, first.records);

    let loaded = load_sweep(dir.path()).unwrap();
    assert_eq!(loaded.records, first.records);
    assert_eq!(loaded.pairs, first.pairs);
}

#[test]
fn opposite_mode_flips_directions() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _, _) = setup(dir.path());
    let o = cfg.constraints_for(ModelKind::Opposite);
    for (a, b) in o.directions.iter().zip(&cfg.constraints.directions) {
        assert_eq!(*a, b.opposite());
    }
    assert!(cfg
        .constraints_for(ModelKind::Unconstrained)
        .directions
        .iter()
        .all(|d| !d.is_constrained()));
}

#[test]
fn oversized_sweep_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (mut cfg, train, test) = setup(dir.path());
    cfg.sizes = vec![100, 100_000];
    assert!(run_sweep(&cfg, &train, &test).is_err());
    cfg.sizes = vec![200, 100];
    assert!(run_sweep(&cfg, &train, &test).is_err());
}
