//! The train-size × replicate study.
//!
//! Every cell `(size, replicate)` draws one training subsample and fits each
//! requested mode on it, so paired models always see identical rows. Cells are
//! independent jobs on a bounded worker pool; results flow to a single writer
//! thread that persists one JSON file per model and per pair. Rerunning skips
//! every cell whose files already exist.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::ConstraintVector;
use crate::data::{subsample_train, Dataset};
use crate::distance::{compare, DistanceReport};
use crate::eval::{aggregate, aggregate_curve, auc_roc, average_precision, CurvePoint, Metric, MetricPoint, ModelKind};
use crate::gbt::{train, HyperGrid, TrainParams, TreeEnsemble};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    pub seeds_per_size: usize,
    pub grid: HyperGrid,
    pub constraints: ConstraintVector,
    pub modes: Vec<ModelKind>,
    pub out_dir: PathBuf,
    pub base_seed: u64,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
}

impl SweepConfig {
    pub fn desk(constraints: ConstraintVector, out_dir: PathBuf) -> Self {
        Self {
            sizes: vec![100, 200, 400, 800, 1600],
            seeds_per_size: 30,
            grid: HyperGrid::desk(),
            constraints,
            modes: vec![ModelKind::Constrained, ModelKind::Unconstrained],
            out_dir,
            base_seed: 0,
            workers: 0,
        }
    }

    fn validate(&self, train_rows: usize) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("sweep sizes must be non-empty and strictly ascending".into()));
        }
        if self.seeds_per_size < 2 {
            return Err(Error::InvalidArgument("at least 2 seeds per size are needed for intervals".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::InvalidArgument("no model modes requested".into()));
        }
        let max = *self.sizes.last().unwrap();
        if max > train_rows {
            return Err(Error::InvalidArgument(format!(
                "largest sweep size {max} exceeds the {train_rows} training rows"
            )));
        }
        Ok(())
    }

    /// Constraints used for `mode`.
    pub fn constraints_for(&self, mode: ModelKind) -> ConstraintVector {
        match mode {
            ModelKind::Constrained => self.constraints.clone(),
            ModelKind::Unconstrained => {
                let mut c = self.constraints.clone();
                c.directions.iter_mut().for_each(|d| *d = crate::gbt::MonotoneDirection::Unconstrained);
                c.provenance = crate::align::Provenance::Manual;
                c
            }
            ModelKind::Opposite => opposite_constraints(&self.constraints),
        }
    }
}

/// Every nonzero direction negated.
pub fn opposite_constraints(c: &ConstraintVector) -> ConstraintVector {
    c.opposite()
}

/// Seed of cell `(size, replicate)`.
pub fn cell_seed(base: u64, size: usize, replicate: usize) -> u64 {
    seed::derive(base, &[size as u64, replicate as u64])
}

/// One trained model of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub size: usize,
    pub replicate: usize,
    pub seed: u64,
    pub mode: ModelKind,
    pub subsample_fingerprint: String,
    pub metrics: Option<MetricPoint>,
    pub params: Option<TrainParams>,
    pub cv_mean_auc: Option<f64>,
    pub model_path: Option<String>,
    pub error: Option<String>,
}

/// Constrained-vs-unconstrained distances of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub size: usize,
    pub replicate: usize,
    pub seed: u64,
    pub d_pred: f64,
    pub d_rank: f64,
    pub d_shap: f64,
    pub report_path: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    pub pairs: Vec<PairRecord>,
    /// Cells computed in this run (as opposed to loaded from disk).
    pub computed: usize,
}

impl SweepOutcome {
    pub fn metric_points(&self) -> Vec<MetricPoint> {
        self.records.iter().filter_map(|r| r.metrics.clone()).collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &SweepRecord> {
        self.records.iter().filter(|r| r.error.is_some())
    }
}

fn stem(size: usize, replicate: usize) -> String {
    format!("n{size:05}_r{replicate:03}")
}

pub fn record_path(out: &Path, size: usize, replicate: usize, mode: ModelKind) -> PathBuf {
    out.join("cells").join(format!("{}_{}.json", stem(size, replicate), mode))
}

pub fn model_path(out: &Path, size: usize, replicate: usize, mode: ModelKind) -> PathBuf {
    out.join("models").join(format!("{}_{}.json", stem(size, replicate), mode))
}

pub fn pair_path(out: &Path, size: usize, replicate: usize) -> PathBuf {
    out.join("pairs").join(format!("{}.json", stem(size, replicate)))
}

fn relative(out: &Path, p: &Path) -> String {
    p.strip_prefix(out).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

/// Writes via a temporary sibling and a rename so readers never see partial files.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

enum WriteJob {
    File(PathBuf, Vec<u8>),
}

fn load_record(out: &Path, size: usize, replicate: usize, mode: ModelKind) -> Option<(SweepRecord, TreeEnsemble)> {
    let text = std::fs::read_to_string(record_path(out, size, replicate, mode)).ok()?;
    let rec: SweepRecord = serde_json::from_str(&text).ok()?;
    if rec.error.is_some() {
        return None;
    }
    let model = TreeEnsemble::load(&out.join(rec.model_path.as_ref()?)).ok()?;
    Some((rec, model))
}

struct CellResult {
    records: Vec<SweepRecord>,
    pair: Option<PairRecord>,
    computed: bool,
}

fn run_cell(
    cfg: &SweepConfig,
    train80: &Dataset,
    test: &Dataset,
    size: usize,
    replicate: usize,
    tx: &mpsc::Sender<WriteJob>,
) -> Result<CellResult> {
    let out = &cfg.out_dir;
    let cseed = cell_seed(cfg.base_seed, size, replicate);
    let mut records = Vec::with_capacity(cfg.modes.len());
    let mut models: BTreeMap<ModelKind, TreeEnsemble> = BTreeMap::new();
    let mut computed = false;
    let mut sub = None;

    for &mode in &cfg.modes {
        if let Some((rec, model)) = load_record(out, size, replicate, mode) {
            models.insert(mode, model);
            records.push(rec);
            continue;
        }
        computed = true;
        if sub.is_none() {
            sub = Some(subsample_train(train80, size, seed::derive(cseed, &[0]))?);
        }
        let s = sub.as_ref().unwrap();
        let mut rec = SweepRecord {
            size,
            replicate,
            seed: cseed,
            mode,
            subsample_fingerprint: s.fingerprint.clone(),
            metrics: None,
            params: None,
            cv_mean_auc: None,
            model_path: None,
            error: None,
        };
        // Folds are shared across modes so the comparison is paired end to end.
        let fitted = train(&s.data, &cfg.constraints_for(mode), &cfg.grid, seed::derive(cseed, &[1])).and_then(|o| {
            let p = o.model.predict_proba(test)?;
            Ok((o, auc_roc(&p, test.labels())?, average_precision(&p, test.labels())?))
        });
        match fitted {
            Ok((o, auc, ap)) => {
                let mpath = model_path(out, size, replicate, mode);
                tx.send(WriteJob::File(mpath.clone(), (o.model.to_json()? + "\n").into_bytes()))
                    .expect("writer alive");
                rec.metrics = Some(MetricPoint {
                    train_size: size,
                    seed: cseed,
                    kind: mode,
                    auc_roc: auc,
                    avg_precision: ap,
                });
                rec.params = Some(o.params);
                rec.cv_mean_auc = o.cv.as_ref().map(|c| c.best_cell().mean_auc);
                rec.model_path = Some(relative(out, &mpath));
                models.insert(mode, o.model);
            }
            Err(e) => {
                log::warn!("cell {} {mode} failed: {e}", stem(size, replicate));
                rec.error = Some(e.to_string());
            }
        }
        let rpath = record_path(out, size, replicate, mode);
        tx.send(WriteJob::File(rpath, (serde_json::to_string_pretty(&rec)? + "\n").into_bytes()))
            .expect("writer alive");
        records.push(rec);
    }

    let pair = match (models.get(&ModelKind::Constrained), models.get(&ModelKind::Unconstrained)) {
        (Some(c), Some(u)) => {
            let ppath = pair_path(out, size, replicate);
            let report = match (!computed).then(|| DistanceReport::load(&ppath).ok()).flatten() {
                Some(r) => r,
                None => {
                    let r = compare(c, u, test)?;
                    tx.send(WriteJob::File(ppath.clone(), (serde_json::to_string(&r)? + "\n").into_bytes()))
                        .expect("writer alive");
                    r
                }
            };
            Some(PairRecord {
                size,
                replicate,
                seed: cseed,
                d_pred: report.d_pred,
                d_rank: report.d_rank,
                d_shap: report.d_shap,
                report_path: relative(out, &ppath),
            })
        }
        _ => None,
    };
    Ok(CellResult { records, pair, computed })
}

/// Runs (or resumes) the sweep and writes aggregate CSVs under `cfg.out_dir`.
pub fn run_sweep(cfg: &SweepConfig, train80: &Dataset, test: &Dataset) -> Result<SweepOutcome> {
    cfg.validate(train80.len())?;
    let out = &cfg.out_dir;
    for sub in ["cells", "models", "pairs"] {
        let d = out.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let jobs: Vec<(usize, usize)> = cfg
        .sizes
        .iter()
        .flat_map(|&s| (0..cfg.seeds_per_size).map(move |r| (s, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;

    let (tx, rx) = mpsc::channel::<WriteJob>();
    let writer = std::thread::spawn(move || -> Result<()> {
        for job in rx {
            match job {
                WriteJob::File(path, bytes) => write_atomic(&path, &bytes)?,
            }
        }
        Ok(())
    });
    let results: Vec<Result<CellResult>> = pool.install(|| {
        jobs.par_iter()
            .map_with(tx, |tx, &(size, rep)| {
                let r = run_cell(cfg, train80, test, size, rep, tx);
                if r.as_ref().map_or(false, |c| c.computed) {
                    log::info!("finished cell {}", stem(size, rep));
                }
                r
            })
            .collect()
    });
    writer.join().expect("writer thread panicked")?;

    let mut outcome = SweepOutcome::default();
    for r in results {
        let r = r?;
        outcome.computed += usize::from(r.computed);
        outcome.records.extend(r.records);
        outcome.pairs.extend(r.pair);
    }
    outcome
        .records
        .sort_by(|a, b| (a.size, a.replicate, a.mode).cmp(&(b.size, b.replicate, b.mode)));
    outcome.pairs.sort_by_key(|p| (p.size, p.replicate));
    write_aggregates(out, &outcome)?;
    Ok(outcome)
}

fn write_aggregates(out: &Path, o: &SweepOutcome) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "train_size,replicate,seed,model_kind,auc_roc,avg_precision,error").unwrap();
    for r in &o.records {
        let (auc, ap) = r
            .metrics
            .as_ref()
            .map_or((String::new(), String::new()), |m| (m.auc_roc.to_string(), m.avg_precision.to_string()));
        let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(buf, "{},{},{},{},{},{},{}", r.size, r.replicate, r.seed, r.mode, auc, ap, err).unwrap();
    }
    let p = out.join("records.csv");
    std::fs::write(&p, buf).map_err(|e| Error::io(&p, e))?;

    let mut buf = Vec::new();
    writeln!(buf, "train_size,replicate,seed,d_pred,d_rank,d_shap").unwrap();
    for r in &o.pairs {
        writeln!(buf, "{},{},{},{},{},{}", r.size, r.replicate, r.seed, r.d_pred, r.d_rank, r.d_shap).unwrap();
    }
    let p = out.join("pairs.csv");
    std::fs::write(&p, buf).map_err(|e| Error::io(&p, e))?;

    // Curves need at least two successful runs per group; partial sweeps skip them.
    let points = o.metric_points();
    if let (Ok(auc), Ok(ap)) = (
        aggregate_curve(&points, Metric::AucRoc),
        aggregate_curve(&points, Metric::AvgPrecision),
    ) {
        crate::eval::write_curve_csv(&out.join("curve_auc_roc.csv"), &auc)?;
        crate::eval::write_curve_csv(&out.join("curve_avg_precision.csv"), &ap)?;
    }
    if !o.pairs.is_empty() {
        if let Ok(d) = distance_curves(&o.pairs) {
            crate::eval::write_curve_csv(&out.join("curve_distance.csv"), &d)?;
        }
    }
    Ok(())
}

/// Per-size mean and 95% interval of each distance across replicates.
pub fn distance_curves(pairs: &[PairRecord]) -> Result<Vec<CurvePoint>> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no pair records".into()));
    }
    let mut out = Vec::new();
    for (name, get) in [
        ("d_pred", (|p: &PairRecord| p.d_pred) as fn(&PairRecord) -> f64),
        ("d_rank", |p| p.d_rank),
        ("d_shap", |p| p.d_shap),
    ] {
        out.extend(aggregate(pairs.iter().map(|p| (p.size, "pair", get(p))), name)?);
    }
    out.sort_by(|a, b| (a.metric.as_str(), a.train_size).cmp(&(b.metric.as_str(), b.train_size)));
    Ok(out)
}

/// Reloads every successful record and pair from a sweep directory.
pub fn load_sweep(out: &Path) -> Result<SweepOutcome> {
    let mut outcome = SweepOutcome::default();
    let cells = out.join("cells");
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&cells)
        .map_err(|e| Error::io(&cells, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map_or(false, |x| x == "json"))
        .collect();
    entries.sort();
    for p in entries {
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        outcome.records.push(serde_json::from_str(&text)?);
    }
    let pairs = out.join("pairs");
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&pairs)
        .map_err(|e| Error::io(&pairs, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map_or(false, |x| x == "json"))
        .collect();
    entries.sort();
    let seeds: BTreeMap<(usize, usize), u64> = outcome.records.iter().map(|r| ((r.size, r.replicate), r.seed)).collect();
    for p in entries {
        let r = DistanceReport::load(&p)?;
        let name = p.file_stem().unwrap().to_string_lossy().to_string();
        let (size, replicate) = parse_stem(&name)
            .ok_or_else(|| Error::InvalidArgument(format!("unexpected pair file name {name}")))?;
        outcome.pairs.push(PairRecord {
            size,
            replicate,
            seed: seeds.get(&(size, replicate)).copied().unwrap_or_default(),
            d_pred: r.d_pred,
            d_rank: r.d_rank,
            d_shap: r.d_shap,
            report_path: relative(out, &p),
        });
    }
    outcome
        .records
        .sort_by(|a, b| (a.size, a.replicate, a.mode).cmp(&(b.size, b.replicate, b.mode)));
    outcome.pairs.sort_by_key(|p| (p.size, p.replicate));
    Ok(outcome)
}

fn parse_stem(s: &str) -> Option<(usize, usize)> {
    let rest = s.strip_prefix('n')?;
    let (size, rep) = rest.split_once("_r")?;
    Some((size.parse().ok()?, rep.parse().ok()?))
}
