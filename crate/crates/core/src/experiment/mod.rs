//! The blinded pairwise preference experiment: choosing model pairs and
//! patients, assigning tasks to raters, storing responses and analyzing them.

mod assign;
mod design;
mod regression;
mod sampling;
pub mod store;
mod summary;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use assign::{assign_tasks, Assignment};
pub use design::ExperimentDesign;
pub use regression::{fit_choice_model, fit_logistic, RegressionResult};
pub use sampling::{sample_pairs, sample_patients, top_count, top_indices};
pub use store::{ChoiceRecord, Response, ResponseError, ResponseStore, Side};
pub use summary::{summary_stats, GroupStat, SummaryReport};

use crate::data::Dataset;
use crate::distance::DistanceReport;
use crate::eval::ModelKind;
use crate::explain::{top_k_payload, tree_shap, BarPlotPayload, ModelBars};
use crate::gbt::TreeEnsemble;
use crate::sweep::{load_sweep, PairRecord};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedPair {
    pub pair_id: String,
    pub size: usize,
    pub replicate: usize,
    pub seed: u64,
    pub d_shap: f64,
    /// Sampled test-row indices; the first half come from the top quantile.
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureValue {
    pub name: String,
    pub value: String,
}

/// A task with its unblinding information. Never sent to raters as is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskItem {
    pub task_id: String,
    pub rater: String,
    pub pair_id: String,
    pub row_index: usize,
    pub row_id: String,
    pub left_model: ModelKind,
    pub payload: BarPlotPayload,
    pub features: Vec<FeatureValue>,
    pub shap_l1: f64,
}

impl TaskItem {
    pub fn model_on(&self, side: Side) -> ModelKind {
        match (side, self.left_model) {
            (Side::Left, m) => m,
            (Side::Right, ModelKind::Constrained) => ModelKind::Unconstrained,
            (Side::Right, _) => ModelKind::Constrained,
        }
    }
}

/// What a rater sees for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterView {
    pub task_id: String,
    /// 1-based position in the rater's sequence.
    pub position: usize,
    pub total: usize,
    pub features: Vec<FeatureValue>,
    pub left: ModelBars,
    pub right: ModelBars,
}

impl RaterView {
    pub fn new(task: &TaskItem, position: usize, total: usize) -> Self {
        Self {
            task_id: task.task_id.clone(),
            position,
            total,
            features: task.features.clone(),
            left: task.payload.left.clone(),
            right: task.payload.right.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaterToken {
    pub rater: String,
    pub token: String,
}

/// Everything the server and the analysis need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentBundle {
    pub design: ExperimentDesign,
    pub pairs: Vec<SelectedPair>,
    pub tasks: Vec<TaskItem>,
    pub tokens: Vec<RaterToken>,
    pub admin_token: String,
}

fn token(seed: u64, role: &str) -> String {
    let mut h = Sha256::new();
    h.update(b"monoalign-token");
    h.update(seed.to_le_bytes());
    h.update(role.as_bytes());
    h.finalize()[..16].iter().map(|b| format!("{b:02x}")).collect()
}

/// Inputs for one sweep pair.
pub struct PairInput {
    pub record: PairRecord,
    pub report: DistanceReport,
    pub constrained: TreeEnsemble,
    pub unconstrained: TreeEnsemble,
}

pub fn pair_id(p: &PairRecord) -> String {
    format!("n{:05}_r{:03}", p.size, p.replicate)
}

/// Builds the bundle from already selected pairs.
pub fn build_bundle(design: &ExperimentDesign, inputs: &[PairInput], test: &Dataset) -> Result<ExperimentBundle> {
    design.validate()?;
    if inputs.len() != design.n_pairs {
        return Err(Error::InvalidArgument(format!(
            "{} pairs supplied, design needs {}",
            inputs.len(),
            design.n_pairs
        )));
    }
    let mut pairs = Vec::with_capacity(inputs.len());
    let mut shaps = Vec::with_capacity(inputs.len());
    for inp in inputs {
        if inp.report.row_ids != test.row_ids() {
            return Err(Error::InvalidArgument(format!(
                "distance report of {} was computed on a different test set",
                pair_id(&inp.record)
            )));
        }
        let pseed = seed::derive(design.seed, &[2, inp.record.replicate as u64]);
        let rows = sample_patients(&inp.report.shap_l1, design, pseed)?;
        pairs.push(SelectedPair {
            pair_id: pair_id(&inp.record),
            size: inp.record.size,
            replicate: inp.record.replicate,
            seed: inp.record.seed,
            d_shap: inp.record.d_shap,
            rows,
        });
        shaps.push((tree_shap(&inp.constrained, test)?, tree_shap(&inp.unconstrained, test)?));
    }
    let assignments = assign_tasks(inputs.len(), design)?;
    let schema = test.schema();
    let mut tasks = Vec::with_capacity(assignments.len());
    for a in assignments {
        let pair = &pairs[a.pair];
        let row = pair.rows[a.patient];
        let (sc, su) = &shaps[a.pair];
        let payload = top_k_payload(sc, su, test, row, design.top_k, a.side_seed)?;
        tasks.push(TaskItem {
            task_id: a.task_id,
            rater: a.rater,
            pair_id: pair.pair_id.clone(),
            row_index: row,
            row_id: test.row_ids()[row].clone(),
            left_model: if payload.first_on_left {
                ModelKind::Constrained
            } else {
                ModelKind::Unconstrained
            },
            payload,
            features: schema
                .features
                .iter()
                .enumerate()
                .map(|(j, f)| FeatureValue {
                    name: f.name.clone(),
                    value: test.display_value(row, j),
                })
                .collect(),
            shap_l1: inputs[a.pair].report.shap_l1[row],
        });
    }
    Ok(ExperimentBundle {
        design: design.clone(),
        pairs,
        tasks,
        tokens: design
            .raters
            .iter()
            .map(|r| RaterToken {
                rater: r.clone(),
                token: token(design.seed, &format!("rater:{r}")),
            })
            .collect(),
        admin_token: token(design.seed, "admin"),
    })
}

/// Selects pairs from a finished sweep directory and builds the bundle.
pub fn prepare(design: &ExperimentDesign, sweep_dir: &Path, test: &Dataset) -> Result<ExperimentBundle> {
    design.validate()?;
    let sweep = load_sweep(sweep_dir)?;
    let selected = sample_pairs(&sweep.pairs, design)?;
    let mut inputs = Vec::with_capacity(selected.len());
    for record in selected {
        let model = |kind: ModelKind| -> Result<TreeEnsemble> {
            let rec = sweep
                .records
                .iter()
                .find(|r| r.size == record.size && r.replicate == record.replicate && r.mode == kind)
                .and_then(|r| r.model_path.as_ref())
                .ok_or_else(|| {
                    Error::NotEnoughCandidates(format!("no {kind} model for {}", pair_id(&record)))
                })?;
            TreeEnsemble::load(&sweep_dir.join(rec))
        };
        inputs.push(PairInput {
            report: DistanceReport::load(&sweep_dir.join(&record.report_path))?,
            constrained: model(ModelKind::Constrained)?,
            unconstrained: model(ModelKind::Unconstrained)?,
            record,
        });
    }
    build_bundle(design, &inputs, test)
}

impl ExperimentBundle {
    pub fn token_of(&self, rater: &str) -> Option<&str> {
        self.tokens.iter().find(|t| t.rater == rater).map(|t| t.token.as_str())
    }

    /// Tasks of `rater` in presentation order.
    pub fn tasks_of<'a>(&'a self, rater: &'a str) -> impl Iterator<Item = &'a TaskItem> + 'a {
        self.tasks.iter().filter(move |t| t.rater == rater)
    }

    pub fn pair_order(&self) -> Vec<String> {
        self.pairs.iter().map(|p| p.pair_id.clone()).collect()
    }

    /// Writes `design.json`, `pairs.json`, `tasks.jsonl` and `tokens.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        write("design.json", serde_json::to_string_pretty(&self.design)? + "\n")?;
        write("pairs.json", serde_json::to_string_pretty(&self.pairs)? + "\n")?;
        let mut tasks = String::new();
        for t in &self.tasks {
            tasks.push_str(&serde_json::to_string(t)?);
            tasks.push('\n');
        }
        write("tasks.jsonl", tasks)?;
        #[derive(Serialize)]
        struct Tokens<'a> {
            raters: &'a [RaterToken],
            admin: &'a str,
        }
        write(
            "tokens.json",
            serde_json::to_string_pretty(&Tokens {
                raters: &self.tokens,
                admin: &self.admin_token,
            })? + "\n",
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let p = dir.join(name);
            std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
        };
        #[derive(Deserialize)]
        struct Tokens {
            raters: Vec<RaterToken>,
            admin: String,
        }
        let tokens: Tokens = serde_json::from_str(&read("tokens.json")?)?;
        let tasks = read("tasks.jsonl")?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<TaskItem>, _>>()?;
        Ok(Self {
            design: serde_json::from_str(&read("design.json")?)?,
            pairs: serde_json::from_str(&read("pairs.json")?)?,
            tasks,
            tokens: tokens.raters,
            admin_token: tokens.admin,
        })
    }
}
