//! Append-only response log with per-rater sessions.
//!
//! Every accepted response is appended as one JSON line and flushed before the
//! call returns. Opening an existing log replays it through the same checks,
//! so a restarted process recovers exactly the sessions it had.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TaskItem;
use crate::eval::ModelKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub task_id: String,
    pub rater: String,
    pub choice: Side,
    /// 1 (low) to 5 (high).
    pub confidence: u8,
    /// Seconds since the Unix epoch when the response was accepted.
    pub timestamp: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ResponseError {
    #[error("unknown rater `{0}`")]
    UnknownRater(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("task `{0}` was already answered")]
    Duplicate(String),
    #[error("task `{got}` is not the current task (expected {expected:?})")]
    OutOfOrder { got: String, expected: Option<String> },
    #[error("confidence {0} is outside 1..=5")]
    ConfidenceOutOfRange(i64),
    #[error("response log {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt response log line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
}

/// A response joined with its task's unblinding information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceRecord {
    pub task_id: String,
    pub rater: String,
    pub pair_id: String,
    pub row_id: String,
    pub choice: Side,
    pub confidence: u8,
    pub timestamp: u64,
    pub left_model: ModelKind,
    pub chosen_model: ModelKind,
    pub chose_constrained: bool,
    pub shap_l1: f64,
}

impl ChoiceRecord {
    pub fn join(task: &TaskItem, r: &Response) -> Self {
        let chosen = task.model_on(r.choice);
        Self {
            task_id: r.task_id.clone(),
            rater: r.rater.clone(),
            pair_id: task.pair_id.clone(),
            row_id: task.row_id.clone(),
            choice: r.choice,
            confidence: r.confidence,
            timestamp: r.timestamp,
            left_model: task.left_model,
            chosen_model: chosen,
            chose_constrained: chosen == ModelKind::Constrained,
            shap_l1: task.shap_l1,
        }
    }
}

#[derive(Debug, Clone)]
struct Session {
    tasks: Vec<usize>,
    completed: usize,
}

#[derive(Debug)]
pub struct ResponseStore {
    tasks: Vec<TaskItem>,
    by_id: BTreeMap<String, usize>,
    sessions: BTreeMap<String, Session>,
    responses: Vec<Response>,
    log: Option<(PathBuf, File)>,
}

impl ResponseStore {
    /// A store without a backing file.
    pub fn in_memory(tasks: Vec<TaskItem>) -> Self {
        let by_id = tasks.iter().enumerate().map(|(i, t)| (t.task_id.clone(), i)).collect();
        let mut sessions: BTreeMap<String, Session> = BTreeMap::new();
        for (i, t) in tasks.iter().enumerate() {
            sessions
                .entry(t.rater.clone())
                .or_insert_with(|| Session {
                    tasks: Vec::new(),
                    completed: 0,
                })
                .tasks
                .push(i);
        }
        Self {
            tasks,
            by_id,
            sessions,
            responses: Vec::new(),
            log: None,
        }
    }

    /// Opens (creating if absent) the log at `path` and replays it.
    pub fn open(path: &Path, tasks: Vec<TaskItem>) -> Result<Self, ResponseError> {
        let io = |source| ResponseError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut store = Self::in_memory(tasks);
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(io)?;
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let r: Response = serde_json::from_str(line).map_err(|e| ResponseError::Corrupt {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
                store.accept(r).map_err(|e| ResponseError::Corrupt {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        store.log = Some((path.to_path_buf(), file));
        Ok(store)
    }

    pub fn tasks(&self) -> &[TaskItem] {
        &self.tasks
    }

    pub fn responses(&self) -> &[Response] {
        &self.responses
    }

    pub fn raters(&self) -> impl Iterator<Item = &str> {
        self.sessions.keys().map(String::as_str)
    }

    /// `(completed, total)` for `rater`.
    pub fn progress(&self, rater: &str) -> Result<(usize, usize), ResponseError> {
        let s = self.session(rater)?;
        Ok((s.completed, s.tasks.len()))
    }

    fn session(&self, rater: &str) -> Result<&Session, ResponseError> {
        self.sessions
            .get(rater)
            .ok_or_else(|| ResponseError::UnknownRater(rater.to_string()))
    }

    /// The rater's current task, or `None` once every task is answered.
    pub fn current_task(&self, rater: &str) -> Result<Option<&TaskItem>, ResponseError> {
        let s = self.session(rater)?;
        Ok(s.tasks.get(s.completed).map(|&i| &self.tasks[i]))
    }

    fn check(&self, r: &Response) -> Result<(), ResponseError> {
        let s = self.session(&r.rater)?;
        let &idx = self
            .by_id
            .get(&r.task_id)
            .ok_or_else(|| ResponseError::UnknownTask(r.task_id.clone()))?;
        let pos = s
            .tasks
            .iter()
            .position(|&i| i == idx)
            .ok_or_else(|| ResponseError::UnknownTask(r.task_id.clone()))?;
        if pos < s.completed {
            return Err(ResponseError::Duplicate(r.task_id.clone()));
        }
        if pos > s.completed {
            return Err(ResponseError::OutOfOrder {
                got: r.task_id.clone(),
                expected: Some(self.tasks[s.tasks[s.completed]].task_id.clone()),
            });
        }
        if !(1..=5).contains(&r.confidence) {
            return Err(ResponseError::ConfidenceOutOfRange(i64::from(r.confidence)));
        }
        Ok(())
    }

    fn accept(&mut self, r: Response) -> Result<(), ResponseError> {
        self.check(&r)?;
        self.sessions.get_mut(&r.rater).expect("checked").completed += 1;
        self.responses.push(r);
        Ok(())
    }

    /// Validates, persists and applies one response.
    pub fn submit(&mut self, r: Response) -> Result<(), ResponseError> {
        self.check(&r)?;
        if let Some((path, file)) = &mut self.log {
            let line = serde_json::to_string(&r).expect("response serializes") + "\n";
            file.write_all(line.as_bytes())
                .and_then(|_| file.sync_data())
                .map_err(|source| ResponseError::Io {
                    path: path.clone(),
                    source,
                })?;
        }
        self.accept(r)
    }

    /// Responses joined with their tasks, in log order.
    pub fn choices(&self) -> Vec<ChoiceRecord> {
        self.responses
            .iter()
            .map(|r| ChoiceRecord::join(&self.tasks[self.by_id[&r.task_id]], r))
            .collect()
    }

    /// JSON lines of [`ChoiceRecord`]s.
    pub fn export_jsonl(&self) -> String {
        let mut out = String::new();
        for c in self.choices() {
            out.push_str(&serde_json::to_string(&c).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

pub fn read_choices(path: &Path) -> crate::Result<Vec<ChoiceRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Into::into))
        .collect()
}
