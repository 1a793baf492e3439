//! Elicited monotonicity knowledge, partial dependence and violation checks.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureSchema};
use crate::gbt::{MonotoneDirection, TreeEnsemble};
use crate::stats::logistic;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurveyAnswer {
    AlwaysIncrease,
    AlwaysDecrease,
    Neither,
}

impl std::str::FromStr for SurveyAnswer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().replace(['_', ' '], "-").as_str() {
            "always-increase" | "increase" => Ok(SurveyAnswer::AlwaysIncrease),
            "always-decrease" | "decrease" => Ok(SurveyAnswer::AlwaysDecrease),
            "neither" | "unsure" | "neither/unsure" => Ok(SurveyAnswer::Neither),
            other => Err(format!("unknown survey answer `{other}`")),
        }
    }
}

/// One respondent's answers: how an increase in each feature affects the
/// probability of the positive outcome, all else fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub respondent_id: String,
    pub answers: BTreeMap<String, SurveyAnswer>,
}

/// Reads a long-format survey CSV with columns `respondent,feature,answer`.
pub fn load_survey_csv(path: &Path) -> Result<Vec<SurveyResponse>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut by_respondent: BTreeMap<String, BTreeMap<String, SurveyAnswer>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < 3 {
            return Err(Error::InvalidArgument(format!("survey row {i} needs 3 fields")));
        }
        let answer: SurveyAnswer = rec[2].parse().map_err(|e: String| Error::Cell {
            row: i,
            column: "answer".into(),
            value: rec[2].to_string(),
            reason: e,
        })?;
        by_respondent
            .entry(rec[0].trim().to_string())
            .or_default()
            .insert(rec[1].trim().to_string(), answer);
    }
    Ok(by_respondent
        .into_iter()
        .map(|(respondent_id, answers)| SurveyResponse {
            respondent_id,
            answers,
        })
        .collect())
}

pub fn write_survey_csv(path: &Path, responses: &[SurveyResponse]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["respondent", "feature", "answer"])?;
    for r in responses {
        for (f, a) in &r.answers {
            let a = match a {
                SurveyAnswer::AlwaysIncrease => "always-increase",
                SurveyAnswer::AlwaysDecrease => "always-decrease",
                SurveyAnswer::Neither => "neither",
            };
            w.write_record([r.respondent_id.as_str(), f.as_str(), a])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    SurveyMajority,
    Manual,
    OppositeFlip,
}

/// Per-schema-feature monotone directions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintVector {
    pub features: Vec<String>,
    pub directions: Vec<MonotoneDirection>,
    pub provenance: Provenance,
}

impl ConstraintVector {
    pub fn unconstrained(schema: &FeatureSchema) -> Self {
        Self {
            features: schema.features.iter().map(|f| f.name.clone()).collect(),
            directions: vec![MonotoneDirection::Unconstrained; schema.len()],
            provenance: Provenance::Manual,
        }
    }

    /// Builds a manual vector from `(feature, direction)` pairs.
    pub fn manual(schema: &FeatureSchema, entries: &[(&str, MonotoneDirection)]) -> Result<Self> {
        let mut v = Self::unconstrained(schema);
        for (name, d) in entries {
            let j = schema
                .index_of(name)
                .ok_or_else(|| Error::UnknownFeature(name.to_string()))?;
            v.directions[j] = *d;
        }
        v.validate(schema)?;
        Ok(v)
    }

    /// Checks feature alignment and that only monotone-eligible features are constrained.
    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        if self.features.len() != schema.len() || self.directions.len() != schema.len() {
            return Err(Error::LengthMismatch {
                left: self.directions.len(),
                right: schema.len(),
            });
        }
        for ((name, d), spec) in self.features.iter().zip(&self.directions).zip(&schema.features) {
            if *name != spec.name {
                return Err(Error::InvalidArgument(format!(
                    "constraint feature `{name}` does not match schema feature `{}`",
                    spec.name
                )));
            }
            if d.is_constrained() && !(spec.monotone_eligible && spec.is_ordinal()) {
                return Err(Error::IneligibleFeature {
                    feature: name.clone(),
                    reason: "only monotone-eligible ordinal features can be constrained".into(),
                });
            }
        }
        Ok(())
    }

    pub fn direction_of(&self, feature: &str) -> Option<MonotoneDirection> {
        self.features
            .iter()
            .position(|f| f == feature)
            .map(|j| self.directions[j])
    }

    pub fn constrained_features(&self) -> impl Iterator<Item = (usize, &str, MonotoneDirection)> {
        self.features
            .iter()
            .zip(&self.directions)
            .enumerate()
            .filter(|(_, (_, d))| d.is_constrained())
            .map(|(j, (f, d))| (j, f.as_str(), *d))
    }

    /// Every nonzero direction negated.
    pub fn opposite(&self) -> Self {
        Self {
            features: self.features.clone(),
            directions: self.directions.iter().map(|d| d.opposite()).collect(),
            provenance: Provenance::OppositeFlip,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Result of majority aggregation of survey answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintDerivation {
    pub constraints: ConstraintVector,
    /// Features where no answer has a strict majority; candidates for manual review.
    pub flagged: Vec<String>,
}

/// Sets a direction where a strict majority of the respondents who answered
/// for that feature agree on always-increase or always-decrease.
pub fn derive_constraints(responses: &[SurveyResponse], schema: &FeatureSchema) -> Result<ConstraintDerivation> {
    if responses.is_empty() {
        return Err(Error::InvalidArgument("no survey responses".into()));
    }
    let mut tallies: BTreeMap<&str, [usize; 3]> = BTreeMap::new();
    for r in responses {
        for (feature, answer) in &r.answers {
            let j = schema
                .index_of(feature)
                .ok_or_else(|| Error::UnknownFeature(feature.clone()))?;
            let spec = &schema.features[j];
            if !(spec.monotone_eligible && spec.is_ordinal()) {
                return Err(Error::IneligibleFeature {
                    feature: feature.clone(),
                    reason: "survey answers are only collected for monotone-eligible features".into(),
                });
            }
            let slot = match answer {
                SurveyAnswer::AlwaysIncrease => 0,
                SurveyAnswer::AlwaysDecrease => 1,
                SurveyAnswer::Neither => 2,
            };
            tallies.entry(spec.name.as_str()).or_default()[slot] += 1;
        }
    }
    let mut constraints = ConstraintVector::unconstrained(schema);
    constraints.provenance = Provenance::SurveyMajority;
    let mut flagged = Vec::new();
    for (feature, [inc, dec, neither]) in tallies {
        let total = inc + dec + neither;
        let j = schema.index_of(feature).expect("tallied feature exists");
        if 2 * inc > total {
            constraints.directions[j] = MonotoneDirection::Increasing;
        } else if 2 * dec > total {
            constraints.directions[j] = MonotoneDirection::Decreasing;
        } else if 2 * neither <= total {
            flagged.push(feature.to_string());
        }
    }
    Ok(ConstraintDerivation { constraints, flagged })
}

/// Mean predicted probability as one feature is swept over its observed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpCurve {
    pub feature: String,
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub n_test: usize,
}

/// Partial dependence of `feature`.
///
/// The grid is every distinct non-missing value of the feature in `full`.
/// For each grid value the feature is overwritten in every `test` row and the
/// mean and standard error of the predicted probabilities are recorded.
pub fn pdp(model: &TreeEnsemble, test: &Dataset, full: &Dataset, feature: &str) -> Result<PdpCurve> {
    let schema = test.schema();
    let j = schema
        .index_of(feature)
        .ok_or_else(|| Error::UnknownFeature(feature.to_string()))?;
    if !schema.features[j].is_ordinal() {
        return Err(Error::IneligibleFeature {
            feature: feature.to_string(),
            reason: "partial dependence is computed for ordinal features".into(),
        });
    }
    if full.schema().fingerprint() != schema.fingerprint() {
        return Err(Error::SchemaMismatch {
            expected: schema.fingerprint(),
            found: full.schema().fingerprint(),
        });
    }
    let grid = unique_values(full, j);
    if grid.is_empty() {
        return Err(Error::FeatureAllMissing(feature.to_string()));
    }
    let encoded = model.encode(test)?;
    let col = crate::data::Encoding::new(schema)
        .ordinal_column(j)
        .expect("ordinal feature has a column");
    let q = test.len();
    let mut mean = Vec::with_capacity(grid.len());
    let mut se = Vec::with_capacity(grid.len());
    let mut x = encoded.clone();
    for &v in &grid {
        x.set_column(col, v);
        let p = model.predict_proba_matrix(&x);
        let (lo, hi) = p.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if lo == hi {
            mean.push(lo);
            se.push(0.0);
        } else {
            mean.push(crate::stats::mean(&p));
            se.push(crate::stats::sample_sd(&p) / (q as f64).sqrt());
        }
    }
    Ok(PdpCurve {
        feature: feature.to_string(),
        grid,
        mean,
        se,
        n_test: q,
    })
}

/// Sorted distinct non-missing values of schema feature `j`.
pub fn unique_values(d: &Dataset, j: usize) -> Vec<f64> {
    let mut vals: Vec<f64> = d.column(j).flatten().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals.dedup();
    vals
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Index of the first grid point of the offending consecutive pair.
    pub from: usize,
    pub to: usize,
    pub magnitude: f64,
}

/// Consecutive grid pairs where the curve moves against `direction` by more
/// than `tolerance`.
pub fn violations(curve: &PdpCurve, direction: MonotoneDirection, tolerance: f64) -> Vec<Violation> {
    let sign = f64::from(direction.sign());
    if sign == 0.0 {
        return Vec::new();
    }
    curve
        .mean
        .windows(2)
        .enumerate()
        .filter_map(|(i, w)| {
            let against = -sign * (w[1] - w[0]);
            (against > tolerance).then_some(Violation {
                from: i,
                to: i + 1,
                magnitude: against,
            })
        })
        .collect()
}

/// Exhaustive margin scan: for every row of `data`, sets feature `feature` to
/// each grid value and counts consecutive steps that move the margin against
/// `direction` by more than `tolerance`.
pub fn margin_scan_violations(
    model: &TreeEnsemble,
    data: &Dataset,
    feature: usize,
    grid: &[f64],
    direction: MonotoneDirection,
    tolerance: f64,
) -> Result<usize> {
    let x = model.encode(data)?;
    let col = crate::data::Encoding::new(data.schema())
        .ordinal_column(feature)
        .ok_or_else(|| Error::IneligibleFeature {
            feature: data.schema().features[feature].name.clone(),
            reason: "not an ordinal feature".into(),
        })?;
    let sign = f64::from(direction.sign());
    let mut count = 0;
    let mut row = vec![0.0; x.n_cols];
    for i in 0..x.n_rows {
        row.copy_from_slice(x.row(i));
        let mut prev: Option<f64> = None;
        for &v in grid {
            row[col] = v;
            let m = model.predict_margin_row(&row);
            if let Some(p) = prev {
                if -sign * (m - p) > tolerance {
                    count += 1;
                }
            }
            prev = Some(m);
        }
    }
    Ok(count)
}

/// CSV with `feature,value,mean,se,ci_low,ci_high`; the band is mean ± 2·se.
pub fn write_pdp_csv(path: &Path, curves: &[PdpCurve]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "feature,value,mean,se,ci_low,ci_high").unwrap();
    for c in curves {
        for ((v, m), s) in c.grid.iter().zip(&c.mean).zip(&c.se) {
            writeln!(out, "{},{},{},{},{},{}", c.feature, v, m, s, m - 2.0 * s, m + 2.0 * s).unwrap();
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Flat prior curve helper used when a model has no trees.
pub fn prior_probability(model: &TreeEnsemble) -> f64 {
    logistic(model.base_score)
}

/// Features named in a constraint vector that the model never splits on.
pub fn unused_constrained_features(model: &TreeEnsemble, c: &ConstraintVector) -> BTreeSet<String> {
    let mut used = BTreeSet::new();
    for t in &model.trees {
        t.visit_splits(&mut |f, _| {
            used.insert(model.columns[f].clone());
        });
    }
    c.constrained_features()
        .filter(|(_, f, _)| !used.contains(*f))
        .map(|(_, f, _)| f.to_string())
        .collect()
}
