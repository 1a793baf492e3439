use serde::{Deserialize, Serialize};

use super::store::ChoiceRecord;
use crate::stats::{normal_ci, wilson_ci};
use crate::{Error, Result};

/// Mean with a normal-approximation 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub n: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl GroupStat {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let (mean, ci_low, ci_high) = normal_ci(values);
        Some(Self {
            n: values.len(),
            mean,
            ci_low,
            ci_high,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub n: usize,
    pub constrained_chosen: usize,
    pub constrained_rate: f64,
    /// Wilson 95% interval of `constrained_rate`.
    pub rate_ci: (f64, f64),
    pub shap_when_constrained: Option<GroupStat>,
    pub shap_when_unconstrained: Option<GroupStat>,
    pub confidence_when_constrained: Option<GroupStat>,
    pub confidence_when_unconstrained: Option<GroupStat>,
}

pub fn summary_stats(records: &[ChoiceRecord]) -> Result<SummaryReport> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = records.len();
    let chosen = records.iter().filter(|r| r.chose_constrained).count();
    let pick = |want: bool, f: fn(&ChoiceRecord) -> f64| -> Vec<f64> {
        records.iter().filter(|r| r.chose_constrained == want).map(f).collect()
    };
    Ok(SummaryReport {
        n,
        constrained_chosen: chosen,
        constrained_rate: chosen as f64 / n as f64,
        rate_ci: wilson_ci(chosen, n),
        shap_when_constrained: GroupStat::of(&pick(true, |r| r.shap_l1)),
        shap_when_unconstrained: GroupStat::of(&pick(false, |r| r.shap_l1)),
        confidence_when_constrained: GroupStat::of(&pick(true, |r| f64::from(r.confidence))),
        confidence_when_unconstrained: GroupStat::of(&pick(false, |r| f64::from(r.confidence))),
    })
}

impl SummaryReport {
    pub fn to_text(&self) -> String {
        let fmt = |g: &Option<GroupStat>| match g {
            Some(g) => format!("{:.3} ({:.3}-{:.3}), n = {}", g.mean, g.ci_low, g.ci_high, g.n),
            None => "n/a".to_string(),
        };
        format!(
            "responses: {}\n\
             constrained chosen: {:.1}% ({:.1}-{:.1})\n\
             SHAP distance | chose constrained: {}\n\
             SHAP distance | chose unconstrained: {}\n\
             confidence | chose constrained: {}\n\
             confidence | chose unconstrained: {}\n",
            self.n,
            100.0 * self.constrained_rate,
            100.0 * self.rate_ci.0,
            100.0 * self.rate_ci.1,
            fmt(&self.shap_when_constrained),
            fmt(&self.shap_when_unconstrained),
            fmt(&self.confidence_when_constrained),
            fmt(&self.confidence_when_unconstrained),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::ModelKind;
    use crate::experiment::Side;

    fn rec(constrained: bool, shap: f64, conf: u8) -> ChoiceRecord {
        ChoiceRecord {
            task_id: String::new(),
            rater: String::new(),
            pair_id: "p".into(),
            row_id: String::new(),
            choice: Side::Left,
            confidence: conf,
            timestamp: 0,
            left_model: ModelKind::Constrained,
            chosen_model: if constrained {
                ModelKind::Constrained
            } else {
                ModelKind::Unconstrained
            },
            chose_constrained: constrained,
            shap_l1: shap,
        }
    }

    #[test]
    fn all_constrained() {
        let s = summary_stats(&[rec(true, 1.0, 3), rec(true, 2.0, 4)]).unwrap();
        assert_eq!(s.constrained_rate, 1.0);
        assert_eq!(s.rate_ci.1, 1.0);
        assert!(s.shap_when_unconstrained.is_none());
    }

    #[test]
    fn one_each() {
        let s = summary_stats(&[rec(true, 1.0, 3), rec(false, 2.0, 4)]).unwrap();
        assert_eq!(s.constrained_rate, 0.5);
        assert_eq!(s.shap_when_unconstrained.as_ref().unwrap().mean, 2.0);
        assert!(summary_stats(&[]).is_err());
    }
}
