use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::design::ExperimentDesign;
use crate::sweep::PairRecord;
use crate::{seed, Error, Result};

/// Number of items in the top `(1 − quantile)` share of `n`.
pub fn top_count(n: usize, quantile: f64) -> usize {
    ((n as f64) * (1.0 - quantile)).ceil() as usize
}

/// Indices of the `top_count(values.len(), quantile)` largest values.
/// Equal values keep index order.
pub fn top_indices(values: &[f64], quantile: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    idx.truncate(top_count(values.len(), quantile));
    idx
}

/// Draws `design.n_pairs` pairs uniformly among the runs at `design.train_size`
/// whose `d_shap` is in the top quantile. Only replicates below
/// `design.n_runs` are considered.
pub fn sample_pairs(records: &[PairRecord], design: &ExperimentDesign) -> Result<Vec<PairRecord>> {
    let mut runs: Vec<&PairRecord> = records
        .iter()
        .filter(|p| p.size == design.train_size && p.replicate < design.n_runs)
        .collect();
    runs.sort_by_key(|p| p.replicate);
    if runs.len() < design.n_runs {
        return Err(Error::NotEnoughCandidates(format!(
            "{} pair records at train size {}, {} needed",
            runs.len(),
            design.train_size,
            design.n_runs
        )));
    }
    let d: Vec<f64> = runs.iter().map(|p| p.d_shap).collect();
    let eligible = top_indices(&d, design.pair_quantile);
    if eligible.len() < design.n_pairs {
        return Err(Error::NotEnoughCandidates(format!(
            "{} eligible pairs, {} requested",
            eligible.len(),
            design.n_pairs
        )));
    }
    let mut rng = seed::rng(seed::derive(design.seed, &[1]));
    let chosen = index::sample(&mut rng, eligible.len(), design.n_pairs);
    Ok(chosen.iter().map(|k| runs[eligible[k]].clone()).collect())
}

/// Selects `design.patients_per_pair` test rows for one pair: half uniform
/// from the top-quantile rows by per-row SHAP L1, half uniform from all rows.
/// A uniform draw that repeats an already chosen row is redrawn.
pub fn sample_patients(shap_l1: &[f64], design: &ExperimentDesign, pair_seed: u64) -> Result<Vec<usize>> {
    let half = design.patients_per_pair / 2;
    let top = top_indices(shap_l1, design.patient_quantile);
    if top.len() < half {
        return Err(Error::NotEnoughCandidates(format!(
            "{} rows in the top SHAP-distance quantile, {half} needed",
            top.len()
        )));
    }
    if shap_l1.len() < design.patients_per_pair {
        return Err(Error::NotEnoughCandidates(format!(
            "{} test rows, {} patients needed",
            shap_l1.len(),
            design.patients_per_pair
        )));
    }
    let mut rng = seed::rng(pair_seed);
    let mut picked: Vec<usize> = top.choose_multiple(&mut rng, half).copied().collect();
    let mut seen: BTreeSet<usize> = picked.iter().copied().collect();
    while picked.len() < design.patients_per_pair {
        let r = rng.gen_range(0..shap_l1.len());
        if seen.insert(r) {
            picked.push(r);
        }
    }
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(n: usize) -> Vec<PairRecord> {
        (0..n)
            .map(|r| PairRecord {
                size: 400,
                replicate: r,
                seed: r as u64,
                d_pred: 0.0,
                d_rank: 0.0,
                d_shap: (r * 37 % 101) as f64,
                report_path: String::new(),
            })
            .collect()
    }

    #[test]
    fn eligible_set_size() {
        assert_eq!(top_count(150, 0.75), 38);
        assert_eq!(top_count(150, 0.0), 150);
        let d = ExperimentDesign::default();
        let recs = records(150);
        let chosen = sample_pairs(&recs, &d).unwrap();
        assert_eq!(chosen.len(), 9);
        let vals: Vec<f64> = recs.iter().map(|p| p.d_shap).collect();
        let top: BTreeSet<usize> = top_indices(&vals, 0.75).into_iter().collect();
        assert!(chosen.iter().all(|p| top.contains(&p.replicate)));
        assert_eq!(sample_pairs(&recs, &d).unwrap(), chosen);
        assert!(sample_pairs(&recs[..100], &d).is_err());
    }

    #[test]
    fn patients_split_into_halves() {
        let d = ExperimentDesign::default();
        let l1: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64).collect();
        let p = sample_patients(&l1, &d, 3).unwrap();
        assert_eq!(p.len(), 24);
        let top: BTreeSet<usize> = top_indices(&l1, 0.75).into_iter().collect();
        assert!(p[..12].iter().all(|i| top.contains(i)));
        let uniq: BTreeSet<_> = p.iter().collect();
        assert_eq!(uniq.len(), 24);
        assert_eq!(sample_patients(&l1, &d, 3).unwrap(), p);
        assert!(sample_patients(&l1[..40], &d, 3).is_err());
    }
}
