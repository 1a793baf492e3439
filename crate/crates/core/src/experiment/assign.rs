use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::design::ExperimentDesign;
use crate::explain::first_on_left;
use crate::{seed, Result};

/// One rater-facing task before payloads are attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub task_id: String,
    pub rater: String,
    /// Index into the selected pairs.
    pub pair: usize,
    /// Index into that pair's sampled patients.
    pub patient: usize,
    /// Seed of the left/right coin.
    pub side_seed: u64,
    /// Whether the constrained model is shown on the left.
    pub constrained_left: bool,
}

/// Deals every pair's patients evenly across raters, then shuffles each
/// rater's task order. Returned tasks are grouped by rater in design order,
/// each group in presentation order.
pub fn assign_tasks(n_pairs: usize, design: &ExperimentDesign) -> Result<Vec<Assignment>> {
    design.validate()?;
    let r = design.raters.len();
    let share = design.per_rater_per_pair();
    let mut rng = seed::rng(seed::derive(design.seed, &[3]));
    let mut per_rater: Vec<Vec<(usize, usize)>> = vec![Vec::new(); r];
    for pair in 0..n_pairs {
        let mut patients: Vec<usize> = (0..design.patients_per_pair).collect();
        patients.shuffle(&mut rng);
        for (k, chunk) in patients.chunks(share).enumerate() {
            per_rater[k].extend(chunk.iter().map(|&p| (pair, p)));
        }
    }
    let mut ids = BTreeSet::new();
    let mut out = Vec::with_capacity(n_pairs * design.patients_per_pair);
    for (k, tasks) in per_rater.iter_mut().enumerate() {
        tasks.shuffle(&mut rng);
        for &(pair, patient) in tasks.iter() {
            // Opaque ids: random, so they carry no information about the pair or sides.
            let task_id = loop {
                let id = format!("{:016x}", rng.gen::<u64>());
                if ids.insert(id.clone()) {
                    break id;
                }
            };
            let side_seed = seed::derive(design.seed, &[4, pair as u64, patient as u64]);
            out.push(Assignment {
                task_id,
                rater: design.raters[k].clone(),
                pair,
                patient,
                side_seed,
                constrained_left: first_on_left(side_seed),
            });
        }
    }
    Ok(out)
}
