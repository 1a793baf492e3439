use super::model::{MonotoneDirection, TreeNode};
use crate::data::FeatureMatrix;

/// Loss reductions at or below this are treated as no improvement.
const MIN_GAIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    default_left: bool,
    gain: f64,
    left_weight: f64,
    right_weight: f64,
}

pub(crate) struct Grower<'a> {
    pub x: &'a FeatureMatrix,
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub constraints: &'a [MonotoneDirection],
    pub params: GrowParams,
    side: Vec<bool>,
}

fn clip(w: f64, lower: f64, upper: f64) -> f64 {
    w.max(lower).min(upper)
}

impl<'a> Grower<'a> {
    pub fn new(
        x: &'a FeatureMatrix,
        grad: &'a [f64],
        hess: &'a [f64],
        constraints: &'a [MonotoneDirection],
        params: GrowParams,
    ) -> Self {
        Self {
            x,
            grad,
            hess,
            constraints,
            params,
            side: vec![false; x.n_rows],
        }
    }

    fn weight(&self, g: f64, h: f64) -> f64 {
        -g / (h + self.params.lambda)
    }

    /// Loss reduction contributed by a node holding weight `w`.
    fn score(&self, g: f64, h: f64, w: f64) -> f64 {
        -(2.0 * g * w + (h + self.params.lambda) * w * w)
    }

    /// Grows one tree over `rows`. `sorted` holds, per column, the rows with a
    /// non-missing value in ascending value order. Each leaf's shrunken weight
    /// is added to `delta` for the rows that reach it.
    pub fn grow(&mut self, rows: Vec<u32>, sorted: Vec<Vec<u32>>, delta: &mut [f64]) -> TreeNode {
        self.grow_node(rows, sorted, 0, f64::NEG_INFINITY, f64::INFINITY, delta)
    }

    fn grow_node(
        &mut self,
        rows: Vec<u32>,
        sorted: Vec<Vec<u32>>,
        depth: usize,
        lower: f64,
        upper: f64,
        delta: &mut [f64],
    ) -> TreeNode {
        let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &r| {
            (g + self.grad[r as usize], h + self.hess[r as usize])
        });
        let w = clip(self.weight(g, h), lower, upper);
        let cover = rows.len() as f64;

        let best = if depth < self.params.max_depth && rows.len() >= 2 {
            self.best_split(&rows, &sorted, g, h, w, lower, upper)
        } else {
            None
        };

        let Some(best) = best else {
            let leaf = w * self.params.learning_rate;
            for &r in &rows {
                delta[r as usize] += leaf;
            }
            return TreeNode::leaf(leaf, cover);
        };

        let c = best.feature;
        for &r in &rows {
            let v = self.x.get(r as usize, c);
            self.side[r as usize] = if v.is_nan() { best.default_left } else { v < best.threshold };
        }
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
            rows.iter().partition(|&&r| self.side[r as usize]);
        let mut left_sorted = Vec::with_capacity(sorted.len());
        let mut right_sorted = Vec::with_capacity(sorted.len());
        for list in sorted {
            let (l, r): (Vec<u32>, Vec<u32>) = list.into_iter().partition(|&r| self.side[r as usize]);
            left_sorted.push(l);
            right_sorted.push(r);
        }

        let mid = 0.5 * (best.left_weight + best.right_weight);
        let ((l_lo, l_hi), (r_lo, r_hi)) = match self.constraints[c] {
            MonotoneDirection::Increasing => ((lower, upper.min(mid)), (lower.max(mid), upper)),
            MonotoneDirection::Decreasing => ((lower.max(mid), upper), (lower, upper.min(mid))),
            MonotoneDirection::Unconstrained => ((lower, upper), (lower, upper)),
        };

        let left = self.grow_node(left_rows, left_sorted, depth + 1, l_lo, l_hi, delta);
        let right = self.grow_node(right_rows, right_sorted, depth + 1, r_lo, r_hi, delta);
        TreeNode::Split {
            feature: c,
            threshold: best.threshold,
            default_left: best.default_left,
            cover,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn best_split(
        &self,
        rows: &[u32],
        sorted: &[Vec<u32>],
        g: f64,
        h: f64,
        w: f64,
        lower: f64,
        upper: f64,
    ) -> Option<Candidate> {
        let parent = self.score(g, h, w);
        let mcw = self.params.min_child_weight;
        let mut best: Option<Candidate> = None;

        for (c, list) in sorted.iter().enumerate() {
            if list.len() < 2 {
                continue;
            }
            let direction = self.constraints[c];
            let has_missing = list.len() < rows.len();
            let (g_miss, h_miss) = if has_missing {
                let (gn, hn) = list.iter().fold((0.0, 0.0), |(a, b), &r| {
                    (a + self.grad[r as usize], b + self.hess[r as usize])
                });
                (g - gn, h - hn)
            } else {
                (0.0, 0.0)
            };

            let mut gl = 0.0;
            let mut hl = 0.0;
            for i in 0..list.len() - 1 {
                let r = list[i] as usize;
                gl += self.grad[r];
                hl += self.hess[r];
                let v = self.x.get(r, c);
                let next = self.x.get(list[i + 1] as usize, c);
                if v == next {
                    continue;
                }
                let mut threshold = v + (next - v) * 0.5;
                if threshold <= v {
                    threshold = next;
                }

                let options: &[bool] = if has_missing { &[true, false] } else { &[true] };
                for &missing_left in options {
                    let (gl_, hl_) = if missing_left { (gl + g_miss, hl + h_miss) } else { (gl, hl) };
                    let (gr_, hr_) = (g - gl_, h - hl_);
                    if hl_ < mcw || hr_ < mcw {
                        continue;
                    }
                    let wl = clip(self.weight(gl_, hl_), lower, upper);
                    let wr = clip(self.weight(gr_, hr_), lower, upper);
                    let violates = match direction {
                        MonotoneDirection::Increasing => wl > wr,
                        MonotoneDirection::Decreasing => wl < wr,
                        MonotoneDirection::Unconstrained => false,
                    };
                    if violates {
                        continue;
                    }
                    let gain = self.score(gl_, hl_, wl) + self.score(gr_, hr_, wr) - parent;
                    if gain <= MIN_GAIN || gain <= self.params.gamma {
                        continue;
                    }
                    if best.map_or(true, |b| gain > b.gain) {
                        // Without missing rows at this node both routings tie;
                        // unseen missing values follow the heavier child.
                        let default_left = if has_missing { missing_left } else { hl_ >= hr_ };
                        best = Some(Candidate {
                            feature: c,
                            threshold,
                            default_left,
                            gain,
                            left_weight: wl,
                            right_weight: wr,
                        });
                    }
                }
            }
        }
        best
    }
}
