use serde::{Deserialize, Serialize};

use super::{steer_local, SteerBudget};
use crate::reach::dist;
use crate::rng::derive;
use crate::system::{ControlSystem, ControlWord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ReachEntry {
    Success { word: ControlWord, distance: f64 },
    Failure { best_distance: f64 },
}

impl ReachEntry {
    pub fn is_success(&self) -> bool {
        matches!(self, ReachEntry::Success { .. })
    }
}

/// Pairwise steering results: `entries[i][j]` is the search from point `i`
/// to point `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachMatrix {
    pub points: Vec<Vec<f64>>,
    pub entries: Vec<Vec<ReachEntry>>,
    pub budget: SteerBudget,
}

impl ReachMatrix {
    pub fn success(&self, i: usize, j: usize) -> bool {
        self.entries[i][j].is_success()
    }

    /// Whether every success word, replayed from its source point, lands
    /// within `eps` of its target.
    pub fn replays(&self, sys: &ControlSystem) -> bool {
        self.entries.iter().enumerate().all(|(i, row)| {
            row.iter().enumerate().all(|(j, e)| match e {
                ReachEntry::Success { word, .. } => crate::flow::endpoint(sys, &self.points[i], word, &self.budget.integrator)
                    .is_ok_and(|end| dist(&end, &self.points[j]) <= self.budget.eps),
                ReachEntry::Failure { .. } => true,
            })
        })
    }
}

/// Runs [`steer_local`] on every ordered pair. Pair `(i, j)` searches under
/// the seed derived from `budget.seed` and `i·len + j`.
pub fn mutual_reach_check(sys: &ControlSystem, points: &[Vec<f64>], budget: &SteerBudget) -> ReachMatrix {
    let n = points.len();
    let entries = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        return ReachEntry::Success { word: ControlWord::empty(), distance: 0.0 };
                    }
                    let b = budget.clone().with_seed(derive(budget.seed, (i * n + j) as u64));
                    match steer_local(sys, &points[i], &points[j], &b) {
                        Ok(s) => ReachEntry::Success { word: s.word, distance: s.distance },
                        Err(f) => ReachEntry::Failure { best_distance: f.best_distance },
                    }
                })
                .collect()
        })
        .collect();
    ReachMatrix { points: points.to_vec(), entries, budget: budget.clone() }
}

/// Connected components of the mutual-success graph, each sorted, ordered by
/// smallest member.
pub fn equivalence_classes(matrix: &ReachMatrix) -> Vec<Vec<usize>> {
    let n = matrix.points.len();
    let mut class = vec![usize::MAX; n];
    let mut out = Vec::new();
    for start in 0..n {
        if class[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![start];
        class[start] = id;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if class[j] == usize::MAX && matrix.success(i, j) && matrix.success(j, i) {
                    class[j] = id;
                    members.push(j);
                    stack.push(j);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}
