use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::SteerBudget;
use crate::flow::walk;
use crate::reach::dist;
use crate::rng::{seeded, SeededRng};
use crate::system::{BoxSet, ControlSet, ControlSystem, ControlWord, Segment};

const ITERATIONS: usize = 5;
const ELITE_FRACTION: f64 = 0.1;
const REFINE_PASSES: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Steered {
    pub word: ControlWord,
    pub reached: Vec<f64>,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("steering failed: best distance {best_distance}")]
pub struct SteerFailure {
    pub best_distance: f64,
}

/// Candidate word of fixed segment count; scored by the closest approach to
/// the target over every integrator step.
#[derive(Clone)]
struct Candidate {
    controls: Vec<Vec<f64>>,
    cost: f64,
    best_step: usize,
}

struct Problem<'a> {
    sys: &'a ControlSystem,
    a: &'a [f64],
    b: &'a [f64],
    budget: &'a SteerBudget,
    seg_steps: usize,
}

impl Problem<'_> {
    fn word(&self, controls: &[Vec<f64>]) -> ControlWord {
        let d = self.seg_steps as f64 * self.budget.integrator.h;
        ControlWord::new(controls.iter().map(|u| Segment { control: u.clone(), duration: d }).collect())
            .expect("positive durations")
    }

    fn score(&self, controls: Vec<Vec<f64>>) -> Candidate {
        let word = self.word(&controls);
        let mut cost = dist(self.a, self.b);
        let mut best_step = 0;
        // Escapes end the rollout; the prefix before them still counts.
        let _ = walk(self.sys, self.a, &word, &self.budget.integrator, |k, x| {
            let d = dist(x, self.b);
            if d < cost {
                cost = d;
                best_step = k;
            }
            true
        });
        Candidate { controls, cost, best_step }
    }
}

/// Sampling distribution over per-segment controls.
enum Model {
    Gaussian { bounds: BoxSet, mean: Vec<Vec<f64>>, std: Vec<Vec<f64>>, fitted: bool },
    Categorical { items: Vec<Vec<f64>>, probs: Vec<Vec<f64>> },
}

impl Model {
    fn new(set: &ControlSet, segments: usize) -> Option<Model> {
        match set {
            ControlSet::Box(b) => Some(Model::Gaussian {
                bounds: b.clone(),
                mean: vec![b.center(); segments],
                std: vec![b.hi().iter().zip(b.lo()).map(|(h, l)| 0.5 * (h - l)).collect(); segments],
                fitted: false,
            }),
            ControlSet::List(items) if items.is_empty() => None,
            ControlSet::List(items) => {
                Some(Model::Categorical { items: items.clone(), probs: vec![vec![1.0 / items.len() as f64; items.len()]; segments] })
            }
        }
    }

    fn sample(&self, rng: &mut SeededRng) -> Vec<Vec<f64>> {
        match self {
            Model::Gaussian { bounds, mean, std, fitted } => mean
                .iter()
                .zip(std)
                .map(|(mu, sd)| {
                    if !fitted {
                        return bounds.sample(rng);
                    }
                    let mut u: Vec<f64> = mu.iter().zip(sd).map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal)).collect();
                    bounds.clamp(&mut u);
                    u
                })
                .collect(),
            Model::Categorical { items, probs } => probs
                .iter()
                .map(|p| {
                    let mut r: f64 = rng.random();
                    for (item, w) in items.iter().zip(p) {
                        if r < *w {
                            return item.clone();
                        }
                        r -= w;
                    }
                    items[items.len() - 1].clone()
                })
                .collect(),
        }
    }

    fn refit(&mut self, elite: &[&Candidate]) {
        let k = elite.len() as f64;
        match self {
            Model::Gaussian { bounds, mean, std, fitted } => {
                for (s, (mu, sd)) in mean.iter_mut().zip(std.iter_mut()).enumerate() {
                    for i in 0..mu.len() {
                        let avg = elite.iter().map(|c| c.controls[s][i]).sum::<f64>() / k;
                        let var = elite.iter().map(|c| (c.controls[s][i] - avg).powi(2)).sum::<f64>() / k;
                        let floor = 0.02 * (bounds.hi()[i] - bounds.lo()[i]);
                        mu[i] = avg;
                        sd[i] = var.sqrt().max(floor);
                    }
                }
                *fitted = true;
            }
            Model::Categorical { items, probs } => {
                let smoothing = 0.1 / items.len() as f64;
                for (s, p) in probs.iter_mut().enumerate() {
                    for (j, item) in items.iter().enumerate() {
                        let hits = elite.iter().filter(|c| &c.controls[s] == item).count() as f64;
                        p[j] = 0.9 * hits / k + smoothing;
                    }
                }
            }
        }
    }
}

/// Cross-entropy search for a word steering `a` to within `budget.eps` of
/// `b`, followed by coordinate refinement of the best word. The returned word
/// is snapped and ends at the step of closest approach.
pub fn steer_local(sys: &ControlSystem, a: &[f64], b: &[f64], budget: &SteerBudget) -> Result<Steered, SteerFailure> {
    let start = dist(a, b);
    if start <= budget.eps {
        return Ok(Steered { word: ControlWord::empty(), reached: a.to_vec(), distance: start });
    }
    if budget.rollouts == 0 || !budget.is_valid() || !sys.in_domain(a) {
        return Err(SteerFailure { best_distance: start });
    }
    let segments = budget.segments();
    let problem = Problem {
        sys,
        a,
        b,
        budget,
        seg_steps: budget.integrator.steps_for(budget.segment_duration()),
    };
    let Some(mut model) = Model::new(sys.controls(), segments) else {
        return Err(SteerFailure { best_distance: start });
    };
    let mut rng = seeded(budget.seed);
    let per_iter = budget.rollouts.div_ceil(ITERATIONS);
    let mut best: Option<Candidate> = None;
    let mut left = budget.rollouts;
    while left > 0 {
        let batch = per_iter.min(left);
        left -= batch;
        let mut pool: Vec<Candidate> = (0..batch).map(|_| problem.score(model.sample(&mut rng))).collect();
        pool.sort_by(|x, y| x.cost.total_cmp(&y.cost));
        if best.as_ref().is_none_or(|b| pool[0].cost < b.cost) {
            best = Some(pool[0].clone());
        }
        if best.as_ref().is_some_and(|b| b.cost <= budget.eps) {
            break;
        }
        let n_elite = ((batch as f64 * ELITE_FRACTION).ceil() as usize).max(1);
        model.refit(&pool.iter().take(n_elite).collect::<Vec<_>>());
    }
    let mut best = best.expect("at least one rollout");
    if best.cost > budget.eps {
        best = refine(&problem, best);
    }
    finish(&problem, best)
}

fn finish(problem: &Problem, best: Candidate) -> Result<Steered, SteerFailure> {
    if best.cost > problem.budget.eps {
        return Err(SteerFailure { best_distance: best.cost });
    }
    if best.best_step == 0 {
        return Ok(Steered { word: ControlWord::empty(), reached: problem.a.to_vec(), distance: best.cost });
    }
    let h = problem.budget.integrator.h;
    let word = problem.word(&best.controls).truncated_steps(best.best_step, h).compacted().snapped(h);
    let reached = crate::flow::endpoint(problem.sys, problem.a, &word, &problem.budget.integrator)
        .map_err(|_| SteerFailure { best_distance: best.cost })?;
    let distance = dist(&reached, problem.b);
    if distance > problem.budget.eps {
        return Err(SteerFailure { best_distance: distance });
    }
    Ok(Steered { word, reached, distance })
}

/// Greedy per-coordinate moves with a shrinking step; list-valued control
/// sets try every item per segment instead.
fn refine(problem: &Problem, mut best: Candidate) -> Candidate {
    match problem.sys.controls() {
        ControlSet::Box(bounds) => {
            let mut step: Vec<f64> = bounds.hi().iter().zip(bounds.lo()).map(|(h, l)| 0.25 * (h - l)).collect();
            for _ in 0..REFINE_PASSES {
                for s in 0..best.controls.len() {
                    for i in 0..step.len() {
                        for sign in [1.0, -1.0] {
                            let mut controls = best.controls.clone();
                            controls[s][i] = (controls[s][i] + sign * step[i]).clamp(bounds.lo()[i], bounds.hi()[i]);
                            if controls[s][i] == best.controls[s][i] {
                                continue;
                            }
                            let cand = problem.score(controls);
                            if cand.cost < best.cost {
                                best = cand;
                                break;
                            }
                        }
                        if best.cost <= problem.budget.eps {
                            return best;
                        }
                    }
                }
                step.iter_mut().for_each(|v| *v *= 0.5);
            }
        }
        ControlSet::List(items) => {
            for s in 0..best.controls.len() {
                for item in items {
                    if &best.controls[s] == item {
                        continue;
                    }
                    let mut controls = best.controls.clone();
                    controls[s] = item.clone();
                    let cand = problem.score(controls);
                    if cand.cost < best.cost {
                        best = cand;
                    }
                }
                if best.cost <= problem.budget.eps {
                    return best;
                }
            }
        }
    }
    best
}
