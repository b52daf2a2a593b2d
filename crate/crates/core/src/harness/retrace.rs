use serde::{Deserialize, Serialize};

use super::{steer_local, SteerBudget, Steered};
use crate::flow::{endpoint, Trajectory};
use crate::reach::{controllable_tree, dist, interior_node, ReachConfig};
use crate::rng::derive;
use crate::system::{ControlSystem, ControlWord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retraced {
    pub word: ControlWord,
    pub reached: Vec<f64>,
    pub distance: f64,
    /// Trajectory sample index targeted by each hop.
    pub hops: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("retrace stalled at sample {stalled_at} after {} hops", hops.len())]
pub struct RetraceFailure {
    /// Earliest sample reached so far.
    pub stalled_at: usize,
    pub word: ControlWord,
    pub reached: Vec<f64>,
    pub hops: Vec<usize>,
}

/// Steers the final state of `traj` back to its origin by hops along the
/// trajectory. Each hop binary-searches for the earliest sample that the
/// steering search reaches from the current state, trying the origin first.
pub fn retrace(
    sys: &ControlSystem,
    traj: &Trajectory,
    budget: &SteerBudget,
    max_hops: usize,
) -> Result<Retraced, RetraceFailure> {
    let states = traj.states();
    let last = states.len() - 1;
    let mut word = ControlWord::empty();
    let mut here = traj.final_state().to_vec();
    let mut at = last;
    let mut hops = Vec::new();
    let stalled = |at: usize, word: ControlWord, here: Vec<f64>, hops: Vec<usize>| RetraceFailure {
        stalled_at: at,
        word,
        reached: here,
        hops,
    };
    if dist(&here, traj.origin()) <= budget.eps {
        return Ok(Retraced { word, distance: dist(&here, traj.origin()), reached: here, hops });
    }
    while hops.len() < max_hops {
        let hop_seed = derive(budget.seed, hops.len() as u64);
        let attempt = |k: usize| steer_local(sys, &here, &states[k], &budget.clone().with_seed(derive(hop_seed, k as u64))).ok();
        let mut found: Option<(usize, Steered)> = attempt(0).map(|s| (0, s));
        if found.is_none() {
            let (mut lo, mut hi) = (0usize, at);
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                match attempt(mid) {
                    Some(s) => {
                        hi = mid;
                        found = Some((mid, s));
                    }
                    None => lo = mid,
                }
            }
        }
        let Some((k, s)) = found else {
            return Err(stalled(at, word, here, hops));
        };
        word = word.concat(&s.word).expect("same control dimension");
        here = s.reached;
        at = k;
        hops.push(k);
        if k == 0 {
            return Ok(Retraced { word, distance: dist(&here, traj.origin()), reached: here, hops });
        }
    }
    Err(stalled(at, word, here, hops))
}

/// Fraction of `targets` that the steering search reaches from `x`; target
/// `i` is searched under the seed derived from `budget.seed` and `i`.
pub fn density_probe(sys: &ControlSystem, x: &[f64], targets: &[Vec<f64>], budget: &SteerBudget) -> f64 {
    if targets.is_empty() {
        return 1.0;
    }
    let hits = targets
        .iter()
        .enumerate()
        .filter(|(i, t)| steer_local(sys, x, t, &budget.clone().with_seed(derive(budget.seed, *i as u64))).is_ok())
        .count();
    hits as f64 / targets.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteriorConfig {
    /// Controllable tree grown at the target point.
    pub tree: ReachConfig,
    /// Occupancy resolution for locating the interior-most node.
    pub cell: f64,
    /// Steering radius around the interior node, as a fraction of `eps`.
    pub inner_fraction: f64,
}

impl InteriorConfig {
    pub fn for_system(sys: &ControlSystem, seed: u64) -> Self {
        InteriorConfig {
            tree: ReachConfig::for_system(sys, seed).with_depth(10).with_prune_cell(0.01),
            cell: 0.05,
            inner_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViaInterior {
    pub word: ControlWord,
    pub interior: Vec<f64>,
    pub reached: Vec<f64>,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum InteriorFailure {
    #[error("controllable tree has no interior cell")]
    NoInterior,
    #[error("steering to the interior node failed (best distance {best_distance})")]
    Steering { best_distance: f64 },
    #[error("replay from the interior node ended {distance} from the target")]
    Replay { distance: f64 },
}

/// Steers `y` to an interior node `z` of the controllable tree at `x`, then
/// follows the tree path from `z` back to `x`.
pub fn reach_via_interior(
    sys: &ControlSystem,
    x: &[f64],
    y: &[f64],
    budget: &SteerBudget,
    cfg: &InteriorConfig,
) -> Result<ViaInterior, InteriorFailure> {
    if dist(x, y) <= budget.eps {
        return Ok(ViaInterior { word: ControlWord::empty(), interior: x.to_vec(), reached: y.to_vec(), distance: dist(x, y) });
    }
    let tree = controllable_tree(sys, x, &cfg.tree, budget.seed).map_err(|_| InteriorFailure::NoInterior)?;
    let (z, _) = interior_node(&tree, cfg.cell).ok_or(InteriorFailure::NoInterior)?;
    let interior = tree.nodes[z].state.clone();
    let inner = budget.clone().with_eps(budget.eps * cfg.inner_fraction);
    let to_z = steer_local(sys, y, &interior, &inner).map_err(|f| InteriorFailure::Steering { best_distance: f.best_distance })?;
    let word = to_z.word.concat(&tree.word_to(z).reversed_order()).expect("same control dimension");
    let reached = endpoint(sys, y, &word, &budget.integrator).map_err(|_| InteriorFailure::Replay { distance: f64::INFINITY })?;
    let distance = dist(&reached, x);
    if distance > budget.eps {
        return Err(InteriorFailure::Replay { distance });
    }
    Ok(ViaInterior { word, interior, reached, distance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::flow::integrate;
    use crate::system::Segment;

    fn two_segment() -> ControlWord {
        ControlWord::new(vec![
            Segment { control: vec![1.0, 0.0, 0.0], duration: 0.5 },
            Segment { control: vec![0.0, 1.0, 0.0], duration: 0.5 },
        ])
        .unwrap()
    }

    #[test]
    fn empty_trajectory_needs_no_word() {
        let sys = fixtures::example22();
        let traj = integrate(&sys, &[1.0, 0.0], &ControlWord::empty(), &Default::default()).unwrap();
        let r = retrace(&sys, &traj, &SteerBudget::new(1.0, 0, 0, 1e-2), 3).unwrap();
        assert!(r.word.is_empty() && r.hops.is_empty());
    }

    #[test]
    fn example22_retraces_to_origin() {
        let sys = fixtures::example22();
        let budget = SteerBudget::new(2.0, 500, 0, 1e-2);
        let traj = integrate(&sys, &[1.0, 0.0], &two_segment(), &budget.integrator).unwrap();
        let r = retrace(&sys, &traj, &budget, 10).unwrap();
        let end = endpoint(&sys, traj.final_state(), &r.word, &budget.integrator).unwrap();
        assert_eq!(end, r.reached);
        assert!(dist(&end, &[1.0, 0.0]) <= 1e-2);
    }

    #[test]
    fn zero_budget_stalls_at_the_end() {
        let sys = fixtures::example22();
        let traj = integrate(&sys, &[1.0, 0.0], &two_segment(), &Default::default()).unwrap();
        let f = retrace(&sys, &traj, &SteerBudget::new(2.0, 0, 0, 1e-2), 10).unwrap_err();
        assert_eq!(f.stalled_at, traj.len() - 1);
        assert!(f.word.is_empty());
    }

    #[test]
    fn drift_cannot_go_back() {
        let sys = fixtures::pure_drift();
        let traj = integrate(&sys, &[0.0], &ControlWord::constant(vec![], 1.0).unwrap(), &Default::default()).unwrap();
        assert!(retrace(&sys, &traj, &SteerBudget::new(1.0, 20, 0, 1e-2), 5).is_err());
    }

    #[test]
    fn density_trivial_cases() {
        let sys = fixtures::pure_drift();
        let budget = SteerBudget::new(2.0, 20, 0, 1e-2);
        assert_eq!(density_probe(&sys, &[0.0], &[vec![0.0]], &budget), 1.0);
        assert_eq!(density_probe(&sys, &[0.0], &[vec![-1.0]], &budget), 0.0);
        assert_eq!(density_probe(&sys, &[0.0], &[], &budget), 1.0);
    }

    #[test]
    fn drift_interior_depends_on_resolution() {
        let sys = fixtures::pure_drift();
        let budget = SteerBudget::new(2.0, 20, 0, 1e-3);
        // The half-line tree spans 0.5; a coarser grid sees no interior cell.
        let coarse = InteriorConfig { cell: 1.0, ..InteriorConfig::for_system(&sys, 0) };
        let r = reach_via_interior(&sys, &[0.0], &[-1.0], &budget, &coarse);
        assert_eq!(r.unwrap_err(), InteriorFailure::NoInterior);
        let fine = InteriorConfig::for_system(&sys, 0);
        assert!(matches!(
            reach_via_interior(&sys, &[0.0], &[1.0], &budget, &fine),
            Err(InteriorFailure::Steering { .. })
        ));
        let same = reach_via_interior(&sys, &[0.0], &[0.0], &budget, &fine).unwrap();
        assert!(same.word.is_empty());
    }

    #[test]
    fn example22_via_interior() {
        let sys = fixtures::example22();
        let budget = SteerBudget::new(4.0, 500, 0, 1e-2);
        let r = reach_via_interior(&sys, &[1.0, 0.0], &[0.0, 1.0], &budget, &InteriorConfig::for_system(&sys, 0)).unwrap();
        let end = endpoint(&sys, &[0.0, 1.0], &r.word, &budget.integrator).unwrap();
        assert_eq!(end, r.reached);
        assert!(dist(&end, &[1.0, 0.0]) <= 1e-2);
    }
}
