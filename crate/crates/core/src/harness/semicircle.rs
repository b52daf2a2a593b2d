use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SteerBudget;
use crate::fixtures;
use crate::flow::walk;
use crate::rng::{derive, seeded};
use crate::system::{ControlSystem, ControlWord, Segment};

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("angular rate undefined at ‖x‖ = {norm}")]
pub struct NearOriginError {
    pub norm: f64,
}

/// `d/dt atan2(x2, x1) = (x1·ẋ2 − x2·ẋ1)/‖x‖²` along `F(·, u)`.
pub fn angular_rate(sys: &ControlSystem, x: &[f64], u: &[f64]) -> Result<f64, NearOriginError> {
    let r2 = x[0] * x[0] + x[1] * x[1];
    if r2.sqrt() <= 1e-9 {
        return Err(NearOriginError { norm: r2.sqrt() });
    }
    let v = sys.eval(x, u).map_err(|_| NearOriginError { norm: r2.sqrt() })?;
    Ok((x[0] * v[1] - x[1] * v[0]) / r2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemicircleRecord {
    /// Seed of the rollout; `None` for the canonical rotation words.
    pub seed: Option<u64>,
    pub time: f64,
    pub segments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemicircleResult {
    pub best_time: Option<f64>,
    pub best_word: Option<ControlWord>,
    /// Completion time of the faster canonical rotation word.
    pub canonical_time: Option<f64>,
    /// Fastest completion among the random words alone.
    pub random_time: Option<f64>,
    pub evaluated: usize,
    /// Words dropped because an integrator step turned by `π/2` or more.
    pub rejected: usize,
    pub records: Vec<SemicircleRecord>,
}

enum Outcome {
    Completed(f64),
    Open,
    Rejected,
}

/// Time at which the unwrapped polar angle first moves by `π`, linearly
/// interpolated between steps.
fn completion_time(sys: &ControlSystem, x0: &[f64], word: &ControlWord, budget: &SteerBudget) -> Outcome {
    let h = budget.integrator.h;
    let mut prev_angle = x0[1].atan2(x0[0]);
    let mut swept = 0.0f64;
    let mut outcome = Outcome::Open;
    let _ = walk(sys, x0, word, &budget.integrator, |k, x| {
        let angle = x[1].atan2(x[0]);
        let mut d = angle - prev_angle;
        if d > PI {
            d -= 2.0 * PI;
        } else if d < -PI {
            d += 2.0 * PI;
        }
        if d.abs() >= FRAC_PI_2 || !d.is_finite() {
            outcome = Outcome::Rejected;
            return false;
        }
        let before = swept.abs();
        swept += d;
        prev_angle = angle;
        if swept.abs() >= PI {
            let frac = (PI - before) / (swept.abs() - before);
            outcome = Outcome::Completed((k - 1) as f64 * h + frac * h);
            return false;
        }
        true
    });
    outcome
}

/// Random candidate word for rollout seed `seed`. Odd seeds sample every
/// control uniformly from the box; even seeds favor fast turning (small
/// drift, `|u2|` near 1 with a fixed sign).
pub fn semicircle_word(seed: u64, budget: &SteerBudget) -> ControlWord {
    let mut rng = seeded(seed);
    let d = budget.segment_duration();
    let turning = seed.is_multiple_of(2);
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let segments = (0..budget.segments())
        .map(|_| {
            let control = if turning {
                vec![rng.random_range(0.0..=0.2), sign * rng.random_range(0.8..=1.0), rng.random_range(-1.0..=1.0)]
            } else {
                vec![rng.random_range(0.0..=1.0), rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)]
            };
            Segment { control, duration: d }
        })
        .collect();
    ControlWord::new(segments).expect("positive durations")
}

/// Shortest time found for the rotation-dilation example to sweep a half
/// turn from `(r0, 0)`, over the two canonical rotation words and
/// `budget.rollouts − 2` random words.
pub fn semicircle_min_time(r0: f64, budget: &SteerBudget) -> SemicircleResult {
    let sys = fixtures::example22();
    let x0 = [r0, 0.0];
    let mut result = SemicircleResult {
        best_time: None,
        best_word: None,
        canonical_time: None,
        random_time: None,
        evaluated: 0,
        rejected: 0,
        records: Vec::new(),
    };
    if budget.rollouts == 0 || !(r0 > 0.0) {
        return result;
    }
    let canonical = [1.0, -1.0].map(|s| ControlWord::constant(vec![0.0, s, 0.0], budget.horizon).expect("positive horizon"));
    let random = (0..budget.rollouts.saturating_sub(2)).map(|i| {
        let seed = derive(budget.seed, i as u64);
        (Some(seed), semicircle_word(seed, budget))
    });
    let candidates = canonical.into_iter().take(budget.rollouts).map(|w| (None, w)).chain(random);
    for (seed, word) in candidates {
        result.evaluated += 1;
        match completion_time(&sys, &x0, &word, budget) {
            Outcome::Completed(t) => {
                let slot = if seed.is_none() { &mut result.canonical_time } else { &mut result.random_time };
                *slot = Some(slot.map_or(t, |c: f64| c.min(t)));
                result.records.push(SemicircleRecord { seed, time: t, segments: word.len() });
                if result.best_time.is_none_or(|b| t < b) {
                    result.best_time = Some(t);
                    result.best_word = Some(word);
                }
            }
            Outcome::Rejected => result.rejected += 1,
            Outcome::Open => {}
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_examples() {
        let sys = fixtures::example22();
        assert!((angular_rate(&sys, &[1.0, 0.0], &[0.0, 1.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(angular_rate(&sys, &[0.0, 1.0], &[1.0, 1.0, 0.0]).unwrap().abs() < 1e-15);
        assert!(angular_rate(&sys, &[0.3, -0.7], &[0.0, 0.0, 1.0]).unwrap().abs() < 1e-15);
        assert!(angular_rate(&sys, &[0.0, 0.0], &[0.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn zero_budget() {
        let r = semicircle_min_time(1.0, &SteerBudget::new(4.0, 0, 0, 1e-2));
        assert_eq!(r.best_time, None);
        assert_eq!(r.evaluated, 0);
    }

    #[test]
    fn canonical_rotation_takes_pi() {
        let r = semicircle_min_time(1.0, &SteerBudget::new(4.0, 2, 0, 1e-2));
        let t = r.canonical_time.unwrap();
        assert!((t - PI).abs() < 1e-6, "{t}");
        assert_eq!(r.best_time, Some(t));
    }

    #[test]
    fn short_horizon_never_completes() {
        let r = semicircle_min_time(1.0, &SteerBudget::new(3.0, 50, 0, 1e-2));
        assert_eq!(r.best_time, None);
        assert_eq!(r.evaluated, 50);
    }
}
