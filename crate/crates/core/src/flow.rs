//! Fixed-step RK4 flows of piecewise-constant control words, and the
//! variational equation for the flow differential.
//!
//! Segment durations are snapped to positive integer multiples of the step
//! `h` before integrating, so concatenated words integrate bit-for-bit like
//! their pieces and every trajectory can be replayed exactly.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::fieldlang::{eval_dual, FieldError};
use crate::system::{ControlSystem, ControlWord, SystemError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Step size.
    pub h: f64,
    /// Blow-up guard: states with `‖x‖ > r_max` escape.
    pub r_max: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { h: 1e-2, r_max: 1e6 }
    }
}

impl IntegratorConfig {
    pub fn new(h: f64, r_max: f64) -> Result<Self, FlowError> {
        let cfg = IntegratorConfig { h, r_max };
        cfg.check()?;
        Ok(cfg)
    }

    pub(crate) fn check(&self) -> Result<(), FlowError> {
        if !(self.h > 0.0 && self.h.is_finite() && self.r_max > 0.0) {
            return Err(FlowError::InvalidConfig(*self));
        }
        Ok(())
    }

    /// Nearest positive number of steps for a duration.
    pub fn steps_for(&self, duration: f64) -> usize {
        crate::system::snap_steps(duration, self.h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscapeReason {
    Radius,
    Domain,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlowError {
    #[error("trajectory escaped ({reason:?}) at t = {time}; last valid state {state:?}")]
    Escape { time: f64, state: Vec<f64>, reason: EscapeReason },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("initial state {0:?} is outside the domain")]
    StartOutsideDomain(Vec<f64>),
    #[error("invalid integrator configuration {0:?}")]
    InvalidConfig(IntegratorConfig),
}

/// Time-stamped samples of one integrated word.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    t: Vec<f64>,
    states: Vec<Vec<f64>>,
    /// Segment driving the step that starts at each sample (the last sample
    /// repeats the final segment).
    segment_of: Vec<usize>,
    word: ControlWord,
    origin: Vec<f64>,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn word(&self) -> &ControlWord {
        &self.word
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory holds at least its origin")
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Control active from sample `k` onward, if the word is non-empty.
    pub fn control_at(&self, k: usize) -> Option<&[f64]> {
        let seg = *self.segment_of.get(k)?;
        self.word.segments().get(seg).map(|s| s.control.as_slice())
    }

    /// The prefix of the word that drives the origin to sample `k`.
    pub fn word_until(&self, k: usize, h: f64) -> ControlWord {
        self.word.truncated_steps(k, h)
    }
}

/// Scratch buffers for one RK4 step.
struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Rk4 { k1: vec![0.0; n], k2: vec![0.0; n], k3: vec![0.0; n], k4: vec![0.0; n], tmp: vec![0.0; n] }
    }

    fn step(&mut self, sys: &ControlSystem, x: &mut [f64], u: &[f64], h: f64) -> Result<(), FieldError> {
        let half = 0.5 * h;
        sys.eval_into(x, u, &mut self.k1)?;
        for i in 0..x.len() {
            self.tmp[i] = x[i] + half * self.k1[i];
        }
        sys.eval_into(&self.tmp, u, &mut self.k2)?;
        for i in 0..x.len() {
            self.tmp[i] = x[i] + half * self.k2[i];
        }
        sys.eval_into(&self.tmp, u, &mut self.k3)?;
        for i in 0..x.len() {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        sys.eval_into(&self.tmp, u, &mut self.k4)?;
        let sixth = h / 6.0;
        for i in 0..x.len() {
            x[i] += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

fn escape_reason(sys: &ControlSystem, x: &[f64], cfg: &IntegratorConfig) -> Option<EscapeReason> {
    if x.iter().any(|v| !v.is_finite()) {
        return Some(EscapeReason::NonFinite);
    }
    if x.iter().map(|v| v * v).sum::<f64>().sqrt() > cfg.r_max {
        return Some(EscapeReason::Radius);
    }
    if !sys.in_domain(x) {
        return Some(EscapeReason::Domain);
    }
    None
}

fn check_start(sys: &ControlSystem, x0: &[f64], word: &ControlWord, cfg: &IntegratorConfig) -> Result<(), FlowError> {
    cfg.check()?;
    if x0.len() != sys.state_dim() {
        return Err(SystemError::DimensionMismatch { expected: sys.state_dim(), found: x0.len() }.into());
    }
    if !sys.in_domain(x0) {
        return Err(FlowError::StartOutsideDomain(x0.to_vec()));
    }
    sys.validate_word(word)?;
    Ok(())
}

/// Steps `x0` through the (snapped) word, calling `visit(k, x_k)` after every
/// step `k ≥ 1`; a `false` from the visitor stops the walk and yields `None`.
/// Otherwise returns the final state.
///
/// Controls are not re-validated here; callers validate once.
pub(crate) fn walk(
    sys: &ControlSystem,
    x0: &[f64],
    word: &ControlWord,
    cfg: &IntegratorConfig,
    mut visit: impl FnMut(usize, &[f64]) -> bool,
) -> Result<Option<Vec<f64>>, FlowError> {
    let mut x = x0.to_vec();
    let mut prev = x0.to_vec();
    let mut rk = Rk4::new(x.len());
    let mut k = 0usize;
    for (seg, steps) in word.segments().iter().zip(word.step_counts(cfg.h)) {
        for _ in 0..steps {
            prev.copy_from_slice(&x);
            rk.step(sys, &mut x, &seg.control, cfg.h)?;
            k += 1;
            if let Some(reason) = escape_reason(sys, &x, cfg) {
                return Err(FlowError::Escape { time: (k - 1) as f64 * cfg.h, state: prev, reason });
            }
            if !visit(k, &x) {
                return Ok(None);
            }
        }
    }
    Ok(Some(x))
}

/// Integrates `x0` under `word` with classical RK4, sampling every step.
pub fn integrate(
    sys: &ControlSystem,
    x0: &[f64],
    word: &ControlWord,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, FlowError> {
    check_start(sys, x0, word, cfg)?;
    let word = word.snapped(cfg.h);
    let counts = word.step_counts(cfg.h);
    let total: usize = counts.iter().sum();
    let mut t = Vec::with_capacity(total + 1);
    let mut states = Vec::with_capacity(total + 1);
    let mut segment_of = Vec::with_capacity(total + 1);
    t.push(0.0);
    states.push(x0.to_vec());
    let mut seg_iter = counts.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i, c));
    segment_of.push(seg_iter.next().unwrap_or(0));
    walk(sys, x0, &word, cfg, |k, x| {
        t.push(k as f64 * cfg.h);
        states.push(x.to_vec());
        segment_of.push(seg_iter.next().unwrap_or(word.len().saturating_sub(1)));
        true
    })?;
    Ok(Trajectory { t, states, segment_of, word, origin: x0.to_vec() })
}

/// Final state of `integrate` without storing the samples.
pub fn endpoint(sys: &ControlSystem, x0: &[f64], word: &ControlWord, cfg: &IntegratorConfig) -> Result<Vec<f64>, FlowError> {
    check_start(sys, x0, word, cfg)?;
    Ok(walk(sys, x0, word, cfg, |_, _| true)?.expect("visitor never stops"))
}

/// Differential of `x ↦ φ(T, x, word)` at `x0`, from the variational
/// equation `Ṁ = ∂F/∂x · M`, `M(0) = I`, integrated jointly with the state.
pub fn flow_differential(
    sys: &ControlSystem,
    x0: &[f64],
    word: &ControlWord,
    cfg: &IntegratorConfig,
) -> Result<DMatrix<f64>, FlowError> {
    Ok(flow_and_differential(sys, x0, word, cfg)?.1)
}

/// Final state together with the flow differential.
pub fn flow_and_differential(
    sys: &ControlSystem,
    x0: &[f64],
    word: &ControlWord,
    cfg: &IntegratorConfig,
) -> Result<(Vec<f64>, DMatrix<f64>), FlowError> {
    check_start(sys, x0, word, cfg)?;
    let n = x0.len();
    let h = cfg.h;
    let mut x = x0.to_vec();
    let mut mat = DMatrix::<f64>::identity(n, n);
    let mut k = 0usize;
    let axpy = |x: &[f64], a: f64, d: &[f64]| -> Vec<f64> { x.iter().zip(d).map(|(p, q)| p + a * q).collect() };
    for (seg, steps) in word.segments().iter().zip(word.step_counts(h)) {
        let u = &seg.control;
        for _ in 0..steps {
            let (f1, j1) = value_and_jacobian(sys, &x, u)?;
            let m1 = &j1 * &mat;
            let x2 = axpy(&x, 0.5 * h, &f1);
            let mat2 = &mat + &m1 * (0.5 * h);
            let (f2, j2) = value_and_jacobian(sys, &x2, u)?;
            let m2 = &j2 * &mat2;
            let x3 = axpy(&x, 0.5 * h, &f2);
            let mat3 = &mat + &m2 * (0.5 * h);
            let (f3, j3) = value_and_jacobian(sys, &x3, u)?;
            let m3 = &j3 * &mat3;
            let x4 = axpy(&x, h, &f3);
            let mat4 = &mat + &m3 * h;
            let (f4, j4) = value_and_jacobian(sys, &x4, u)?;
            let m4 = &j4 * &mat4;
            let prev = x.clone();
            let sixth = h / 6.0;
            for i in 0..n {
                x[i] += sixth * (f1[i] + 2.0 * f2[i] + 2.0 * f3[i] + f4[i]);
            }
            mat += (m1 + m2 * 2.0 + m3 * 2.0 + m4) * sixth;
            k += 1;
            if let Some(reason) = escape_reason(sys, &x, cfg) {
                return Err(FlowError::Escape { time: (k - 1) as f64 * h, state: prev, reason });
            }
        }
    }
    Ok((x, mat))
}

fn value_and_jacobian(sys: &ControlSystem, x: &[f64], u: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>), FieldError> {
    let n = x.len();
    let mut value = vec![0.0; n];
    let mut jac = DMatrix::zeros(n, n);
    for (i, e) in sys.fields().iter().enumerate() {
        let d = eval_dual(e, x, u)?;
        value[i] = d.value;
        for k in 0..n {
            jac[(i, k)] = d.deriv[k];
        }
    }
    Ok((value, jac))
}

/// `e^{t f}(x0)` for the frozen field `f = F(·, u)`. Negative `t` flows the
/// reversed field for `|t|`.
pub fn frozen_flow(
    sys: &ControlSystem,
    u: &[f64],
    t: f64,
    x0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>, FlowError> {
    if t == 0.0 {
        check_start(sys, x0, &ControlWord::empty(), cfg)?;
        return Ok(x0.to_vec());
    }
    let word = ControlWord::constant(u.to_vec(), t.abs())?;
    if t > 0.0 {
        endpoint(sys, x0, &word, cfg)
    } else {
        endpoint(&sys.reversed(), x0, &word, cfg)
    }
}

/// Endpoint and differential of `x ↦ e^{t f}(x)` at `x0`.
pub fn frozen_flow_differential(
    sys: &ControlSystem,
    u: &[f64],
    t: f64,
    x0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<(Vec<f64>, DMatrix<f64>), FlowError> {
    let n = x0.len();
    if t == 0.0 {
        check_start(sys, x0, &ControlWord::empty(), cfg)?;
        return Ok((x0.to_vec(), DMatrix::identity(n, n)));
    }
    let word = ControlWord::constant(u.to_vec(), t.abs())?;
    if t > 0.0 {
        flow_and_differential(sys, x0, &word, cfg)
    } else {
        flow_and_differential(&sys.reversed(), x0, &word, cfg)
    }
}
