//! Control systems `ẋ = F(x, u)`, their control sets, and piecewise-constant
//! control words.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fieldlang::{eval, jacobian, parse_expr, Expr, FieldError, VectorField};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SystemError {
    #[error("bind error: variable `{var}` is out of range (allowed {allowed})")]
    Bind { var: String, allowed: String },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("control words use different control dimensions ({0} vs {1})")]
    ControlSetMismatch(usize, usize),
    #[error("segment {index}: duration {duration} is not positive and finite")]
    InvalidDuration { index: usize, duration: f64 },
    #[error("segment {index}: control {control:?} is outside the control set")]
    InadmissibleControl { index: usize, control: Vec<f64> },
}

/// Closed axis-aligned box `[lo_1, hi_1] × … × [lo_k, hi_k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxSet {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, SystemError> {
        if lo.len() != hi.len() {
            return Err(SystemError::DimensionMismatch { expected: lo.len(), found: hi.len() });
        }
        for (j, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if a.is_nan() || b.is_nan() || a > b {
                return Err(SystemError::InvalidBox(format!("channel {}: [{a}, {b}]", j + 1)));
            }
        }
        Ok(BoxSet { lo, hi })
    }

    pub fn from_intervals(intervals: &[(f64, f64)]) -> Result<Self, SystemError> {
        BoxSet::new(intervals.iter().map(|p| p.0).collect(), intervals.iter().map(|p| p.1).collect())
    }

    /// Sup-norm ball of the given radius.
    pub fn cube(center: &[f64], radius: f64) -> Result<Self, SystemError> {
        BoxSet::new(center.iter().map(|c| c - radius).collect(), center.iter().map(|c| c + radius).collect())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| a <= v && v <= b)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (a, b)) in x.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*a, *b);
        }
    }

    /// All `2^k` corners, in binary-counting order (bit `j` selects `hi_j`).
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let k = self.dim();
        (0..1usize << k)
            .map(|mask| (0..k).map(|j| if mask >> j & 1 == 1 { self.hi[j] } else { self.lo[j] }).collect())
            .collect()
    }

    /// Edge midpoints: one coordinate at its midpoint, the others at a
    /// bound. `k · 2^(k−1)` points.
    pub fn edge_midpoints(&self) -> Vec<Vec<f64>> {
        let k = self.dim();
        let mut out = Vec::new();
        for axis in 0..k {
            for mask in 0..1usize << (k - 1) {
                let mut bit = 0;
                let p = (0..k)
                    .map(|j| {
                        if j == axis {
                            0.5 * (self.lo[j] + self.hi[j])
                        } else {
                            let v = if mask >> bit & 1 == 1 { self.hi[j] } else { self.lo[j] };
                            bit += 1;
                            v
                        }
                    })
                    .collect();
                out.push(p);
            }
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| if a == b { *a } else { rng.random_range(*a..=*b) })
            .collect()
    }
}

/// Admissible control values `U ⊂ ℝᵐ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlSet {
    Box(BoxSet),
    List(Vec<Vec<f64>>),
}

impl ControlSet {
    pub fn contains(&self, u: &[f64]) -> bool {
        match self {
            ControlSet::Box(b) => b.contains(u),
            ControlSet::List(items) => items.iter().any(|v| v.as_slice() == u),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vec<f64>> {
        match self {
            ControlSet::Box(b) => Some(b.sample(rng)),
            ControlSet::List(items) if items.is_empty() => None,
            ControlSet::List(items) => Some(items[rng.random_range(0..items.len())].clone()),
        }
    }

    /// Deterministic control alphabet: for boxes the vertices, the edge
    /// midpoints and `extra` seeded uniform samples; for lists the list.
    pub fn alphabet<R: Rng + ?Sized>(&self, extra: usize, rng: &mut R) -> Vec<Vec<f64>> {
        match self {
            ControlSet::Box(b) => {
                let mut out = b.vertices();
                for p in b.edge_midpoints() {
                    if !out.contains(&p) {
                        out.push(p);
                    }
                }
                out.extend((0..extra).map(|_| b.sample(rng)));
                out
            }
            ControlSet::List(items) => items.clone(),
        }
    }
}

/// `ẋ = F(x, u)` with `x` in a box (or all of ℝⁿ) and `u` in a control set.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSystem {
    name: String,
    n: usize,
    m: usize,
    domain: Option<BoxSet>,
    controls: ControlSet,
    fields: Vec<Expr>,
}

impl ControlSystem {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        m: usize,
        domain: Option<BoxSet>,
        controls: ControlSet,
        fields: Vec<Expr>,
    ) -> Result<Self, SystemError> {
        if fields.len() != n {
            return Err(SystemError::DimensionMismatch { expected: n, found: fields.len() });
        }
        if let Some(d) = &domain {
            if d.dim() != n {
                return Err(SystemError::DimensionMismatch { expected: n, found: d.dim() });
            }
        }
        match &controls {
            ControlSet::Box(b) if b.dim() != m => {
                return Err(SystemError::DimensionMismatch { expected: m, found: b.dim() })
            }
            ControlSet::List(items) => {
                if let Some(bad) = items.iter().find(|v| v.len() != m) {
                    return Err(SystemError::DimensionMismatch { expected: m, found: bad.len() });
                }
            }
            _ => {}
        }
        for e in &fields {
            bind_check(e, n, m)?;
        }
        Ok(ControlSystem { name: name.into(), n, m, domain, controls, fields })
    }

    pub fn from_sources(
        name: impl Into<String>,
        n: usize,
        m: usize,
        domain: Option<BoxSet>,
        controls: ControlSet,
        sources: &[&str],
    ) -> Result<Self, SystemError> {
        let fields = sources
            .iter()
            .map(|s| parse_expr(s).map_err(|e| SystemError::Field(e.into())))
            .collect::<Result<Vec<_>, _>>()?;
        ControlSystem::new(name, n, m, domain, controls, fields)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn control_dim(&self) -> usize {
        self.m
    }

    pub fn domain(&self) -> Option<&BoxSet> {
        self.domain.as_ref()
    }

    pub fn controls(&self) -> &ControlSet {
        &self.controls
    }

    pub fn fields(&self) -> &[Expr] {
        &self.fields
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        x.len() == self.n && self.domain.as_ref().is_none_or(|d| d.contains(x))
    }

    /// Writes `F(x, u)` into `out`.
    pub fn eval_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<(), FieldError> {
        for (o, e) in out.iter_mut().zip(&self.fields) {
            *o = eval(e, x, u)?;
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, FieldError> {
        let mut out = vec![0.0; self.n];
        self.eval_into(x, u, &mut out)?;
        Ok(out)
    }

    /// `∂F/∂x` at `(x, u)`.
    pub fn state_jacobian(&self, x: &[f64], u: &[f64]) -> Result<DMatrix<f64>, FieldError> {
        jacobian(&self.fields, x, u)
    }

    /// The system `ẋ = −F(x, u)`: trajectories of the original followed
    /// backwards in time.
    pub fn reversed(&self) -> ControlSystem {
        ControlSystem {
            name: format!("{}-reversed", self.name),
            fields: self.fields.iter().cloned().map(Expr::neg).collect(),
            ..self.clone()
        }
    }

    pub fn validate_control(&self, u: &[f64]) -> Result<bool, SystemError> {
        if u.len() != self.m {
            return Err(SystemError::DimensionMismatch { expected: self.m, found: u.len() });
        }
        Ok(self.controls.contains(u))
    }

    pub fn validate_word(&self, word: &ControlWord) -> Result<(), SystemError> {
        for (index, seg) in word.segments().iter().enumerate() {
            if !self.validate_control(&seg.control)? {
                return Err(SystemError::InadmissibleControl { index, control: seg.control.clone() });
            }
        }
        Ok(())
    }

    /// The field `F(·, u)` for a fixed control value.
    pub fn frozen_field(&self, u: &[f64]) -> Result<VectorField, SystemError> {
        if u.len() != self.m {
            return Err(SystemError::DimensionMismatch { expected: self.m, found: u.len() });
        }
        Ok(VectorField::new(self.fields.iter().map(|e| e.freeze_controls(u)).collect())?)
    }
}

fn bind_check(e: &Expr, n: usize, m: usize) -> Result<(), SystemError> {
    let xs = e.max_state_index();
    if xs > n {
        return Err(SystemError::Bind { var: format!("x{xs}"), allowed: format!("x1..x{n}") });
    }
    let us = e.max_control_index();
    if us > m {
        return Err(SystemError::Bind { var: format!("u{us}"), allowed: format!("u1..u{m}") });
    }
    if e.min_var_index() == Some(0) {
        return Err(SystemError::Bind { var: "x0/u0".into(), allowed: "1-based indices".into() });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    #[serde(rename = "u")]
    pub control: Vec<f64>,
    pub duration: f64,
}

/// Piecewise-constant control: a finite list of (value, duration) pairs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "RawWord")]
pub struct ControlWord {
    segments: Vec<Segment>,
}

#[derive(Deserialize)]
struct RawWord {
    segments: Vec<Segment>,
}

impl TryFrom<RawWord> for ControlWord {
    type Error = SystemError;
    fn try_from(raw: RawWord) -> Result<Self, SystemError> {
        ControlWord::new(raw.segments)
    }
}

impl ControlWord {
    pub fn new(segments: Vec<Segment>) -> Result<Self, SystemError> {
        for (index, s) in segments.iter().enumerate() {
            if !(s.duration.is_finite() && s.duration > 0.0) {
                return Err(SystemError::InvalidDuration { index, duration: s.duration });
            }
        }
        if let Some(first) = segments.first() {
            if let Some(bad) = segments.iter().find(|s| s.control.len() != first.control.len()) {
                return Err(SystemError::ControlSetMismatch(first.control.len(), bad.control.len()));
            }
        }
        Ok(ControlWord { segments })
    }

    pub fn empty() -> Self {
        ControlWord::default()
    }

    pub fn constant(control: Vec<f64>, duration: f64) -> Result<Self, SystemError> {
        ControlWord::new(vec![Segment { control, duration }])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_time(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn control_dim(&self) -> Option<usize> {
        self.segments.first().map(|s| s.control.len())
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &ControlWord) -> Result<ControlWord, SystemError> {
        if let (Some(a), Some(b)) = (self.control_dim(), other.control_dim()) {
            if a != b {
                return Err(SystemError::ControlSetMismatch(a, b));
            }
        }
        let mut segments = self.segments.clone();
        segments.extend(other.segments.iter().cloned());
        Ok(ControlWord { segments })
    }

    /// Number of integrator steps of size `h` in each segment: the nearest
    /// positive integer multiple.
    pub fn step_counts(&self, h: f64) -> Vec<usize> {
        self.segments.iter().map(|s| snap_steps(s.duration, h)).collect()
    }

    /// Durations replaced by their snapped values `k·h`.
    pub fn snapped(&self, h: f64) -> ControlWord {
        ControlWord {
            segments: self
                .segments
                .iter()
                .map(|s| Segment { control: s.control.clone(), duration: snap_steps(s.duration, h) as f64 * h })
                .collect(),
        }
    }

    /// Segments in reverse order: replaying the result on the reversed system
    /// retraces this word backwards.
    pub fn reversed_order(&self) -> ControlWord {
        ControlWord { segments: self.segments.iter().rev().cloned().collect() }
    }

    /// Prefix of the snapped word covering its first `steps` integrator steps.
    pub fn truncated_steps(&self, steps: usize, h: f64) -> ControlWord {
        let mut left = steps;
        let mut segments = Vec::new();
        for (s, k) in self.segments.iter().zip(self.step_counts(h)) {
            if left == 0 {
                break;
            }
            let take = k.min(left);
            segments.push(Segment { control: s.control.clone(), duration: take as f64 * h });
            left -= take;
        }
        ControlWord { segments }
    }

    /// Merges adjacent segments with identical controls.
    pub fn compacted(&self) -> ControlWord {
        let mut segments: Vec<Segment> = Vec::with_capacity(self.segments.len());
        for s in &self.segments {
            match segments.last_mut() {
                Some(last) if last.control == s.control => last.duration += s.duration,
                _ => segments.push(s.clone()),
            }
        }
        ControlWord { segments }
    }
}

pub(crate) fn snap_steps(duration: f64, h: f64) -> usize {
    ((duration / h).round() as usize).max(1)
}

/// Parses the given field sources into a system with the box control set
/// given as intervals.
pub fn boxed_system(
    name: &str,
    sources: &[&str],
    control_box: &[(f64, f64)],
) -> Result<ControlSystem, SystemError> {
    ControlSystem::from_sources(
        name,
        sources.len(),
        control_box.len(),
        None,
        ControlSet::Box(BoxSet::from_intervals(control_box)?),
        sources,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn seg(u: &[f64], d: f64) -> Segment {
        Segment { control: u.to_vec(), duration: d }
    }

    #[test]
    fn reversed_negates_fields() {
        let sys = fixtures::example22();
        let r = sys.reversed();
        assert_eq!(r.eval(&[0.3, -0.4], &[1.0, 0.0, 0.0]).unwrap(), vec![-1.0, 0.0]);
        let line = fixtures::single_integrator();
        assert_eq!(line.reversed().eval(&[2.0], &[0.3]).unwrap(), vec![-0.3]);
        assert_eq!(r.domain(), sys.domain());
        assert_eq!(r.controls(), sys.controls());
    }

    #[test]
    fn validate_controls_against_box() {
        let sys = fixtures::example22();
        assert!(sys.validate_control(&[1.0, -1.0, 1.0]).unwrap());
        assert!(!sys.validate_control(&[-0.1, 0.0, 0.0]).unwrap());
        assert!(matches!(sys.validate_control(&[0.0]), Err(SystemError::DimensionMismatch { .. })));
    }

    #[test]
    fn empty_list_admits_nothing() {
        let sys = ControlSystem::from_sources("void", 1, 1, None, ControlSet::List(vec![]), &["u1"]).unwrap();
        for u in [-1.0, 0.0, 2.5] {
            assert!(!sys.validate_control(&[u]).unwrap());
        }
    }

    #[test]
    fn binding_rejects_out_of_range_variables() {
        let err = boxed_system("bad", &["x3", "x1"], &[(0.0, 1.0)]).unwrap_err();
        assert!(matches!(err, SystemError::Bind { ref var, .. } if var == "x3"));
        let err = boxed_system("bad", &["u2", "x1"], &[(0.0, 1.0)]).unwrap_err();
        assert!(matches!(err, SystemError::Bind { ref var, .. } if var == "u2"));
        assert!(boxed_system("bad", &["x0"], &[]).is_err());
    }

    #[test]
    fn box_validation() {
        assert!(BoxSet::from_intervals(&[(1.0, 0.0)]).is_err());
        assert!(BoxSet::from_intervals(&[(0.0, 0.0)]).is_ok());
    }

    #[test]
    fn word_concatenation() {
        let w1 = ControlWord::new(vec![seg(&[1.0], 0.5)]).unwrap();
        let w2 = ControlWord::new(vec![seg(&[-1.0], 0.25), seg(&[0.0], 1.0)]).unwrap();
        assert_eq!(ControlWord::empty().concat(&w2).unwrap(), w2);
        assert_eq!(w2.concat(&ControlWord::empty()).unwrap(), w2);
        let w = w1.concat(&w2).unwrap();
        assert_eq!(w.total_time(), w1.total_time() + w2.total_time());
        assert_eq!(w.len(), 3);
        let other = ControlWord::new(vec![seg(&[1.0, 2.0], 0.5)]).unwrap();
        assert!(matches!(w1.concat(&other), Err(SystemError::ControlSetMismatch(1, 2))));
    }

    #[test]
    fn durations_must_be_positive() {
        assert!(ControlWord::new(vec![seg(&[0.0], 0.0)]).is_err());
        assert!(ControlWord::new(vec![seg(&[0.0], f64::NAN)]).is_err());
        let bad: Result<ControlWord, _> = serde_json::from_str(r#"{"segments":[{"u":[0],"duration":-1}]}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn snapping_and_truncation() {
        let w = ControlWord::new(vec![seg(&[1.0], 0.034), seg(&[0.0], 0.001)]).unwrap();
        assert_eq!(w.step_counts(0.01), vec![3, 1]);
        let s = w.snapped(0.01);
        assert_eq!(s.segments()[1].duration, 0.01);
        let t = s.truncated_steps(2, 0.01);
        assert_eq!(t.len(), 1);
        assert_eq!(t.segments()[0].duration, 0.02);
    }

    #[test]
    fn alphabet_for_three_channel_box() {
        let sys = fixtures::example22();
        let mut rng = crate::rng::seeded(0);
        let a = sys.controls().alphabet(8, &mut rng);
        assert_eq!(a.len(), 8 + 12 + 8);
        assert!(a.iter().all(|u| sys.validate_control(u).unwrap()));
    }

    proptest::proptest! {
        #[test]
        fn concat_is_associative(d in proptest::collection::vec(0.01f64..2.0, 3), c in proptest::collection::vec(-1.0f64..1.0, 3)) {
            let w: Vec<ControlWord> = (0..3).map(|i| ControlWord::new(vec![seg(&[c[i]], d[i])]).unwrap()).collect();
            let left = w[0].concat(&w[1]).unwrap().concat(&w[2]).unwrap();
            let right = w[0].concat(&w[1].concat(&w[2]).unwrap()).unwrap();
            proptest::prop_assert_eq!(left, right);
        }

        #[test]
        fn double_reversal_evaluates_identically(x1 in -3.0f64..3.0, x2 in -3.0f64..3.0, u0 in 0.0f64..1.0, u1 in -1.0f64..1.0, u2 in -1.0f64..1.0) {
            let sys = fixtures::example22();
            let rr = sys.reversed().reversed();
            let u = [u0, u1, u2];
            proptest::prop_assert_eq!(rr.eval(&[x1, x2], &u).unwrap(), sys.eval(&[x1, x2], &u).unwrap());
        }
    }
}
