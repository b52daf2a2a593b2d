//! Algebraic controllability certificates: the Kalman rank, invariance of
//! `Im(B)` under `A`, the Lie-algebra rank at a point, and chains of frozen
//! flows whose differential in the chain times has full rank.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::fieldlang::{FieldError, LieTerm, VectorField};
use crate::flow::{frozen_flow, frozen_flow_differential, FlowError, IntegratorConfig};
use crate::system::ControlSystem;

/// Relative singular-value cutoff for the Kalman matrix and `Im(B)`.
pub const KALMAN_RANK_TOL: f64 = 1e-10;
/// Relative singular-value cutoff for bracket spans and chain differentials.
pub const GEOMETRIC_RANK_TOL: f64 = 1e-8;
/// A field counts as vanishing below this norm.
pub const VANISHING_FIELD_TOL: f64 = 1e-10;
/// Minimum smallest singular value for accepting a transverse field.
pub const TRANSVERSALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CertifyError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("every sampled field vanishes at the base point")]
    NoNonvanishingField,
    #[error("no sampled field is transverse to the chain (rank {})", .0.achieved_rank)]
    RankStalled(Box<RankCertificate>),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// `ẋ = Ax + Bu`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self, CertifyError> {
        if !a.is_square() || a.nrows() != b.nrows() {
            return Err(CertifyError::Dimension(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(LinearSystem { a, b })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// `[B, AB, …, A^{n−1}B]`.
    pub fn controllability_matrix(&self) -> DMatrix<f64> {
        let n = self.state_dim();
        let m = self.b.ncols();
        let mut out = DMatrix::zeros(n, n * m);
        let mut block = self.b.clone();
        for k in 0..n {
            out.view_mut((0, k * m), (n, m)).copy_from(&block);
            block = &self.a * block;
        }
        out
    }
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `rel_tol` times the largest one.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|v| **v > rel_tol * top).count(),
        _ => 0,
    }
}

/// Rank of the Kalman matrix and whether it equals `n`.
pub fn kalman_rank(lin: &LinearSystem) -> (usize, bool) {
    let rank = numerical_rank(&lin.controllability_matrix(), KALMAN_RANK_TOL);
    (rank, rank == lin.state_dim())
}

/// Whether `A·Im(B) ⊆ Im(B)`, a necessary condition for localized local
/// controllability of a linear system. The component of `A Q` orthogonal to
/// `Im(B)` (`Q` an orthonormal basis) must stay below
/// `KALMAN_RANK_TOL · max(1, ‖A‖)`.
pub fn imb_invariance(lin: &LinearSystem) -> bool {
    let n = lin.state_dim();
    let basis = image_basis(&lin.b, KALMAN_RANK_TOL);
    if basis.ncols() == 0 || basis.ncols() == n {
        return true;
    }
    let aq = &lin.a * &basis;
    let residual = &aq - &basis * (basis.transpose() * &aq);
    residual.norm() <= KALMAN_RANK_TOL * lin.a.norm().max(1.0)
}

fn image_basis(b: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = b.nrows();
    if b.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = b.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let top = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| top > 0.0 && svd.singular_values[i] > rel_tol * top)
        .collect();
    DMatrix::from_fn(n, keep.len(), |r, c| u[(r, keep[c])])
}

/// All left-normed brackets `[f_i1, [f_i2, … f_ik]]` up to nesting depth
/// `max_depth`, depth 0 being the fields themselves.
pub fn bracket_terms(count: usize, max_depth: usize) -> Vec<LieTerm> {
    let mut all: Vec<LieTerm> = (0..count).map(LieTerm::Field).collect();
    let mut layer = all.clone();
    for _ in 0..max_depth {
        let next: Vec<LieTerm> = (0..count)
            .flat_map(|i| layer.iter().map(move |t| LieTerm::bracket(LieTerm::Field(i), t.clone())))
            .filter(|t| !is_trivially_zero(t))
            .collect();
        all.extend(next.iter().cloned());
        layer = next;
    }
    all
}

fn is_trivially_zero(t: &LieTerm) -> bool {
    matches!(t, LieTerm::Bracket(a, b) if a == b)
}

/// Dimension of the span of the iterated brackets at `x`.
pub fn larc_rank(fields: &[VectorField], x: &[f64], max_depth: usize) -> Result<usize, FieldError> {
    let n = x.len();
    if let Some(f) = fields.iter().find(|f| f.dim() != n) {
        return Err(FieldError::DimensionMismatch { expected: n, found: f.dim() });
    }
    let terms = bracket_terms(fields.len(), max_depth);
    let mut columns = DMatrix::zeros(n, terms.len());
    for (c, t) in terms.iter().enumerate() {
        columns.set_column(c, &t.eval(fields, x)?);
    }
    Ok(numerical_rank(&columns, GEOMETRIC_RANK_TOL))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Chains `e^{t_k f_k} ∘ … ∘ e^{t_1 f_1}(x)`: points reachable from `x`.
    Forward,
    /// Chains `e^{−t_k f_k} ∘ … ∘ e^{−t_1 f_1}(x)`: points steerable to `x`.
    Backward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainLink {
    pub control: Vec<f64>,
    /// Signed flow time (negative in backward chains).
    pub time: f64,
}

/// A chain of frozen-field flows from `base_point` whose differential with
/// respect to the link times has rank `achieved_rank`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCertificate {
    pub base_point: Vec<f64>,
    pub direction: Direction,
    pub chain: Vec<ChainLink>,
    pub endpoint: Vec<f64>,
    /// `n × k`: column `j` is the derivative of the composed map in `t_j`.
    #[serde(with = "matrix_rows")]
    pub differential: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub achieved_rank: usize,
}

impl RankCertificate {
    pub fn is_full_rank(&self) -> bool {
        self.achieved_rank == self.base_point.len()
    }

    /// Re-runs the chain with `frozen_flow` from the base point.
    pub fn replay(&self, sys: &ControlSystem, cfg: &IntegratorConfig) -> Result<Vec<f64>, FlowError> {
        self.chain.iter().try_fold(self.base_point.clone(), |y, link| frozen_flow(sys, &link.control, link.time, &y, cfg))
    }
}

mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(serde::de::Error::custom("ragged matrix"));
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrenerConfig {
    /// Per-link time budget; each link flows for `delta / 2`, snapped.
    pub delta: f64,
    pub max_links: usize,
    /// Candidate frozen controls, scanned in order (ties go to the lower index).
    pub samples: Vec<Vec<f64>>,
    pub integrator: IntegratorConfig,
}

impl KrenerConfig {
    pub fn for_system(sys: &ControlSystem, seed: u64) -> Self {
        let mut rng = crate::rng::seeded(seed);
        KrenerConfig {
            delta: 0.2,
            max_links: 2 * sys.state_dim() + 2,
            samples: sys.controls().alphabet(8, &mut rng),
            integrator: IntegratorConfig::default(),
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// Greedy chain-of-flows construction at `x`.
///
/// The first link uses the sampled field of largest norm at `x`; each later
/// link, scanned at the current chain endpoint, uses the field maximizing the
/// smallest singular value of `[differential | field]`. Every link flows for
/// `delta / 2` (backwards for [`Direction::Backward`]), and the existing
/// columns are pushed forward through that flow's differential.
pub fn krener_chain(
    sys: &ControlSystem,
    x: &[f64],
    direction: Direction,
    cfg: &KrenerConfig,
) -> Result<RankCertificate, CertifyError> {
    let n = sys.state_dim();
    if x.len() != n {
        return Err(CertifyError::Dimension(format!("base point has length {}, system has n = {n}", x.len())));
    }
    let sign = direction.sign();
    let ic = &cfg.integrator;
    let link_time = sign * ic.steps_for(0.5 * cfg.delta) as f64 * ic.h;

    let mut first: Option<(usize, f64)> = None;
    for (i, u) in cfg.samples.iter().enumerate() {
        let size = norm(&sys.eval(x, u)?);
        if first.is_none_or(|(_, best)| size > best) {
            first = Some((i, size));
        }
    }
    let (first_idx, first_norm) = first.ok_or(CertifyError::NoNonvanishingField)?;
    if first_norm < VANISHING_FIELD_TOL {
        return Err(CertifyError::NoNonvanishingField);
    }

    let mut chain = Vec::new();
    let mut point = x.to_vec();
    let mut diff = DMatrix::<f64>::zeros(n, 0);
    let mut next = Some(first_idx);
    let mut rank = 0;
    while let Some(idx) = next.take() {
        let u = &cfg.samples[idx];
        let (moved, push) = frozen_flow_differential(sys, u, link_time, &point, ic)?;
        let column = nalgebra::DVector::from_vec(sys.eval(&moved, u)?) * sign;
        diff = (push * diff).insert_column(chain.len(), 0.0);
        diff.set_column(chain.len(), &column);
        chain.push(ChainLink { control: u.clone(), time: link_time });
        point = moved;
        rank = crate::certify::numerical_rank(&diff, GEOMETRIC_RANK_TOL);
        if rank == n || chain.len() >= cfg.max_links {
            break;
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, cand) in cfg.samples.iter().enumerate() {
            let f = sys.eval(&point, cand)?;
            let mut trial = diff.clone().insert_column(diff.ncols(), 0.0);
            for r in 0..n {
                trial[(r, diff.ncols())] = sign * f[r];
            }
            let score = smallest_singular_value(&trial);
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((i, score));
            }
        }
        next = best.filter(|(_, score)| *score > TRANSVERSALITY_TOL).map(|(i, _)| i);
    }
    let cert = RankCertificate {
        base_point: x.to_vec(),
        direction,
        chain,
        endpoint: point,
        singular_values: singular_values(&diff),
        differential: diff,
        achieved_rank: rank,
    };
    if cert.is_full_rank() {
        Ok(cert)
    } else {
        Err(CertifyError::RankStalled(Box::new(cert)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::system::boxed_system;

    fn lin(a: &[f64], b: &[f64], n: usize) -> LinearSystem {
        let m = b.len() / n;
        LinearSystem::new(DMatrix::from_row_slice(n, n, a), DMatrix::from_row_slice(n, m, b)).unwrap()
    }

    #[test]
    fn kalman_examples() {
        assert_eq!(kalman_rank(&fixtures::example21_linear()), (2, true));
        assert_eq!(kalman_rank(&lin(&[0.0, 1.0, 0.0, 0.0], &[0.0, 0.0], 2)), (0, false));
        assert_eq!(kalman_rank(&lin(&[0.0; 4], &[1.0, 0.0], 2)), (1, false));
    }

    #[test]
    fn controllability_matrix_of_double_integrator() {
        let k = fixtures::example21_linear().controllability_matrix();
        assert_eq!(k, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn imb_examples() {
        assert!(!imb_invariance(&fixtures::example21_linear()));
        assert!(imb_invariance(&lin(&[3.0, 1.0, -2.0, 5.0], &[1.0, 0.0, 0.0, 1.0], 2)));
        assert!(imb_invariance(&lin(&[0.0; 4], &[0.0, 1.0], 2)));
        assert!(imb_invariance(&lin(&[0.0, 1.0, 0.0, 0.0], &[1.0, 0.0], 2)));
    }

    #[test]
    fn dimension_checks() {
        assert!(LinearSystem::new(DMatrix::zeros(2, 3), DMatrix::zeros(2, 1)).is_err());
        assert!(LinearSystem::new(DMatrix::zeros(2, 2), DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn larc_examples() {
        let f = fixtures::example22_fields();
        assert_eq!(larc_rank(&f, &[0.0, 0.0], 0).unwrap(), 1);
        assert_eq!(larc_rank(&f, &[0.0, 0.0], 1).unwrap(), 2);
        assert_eq!(larc_rank(&f, &[1.0, 0.0], 0).unwrap(), 2);
        for depth in 0..4 {
            assert_eq!(larc_rank(&f[..1], &[0.3, 0.1], depth).unwrap(), 1);
        }
    }

    #[test]
    fn bracket_term_counts() {
        assert_eq!(bracket_terms(3, 0).len(), 3);
        // depth 1: 3*3 minus the 3 self-brackets
        assert_eq!(bracket_terms(3, 1).len(), 3 + 6);
    }

    #[test]
    fn krener_at_regular_point_uses_two_links() {
        let sys = fixtures::example22();
        let cfg = KrenerConfig::for_system(&sys, 0);
        let cert = krener_chain(&sys, &[1.0, 0.0], Direction::Backward, &cfg).unwrap();
        assert_eq!(cert.achieved_rank, 2);
        assert!(cert.chain.len() <= 2);
        assert!(cert.chain.iter().all(|l| l.time < 0.0));
        let replay = cert.replay(&sys, &cfg.integrator).unwrap();
        assert!(norm(&[replay[0] - cert.endpoint[0], replay[1] - cert.endpoint[1]]) <= 1e-9);
        assert_eq!(cert.achieved_rank, numerical_rank(&cert.differential, GEOMETRIC_RANK_TOL));
    }

    #[test]
    fn krener_fails_without_motion() {
        let sys = boxed_system("still", &["0*u1", "0"], &[(-1.0, 1.0)]).unwrap();
        let cfg = KrenerConfig::for_system(&sys, 0);
        assert_eq!(krener_chain(&sys, &[0.0, 0.0], Direction::Backward, &cfg), Err(CertifyError::NoNonvanishingField));
    }

    #[test]
    fn krener_in_one_dimension() {
        let sys = fixtures::single_integrator();
        let cfg = KrenerConfig::for_system(&sys, 0);
        let cert = krener_chain(&sys, &[0.0], Direction::Forward, &cfg).unwrap();
        assert_eq!((cert.achieved_rank, cert.chain.len()), (1, 1));
    }

    #[test]
    fn krener_stalls_on_a_line_field() {
        // Every field is horizontal: rank stays 1 in the plane.
        let sys = boxed_system("horizontal", &["u1", "0"], &[(-1.0, 1.0)]).unwrap();
        let cfg = KrenerConfig::for_system(&sys, 0);
        match krener_chain(&sys, &[0.0, 0.0], Direction::Backward, &cfg) {
            Err(CertifyError::RankStalled(partial)) => assert_eq!(partial.achieved_rank, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn certificate_json_round_trip() {
        let sys = fixtures::example22();
        let cfg = KrenerConfig::for_system(&sys, 0);
        let cert = krener_chain(&sys, &[1.0, 0.0], Direction::Backward, &cfg).unwrap();
        let text = serde_json::to_string(&cert).unwrap();
        let back: RankCertificate = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cert);
    }
}
