//! Breadth-first approximation of attainable sets `A^{≤T}_{x,Ω}` and
//! controllable sets, and grid-resolution tests for `x ∈ Int A`.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::flow::{walk, IntegratorConfig};
use crate::system::{BoxSet, ControlSystem, ControlWord, Segment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachConfig {
    /// Duration of every tree edge; a multiple of the integrator step.
    pub dt: f64,
    pub depth: usize,
    pub control_samples: Vec<Vec<f64>>,
    /// Side of the deduplication grid: one node per occupied cell.
    pub prune_cell: f64,
    /// Trajectories must stay in this box.
    pub omega: Option<BoxSet>,
    /// Nodes are only kept up to this elapsed time.
    pub t_max: Option<f64>,
    pub integrator: IntegratorConfig,
}

impl ReachConfig {
    /// Defaults: `dt = 0.05`, depth 20, `prune_cell = 1e-3`, and the control
    /// alphabet of the system's control set with 8 seeded extra samples.
    pub fn for_system(sys: &ControlSystem, seed: u64) -> Self {
        let mut rng = crate::rng::seeded(seed);
        ReachConfig {
            dt: 0.05,
            depth: 20,
            control_samples: sys.controls().alphabet(8, &mut rng),
            prune_cell: 1e-3,
            omega: None,
            t_max: None,
            integrator: IntegratorConfig::default(),
        }
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_prune_cell(mut self, cell: f64) -> Self {
        self.prune_cell = cell;
        self
    }

    pub fn with_omega(mut self, omega: Option<BoxSet>) -> Self {
        self.omega = omega;
        self
    }

    pub fn with_t_max(mut self, t_max: Option<f64>) -> Self {
        self.t_max = t_max;
        self
    }

    fn edge_steps(&self) -> usize {
        self.integrator.steps_for(self.dt)
    }

    fn edge_duration(&self) -> f64 {
        self.edge_steps() as f64 * self.integrator.h
    }

    fn check(&self, sys: &ControlSystem) -> Result<(), ReachError> {
        if !(self.dt > 0.0 && self.prune_cell > 0.0) {
            return Err(ReachError::Config(format!("dt = {}, prune_cell = {}", self.dt, self.prune_cell)));
        }
        let ratio = self.dt / self.integrator.h;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(ReachError::Config(format!("dt = {} is not a multiple of h = {}", self.dt, self.integrator.h)));
        }
        for u in &self.control_samples {
            if !sys.validate_control(u).unwrap_or(false) {
                return Err(ReachError::Config(format!("control sample {u:?} is not admissible")));
            }
        }
        if let Some(t) = self.t_max {
            if !(t > 0.0) {
                return Err(ReachError::Config(format!("t_max = {t}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReachError {
    #[error("invalid reach configuration: {0}")]
    Config(String),
    #[error("start state {0:?} is outside the domain or Ω")]
    Start(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    pub state: Vec<f64>,
    pub parent: Option<usize>,
    /// Control on the edge from the parent (empty for the root).
    pub control: Vec<f64>,
    pub duration: f64,
    pub depth: usize,
    pub elapsed: f64,
}

/// Tree of states reached by replayable control words from `root`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachTree {
    pub root: Vec<f64>,
    pub nodes: Vec<TreeNode>,
    pub config: ReachConfig,
    pub seed: u64,
    /// The frontier emptied before the depth budget ran out: every
    /// reachable grid cell (under the constraints) has been visited.
    pub saturated: bool,
}

impl ReachTree {
    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.nodes.iter().map(|n| n.state.as_slice())
    }

    /// Control word from the root to node `id`.
    pub fn word_to(&self, id: usize) -> ControlWord {
        let mut segments = Vec::new();
        let mut cur = &self.nodes[id];
        while let Some(p) = cur.parent {
            segments.push(Segment { control: cur.control.clone(), duration: cur.duration });
            cur = &self.nodes[p];
        }
        segments.reverse();
        ControlWord::new(segments).expect("tree edges have positive durations")
    }

    /// Nearest node to `p`, ties to the smaller id.
    pub fn nearest(&self, p: &[f64]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for n in &self.nodes {
            let d = dist(&n.state, p);
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((n.id, d));
            }
        }
        best
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

fn cell_of(x: &[f64], size: f64) -> Vec<i64> {
    x.iter().map(|v| (v / size).floor() as i64).collect()
}

/// Breadth-first expansion from `x`: every frontier node gets one child per
/// control sample, integrated for `dt`. Children whose trajectory leaves Ω
/// or the domain, that exceed `t_max`, or that land in an occupied grid cell
/// are dropped.
pub fn reach_tree(sys: &ControlSystem, x: &[f64], cfg: &ReachConfig, seed: u64) -> Result<ReachTree, ReachError> {
    grow_tree(sys, x, cfg, seed, |_| false)
}

/// [`reach_tree`] on the reversed system: node states approximate the set of
/// points that can be steered to `x`.
pub fn controllable_tree(sys: &ControlSystem, x: &[f64], cfg: &ReachConfig, seed: u64) -> Result<ReachTree, ReachError> {
    reach_tree(&sys.reversed(), x, cfg, seed)
}

/// Expansion with an early stop checked after every completed level.
fn grow_tree(
    sys: &ControlSystem,
    x: &[f64],
    cfg: &ReachConfig,
    seed: u64,
    mut stop: impl FnMut(&ReachTree) -> bool,
) -> Result<ReachTree, ReachError> {
    cfg.check(sys)?;
    if !sys.in_domain(x) || cfg.omega.as_ref().is_some_and(|o| !o.contains(x)) {
        return Err(ReachError::Start(x.to_vec()));
    }
    let edge = cfg.edge_duration();
    let words: Vec<ControlWord> = cfg
        .control_samples
        .iter()
        .map(|u| ControlWord::constant(u.clone(), edge).expect("positive edge duration"))
        .collect();
    let mut tree = ReachTree {
        root: x.to_vec(),
        nodes: vec![TreeNode {
            id: 0,
            state: x.to_vec(),
            parent: None,
            control: Vec::new(),
            duration: 0.0,
            depth: 0,
            elapsed: 0.0,
        }],
        config: cfg.clone(),
        seed,
        saturated: false,
    };
    let mut occupied: HashSet<Vec<i64>> = HashSet::new();
    occupied.insert(cell_of(x, cfg.prune_cell));
    let mut frontier = vec![0usize];
    for level in 1..=cfg.depth {
        if stop(&tree) {
            return Ok(tree);
        }
        let elapsed = level as f64 * edge;
        if cfg.t_max.is_some_and(|t| elapsed > t * (1.0 + 1e-12)) {
            frontier.clear();
        }
        let mut next = Vec::new();
        for &parent in &frontier {
            let start = tree.nodes[parent].state.clone();
            for (u, word) in cfg.control_samples.iter().zip(&words) {
                let omega = cfg.omega.as_ref();
                let end = match walk(sys, &start, word, &cfg.integrator, |_, s| omega.is_none_or(|o| o.contains(s))) {
                    Ok(Some(end)) => end,
                    _ => continue,
                };
                if occupied.insert(cell_of(&end, cfg.prune_cell)) {
                    let id = tree.nodes.len();
                    tree.nodes.push(TreeNode {
                        id,
                        state: end,
                        parent: Some(parent),
                        control: u.clone(),
                        duration: edge,
                        depth: level,
                        elapsed,
                    });
                    next.push(id);
                }
            }
        }
        frontier = next;
        if frontier.is_empty() {
            tree.saturated = true;
            return Ok(tree);
        }
    }
    Ok(tree)
}

/// Deterministic probes around `center`: the center, `±eps` along every
/// axis, and the `2^n` diagonal points at distance `eps`.
pub fn probe_points(center: &[f64], eps: f64) -> Vec<Vec<f64>> {
    let n = center.len();
    let mut probes = vec![center.to_vec()];
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut p = center.to_vec();
            p[i] += s * eps;
            probes.push(p);
        }
    }
    let diag = eps / (n as f64).sqrt();
    for mask in 0..1usize << n {
        probes.push((0..n).map(|i| center[i] + if mask >> i & 1 == 1 { -diag } else { diag }).collect());
    }
    probes
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeCover {
    pub probe: Vec<f64>,
    /// Nearest node, when within the coverage tolerance.
    pub node: Option<usize>,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub covered: bool,
    pub probes: Vec<ProbeCover>,
}

/// Whether every probe of the `eps`-ball around `center` lies within
/// `coverage_tol` of some node.
pub fn contains_ball(tree: &ReachTree, center: &[f64], eps: f64, coverage_tol: f64) -> Coverage {
    let probes: Vec<ProbeCover> = probe_points(center, eps)
        .into_iter()
        .map(|p| {
            let (id, d) = tree.nearest(&p).expect("tree has a root");
            ProbeCover { node: (d <= coverage_tol).then_some(id), distance: d, probe: p }
        })
        .collect();
    Coverage { covered: probes.iter().all(|p| p.node.is_some()), probes }
}

/// Which flavor of local controllability to test at a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Variant {
    /// `x ∈ Int A_x`.
    Local,
    /// `x ∈ Int A_x^{≤T}`.
    St { t: f64 },
    /// `x ∈ Int A_{x,Ω}`.
    L { omega: BoxSet },
    /// `x ∈ Int A_{x,Ω}^{≤T}`.
    Stl { t: f64, omega: BoxSet },
}

impl Variant {
    pub fn label(&self) -> &'static str {
        match self {
            Variant::Local => "local",
            Variant::St { .. } => "st",
            Variant::L { .. } => "l",
            Variant::Stl { .. } => "stl",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeWitness {
    pub probe: Vec<f64>,
    pub node: usize,
    pub reached: Vec<f64>,
    pub word: ControlWord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict")]
pub enum Verdict {
    /// Every probe is covered; each comes with a replayable word.
    YesWithWitness { witnesses: Vec<ProbeWitness> },
    /// The constrained tree saturated without covering these probes.
    NoEvidence { uncovered: Vec<ProbeCover> },
    /// The depth budget ran out first.
    Unknown { uncovered: Vec<ProbeCover> },
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::YesWithWitness { .. } => "YesWithWitness",
            Verdict::NoEvidence { .. } => "NoEvidence",
            Verdict::Unknown { .. } => "Unknown",
        }
    }

    pub fn is_yes(&self) -> bool {
        matches!(self, Verdict::YesWithWitness { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub point: Vec<f64>,
    pub variant: Variant,
    pub eps: f64,
    pub coverage_tol: f64,
    pub nodes: usize,
    pub saturated: bool,
    #[serde(flatten)]
    pub verdict: Verdict,
}

/// Builds the reach tree constrained per `variant` and tests `eps`-ball
/// coverage at `x`. Expansion stops early once every probe is covered.
pub fn classify_point(
    sys: &ControlSystem,
    x: &[f64],
    variant: &Variant,
    cfg: &ReachConfig,
    eps: f64,
    coverage_tol: f64,
    seed: u64,
) -> Result<Classification, ReachError> {
    let (omega, t_max) = match variant {
        Variant::Local => (None, None),
        Variant::St { t } => (None, Some(*t)),
        Variant::L { omega } => (Some(omega.clone()), None),
        Variant::Stl { t, omega } => (Some(omega.clone()), Some(*t)),
    };
    let cfg = cfg.clone().with_omega(omega).with_t_max(t_max);
    let tree = grow_tree(sys, x, &cfg, seed, |t| contains_ball(t, x, eps, coverage_tol).covered)?;
    let coverage = contains_ball(&tree, x, eps, coverage_tol);
    let verdict = if coverage.covered {
        Verdict::YesWithWitness {
            witnesses: coverage
                .probes
                .iter()
                .map(|p| {
                    let node = p.node.expect("covered");
                    ProbeWitness {
                        probe: p.probe.clone(),
                        node,
                        reached: tree.nodes[node].state.clone(),
                        word: tree.word_to(node),
                    }
                })
                .collect(),
        }
    } else {
        let uncovered = coverage.probes.into_iter().filter(|p| p.node.is_none()).collect();
        if tree.saturated {
            Verdict::NoEvidence { uncovered }
        } else {
            Verdict::Unknown { uncovered }
        }
    };
    Ok(Classification {
        point: x.to_vec(),
        variant: variant.clone(),
        eps,
        coverage_tol,
        nodes: tree.nodes.len(),
        saturated: tree.saturated,
        verdict,
    })
}

/// Node whose occupancy cell (side `cell`) lies deepest inside the occupied
/// region, measured in grid steps to the nearest unoccupied cell. `None`
/// when every occupied cell touches the outside.
pub fn interior_node(tree: &ReachTree, cell: f64) -> Option<(usize, usize)> {
    let n = tree.root.len();
    let mut owner: HashMap<Vec<i64>, usize> = HashMap::new();
    for node in &tree.nodes {
        owner.entry(cell_of(&node.state, cell)).or_insert(node.id);
    }
    let neighbors = |c: &[i64]| -> Vec<Vec<i64>> {
        let mut out = Vec::with_capacity(2 * n);
        for i in 0..n {
            for d in [-1, 1] {
                let mut q = c.to_vec();
                q[i] += d;
                out.push(q);
            }
        }
        out
    };
    let mut depth: HashMap<Vec<i64>, usize> = HashMap::new();
    let mut queue = VecDeque::new();
    let mut cells: Vec<&Vec<i64>> = owner.keys().collect();
    cells.sort();
    for c in cells {
        if neighbors(c).iter().any(|q| !owner.contains_key(q)) {
            depth.insert(c.clone(), 0);
            queue.push_back(c.clone());
        }
    }
    while let Some(c) = queue.pop_front() {
        let d = depth[&c];
        for q in neighbors(&c) {
            if owner.contains_key(&q) && !depth.contains_key(&q) {
                depth.insert(q.clone(), d + 1);
                queue.push_back(q);
            }
        }
    }
    let mut best: Option<(usize, usize)> = None;
    for (c, &id) in &owner {
        let d = depth[c];
        let better = match best {
            None => true,
            Some((bid, bd)) => d > bd || (d == bd && id < bid),
        };
        if better {
            best = Some((id, d));
        }
    }
    best.filter(|(_, d)| *d > 0)
}
