//! `reachkit` command line: simulate, grow reach trees, classify points,
//! compute certificates, retrace trajectories, run the bundled verification
//! suites, and plot trajectories.

mod plot;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use reachkit::certify::{imb_invariance, kalman_rank, krener_chain, larc_rank};
use reachkit::flow::{integrate, IntegratorConfig};
use reachkit::harness::suites::{run_suite, Suite};
use reachkit::harness::{retrace, SteerBudget};
use reachkit::io::{self, IoError, LoadedSystem};
use reachkit::reach::{classify_point, reach_tree};
use reachkit::{BoxSet, ControlSystem, Direction, KrenerConfig, ReachConfig, Variant};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "reachkit", version, about = "Reachability analysis for piecewise-constant control systems")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, env = "REACHKIT_SEED", default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate a control word from an initial state.
    Simulate {
        #[arg(long)]
        system: String,
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        x0: Point,
        /// Control word JSON.
        #[arg(long)]
        word: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grow a breadth-first reach tree.
    Reach {
        #[arg(long)]
        system: String,
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        x0: Point,
        /// Box constraint `lo1:hi1,lo2:hi2,…`.
        #[arg(long, value_parser = parse_box, allow_hyphen_values = true)]
        omega: Option<BoxSet>,
        #[arg(long)]
        tmax: Option<f64>,
        #[arg(long, default_value_t = 10)]
        depth: usize,
        #[arg(long, default_value_t = 0.05)]
        dt: f64,
        #[arg(long, default_value_t = 1e-3)]
        prune: f64,
        /// Grow the controllable tree (reversed system) instead.
        #[arg(long)]
        backward: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify local controllability at a point.
    Classify {
        #[arg(long)]
        system: String,
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        x0: Point,
        #[arg(long, value_enum)]
        variant: VariantArg,
        /// Time bound for `st` and `stl`.
        #[arg(long = "T")]
        t: Option<f64>,
        #[arg(long, value_parser = parse_box, allow_hyphen_values = true)]
        omega: Option<BoxSet>,
        #[arg(long, default_value_t = 0.03)]
        eps: f64,
        #[arg(long, default_value_t = 0.01)]
        coverage_tol: f64,
        #[arg(long, default_value_t = 400)]
        depth: usize,
        #[arg(long, default_value_t = 0.05)]
        dt: f64,
        #[arg(long, default_value_t = 0.01)]
        prune: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Controllability certificates.
    Certify {
        #[arg(long)]
        system: Option<String>,
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        x0: Option<Point>,
        #[arg(long, value_enum)]
        kind: CertKind,
        /// Linear system JSON `{"a": [[…]], "b": [[…]]}` for kalman and imb.
        #[arg(long)]
        linear: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = DirectionArg::Backward)]
        direction: DirectionArg,
        /// Bracket depth for larc.
        #[arg(long, default_value_t = 2)]
        bracket_depth: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Steer the end of a trajectory back to its start.
    Retrace {
        #[arg(long)]
        system: String,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        horizon: f64,
        #[arg(long, default_value_t = 500)]
        rollouts: usize,
        #[arg(long, default_value_t = 1e-2)]
        eps: f64,
        #[arg(long, default_value_t = 10)]
        max_hops: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a bundled verification suite.
    Verify {
        #[arg(long, value_parser = parse_suite)]
        suite: Suite,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plot the (x1, x2) projection of a trajectory as SVG.
    Plot {
        #[arg(long)]
        traj: PathBuf,
        /// Adds a quiver of the field for a 2-D system.
        #[arg(long)]
        system: Option<String>,
        /// Frozen control for the quiver (default: centre of the control set).
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        quiver_u: Option<Point>,
        /// State dimension of the CSV when no system is given.
        #[arg(long, default_value_t = 2)]
        n: usize,
        /// Control dimension of the CSV when no system is given.
        #[arg(long, default_value_t = 0)]
        m: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum VariantArg {
    Local,
    St,
    L,
    Stl,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum CertKind {
    Kalman,
    Imb,
    Larc,
    Krener,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DirectionArg {
    Forward,
    Backward,
}

/// Comma-separated numbers.
#[derive(Debug, Clone)]
struct Point(Vec<f64>);

fn parse_vector(s: &str) -> Result<Point, String> {
    if s.trim().is_empty() {
        return Ok(Point(Vec::new()));
    }
    s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}"))).collect::<Result<_, _>>().map(Point)
}

fn parse_box(s: &str) -> Result<BoxSet, String> {
    let intervals = s
        .split(',')
        .map(|p| {
            let (lo, hi) = p.split_once(':').ok_or_else(|| format!("`{p}`: expected lo:hi"))?;
            let lo = lo.trim().parse::<f64>().map_err(|e| format!("`{lo}`: {e}"))?;
            let hi = hi.trim().parse::<f64>().map_err(|e| format!("`{hi}`: {e}"))?;
            Ok((lo, hi))
        })
        .collect::<Result<Vec<_>, String>>()?;
    BoxSet::from_intervals(&intervals).map_err(|e| e.to_string())
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    Suite::parse(s).ok_or_else(|| format!("unknown suite `{s}` (table2, example21, example22, lemmas)"))
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl std::fmt::Display) -> Self {
        Failure { code: EXIT_INPUT, message: message.to_string() }
    }

    fn usage(message: impl std::fmt::Display) -> Self {
        Failure { code: EXIT_USAGE, message: message.to_string() }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::input(e)
    }
}

/// Parses `argv` (program name first), runs the command, and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load(spec: &str) -> Result<LoadedSystem, Failure> {
    Ok(io::load_system(spec)?)
}

fn check_point(sys: &ControlSystem, x: &[f64]) -> Result<(), Failure> {
    if x.len() != sys.state_dim() {
        return Err(Failure::usage(format!("--x0 has {} entries, the system has n = {}", x.len(), sys.state_dim())));
    }
    Ok(())
}

fn reach_config(sys: &ControlSystem, seed: u64, integrator: IntegratorConfig, depth: usize, dt: f64, prune: f64) -> ReachConfig {
    let mut cfg = ReachConfig::for_system(sys, seed).with_depth(depth).with_dt(dt).with_prune_cell(prune);
    cfg.integrator = integrator;
    cfg
}

fn execute(cli: Cli) -> Result<i32, Failure> {
    let seed = cli.seed;
    match cli.command {
        Command::Simulate { system, x0: Point(x0), word, out } => {
            let LoadedSystem { system: sys, integrator } = load(&system)?;
            check_point(&sys, &x0)?;
            let word = io::load_word(&word)?;
            let traj = integrate(&sys, &x0, &word, &integrator).map_err(Failure::input)?;
            write(&out, &io::trajectory_to_csv(&traj, sys.control_dim()))?;
        }
        Command::Reach { system, x0: Point(x0), omega, tmax, depth, dt, prune, backward, out } => {
            let LoadedSystem { system: sys, integrator } = load(&system)?;
            check_point(&sys, &x0)?;
            let cfg = reach_config(&sys, seed, integrator, depth, dt, prune).with_omega(omega).with_t_max(tmax);
            let target = if backward { sys.reversed() } else { sys.clone() };
            let tree = reach_tree(&target, &x0, &cfg, seed).map_err(Failure::input)?;
            write(&out, &io::tree_to_csv(&tree, sys.control_dim()))?;
        }
        Command::Classify { system, x0: Point(x0), variant, t, omega, eps, coverage_tol, depth, dt, prune, out } => {
            let LoadedSystem { system: sys, integrator } = load(&system)?;
            check_point(&sys, &x0)?;
            let need_t = || t.filter(|t| *t > 0.0).ok_or_else(|| Failure::usage("this variant needs --T > 0"));
            let need_omega = || {
                let o = omega.clone().ok_or_else(|| Failure::usage("this variant needs --omega"))?;
                if !o.contains(&x0) {
                    return Err(Failure::usage("--omega must contain --x0"));
                }
                Ok(o)
            };
            let variant = match variant {
                VariantArg::Local => Variant::Local,
                VariantArg::St => Variant::St { t: need_t()? },
                VariantArg::L => Variant::L { omega: need_omega()? },
                VariantArg::Stl => Variant::Stl { t: need_t()?, omega: need_omega()? },
            };
            let cfg = reach_config(&sys, seed, integrator, depth, dt, prune);
            let c = classify_point(&sys, &x0, &variant, &cfg, eps, coverage_tol, seed).map_err(Failure::input)?;
            write(&out, &io::to_json(&c))?;
            println!("{}", c.verdict.name());
        }
        Command::Certify { system, x0, kind, linear, direction, bracket_depth, out } => {
            let report = certify(seed, system, x0.map(|p| p.0), kind, linear, direction, bracket_depth)?;
            write(&out, &io::to_json(&report))?;
        }
        Command::Retrace { system, traj, horizon, rollouts, eps, max_hops, out } => {
            let LoadedSystem { system: sys, integrator } = load(&system)?;
            let traj = io::load_trajectory(&traj, &sys, &integrator)?;
            let mut budget = SteerBudget::new(horizon, rollouts, seed, eps);
            budget.integrator = integrator;
            if !budget.is_valid() {
                return Err(Failure::usage("--horizon and --eps must be positive"));
            }
            match retrace(&sys, &traj, &budget, max_hops) {
                Ok(r) => write(&out, &io::word_to_json(&r.word))?,
                Err(f) => {
                    write(&out, &io::word_to_json(&f.word))?;
                    eprintln!("retrace stalled at sample {}", f.stalled_at);
                    return Ok(EXIT_VERIFY);
                }
            }
        }
        Command::Verify { suite, out } => {
            let report = run_suite(suite, seed);
            write(&out, &io::to_json(&report))?;
            for c in &report.checks {
                println!("{} {}", if c.pass { "PASS" } else { "FAIL" }, c.name);
            }
            return Ok(if report.pass { EXIT_OK } else { EXIT_VERIFY });
        }
        Command::Plot { traj, system, quiver_u, n, m, out } => {
            let (csv, field) = match system {
                Some(spec) => {
                    let LoadedSystem { system: sys, .. } = load(&spec)?;
                    let text = std::fs::read_to_string(&traj).map_err(|e| Failure::input(format!("{}: {e}", traj.display())))?;
                    let csv = io::trajectory_from_csv(&text, sys.state_dim(), sys.control_dim())?;
                    let u = match quiver_u {
                        Some(Point(u)) => u,
                        None => plot::default_control(&sys),
                    };
                    if !sys.validate_control(&u).unwrap_or(false) {
                        return Err(Failure::usage("--quiver-u is not an admissible control"));
                    }
                    (csv, (sys.state_dim() == 2).then_some((sys, u)))
                }
                None => {
                    let text = std::fs::read_to_string(&traj).map_err(|e| Failure::input(format!("{}: {e}", traj.display())))?;
                    (io::trajectory_from_csv(&text, n, m)?, None)
                }
            };
            if csv.states[0].len() < 2 {
                return Err(Failure::usage("plot needs at least two state coordinates"));
            }
            write(&out, &plot::svg(&csv.states, field.as_ref().map(|(s, u)| (s, u.as_slice()))))?;
        }
    }
    Ok(EXIT_OK)
}

fn certify(
    seed: u64,
    system: Option<String>,
    x0: Option<Vec<f64>>,
    kind: CertKind,
    linear: Option<PathBuf>,
    direction: DirectionArg,
    bracket_depth: usize,
) -> Result<serde_json::Value, Failure> {
    match kind {
        CertKind::Kalman | CertKind::Imb => {
            let path = linear.ok_or_else(|| Failure::usage("kalman and imb need --linear FILE"))?;
            let lin = io::load_linear(&path)?;
            Ok(match kind {
                CertKind::Kalman => {
                    let (rank, controllable) = kalman_rank(&lin);
                    json!({ "kind": "kalman", "n": lin.state_dim(), "rank": rank, "controllable": controllable })
                }
                _ => json!({ "kind": "imb", "invariant": imb_invariance(&lin) }),
            })
        }
        CertKind::Larc | CertKind::Krener => {
            let spec = system.ok_or_else(|| Failure::usage("larc and krener need --system"))?;
            let LoadedSystem { system: sys, integrator } = load(&spec)?;
            let x = x0.ok_or_else(|| Failure::usage("larc and krener need --x0"))?;
            check_point(&sys, &x)?;
            if let CertKind::Larc = kind {
                let mut rng = reachkit::rng::seeded(seed);
                let fields = sys
                    .controls()
                    .alphabet(0, &mut rng)
                    .iter()
                    .map(|u| sys.frozen_field(u))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(Failure::input)?;
                let rank = larc_rank(&fields, &x, bracket_depth).map_err(Failure::input)?;
                return Ok(json!({ "kind": "larc", "n": sys.state_dim(), "rank": rank, "full": rank == sys.state_dim() }));
            }
            let mut cfg = KrenerConfig::for_system(&sys, seed);
            cfg.integrator = integrator;
            let dir = match direction {
                DirectionArg::Forward => Direction::Forward,
                DirectionArg::Backward => Direction::Backward,
            };
            match krener_chain(&sys, &x, dir, &cfg) {
                Ok(cert) => Ok(json!({ "kind": "krener", "certificate": cert })),
                Err(e) => Ok(json!({ "kind": "krener", "error": e.to_string() })),
            }
        }
    }
}
