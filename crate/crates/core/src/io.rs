//! File formats: system definitions and linear systems as JSON, trajectories
//! and reach trees as CSV, control words as JSON.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::certify::LinearSystem;
use crate::fixtures;
use crate::flow::{integrate, IntegratorConfig, Trajectory};
use crate::harness::SemicircleResult;
use crate::reach::ReachTree;
use crate::system::{BoxSet, ControlSet, ControlSystem, ControlWord, Segment, SystemError};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error(transparent)]
    Bind(#[from] SystemError),
    #[error("CSV line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl From<serde_json::Error> for IoError {
    fn from(e: serde_json::Error) -> Self {
        IoError::Parse { line: e.line(), column: e.column(), message: e.to_string() }
    }
}

fn read(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|e| IoError::Read { path: path.display().to_string(), message: e.to_string() })
}

/// On-disk form of a control system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub name: String,
    pub n: usize,
    pub m: usize,
    #[serde(default)]
    pub domain: Option<BoxSet>,
    pub controls: ControlSet,
    pub fields: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorConfig>,
}

impl SystemFile {
    pub fn from_system(sys: &ControlSystem, integrator: Option<IntegratorConfig>) -> Self {
        SystemFile {
            name: sys.name().to_string(),
            n: sys.state_dim(),
            m: sys.control_dim(),
            domain: sys.domain().cloned(),
            controls: sys.controls().clone(),
            fields: sys.fields().iter().map(|e| e.to_string()).collect(),
            integrator,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, IoError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes") + "\n"
    }

    pub fn bind(&self) -> Result<ControlSystem, IoError> {
        let sources: Vec<&str> = self.fields.iter().map(String::as_str).collect();
        Ok(ControlSystem::from_sources(&self.name, self.n, self.m, self.domain.clone(), self.controls.clone(), &sources)?)
    }
}

/// A bound system plus the integrator settings its file asked for.
#[derive(Debug, Clone)]
pub struct LoadedSystem {
    pub system: ControlSystem,
    pub integrator: IntegratorConfig,
}

/// Loads a bundled system by reserved name, or a system file.
pub fn load_system(spec: &str) -> Result<LoadedSystem, IoError> {
    if let Some(system) = fixtures::by_name(spec) {
        return Ok(LoadedSystem { system, integrator: IntegratorConfig::default() });
    }
    let file = SystemFile::from_json(&read(Path::new(spec))?)?;
    let integrator = file.integrator.unwrap_or_default();
    if IntegratorConfig::new(integrator.h, integrator.r_max).is_err() {
        return Err(IoError::Invalid(format!("invalid integrator settings {integrator:?}")));
    }
    Ok(LoadedSystem { system: file.bind()?, integrator })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearFile {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, IoError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(IoError::Invalid(format!("ragged rows in matrix {what}")));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), cols, rows.iter().flatten().copied()))
}

/// Parses `{"a": [[…]], "b": [[…]]}` (row-major).
pub fn linear_from_json(text: &str) -> Result<LinearSystem, IoError> {
    let f: LinearFile = serde_json::from_str(text)?;
    LinearSystem::new(matrix_from_rows(&f.a, "a")?, matrix_from_rows(&f.b, "b")?).map_err(|e| IoError::Invalid(e.to_string()))
}

pub fn load_linear(path: &Path) -> Result<LinearSystem, IoError> {
    linear_from_json(&read(path)?)
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn header(prefix: &[&str], n: usize, m: usize, suffix: &[&str]) -> String {
    let cols: Vec<String> = prefix
        .iter()
        .map(|s| s.to_string())
        .chain((1..=n).map(|i| format!("x{i}")))
        .chain((1..=m).map(|i| format!("u{i}")))
        .chain(suffix.iter().map(|s| s.to_string()))
        .collect();
    cols.join(",")
}

/// `t,x1..xn,u1..um`, one row per sample; `u` is the control applied from
/// that sample on (the final row repeats the last control).
pub fn trajectory_to_csv(traj: &Trajectory, m: usize) -> String {
    let n = traj.origin().len();
    let mut out = header(&["t"], n, m, &[]);
    out.push('\n');
    for (k, (t, x)) in traj.times().iter().zip(traj.states()).enumerate() {
        let mut row: Vec<String> = vec![num(*t)];
        row.extend(x.iter().map(|v| num(*v)));
        match traj.control_at(k) {
            Some(u) => row.extend(u.iter().map(|v| num(*v))),
            None => row.extend(std::iter::repeat_n(String::new(), m)),
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Rows of a trajectory CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryCsv {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub word: ControlWord,
}

pub fn trajectory_from_csv(text: &str, n: usize, m: usize) -> Result<TrajectoryCsv, IoError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or(IoError::Csv { line: 1, message: "empty file".into() })?;
    if head.trim() != header(&["t"], n, m, &[]) {
        return Err(IoError::Csv { line: 1, message: format!("expected header `{}`", header(&["t"], n, m, &[])) });
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut controls: Vec<Vec<f64>> = Vec::new();
    for (i, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 1 + n + m {
            return Err(IoError::Csv { line: i + 1, message: format!("expected {} columns, found {}", 1 + n + m, cells.len()) });
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|e| IoError::Csv { line: i + 1, message: format!("`{s}`: {e}") });
        times.push(parse(cells[0])?);
        states.push(cells[1..=n].iter().map(|s| parse(s)).collect::<Result<Vec<_>, _>>()?);
        controls.push(if cells[n + 1..].iter().all(|s| s.is_empty()) && m > 0 {
            Vec::new()
        } else {
            cells[n + 1..].iter().map(|s| parse(s)).collect::<Result<Vec<_>, _>>()?
        });
    }
    if times.is_empty() {
        return Err(IoError::Csv { line: 2, message: "no samples".into() });
    }
    let mut segments: Vec<Segment> = Vec::new();
    for k in 0..times.len() - 1 {
        let duration = times[k + 1] - times[k];
        match segments.last_mut() {
            Some(last) if last.control == controls[k] => last.duration += duration,
            _ => segments.push(Segment { control: controls[k].clone(), duration }),
        }
    }
    let word = ControlWord::new(segments).map_err(|e| IoError::Invalid(e.to_string()))?;
    Ok(TrajectoryCsv { times, states, word })
}

/// Rebuilds the trajectory by integrating the recorded word from the first
/// row; fails unless the recomputed samples match the file to `1e-9`.
pub fn load_trajectory(
    path: &Path,
    sys: &ControlSystem,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IoError> {
    let csv = trajectory_from_csv(&read(path)?, sys.state_dim(), sys.control_dim())?;
    let traj = integrate(sys, &csv.states[0], &csv.word, cfg).map_err(|e| IoError::Invalid(e.to_string()))?;
    let matches = traj.len() == csv.states.len()
        && traj.states().iter().zip(&csv.states).all(|(a, b)| {
            a.iter().zip(b).all(|(p, q)| (p - q).abs() <= 1e-9 * (1.0 + q.abs()))
        });
    if !matches {
        return Err(IoError::Invalid("trajectory samples do not match a replay of the recorded controls".into()));
    }
    Ok(traj)
}

/// `id,parent,depth,elapsed,x1..xn,u1..um,duration`; the root has an empty
/// parent and empty controls.
pub fn tree_to_csv(tree: &ReachTree, m: usize) -> String {
    let n = tree.root.len();
    let mut out = header(&["id", "parent", "depth", "elapsed"], n, m, &["duration"]);
    out.push('\n');
    for node in &tree.nodes {
        let mut row = vec![
            node.id.to_string(),
            node.parent.map(|p| p.to_string()).unwrap_or_default(),
            node.depth.to_string(),
            num(node.elapsed),
        ];
        row.extend(node.state.iter().map(|v| num(*v)));
        if node.control.is_empty() {
            row.extend(std::iter::repeat_n(String::new(), m));
        } else {
            row.extend(node.control.iter().map(|v| num(*v)));
        }
        row.push(num(node.duration));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Control word as `{"segments": [{"u": […], "duration": …}, …]}`.
pub fn word_to_json(word: &ControlWord) -> String {
    serde_json::to_string_pretty(word).expect("plain data serializes") + "\n"
}

pub fn word_from_json(text: &str) -> Result<ControlWord, IoError> {
    Ok(serde_json::from_str(text)?)
}

pub fn load_word(path: &Path) -> Result<ControlWord, IoError> {
    word_from_json(&read(path)?)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes") + "\n"
}

/// `seed,time,segments` per completing word; canonical words have an empty
/// seed.
pub fn semicircle_to_csv(result: &SemicircleResult) -> String {
    let mut out = String::from("seed,time,segments\n");
    for r in &result.records {
        let _ = writeln!(out, "{},{},{}", r.seed.map(|s| s.to_string()).unwrap_or_default(), num(r.time), r.segments);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reach::{reach_tree, ReachConfig};

    #[test]
    fn bundled_names_load() {
        let s = load_system(fixtures::EXAMPLE22_NAME).unwrap();
        assert_eq!(s.system, fixtures::example22());
        assert!(load_system(fixtures::EXAMPLE21_NAME).is_ok());
    }

    #[test]
    fn system_file_round_trip() {
        let file = SystemFile::from_system(&fixtures::example22(), Some(IntegratorConfig { h: 0.005, r_max: 1e3 }));
        let again = SystemFile::from_json(&file.to_json()).unwrap();
        assert_eq!(again, file);
        assert_eq!(SystemFile::from_system(&again.bind().unwrap(), again.integrator), file);
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = SystemFile::from_json("{\n  \"name\": \"a\",\n  \"n\": oops\n}").unwrap_err();
        match err {
            IoError::Parse { line, column, .. } => assert_eq!((line, column), (3, 8)),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn bind_errors_name_the_variable() {
        let text = r#"{"name":"bad","n":2,"m":1,"controls":{"box":{"lo":[-1],"hi":[1]}},"fields":["x2","x3 + u1"]}"#;
        match SystemFile::from_json(text).unwrap().bind().unwrap_err() {
            IoError::Bind(SystemError::Bind { var, .. }) => assert_eq!(var, "x3"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn list_controls_and_domain() {
        let text = r#"{"name":"l","n":1,"m":1,"domain":{"lo":[-2],"hi":[2]},"controls":{"list":[[-1],[1]]},"fields":["u1"]}"#;
        let sys = SystemFile::from_json(text).unwrap().bind().unwrap();
        assert!(sys.controls().contains(&[1.0]) && !sys.controls().contains(&[0.0]));
        assert!(!sys.in_domain(&[3.0]));
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let sys = fixtures::example22();
        let word = ControlWord::new(vec![
            Segment { control: vec![1.0, 0.0, 0.0], duration: 0.05 },
            Segment { control: vec![0.0, 1.0, 0.5], duration: 0.03 },
        ])
        .unwrap();
        let cfg = IntegratorConfig::default();
        let traj = integrate(&sys, &[1.0, 0.0], &word, &cfg).unwrap();
        let csv = trajectory_to_csv(&traj, 3);
        assert!(csv.starts_with("t,x1,x2,u1,u2,u3\n"));
        let back = trajectory_from_csv(&csv, 2, 3).unwrap();
        assert_eq!(back.states, traj.states());
        let replay = integrate(&sys, &back.states[0], &back.word, &cfg).unwrap();
        assert_eq!(replay.states(), traj.states());
        assert!(trajectory_from_csv("t,x1\n0,1\n", 2, 3).is_err());
    }

    #[test]
    fn tree_csv_shape() {
        let sys = fixtures::single_integrator();
        let cfg = ReachConfig::for_system(&sys, 0).with_depth(1);
        let tree = reach_tree(&sys, &[0.0], &cfg, 0).unwrap();
        let csv = tree_to_csv(&tree, 1);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("id,parent,depth,elapsed,x1,u1,duration"));
        assert!(lines.next().unwrap().starts_with("0,,0,"));
        assert_eq!(csv.lines().count(), tree.nodes.len() + 1);
    }

    #[test]
    fn linear_file() {
        let lin = linear_from_json(r#"{"a": [[0, 1], [0, 0]], "b": [[0], [1]]}"#).unwrap();
        assert_eq!(lin, fixtures::example21_linear());
        assert!(linear_from_json(r#"{"a": [[0, 1], [0]], "b": [[0], [1]]}"#).is_err());
    }
}
