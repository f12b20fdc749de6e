//! JSON and CSV artifacts.

use std::path::{Path, PathBuf};

use rbsde_core::{Adapted, Predictable, PredictableMarks, ScenarioTree, SolutionQuadruple, SolutionQuintuple};
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Contents of `solution.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "solution", rename_all = "snake_case")]
pub enum SolutionFile {
    OneBarrier(SolutionQuadruple),
    TwoBarrier(SolutionQuintuple),
}

pub struct OutDir(PathBuf);

impl OutDir {
    pub fn create(path: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(path).map_err(|e| Failure::Io(format!("creating {}: {e}", path.display())))?;
        Ok(Self(path.to_path_buf()))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    pub fn json(&self, name: &str, value: &impl Serialize) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
        text.push('\n');
        let path = self.path(name);
        std::fs::write(&path, text).map_err(|e| Failure::Io(format!("writing {}: {e}", path.display())))
    }

    pub fn csv<R: Serialize>(&self, name: &str, rows: &[R]) -> Result<(), Failure> {
        let path = self.path(name);
        let io = |e: csv::Error| Failure::Io(format!("writing {}: {e}", path.display()));
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(&path).map_err(io)?;
        for r in rows {
            w.serialize(r).map_err(io)?;
        }
        w.flush().map_err(|e| Failure::Io(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub process: String,
    pub time: f64,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

fn row(tree: &ScenarioTree, process: &str, level: usize, values: &[f64]) -> SummaryRow {
    let mean = tree.expect_at(values);
    let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
    let var = (tree.expect_at(&sq) - mean * mean).max(0.0);
    SummaryRow {
        process: process.into(),
        time: tree.time(level),
        mean,
        std: var.sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Per-time statistics of a set of named processes.
#[derive(Default)]
pub struct Summary(pub Vec<SummaryRow>);

impl Summary {
    pub fn adapted(&mut self, tree: &ScenarioTree, name: &str, x: &Adapted) -> &mut Self {
        self.0.extend(x.levels().iter().enumerate().map(|(k, v)| row(tree, name, k, v)));
        self
    }

    pub fn predictable(&mut self, tree: &ScenarioTree, name: &str, x: &Predictable) -> &mut Self {
        self.0.extend(x.levels().iter().enumerate().map(|(k, v)| row(tree, name, k, v)));
        self
    }

    pub fn marks(&mut self, tree: &ScenarioTree, name: &str, x: &PredictableMarks) -> &mut Self {
        let m = x.num_marks();
        for i in 0..m {
            for (k, lvl) in x.levels().iter().enumerate() {
                let vals: Vec<f64> = lvl.iter().skip(i).step_by(m).copied().collect();
                self.0.push(row(tree, &format!("{name}{i}"), k, &vals));
            }
        }
        self
    }
}

/// One row per grid time: expectations of `Y` and of the compensators, and
/// the mean jump each compensator makes on arriving at that time.
#[derive(Debug, Clone, Serialize)]
pub struct TimelineRow {
    pub time: f64,
    pub mean_y: f64,
    pub mean_k: f64,
    pub k_jump: f64,
    pub k_d_jump: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_k_minus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_minus_jump: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_minus_d_jump: Option<f64>,
}

fn means(tree: &ScenarioTree, x: &Adapted) -> Vec<f64> {
    x.levels().iter().map(|v| tree.expect_at(v)).collect()
}

fn jumps(means: &[f64]) -> impl Iterator<Item = f64> + '_ {
    std::iter::once(0.0).chain(means.windows(2).map(|w| w[1] - w[0]))
}

pub fn timeline_one(tree: &ScenarioTree, s: &SolutionQuadruple) -> Vec<TimelineRow> {
    let (y, k, kd) = (means(tree, &s.y), means(tree, &s.k), means(tree, &s.k_d));
    jumps(&k)
        .zip(jumps(&kd))
        .enumerate()
        .map(|(l, (kj, kdj))| TimelineRow {
            time: tree.time(l),
            mean_y: y[l],
            mean_k: k[l],
            k_jump: kj,
            k_d_jump: kdj,
            mean_k_minus: None,
            k_minus_jump: None,
            k_minus_d_jump: None,
        })
        .collect()
}

pub fn timeline_two(tree: &ScenarioTree, s: &SolutionQuintuple) -> Vec<TimelineRow> {
    let (y, kp, kpd) = (means(tree, &s.y), means(tree, &s.k_plus), means(tree, &s.k_plus_d));
    let (km, kmd) = (means(tree, &s.k_minus), means(tree, &s.k_minus_d));
    let minus: Vec<(f64, f64)> = jumps(&km).zip(jumps(&kmd)).collect();
    jumps(&kp)
        .zip(jumps(&kpd))
        .enumerate()
        .map(|(l, (kj, kdj))| TimelineRow {
            time: tree.time(l),
            mean_y: y[l],
            mean_k: kp[l],
            k_jump: kj,
            k_d_jump: kdj,
            mean_k_minus: Some(km[l]),
            k_minus_jump: Some(minus[l].0),
            k_minus_d_jump: Some(minus[l].1),
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeRow {
    pub process: String,
    pub level: usize,
    pub index: usize,
    pub time: f64,
    pub value: f64,
}

/// Per-node dump of adapted processes.
pub fn node_rows(tree: &ScenarioTree, named: &[(&str, &Adapted)]) -> Vec<NodeRow> {
    named
        .iter()
        .flat_map(|(name, x)| {
            x.iter().map(move |(n, value)| NodeRow { process: (*name).into(), level: n.level, index: n.index, time: tree.time(n.level), value })
        })
        .collect()
}
