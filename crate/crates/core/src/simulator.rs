//! Simulated debugging sessions on control-flow graphs.
//!
//! At the start of every run each chunk is independently marked buggy with
//! probability `p * alpha^r`, where `r` is the number of times the chunk has
//! been debugged so far. Control then walks the graph from the entry; the
//! first triggered buggy chunk ends the run and its bug is removed.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`), seeded with
//! `seed_from_u64(seed)`. Independent replications use distinct stream ids
//! via `set_stream`, so results do not depend on scheduling or platform.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{estimate_mle, EstimateError, EstimateStatus, SolverConfig};
use crate::model::{Homogeneous, Likelihood, ModelError, ModelParams, SufficientStats};
use crate::records::{process_run, ChunkId, Outcome, RecordError, RunRecord, SessionState};

pub const GRAPH_FORMAT: &str = "resid-graph/1";
pub const GRID_HEADER: &str = "# resid-grid v1";
pub const CURVE_HEADER: &str = "# resid-curve v1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid graph: {0}")]
    Graph(String),
    #[error("unknown builtin graph {0:?} (expected fig1-if, fig2-loop or fig3-flowchart)")]
    UnknownGraph(String),
    #[error("{name} = {value} is not a valid probability")]
    Probability { name: &'static str, value: f64 },
    #[error("invalid experiment: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRange {
    pub min: u32,
    pub max: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    /// Falls through to `next`; `None` ends the program (or the enclosing loop body).
    Linear {
        next: Option<usize>,
    },
    Branch {
        targets: Vec<(usize, f64)>,
    },
    /// Runs the body subgraph a uniformly drawn number of times, then continues at `exit`.
    Loop {
        body: usize,
        exit: Option<usize>,
        iterations: IterationRange,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: ChunkId,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgramGraph {
    nodes: Vec<Node>,
    entry: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphFile {
    format: String,
    entry: String,
    node: Vec<NodeSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum NodeSpec {
    Linear {
        id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        next: Option<String>,
    },
    Branch {
        id: String,
        targets: Vec<TargetSpec>,
    },
    Loop {
        id: String,
        body: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        exit: Option<String>,
        iterations: IterationRange,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct TargetSpec {
    to: String,
    p: f64,
}

impl ProgramGraph {
    pub fn new(nodes: Vec<Node>, entry: usize) -> Result<Self, SimError> {
        let g = Self { nodes, entry };
        g.validate()?;
        Ok(g)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn entry(&self) -> usize {
        self.entry
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    fn successors(&self, n: usize) -> Vec<usize> {
        match &self.nodes[n].kind {
            NodeKind::Linear { next } => next.iter().copied().collect(),
            NodeKind::Branch { targets } => targets.iter().map(|&(t, _)| t).collect(),
            NodeKind::Loop { body, exit, .. } => {
                std::iter::once(*body).chain(exit.iter().copied()).collect()
            }
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Graph(m));
        let n = self.nodes.len();
        if n == 0 {
            return bad("graph has no nodes".into());
        }
        if self.entry >= n {
            return bad(format!("entry index {} out of range", self.entry));
        }
        let mut seen = HashMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(j) = seen.insert(node.id.as_str(), i) {
                return bad(format!(
                    "node id {:?} used twice (nodes {j} and {i})",
                    node.id
                ));
            }
            if let Some(&t) = self.successors(i).iter().find(|&&t| t >= n) {
                return bad(format!(
                    "node {:?} points at missing node index {t}",
                    node.id
                ));
            }
            match &node.kind {
                NodeKind::Branch { targets } => {
                    if targets.is_empty() {
                        return bad(format!("branch {:?} has no targets", node.id));
                    }
                    if let Some(&(_, p)) = targets.iter().find(|(_, p)| !(*p > 0.0 && *p <= 1.0)) {
                        return bad(format!(
                            "branch {:?} has probability {p} outside (0, 1]",
                            node.id
                        ));
                    }
                    let total: f64 = targets.iter().map(|(_, p)| p).sum();
                    if (total - 1.0).abs() > 1e-12 {
                        return bad(format!("branch {:?} probabilities sum to {total}", node.id));
                    }
                }
                NodeKind::Loop { iterations, .. } if iterations.min > iterations.max => {
                    return bad(format!("loop {:?} has min iterations above max", node.id));
                }
                _ => {}
            }
        }

        // Depth-first search: every node reachable from the entry, no cycles.
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let mut marks = vec![Mark::New; n];
        let mut stack = vec![(self.entry, 0usize)];
        marks[self.entry] = Mark::Active;
        while let Some(&mut (node, ref mut next_child)) = stack.last_mut() {
            let succ = self.successors(node);
            if let Some(&child) = succ.get(*next_child) {
                *next_child += 1;
                match marks[child] {
                    Mark::Active => {
                        return bad(format!(
                            "cycle through node {:?}; loops must use a loop node",
                            self.nodes[child].id
                        ))
                    }
                    Mark::New => {
                        marks[child] = Mark::Active;
                        stack.push((child, 0));
                    }
                    Mark::Done => {}
                }
            } else {
                marks[node] = Mark::Done;
                stack.pop();
            }
        }
        if let Some(i) = marks.iter().position(|m| *m == Mark::New) {
            return bad(format!(
                "node {:?} is unreachable from the entry",
                self.nodes[i].id
            ));
        }
        Ok(())
    }

    /// Parses the TOML graph definition format.
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let file: GraphFile =
            toml::from_str(text).map_err(|e| SimError::Graph(e.message().to_string()))?;
        if file.format != GRAPH_FORMAT {
            return Err(SimError::Graph(format!(
                "unsupported format {:?}, expected {GRAPH_FORMAT:?}",
                file.format
            )));
        }
        let index: HashMap<&str, usize> = file
            .node
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id(), i))
            .collect();
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| SimError::Graph(format!("reference to unknown node {id:?}")))
        };
        let nodes = file
            .node
            .iter()
            .map(|spec| {
                let kind = match spec {
                    NodeSpec::Linear { next, .. } => NodeKind::Linear {
                        next: next.as_deref().map(lookup).transpose()?,
                    },
                    NodeSpec::Branch { targets, .. } => NodeKind::Branch {
                        targets: targets
                            .iter()
                            .map(|t| Ok((lookup(&t.to)?, t.p)))
                            .collect::<Result<_, SimError>>()?,
                    },
                    NodeSpec::Loop {
                        body,
                        exit,
                        iterations,
                        ..
                    } => NodeKind::Loop {
                        body: lookup(body)?,
                        exit: exit.as_deref().map(lookup).transpose()?,
                        iterations: *iterations,
                    },
                };
                Ok(Node {
                    id: spec.id().to_string(),
                    kind,
                })
            })
            .collect::<Result<Vec<_>, SimError>>()?;
        Self::new(nodes, lookup(&file.entry)?)
    }

    pub fn to_toml(&self) -> String {
        let id = |i: usize| self.nodes[i].id.clone();
        let file = GraphFile {
            format: GRAPH_FORMAT.into(),
            entry: id(self.entry),
            node: self
                .nodes
                .iter()
                .map(|n| match &n.kind {
                    NodeKind::Linear { next } => NodeSpec::Linear {
                        id: n.id.clone(),
                        next: next.map(id),
                    },
                    NodeKind::Branch { targets } => NodeSpec::Branch {
                        id: n.id.clone(),
                        targets: targets
                            .iter()
                            .map(|&(t, p)| TargetSpec { to: id(t), p })
                            .collect(),
                    },
                    NodeKind::Loop {
                        body,
                        exit,
                        iterations,
                    } => NodeSpec::Loop {
                        id: n.id.clone(),
                        body: id(*body),
                        exit: exit.map(id),
                        iterations: *iterations,
                    },
                })
                .collect(),
        };
        toml::to_string(&file).expect("graph serializes")
    }

    /// Named reconstructions of the example programs.
    ///
    /// * `fig1-if`: chunk 1 branches evenly to chunk 2 or chunk 3.
    /// * `fig2-loop`: chunk 1, then chunk 2 repeated 1..=100 times, then chunk 3.
    /// * `fig3-flowchart`: chunk 1 branches evenly to the loop head (chunk 2)
    ///   or straight to the exit (chunk 4); the loop runs body chunk 3
    ///   1..=100 times before reaching chunk 4.
    pub fn builtin(name: &str) -> Result<Self, SimError> {
        let linear = |id: &str, next: Option<usize>| Node {
            id: id.into(),
            kind: NodeKind::Linear { next },
        };
        let uniform = IterationRange { min: 1, max: 100 };
        let nodes = match name {
            "fig1-if" => vec![
                Node {
                    id: "1".into(),
                    kind: NodeKind::Branch {
                        targets: vec![(1, 0.5), (2, 0.5)],
                    },
                },
                linear("2", None),
                linear("3", None),
            ],
            "fig2-loop" => vec![
                Node {
                    id: "1".into(),
                    kind: NodeKind::Loop {
                        body: 1,
                        exit: Some(2),
                        iterations: uniform,
                    },
                },
                linear("2", None),
                linear("3", None),
            ],
            "fig3-flowchart" => vec![
                Node {
                    id: "1".into(),
                    kind: NodeKind::Branch {
                        targets: vec![(1, 0.5), (3, 0.5)],
                    },
                },
                Node {
                    id: "2".into(),
                    kind: NodeKind::Loop {
                        body: 2,
                        exit: Some(3),
                        iterations: uniform,
                    },
                },
                linear("3", None),
                linear("4", None),
            ],
            other => return Err(SimError::UnknownGraph(other.to_string())),
        };
        Self::new(nodes, 0)
    }
}

impl NodeSpec {
    fn id(&self) -> &str {
        match self {
            NodeSpec::Linear { id, .. }
            | NodeSpec::Branch { id, .. }
            | NodeSpec::Loop { id, .. } => id,
        }
    }
}

pub const BUILTIN_GRAPHS: [&str; 3] = ["fig1-if", "fig2-loop", "fig3-flowchart"];

/// Deterministic generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_probability(name: &'static str, value: f64) -> Result<(), SimError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(SimError::Probability { name, value })
    }
}

/// Marks each chunk buggy with probability `p * alpha^r`, one draw per node in order.
pub fn sample_bug_marks<R: Rng>(
    graph: &ProgramGraph,
    debug_counts: &BTreeMap<ChunkId, u32>,
    p: f64,
    alpha: f64,
    rng: &mut R,
) -> Vec<bool> {
    graph
        .nodes
        .iter()
        .map(|n| {
            let r = debug_counts.get(&n.id).copied().unwrap_or(0);
            rng.random_bool((p * alpha.powi(r as i32)).clamp(0.0, 1.0))
        })
        .collect()
}

struct Walk<'g, R> {
    graph: &'g ProgramGraph,
    buggy: Vec<bool>,
    trigger: f64,
    visits: Vec<ChunkId>,
    rng: R,
}

impl<R: Rng> Walk<'_, R> {
    /// Walks from `start` until a terminal node; `Err` carries a triggered buggy node.
    fn run(&mut self, start: usize) -> Result<(), usize> {
        let mut at = Some(start);
        while let Some(n) = at {
            let node = &self.graph.nodes[n];
            self.visits.push(node.id.clone());
            if self.buggy[n] && (self.trigger >= 1.0 || self.rng.random_bool(self.trigger)) {
                return Err(n);
            }
            at = match &node.kind {
                NodeKind::Linear { next } => *next,
                NodeKind::Branch { targets } => {
                    let u: f64 = self.rng.random();
                    let mut acc = 0.0;
                    let mut pick = targets[targets.len() - 1].0;
                    for &(t, p) in targets {
                        acc += p;
                        if u < acc {
                            pick = t;
                            break;
                        }
                    }
                    Some(pick)
                }
                NodeKind::Loop {
                    body,
                    exit,
                    iterations,
                } => {
                    let k = self.rng.random_range(iterations.min..=iterations.max);
                    for _ in 0..k {
                        self.run(*body)?;
                    }
                    *exit
                }
            };
        }
        Ok(())
    }
}

/// Simulates one run. `trigger` is the chance that a buggy chunk fails on
/// any given visit; at 1 it fails on its first visit.
pub fn simulate_run<R: Rng>(
    graph: &ProgramGraph,
    debug_counts: &BTreeMap<ChunkId, u32>,
    p: f64,
    alpha: f64,
    trigger: f64,
    rng: &mut R,
) -> RunRecord {
    let buggy = sample_bug_marks(graph, debug_counts, p, alpha, rng);
    let mut walk = Walk {
        graph,
        buggy,
        trigger,
        visits: Vec::new(),
        rng,
    };
    let outcome = match walk.run(graph.entry) {
        Ok(()) => Outcome::Success,
        Err(n) => Outcome::bug(graph.nodes[n].id.clone()),
    };
    RunRecord::new(String::new(), walk.visits, outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub p_true: f64,
    pub alpha: f64,
    pub runs_per_session: u32,
    pub replications: u32,
    pub seed: u64,
    /// Per-visit failure probability of a buggy chunk.
    pub trigger_probability: f64,
}

impl ExperimentConfig {
    pub fn new(
        p_true: f64,
        alpha: f64,
        runs_per_session: u32,
        replications: u32,
        seed: u64,
    ) -> Self {
        Self {
            p_true,
            alpha,
            runs_per_session,
            replications,
            seed,
            trigger_probability: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        check_probability("p", self.p_true)?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(SimError::Probability {
                name: "alpha",
                value: self.alpha,
            });
        }
        if !(self.trigger_probability > 0.0 && self.trigger_probability <= 1.0) {
            return Err(SimError::Probability {
                name: "trigger probability",
                value: self.trigger_probability,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub records: Vec<RunRecord>,
    pub state: SessionState,
}

/// Runs `config.runs_per_session` runs on one RNG stream, debugging as it goes.
pub fn run_session_on_stream(
    graph: &ProgramGraph,
    config: &ExperimentConfig,
    stream: u64,
) -> Result<Session, SimError> {
    config.validate()?;
    let params = ModelParams::new(config.alpha)?;
    let mut rng = stream_rng(config.seed, stream);
    let mut state = SessionState::new();
    let mut records = Vec::with_capacity(config.runs_per_session as usize);
    for i in 0..config.runs_per_session {
        let mut record = simulate_run(
            graph,
            &state.debug_counts,
            config.p_true,
            config.alpha,
            config.trigger_probability,
            &mut rng,
        );
        record.seq = Some(u64::from(i) + 1);
        record.run_id = format!("run-{}", i + 1);
        state = process_run(&state, &record, &params, None)?;
        records.push(record);
    }
    Ok(Session { records, state })
}

pub fn run_session(graph: &ProgramGraph, config: &ExperimentConfig) -> Result<Session, SimError> {
    run_session_on_stream(graph, config, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub p_true: f64,
    pub alpha: f64,
    /// `None` when every session in the cell had an undefined MLE.
    pub mean: Option<f64>,
    /// Sample variance (n - 1 denominator); needs at least two estimates.
    pub variance: Option<f64>,
    pub estimates: u32,
    pub skipped: u32,
    pub boundary: u32,
}

impl GridCell {
    pub fn flagged(&self) -> bool {
        self.estimates == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub p_values: Vec<f64>,
    pub alpha_values: Vec<f64>,
    pub runs_per_session: u32,
    pub replications: u32,
    pub seed: u64,
    pub trigger_probability: f64,
}

/// RNG stream of replication `replication` in grid cell `cell`.
pub fn session_stream(cell: usize, replication: u32) -> u64 {
    ((cell as u64) << 32) | u64::from(replication)
}

/// Estimates `p` from `replications` independent sessions for every `(p, alpha)` pair.
///
/// Cells are ordered by `p` then `alpha`; replication `r` of cell `c` uses
/// stream `(c << 32) | r`.
pub fn experiment_grid(
    graph: &ProgramGraph,
    spec: &GridSpec,
    solver: &SolverConfig,
) -> Result<Vec<GridCell>, SimError> {
    if spec.replications == 0 {
        return Err(SimError::Config("replications must be positive".into()));
    }
    let cells: Vec<(f64, f64)> = spec
        .p_values
        .iter()
        .flat_map(|&p| spec.alpha_values.iter().map(move |&a| (p, a)))
        .collect();
    cells
        .iter()
        .enumerate()
        .map(|(c, &(p_true, alpha))| {
            let config = ExperimentConfig {
                p_true,
                alpha,
                runs_per_session: spec.runs_per_session,
                replications: spec.replications,
                seed: spec.seed,
                trigger_probability: spec.trigger_probability,
            };
            config.validate()?;
            let params = ModelParams::new(alpha)?;
            let estimates = (0..spec.replications)
                .into_par_iter()
                .map(|r| {
                    let session = run_session_on_stream(graph, &config, session_stream(c, r))?;
                    Ok(estimate_mle(&session.state.stats, &params, solver)?)
                })
                .collect::<Result<Vec<_>, SimError>>()?;
            Ok(summarize(p_true, alpha, &estimates))
        })
        .collect()
}

fn summarize(p_true: f64, alpha: f64, estimates: &[crate::estimator::Estimate]) -> GridCell {
    let values: Vec<f64> = estimates.iter().filter_map(|e| e.p_hat).collect();
    let n = values.len();
    let mean = (n > 0).then(|| values.iter().sum::<f64>() / n as f64);
    let variance = match mean {
        Some(mu) if n > 1 => {
            Some(values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1) as f64)
        }
        _ => None,
    };
    GridCell {
        p_true,
        alpha,
        mean,
        variance,
        estimates: n as u32,
        skipped: (estimates.len() - n) as u32,
        boundary: estimates
            .iter()
            .filter(|e| {
                matches!(
                    e.status,
                    EstimateStatus::BoundaryHigh | EstimateStatus::BoundaryLow
                )
            })
            .count() as u32,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into())
}

/// Tab-separated grid table with a versioned header.
pub fn render_grid(cells: &[GridCell]) -> String {
    let mut out =
        format!("{GRID_HEADER}\np\talpha\tmean\tvariance\testimates\tskipped\tboundary\n");
    for c in cells {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            c.p_true,
            c.alpha,
            fmt_opt(c.mean),
            fmt_opt(c.variance),
            c.estimates,
            c.skipped,
            c.boundary
        ));
    }
    out
}

/// `(p, l(p))` at `p = j / (points + 1)` for `j = 1..=points`.
pub fn log_likelihood_curve(stats: &SufficientStats, alpha: f64, points: usize) -> Vec<(f64, f64)> {
    let lik = Homogeneous { stats, alpha };
    (1..=points)
        .map(|j| {
            let p = j as f64 / (points + 1) as f64;
            (p, lik.log_likelihood_unchecked(p))
        })
        .collect()
}

pub fn curve_argmax(curve: &[(f64, f64)]) -> Option<f64> {
    curve
        .iter()
        .fold(None, |best: Option<(f64, f64)>, &(p, l)| match best {
            Some((_, bl)) if bl >= l => best,
            _ => Some((p, l)),
        })
        .map(|(p, _)| p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndependenceEstimate {
    /// Empirical `P(C1 and C2)`.
    pub joint: f64,
    /// Empirical `P(C1) * P(C2)`.
    pub product: f64,
    /// Binomial standard error of `joint`.
    pub standard_error: f64,
}

/// Monte Carlo check that bug encounters in two chunks are independent.
///
/// The programmer side (bug present in chunk i, probability `p_bug`) and the
/// user side (input triggers chunk i, probability `p_trigger`) draw from two
/// separate streams, realizing the product space. A chunk's bug is
/// encountered when both happen.
pub fn independence_mc(
    p_bug: f64,
    p_trigger: f64,
    trials: u64,
    seed: u64,
) -> Result<IndependenceEstimate, SimError> {
    check_probability("p_bug", p_bug)?;
    check_probability("p_trigger", p_trigger)?;
    if trials == 0 {
        return Err(SimError::Config("trials must be positive".into()));
    }
    let mut programmer = stream_rng(seed, 0);
    let mut user = stream_rng(seed, 1);
    let (mut c1, mut c2, mut both) = (0u64, 0u64, 0u64);
    for _ in 0..trials {
        let a1 = programmer.random_bool(p_bug);
        let a2 = programmer.random_bool(p_bug);
        let b1 = user.random_bool(p_trigger);
        let b2 = user.random_bool(p_trigger);
        let (e1, e2) = (a1 && b1, a2 && b2);
        c1 += u64::from(e1);
        c2 += u64::from(e2);
        both += u64::from(e1 && e2);
    }
    let t = trials as f64;
    let joint = both as f64 / t;
    Ok(IndependenceEstimate {
        joint,
        product: (c1 as f64 / t) * (c2 as f64 / t),
        standard_error: (joint * (1.0 - joint) / t).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fresh() -> BTreeMap<ChunkId, u32> {
        BTreeMap::new()
    }

    #[test]
    fn builtins_validate() {
        for name in BUILTIN_GRAPHS {
            let g = ProgramGraph::builtin(name).unwrap();
            assert_eq!(ProgramGraph::from_toml(&g.to_toml()).unwrap(), g);
        }
        assert!(matches!(
            ProgramGraph::builtin("fig9"),
            Err(SimError::UnknownGraph(_))
        ));
    }

    #[test]
    fn rejects_bad_graphs() {
        let linear = |id: &str, next| Node {
            id: id.into(),
            kind: NodeKind::Linear { next },
        };
        let cyclic = vec![linear("a", Some(1)), linear("b", Some(0))];
        assert!(ProgramGraph::new(cyclic, 0).is_err());
        let unreachable = vec![linear("a", None), linear("b", None)];
        assert!(ProgramGraph::new(unreachable, 0).is_err());
        let lopsided = vec![
            Node {
                id: "a".into(),
                kind: NodeKind::Branch {
                    targets: vec![(1, 0.5), (1, 0.4)],
                },
            },
            linear("b", None),
        ];
        assert!(ProgramGraph::new(lopsided, 0).is_err());
        assert!(
            ProgramGraph::from_toml("format = \"resid-graph/1\"\nentry = \"x\"\nnode = []")
                .is_err()
        );
        assert!(ProgramGraph::from_toml("format = \"other\"\nentry = \"x\"\nnode = []").is_err());
    }

    #[test]
    fn no_bugs_means_success() {
        let g = ProgramGraph::builtin("fig3-flowchart").unwrap();
        let mut rng = stream_rng(1, 0);
        for _ in 0..50 {
            let r = simulate_run(&g, &fresh(), 0.0, 0.9, 1.0, &mut rng);
            assert_eq!(r.outcome, Outcome::Success);
            assert_eq!(r.visits.first().map(String::as_str), Some("1"));
            assert_eq!(r.visits.last().map(String::as_str), Some("4"));
        }
    }

    #[test]
    fn certain_bug_stops_at_entry() {
        let g = ProgramGraph::builtin("fig3-flowchart").unwrap();
        let r = simulate_run(&g, &fresh(), 1.0, 0.9, 1.0, &mut stream_rng(2, 0));
        assert_eq!(r.visits, vec!["1".to_string()]);
        assert_eq!(r.outcome, Outcome::bug("1"));
    }

    #[test]
    fn loop_bug_triggers_on_first_visit() {
        // Only chunk 2 can be buggy: chunk 1 and 3 have been debugged so many
        // times that their bugginess underflows to zero.
        let g = ProgramGraph::builtin("fig2-loop").unwrap();
        let counts = BTreeMap::from([("1".to_string(), 5000), ("3".to_string(), 5000)]);
        let r = simulate_run(&g, &counts, 1.0, 0.5, 1.0, &mut stream_rng(3, 0));
        assert_eq!(r.visits, vec!["1".to_string(), "2".to_string()]);
        assert_eq!(r.outcome, Outcome::bug("2"));
    }

    #[test]
    fn session_bookkeeping() {
        let g = ProgramGraph::builtin("fig3-flowchart").unwrap();
        let empty = run_session(&g, &ExperimentConfig::new(0.5, 0.9, 0, 1, 7)).unwrap();
        assert!(empty.records.is_empty());
        assert_eq!(empty.state, SessionState::new());

        let clean = run_session(&g, &ExperimentConfig::new(0.0, 0.9, 20, 1, 7)).unwrap();
        assert_eq!(clean.state.stats.m, 0);

        let a = run_session(&g, &ExperimentConfig::new(0.4, 0.9, 30, 1, 11)).unwrap();
        let b = run_session(&g, &ExperimentConfig::new(0.4, 0.9, 30, 1, 11)).unwrap();
        assert_eq!(a, b);
        let bugs = a
            .records
            .iter()
            .filter(|r| r.outcome != Outcome::Success)
            .count() as u64;
        assert_eq!(a.state.stats.m, bugs);
        assert_eq!(
            a.state
                .debug_counts
                .values()
                .map(|&d| u64::from(d))
                .sum::<u64>(),
            bugs
        );
    }

    #[test]
    fn grid_flags_empty_cells() {
        let g = ProgramGraph::builtin("fig1-if").unwrap();
        let spec = GridSpec {
            p_values: vec![0.0],
            alpha_values: vec![0.5],
            runs_per_session: 5,
            replications: 3,
            seed: 1,
            trigger_probability: 1.0,
        };
        let cells = experiment_grid(&g, &spec, &SolverConfig::default()).unwrap();
        assert_eq!(cells.len(), 1);
        assert!(cells[0].flagged());
        assert_eq!(cells[0].skipped, 3);
        assert!(render_grid(&cells).contains("NA"));
    }

    #[test]
    fn independence_edge_cases() {
        let r = independence_mc(1.0, 1.0, 1000, 5).unwrap();
        assert_eq!((r.joint, r.product), (1.0, 1.0));
        let r = independence_mc(0.0, 0.7, 1000, 5).unwrap();
        assert_eq!((r.joint, r.product), (0.0, 0.0));
        assert!(independence_mc(1.5, 0.5, 10, 0).is_err());
    }

    #[test]
    fn curve_grid() {
        let stats = SufficientStats::new(3, [(0, 5)]);
        let curve = log_likelihood_curve(&stats, 0.9, 999);
        assert_eq!(curve.len(), 999);
        assert_eq!(curve[0].0, 0.001);
        assert_eq!(curve[998].0, 0.999);
        assert_eq!(curve_argmax(&curve), Some(0.375));
    }
}
