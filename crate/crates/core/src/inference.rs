//! Inside-outside and max-sum over packed graphs.
//!
//! The partition function sums over derivations: each occurrence of a node
//! in the tree unrolling picks its own outgoing edge. Edge "marginals" are
//! therefore expected occurrence counts, which exceed 1 when a node can be
//! reached along several paths.

use std::hash::Hash;

use thiserror::Error;

use crate::graph::{EdgeId, NodeId, PackedGraph, SINK};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InferenceError {
    #[error("instance too large for exhaustive enumeration (more than {limit} derivations)")]
    InstanceTooLarge { limit: usize },
}

pub fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn edge_inside<N>(g: &PackedGraph<N>, beta: &[f64], scores: &[f64], e: EdgeId) -> f64
where
    N: Clone + Eq + Hash,
{
    let edge = g.edge(e);
    scores[e] + edge.children.iter().map(|&c| beta[c]).sum::<f64>()
}

/// Inside scores β for every node; β(sink) = 0.
pub fn inside<N: Clone + Eq + Hash>(g: &PackedGraph<N>, scores: &[f64]) -> Vec<f64> {
    assert_eq!(scores.len(), g.num_edges(), "one score per edge");
    let mut beta = vec![f64::NEG_INFINITY; g.num_nodes()];
    beta[SINK] = 0.0;
    for &v in g.topological() {
        if v == SINK {
            continue;
        }
        let mut acc = f64::NEG_INFINITY;
        for &e in g.outgoing(v) {
            acc = log_sum_exp(acc, edge_inside(g, &beta, scores, e));
        }
        beta[v] = acc;
    }
    beta
}

pub fn inside_log_z<N: Clone + Eq + Hash>(g: &PackedGraph<N>, scores: &[f64]) -> f64 {
    inside(g, scores)[g.root()]
}

/// Outside scores α for every node, given inside scores.
pub fn outside<N: Clone + Eq + Hash>(g: &PackedGraph<N>, scores: &[f64], beta: &[f64]) -> Vec<f64> {
    let mut alpha = vec![f64::NEG_INFINITY; g.num_nodes()];
    alpha[g.root()] = 0.0;
    for &v in g.topological().iter().rev() {
        if alpha[v] == f64::NEG_INFINITY {
            continue;
        }
        for &e in g.outgoing(v) {
            let edge = g.edge(e);
            for (ci, &c) in edge.children.iter().enumerate() {
                let siblings: f64 = edge
                    .children
                    .iter()
                    .enumerate()
                    .filter(|&(cj, _)| cj != ci)
                    .map(|(_, &s)| beta[s])
                    .sum();
                alpha[c] = log_sum_exp(alpha[c], alpha[v] + scores[e] + siblings);
            }
        }
    }
    alpha
}

#[derive(Debug, Clone)]
pub struct Marginals {
    pub log_z: f64,
    /// Expected number of times each edge is used in a derivation.
    pub edges: Vec<f64>,
    /// Expected number of occurrences of each node.
    pub nodes: Vec<f64>,
}

pub fn edge_marginals<N: Clone + Eq + Hash>(g: &PackedGraph<N>, scores: &[f64]) -> Marginals {
    let beta = inside(g, scores);
    let alpha = outside(g, scores, &beta);
    let log_z = beta[g.root()];
    let edges = (0..g.num_edges())
        .map(|e| (alpha[g.edge(e).parent] + edge_inside(g, &beta, scores, e) - log_z).exp())
        .collect();
    let nodes = (0..g.num_nodes())
        .map(|v| (alpha[v] + beta[v] - log_z).exp())
        .collect();
    Marginals {
        log_z,
        edges,
        nodes,
    }
}

#[derive(Debug, Clone)]
pub struct MapResult {
    /// Score of the best derivation.
    pub score: f64,
    /// Chosen edge per node reached by the best derivation.
    pub chosen: Vec<Option<EdgeId>>,
}

impl MapResult {
    pub fn edges(&self) -> Vec<EdgeId> {
        self.chosen.iter().flatten().copied().collect()
    }
}

/// Max-sum decoding. Among equal scores the first outgoing edge wins, which
/// is the one whose sorted child list is smallest; edges reaching the sink
/// come first.
pub fn map_decode<N: Clone + Eq + Hash>(g: &PackedGraph<N>, scores: &[f64]) -> MapResult {
    let mut best = vec![f64::NEG_INFINITY; g.num_nodes()];
    let mut arg: Vec<Option<EdgeId>> = vec![None; g.num_nodes()];
    best[SINK] = 0.0;
    for &v in g.topological() {
        if v == SINK {
            continue;
        }
        for &e in g.outgoing(v) {
            let s = edge_inside(g, &best, scores, e);
            if arg[v].is_none() || s > best[v] {
                best[v] = s;
                arg[v] = Some(e);
            }
        }
    }
    let mut chosen = vec![None; g.num_nodes()];
    let mut stack: Vec<NodeId> = vec![g.root()];
    while let Some(v) = stack.pop() {
        if v == SINK || chosen[v].is_some() {
            continue;
        }
        chosen[v] = arg[v];
        if let Some(e) = arg[v] {
            stack.extend(g.edge(e).children.iter().copied());
        }
    }
    MapResult {
        score: best[g.root()],
        chosen,
    }
}

/// Enumerates every derivation explicitly and log-sums their scores.
pub fn brute_force_log_z<N: Clone + Eq + Hash>(
    g: &PackedGraph<N>,
    scores: &[f64],
    limit: usize,
) -> Result<f64, InferenceError> {
    let mut memo: Vec<Option<Vec<f64>>> = vec![None; g.num_nodes()];
    let all = derivations(g, scores, g.root(), limit, &mut memo)?;
    Ok(all
        .iter()
        .fold(f64::NEG_INFINITY, |acc, &s| log_sum_exp(acc, s)))
}

fn derivations<N: Clone + Eq + Hash>(
    g: &PackedGraph<N>,
    scores: &[f64],
    v: NodeId,
    limit: usize,
    memo: &mut Vec<Option<Vec<f64>>>,
) -> Result<Vec<f64>, InferenceError> {
    if v == SINK {
        return Ok(vec![0.0]);
    }
    if let Some(list) = &memo[v] {
        return Ok(list.clone());
    }
    let mut out = Vec::new();
    for &e in g.outgoing(v) {
        let mut partial = vec![scores[e]];
        for &c in &g.edge(e).children {
            let sub = derivations(g, scores, c, limit, memo)?;
            if partial.len() * sub.len() > limit {
                return Err(InferenceError::InstanceTooLarge { limit });
            }
            partial = partial
                .iter()
                .flat_map(|&p| sub.iter().map(move |&s| p + s))
                .collect();
        }
        out.extend(partial);
        if out.len() > limit {
            return Err(InferenceError::InstanceTooLarge { limit });
        }
    }
    memo[v] = Some(out.clone());
    Ok(out)
}
