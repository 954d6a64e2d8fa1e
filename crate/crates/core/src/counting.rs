//! Exact counts of canonical encodings and their growth rates.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::graph::SINK;
use crate::hypergraph::{build_full_graph, Schema, Variant};
use crate::tagging::{kinds_canonical, TagKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CountError {
    #[error("instance too large: n = {n} exceeds the limit {max}")]
    InstanceTooLarge { n: usize, max: usize },
    #[error("power iteration did not converge (last ratios {last} and {previous})")]
    NonConvergence { last: f64, previous: f64 },
}

/// Largest `n` for brute-force subgraph enumeration.
pub const BRUTE_FORCE_MAX_N: usize = 4;
/// Largest `n` for exhaustive linear tag enumeration.
pub const LINEAR_MAX_N: usize = 6;

pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Number of mention sets over `n` tokens with at most `k` components per
/// mention: `2^N` with `N = sum_{i=1..k} C(n+1, 2i)`.
pub fn count_combinations(n: usize, k: usize) -> BigUint {
    let exponent: BigUint = (1..=k as u64).map(|i| binomial(n as u64 + 1, 2 * i)).sum();
    BigUint::one() << exponent.to_usize().expect("exponent fits in usize")
}

/// Per-position states of the single-type counting DP: which `B`/`O` nodes
/// are in use.
#[derive(Debug, Clone)]
pub struct CountStateSpace {
    pub variant: Variant,
    pub max_components: usize,
    /// `(is_b, i, j)` per state bit.
    nodes: Vec<(bool, u8, u8)>,
    /// Child masks per node for an interior position; one entry per edge.
    interior: Vec<Vec<u32>>,
    /// Whether the node may end at the last position (edge `{X}`).
    can_end: Vec<bool>,
    /// Distribution of bits added by the `T` nodes.
    starts: BTreeMap<u32, u64>,
}

impl CountStateSpace {
    pub fn new(variant: Variant, max_components: usize) -> Self {
        let k = max_components as u8;
        let totals: Vec<u8> = match variant {
            Variant::Shared => vec![0],
            Variant::Split => (1..=k).collect(),
        };
        let last = |j: u8| if variant == Variant::Shared { k } else { j };
        let mut nodes = Vec::new();
        for &j in &totals {
            for i in 1..=last(j) {
                nodes.push((true, i, j));
                if i >= 2 {
                    nodes.push((false, i, j));
                }
            }
        }
        let bit = |is_b: bool, i: u8, j: u8| -> u32 {
            1 << nodes
                .iter()
                .position(|&n| n == (is_b, i, j))
                .expect("node exists")
        };
        let mut interior = Vec::new();
        let mut can_end = Vec::new();
        for &(is_b, i, j) in &nodes {
            // children as (mask, is_x)
            let mut opts: Vec<(u32, bool)> = Vec::new();
            if is_b {
                opts.push((bit(true, i, j), false));
                if i < last(j) {
                    opts.push((bit(false, i + 1, j), false));
                }
                if variant == Variant::Shared || i == j {
                    opts.push((0, true));
                }
            } else {
                opts.push((bit(false, i, j), false));
                opts.push((bit(true, i, j), false));
            }
            can_end.push(opts.iter().any(|o| o.1));
            let masks = (1u32..1 << opts.len())
                .map(|sel| {
                    opts.iter()
                        .enumerate()
                        .filter(|(b, _)| sel >> b & 1 == 1)
                        .fold(0, |m, (_, o)| m | o.0)
                })
                .collect();
            interior.push(masks);
        }
        let mut starts = BTreeMap::from([(0u32, 1u64)]);
        for &j in &totals {
            let b1 = bit(true, 1, j);
            let mut next = BTreeMap::new();
            for (&m, &c) in &starts {
                *next.entry(m).or_insert(0) += c;
                *next.entry(m | b1).or_insert(0) += c;
            }
            starts = next;
        }
        CountStateSpace {
            variant,
            max_components,
            nodes,
            interior,
            can_end,
            starts,
        }
    }

    pub fn num_states(&self) -> usize {
        1 << self.nodes.len()
    }

    /// Ways to reach each next state from `state`, including the new
    /// position's `T` choices.
    pub fn transitions(&self, state: u32) -> BTreeMap<u32, u64> {
        let mut acc = BTreeMap::from([(0u32, 1u64)]);
        for (b, masks) in self.interior.iter().enumerate() {
            if state >> b & 1 == 0 {
                continue;
            }
            let mut next = BTreeMap::new();
            for (&m, &c) in &acc {
                for &opt in masks {
                    *next.entry(m | opt).or_insert(0) += c;
                }
            }
            acc = next;
        }
        let mut out = BTreeMap::new();
        for (&m, &c) in &acc {
            for (&s, &d) in &self.starts {
                *out.entry(m | s).or_insert(0) += c * d;
            }
        }
        out
    }

    fn terminates(&self, state: u32) -> bool {
        (0..self.nodes.len()).all(|b| state >> b & 1 == 0 || self.can_end[b])
    }

    /// `M[s'][s]`: ways to go from state `s` at one position to `s'` at the
    /// next.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        let size = self.num_states();
        let mut m = vec![vec![0.0; size]; size];
        for s in 0..size as u32 {
            for (t, c) in self.transitions(s) {
                m[t as usize][s as usize] += c as f64;
            }
        }
        m
    }

    /// Counts for `n = 1..=n_max`.
    pub fn counts(&self, n_max: usize) -> Vec<BigUint> {
        let size = self.num_states();
        let table: Vec<BTreeMap<u32, u64>> =
            (0..size as u32).map(|s| self.transitions(s)).collect();
        let mut v: Vec<BigUint> = vec![BigUint::zero(); size];
        for (&s, &c) in &self.starts {
            v[s as usize] += c;
        }
        let mut out = Vec::with_capacity(n_max);
        for n in 1..=n_max {
            let total: BigUint = (0..size)
                .filter(|&s| self.terminates(s as u32))
                .map(|s| &v[s])
                .sum();
            out.push(total);
            if n == n_max {
                break;
            }
            let mut next = vec![BigUint::zero(); size];
            for (s, count) in v.iter().enumerate() {
                if count.is_zero() {
                    continue;
                }
                for (&t, &c) in &table[s] {
                    next[t as usize] += count * c;
                }
            }
            v = next;
        }
        out
    }
}

/// Distinct single-type entity-encoded subgraphs over `n` tokens.
pub fn count_encodings_dp(variant: Variant, max_components: usize, n: usize) -> BigUint {
    CountStateSpace::new(variant, max_components)
        .counts(n)
        .pop()
        .unwrap_or_default()
}

/// Multi-type count: types use disjoint nodes, so counts multiply.
pub fn count_encodings_dp_types(
    variant: Variant,
    max_components: usize,
    n: usize,
    types: u32,
) -> BigUint {
    count_encodings_dp(variant, max_components, n).pow(types)
}

/// Counts subgraphs of the full graph by assigning one outgoing edge to
/// every reached node.
pub fn count_encodings_bruteforce(schema: &Schema, n: usize) -> Result<BigUint, CountError> {
    if n > BRUTE_FORCE_MAX_N {
        return Err(CountError::InstanceTooLarge {
            n,
            max: BRUTE_FORCE_MAX_N,
        });
    }
    let g = build_full_graph(schema, n);
    let mut reached = vec![false; g.num_nodes()];
    reached[g.root()] = true;
    fn expand(
        g: &crate::hypergraph::HyperGraph,
        reached: &mut Vec<bool>,
        frontier: &mut Vec<usize>,
    ) -> u64 {
        let Some(pos) = frontier
            .iter()
            .enumerate()
            .min_by_key(|(_, &v)| v)
            .map(|(i, _)| i)
        else {
            return 1;
        };
        let v = frontier.swap_remove(pos);
        let mut total = 0;
        for &e in g.outgoing(v) {
            let mut added = Vec::new();
            for &c in &g.edge(e).children {
                if c != SINK && !reached[c] {
                    reached[c] = true;
                    added.push(c);
                }
            }
            frontier.extend(&added);
            total += expand(g, reached, frontier);
            frontier.truncate(frontier.len() - added.len());
            for c in added {
                reached[c] = false;
            }
        }
        frontier.push(v);
        let last = frontier.len() - 1;
        frontier.swap(pos, last);
        total
    }
    let mut frontier = vec![g.root()];
    Ok(BigUint::from(expand(&g, &mut reached, &mut frontier)))
}

/// Single-type tag sequences of length `n` that are the encoding of some
/// mention set with at most `max_components` components per mention.
pub fn count_linear_canonical(n: usize, max_components: usize) -> Result<BigUint, CountError> {
    if n > LINEAR_MAX_N {
        return Err(CountError::InstanceTooLarge {
            n,
            max: LINEAR_MAX_N,
        });
    }
    let mut kinds = vec![TagKind::O; n];
    let mut count = 0u64;
    let total = 7usize.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        for slot in kinds.iter_mut() {
            *slot = TagKind::ALL[c % 7];
            c /= 7;
        }
        if kinds_canonical(&kinds, max_components) {
            count += 1;
        }
    }
    Ok(BigUint::from(count))
}

/// Natural logarithm of a big integer.
pub fn big_ln(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().expect("finite").ln();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_f64().expect("finite");
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

pub fn ratio(a: &BigUint, b: &BigUint) -> f64 {
    (big_ln(a) - big_ln(b)).exp()
}

/// Dominant eigenvalue of a non-negative matrix by power iteration.
pub fn dominant_growth(m: &[Vec<f64>]) -> Result<f64, CountError> {
    let size = m.len();
    let mut v = vec![1.0; size];
    let mut previous = f64::NAN;
    let mut last = f64::NAN;
    for _ in 0..100_000 {
        let mut next = vec![0.0; size];
        for (r, row) in m.iter().enumerate() {
            next[r] = row.iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        let norm: f64 = next.iter().sum();
        let old_norm: f64 = v.iter().sum();
        if norm == 0.0 {
            return Ok(0.0);
        }
        previous = last;
        last = norm / old_norm;
        v = next.into_iter().map(|x| x / norm).collect();
        if (last - previous).abs() <= 1e-13 * last {
            return Ok(last);
        }
    }
    Err(CountError::NonConvergence { last, previous })
}

/// Dominant growth of the canonical-encoding count for a schema.
pub fn schema_growth(variant: Variant, max_components: usize) -> Result<f64, CountError> {
    dominant_growth(&CountStateSpace::new(variant, max_components).matrix())
}

/// The 8x8 transition matrix of the three-level grid example, states being
/// the node subsets at one position (level 2 as the high bit).
pub const GRID_MATRIX: [[u64; 8]; 8] = [
    [0, 0, 0, 0, 0, 0, 0, 0],
    [0, 1, 0, 0, 0, 0, 0, 0],
    [0, 1, 1, 1, 0, 0, 0, 0],
    [0, 1, 0, 2, 0, 0, 0, 0],
    [0, 0, 1, 0, 1, 0, 1, 0],
    [0, 0, 0, 1, 0, 1, 0, 1],
    [0, 0, 1, 2, 0, 1, 2, 3],
    [0, 0, 0, 3, 0, 1, 0, 5],
];

pub fn grid_matrix_f64() -> Vec<Vec<f64>> {
    GRID_MATRIX
        .iter()
        .map(|r| r.iter().map(|&x| x as f64).collect())
        .collect()
}

/// Connected DAGs from the top-left to the bottom-right node of the grid
/// with `n` positions: `e_100 * T^(n-1) * e_001`.
pub fn count_grid_dags(n: usize) -> BigUint {
    let mut v: Vec<BigUint> = (0..8).map(|s| BigUint::from(u8::from(s == 1))).collect();
    for _ in 1..n {
        v = GRID_MATRIX
            .iter()
            .map(|row| row.iter().zip(&v).map(|(&a, b)| b * a).sum())
            .collect();
    }
    v[4].clone()
}

/// Closed form of [`count_grid_dags`] in floating point.
pub fn grid_closed_form(n: usize) -> f64 {
    let s5 = 5f64.sqrt();
    let e = (n - 1) as i32;
    (3.0 + s5).powi(e) / (4.0 * s5 + 10.0) - (3.0 - s5).powi(e) / (4.0 * s5 - 10.0) - 1.0
}

/// A model whose canonical encodings are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountModel {
    /// Exact counts up to `exact_up_to`, then the `8^n` bound.
    Linear {
        exact_up_to: usize,
    },
    Hyper(Variant, usize),
}

impl CountModel {
    pub fn counts(&self, n_max: usize) -> Vec<BigUint> {
        match *self {
            CountModel::Linear { exact_up_to } => (1..=n_max)
                .map(|n| {
                    if n <= exact_up_to.min(LINEAR_MAX_N) {
                        count_linear_canonical(n, 3).expect("within limit")
                    } else {
                        BigUint::one() << (3 * n)
                    }
                })
                .collect(),
            CountModel::Hyper(v, k) => CountStateSpace::new(v, k).counts(n_max),
        }
    }
}

/// `log sum M_b(i) / log sum M_a(i)` over `i <= n_max`: how much more
/// ambiguous `a` is than `b`.
pub fn relative_ambiguity_estimate(a: CountModel, b: CountModel, n_max: usize) -> f64 {
    let sum = |m: CountModel| -> BigUint { m.counts(n_max).into_iter().sum() };
    big_ln(&sum(b)) / big_ln(&sum(a))
}
