//! Mention hypergraphs.
//!
//! At every position `k` the graph has an `A` node (entities starting at `k`
//! or later), an `E` node (entities starting at `k`), one `T` node per type,
//! and `B`/`O` nodes per type and component index. `B(t,i)` means the token
//! belongs to the i-th component of some mention; `O(t,i)` means it lies in
//! the gap before the i-th component. `X` is the shared end-of-mention sink.
//!
//! The SPLIT variant additionally indexes `T`, `B` and `O` by the total
//! number of components `j` of the mention.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decode::{Decoded, Diagnostic, Heuristic, DEFAULT_ALL_LIMIT};
use crate::graph::{EdgeId, GraphBuilder, PackedGraph};
use crate::inference::MapResult;
use crate::mention::{AnnotatedSentence, Mention, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Shared,
    Split,
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "shared" => Ok(Variant::Shared),
            "split" => Ok(Variant::Split),
            other => Err(format!(
                "unknown hypergraph variant '{other}' (expected shared|split)"
            )),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Shared => "shared",
            Variant::Split => "split",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Schema {
    pub variant: Variant,
    pub max_components: usize,
    pub labels: Vec<String>,
}

impl Schema {
    pub fn new(variant: Variant, max_components: usize, labels: Vec<String>) -> Self {
        assert!(max_components >= 1, "K must be at least 1");
        assert!(!labels.is_empty(), "at least one label");
        Schema {
            variant,
            max_components,
            labels,
        }
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Values of `j` carried by nodes: `[0]` for SHARED, `1..=K` for SPLIT.
    fn totals(&self) -> Vec<u8> {
        match self.variant {
            Variant::Shared => vec![0],
            Variant::Split => (1..=self.max_components as u8).collect(),
        }
    }

    /// Largest component index for nodes with total `j`.
    fn last_index(&self, j: u8) -> u8 {
        match self.variant {
            Variant::Shared => self.max_components as u8,
            Variant::Split => j,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    A,
    E,
    T,
    B,
    O,
    X,
}

/// Structural node identity. `j` is 0 for SHARED nodes; `X` has position
/// `u32::MAX` so it sorts last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Node {
    pub k: u32,
    pub kind: NodeKind,
    pub t: u16,
    pub j: u8,
    pub i: u8,
}

impl Node {
    pub const X: Node = Node {
        k: u32::MAX,
        kind: NodeKind::X,
        t: 0,
        j: 0,
        i: 0,
    };

    fn at(kind: NodeKind, k: usize, t: usize, i: u8, j: u8) -> Node {
        Node {
            k: k as u32,
            kind,
            t: t as u16,
            j,
            i,
        }
    }

    pub fn a(k: usize) -> Node {
        Node::at(NodeKind::A, k, 0, 0, 0)
    }

    pub fn e(k: usize) -> Node {
        Node::at(NodeKind::E, k, 0, 0, 0)
    }

    pub fn t(k: usize, t: usize, j: u8) -> Node {
        Node::at(NodeKind::T, k, t, 0, j)
    }

    pub fn b(k: usize, t: usize, i: u8, j: u8) -> Node {
        Node::at(NodeKind::B, k, t, i, j)
    }

    pub fn o(k: usize, t: usize, i: u8, j: u8) -> Node {
        Node::at(NodeKind::O, k, t, i, j)
    }

    pub fn pos(&self) -> usize {
        self.k as usize
    }

    /// Same node with the total-components index erased.
    pub fn shared(&self) -> Node {
        Node { j: 0, ..*self }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: u8| {
            if v == 0 {
                "_".to_owned()
            } else {
                v.to_string()
            }
        };
        match self.kind {
            NodeKind::X => f.write_str("X"),
            NodeKind::A | NodeKind::E => write!(f, "{:?}({},_,_,_)", self.kind, self.k),
            NodeKind::T => write!(f, "T({},{},_,{})", self.k, self.t, opt(self.j)),
            _ => write!(
                f,
                "{:?}({},{},{},{})",
                self.kind,
                self.k,
                self.t,
                self.i,
                opt(self.j)
            ),
        }
    }
}

impl FromStr for Node {
    type Err = HyperError;

    /// Parses the [`fmt::Display`] form.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HyperError::Malformed(s.to_owned());
        if s == "X" {
            return Ok(Node::X);
        }
        let (kind, rest) = s.split_once('(').ok_or_else(bad)?;
        let fields: Vec<&str> = rest.strip_suffix(')').ok_or_else(bad)?.split(',').collect();
        if fields.len() != 4 {
            return Err(bad());
        }
        let num = |f: &str| -> Result<usize, HyperError> {
            if f == "_" {
                Ok(0)
            } else {
                f.parse().map_err(|_| bad())
            }
        };
        let k = num(fields[0])?;
        let t = num(fields[1])?;
        let i = u8::try_from(num(fields[2])?).map_err(|_| bad())?;
        let j = u8::try_from(num(fields[3])?).map_err(|_| bad())?;
        Ok(match kind {
            "A" => Node::a(k),
            "E" => Node::e(k),
            "T" => Node::t(k, t, j),
            "B" => Node::b(k, t, i, j),
            "O" => Node::o(k, t, i, j),
            _ => return Err(bad()),
        })
    }
}

/// Splits on commas outside parentheses.
fn split_top_level(s: &str) -> impl Iterator<Item = &str> {
    let mut depth = 0i32;
    let mut last = 0;
    let mut parts = Vec::new();
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&s[last..i]);
                last = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[last..]);
    parts.into_iter().map(str::trim)
}

pub type HyperGraph = PackedGraph<Node>;

/// Non-empty subsets of `options`, in binary-counter order.
fn subsets(options: &[Node]) -> impl Iterator<Item = Vec<Node>> + '_ {
    (1u32..(1 << options.len())).map(move |mask| {
        options
            .iter()
            .enumerate()
            .filter(|(b, _)| mask >> b & 1 == 1)
            .map(|(_, &n)| n)
            .collect()
    })
}

/// Children a `B(t,i,j)` node at `k` may point to.
fn b_options(schema: &Schema, n: usize, k: usize, t: usize, i: u8, j: u8) -> Vec<Node> {
    let mut opts = Vec::with_capacity(3);
    if k + 1 < n {
        opts.push(Node::b(k + 1, t, i, j));
        if i < schema.last_index(j) {
            opts.push(Node::o(k + 1, t, i + 1, j));
        }
    }
    if schema.variant == Variant::Shared || i == j {
        opts.push(Node::X);
    }
    opts
}

fn o_options(n: usize, k: usize, t: usize, i: u8, j: u8) -> Vec<Node> {
    if k + 1 < n {
        vec![Node::o(k + 1, t, i, j), Node::b(k + 1, t, i, j)]
    } else {
        Vec::new()
    }
}

/// The complete hypergraph over `n` tokens, pruned of nodes that cannot
/// reach `X`.
pub fn build_full_graph(schema: &Schema, n: usize) -> HyperGraph {
    assert!(n >= 1, "empty sentence");
    let mut g = GraphBuilder::new(Node::X);
    let x = crate::graph::SINK;
    let totals = schema.totals();
    for k in 0..n {
        let a = g.node(Node::a(k));
        let e = g.node(Node::e(k));
        if k + 1 < n {
            let next = g.node(Node::a(k + 1));
            g.edge(a, [e, next]);
        } else {
            g.edge(a, [e]);
        }
        let mut ts = Vec::new();
        for t in 0..schema.labels.len() {
            for &j in &totals {
                let tn = g.node(Node::t(k, t, j));
                ts.push(tn);
                let first = g.node(Node::b(k, t, 1, j));
                g.edge(tn, [first]);
                g.edge(tn, [x]);
                let top = schema.last_index(j);
                for i in 1..=top {
                    let b = g.node(Node::b(k, t, i, j));
                    for set in subsets(&b_options(schema, n, k, t, i, j)) {
                        let children: Vec<usize> = set.into_iter().map(|c| g.node(c)).collect();
                        g.edge(b, children);
                    }
                    if i >= 2 {
                        let o = g.node(Node::o(k, t, i, j));
                        for set in subsets(&o_options(n, k, t, i, j)) {
                            let children: Vec<usize> = set.into_iter().map(|c| g.node(c)).collect();
                            g.edge(o, children);
                        }
                    }
                }
            }
        }
        g.edge(e, ts);
    }
    g.finish(Node::a(0))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HyperError {
    #[error("mention {mention} has {found} components, more than the maximum {max}")]
    TooManyComponents {
        mention: String,
        found: usize,
        max: usize,
    },
    #[error("label '{0}' is not in the schema")]
    UnknownLabel(String),
    #[error("mention {0} extends past the sentence end")]
    OutOfBounds(String),
    #[error("malformed hyperedge line '{0}'")]
    Malformed(String),
}

/// One outgoing hyperedge per node that has one.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodedSubgraph {
    pub n: usize,
    pub schema: Schema,
    pub edges: BTreeMap<Node, BTreeSet<Node>>,
}

impl EncodedSubgraph {
    /// The spine and `T -> X` for every type: encodes no mentions.
    pub fn empty(schema: &Schema, n: usize) -> Self {
        let mut edges = BTreeMap::new();
        let totals = schema.totals();
        for k in 0..n {
            let mut a = BTreeSet::from([Node::e(k)]);
            if k + 1 < n {
                a.insert(Node::a(k + 1));
            }
            edges.insert(Node::a(k), a);
            let mut e = BTreeSet::new();
            for t in 0..schema.labels.len() {
                for &j in &totals {
                    e.insert(Node::t(k, t, j));
                    edges.insert(Node::t(k, t, j), BTreeSet::from([Node::X]));
                }
            }
            edges.insert(Node::e(k), e);
        }
        EncodedSubgraph {
            n,
            schema: schema.clone(),
            edges,
        }
    }

    /// Adds the path of one mention.
    fn add_mention(&mut self, t: usize, components: &[Span]) {
        let j = match self.schema.variant {
            Variant::Shared => 0,
            Variant::Split => components.len() as u8,
        };
        let link = |from: Node, to: Node, edges: &mut BTreeMap<Node, BTreeSet<Node>>| {
            edges.entry(from).or_default().insert(to);
        };
        let start = components[0].start;
        let tn = Node::t(start, t, j);
        self.edges
            .insert(tn, BTreeSet::from([Node::b(start, t, 1, j)]));
        for (ci, c) in components.iter().enumerate() {
            let i = ci as u8 + 1;
            for p in c.tokens() {
                let next = if p + 1 < c.end {
                    Node::b(p + 1, t, i, j)
                } else if ci + 1 < components.len() {
                    Node::o(p + 1, t, i + 1, j)
                } else {
                    Node::X
                };
                link(Node::b(p, t, i, j), next, &mut self.edges);
            }
            if let Some(nc) = components.get(ci + 1) {
                for p in c.end..nc.start {
                    let next = if p + 1 < nc.start {
                        Node::o(p + 1, t, i + 1, j)
                    } else {
                        Node::b(p + 1, t, i + 1, j)
                    };
                    link(Node::o(p, t, i + 1, j), next, &mut self.edges);
                }
            }
        }
    }

    /// Every hyperedge, one per line, in node order.
    pub fn to_debug_string(&self) -> String {
        let mut out = String::new();
        for (parent, children) in &self.edges {
            let list: Vec<String> = children.iter().map(Node::to_string).collect();
            out.push_str(&format!("{} -> {}\n", parent, list.join(",")));
        }
        out
    }

    /// Inverse of [`EncodedSubgraph::to_debug_string`].
    pub fn from_debug_string(schema: &Schema, n: usize, text: &str) -> Result<Self, HyperError> {
        let mut edges = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (parent, children) = line
                .split_once(" -> ")
                .ok_or_else(|| HyperError::Malformed(line.to_owned()))?;
            let parent: Node = parent.parse()?;
            let children = split_top_level(children)
                .map(str::parse)
                .collect::<Result<BTreeSet<Node>, _>>()?;
            let in_range = |v: &Node| {
                v.kind == NodeKind::X
                    || (v.pos() < n && (v.t as usize) < schema.labels.len().max(1))
            };
            if !in_range(&parent) || !children.iter().all(in_range) {
                return Err(HyperError::Malformed(line.to_owned()));
            }
            edges.insert(parent, children);
        }
        Ok(EncodedSubgraph {
            n,
            schema: schema.clone(),
            edges,
        })
    }

    /// Edge chosen for each node of `graph`, or `None` if some hyperedge of
    /// this subgraph is not in `graph`.
    pub fn edge_choices(&self, graph: &HyperGraph) -> Option<Vec<Option<EdgeId>>> {
        let mut chosen = vec![None; graph.num_nodes()];
        for (parent, children) in &self.edges {
            let p = graph.id(parent)?;
            let ids: Option<Vec<usize>> = children.iter().map(|c| graph.id(c)).collect();
            chosen[p] = Some(graph.find_edge(p, &ids?)?);
        }
        Some(chosen)
    }

    /// The subgraph selected by a MAP decoding of `graph`.
    pub fn from_map(schema: &Schema, n: usize, graph: &HyperGraph, map: &MapResult) -> Self {
        let mut edges = BTreeMap::new();
        for (v, e) in map.chosen.iter().enumerate() {
            if let Some(e) = e {
                let children = graph
                    .edge(*e)
                    .children
                    .iter()
                    .map(|&c| *graph.node(c))
                    .collect();
                edges.insert(*graph.node(v), children);
            }
        }
        EncodedSubgraph {
            n,
            schema: schema.clone(),
            edges,
        }
    }

    /// Erases `j` indices, giving a SHARED subgraph over the same mentions.
    pub fn project_to_shared(&self) -> EncodedSubgraph {
        let schema = Schema {
            variant: Variant::Shared,
            ..self.schema.clone()
        };
        let mut edges: BTreeMap<Node, BTreeSet<Node>> = BTreeMap::new();
        for (parent, children) in &self.edges {
            edges
                .entry(parent.shared())
                .or_default()
                .extend(children.iter().map(Node::shared));
        }
        for (parent, children) in edges.iter_mut() {
            if parent.kind == NodeKind::T && children.len() > 1 {
                children.remove(&Node::X);
            }
        }
        EncodedSubgraph {
            n: self.n,
            schema,
            edges,
        }
    }

    fn mention_of_path(&self, path: &[Node]) -> Mention {
        let label = &self.schema.labels[path[0].t as usize];
        let mut comps: Vec<Span> = Vec::new();
        for node in path.iter().filter(|n| n.kind == NodeKind::B) {
            let p = node.pos();
            match comps.last_mut() {
                Some(c) if c.end == p => c.end = p + 1,
                _ => comps.push(Span {
                    start: p,
                    end: p + 1,
                }),
            }
        }
        Mention::from_components(label.clone(), comps)
    }

    /// `T` nodes that start a mention, in node order.
    fn starts(&self) -> Vec<Node> {
        self.edges
            .iter()
            .filter(|(p, c)| p.kind == NodeKind::T && c.iter().any(|n| n.kind == NodeKind::B))
            .map(|(p, _)| *p)
            .collect()
    }
}

/// Encodes the mentions of a sentence.
pub fn encode_mentions(
    schema: &Schema,
    s: &AnnotatedSentence,
) -> Result<EncodedSubgraph, HyperError> {
    encode_mention_set(schema, s.len(), s.mentions.iter())
}

pub fn encode_mention_set<'a>(
    schema: &Schema,
    n: usize,
    mentions: impl IntoIterator<Item = &'a Mention>,
) -> Result<EncodedSubgraph, HyperError> {
    let mut g = EncodedSubgraph::empty(schema, n);
    for m in mentions {
        if m.num_components() > schema.max_components {
            return Err(HyperError::TooManyComponents {
                mention: m.to_string(),
                found: m.num_components(),
                max: schema.max_components,
            });
        }
        if m.end() > n {
            return Err(HyperError::OutOfBounds(m.to_string()));
        }
        let t = schema
            .label_index(m.label())
            .ok_or_else(|| HyperError::UnknownLabel(m.label().to_owned()))?;
        g.add_mention(t, m.components());
    }
    Ok(g)
}

/// Settings for subgraph decoding.
#[derive(Debug, Clone, Copy)]
pub struct HyperDecoder {
    pub all_limit: usize,
}

impl Default for HyperDecoder {
    fn default() -> Self {
        HyperDecoder {
            all_limit: DEFAULT_ALL_LIMIT,
        }
    }
}

pub fn decode_subgraph(g: &EncodedSubgraph, heuristic: Heuristic) -> Decoded {
    HyperDecoder::default().decode(g, heuristic)
}

impl HyperDecoder {
    pub fn decode(&self, g: &EncodedSubgraph, heuristic: Heuristic) -> Decoded {
        match heuristic {
            Heuristic::All => self.all_paths(g),
            Heuristic::Enough => min_cover(g),
        }
    }

    fn all_paths(&self, g: &EncodedSubgraph) -> Decoded {
        let mut out = Decoded::default();
        let mut paths = 0usize;
        let mut truncated = false;
        let mut path = Vec::new();
        for start in g.starts() {
            path.push(start);
            self.walk(g, &mut path, &mut paths, &mut truncated, &mut out.mentions);
            path.pop();
            if truncated {
                break;
            }
        }
        if truncated {
            out.diagnostics.push(Diagnostic::Truncated {
                limit: self.all_limit,
            });
        }
        out
    }

    fn walk(
        &self,
        g: &EncodedSubgraph,
        path: &mut Vec<Node>,
        paths: &mut usize,
        truncated: &mut bool,
        out: &mut BTreeSet<Mention>,
    ) {
        let Some(children) = g.edges.get(path.last().unwrap()) else {
            return;
        };
        for &c in children {
            if *truncated {
                return;
            }
            if c.kind == NodeKind::X {
                if *paths >= self.all_limit {
                    *truncated = true;
                    return;
                }
                *paths += 1;
                out.insert(g.mention_of_path(path));
            } else {
                path.push(c);
                self.walk(g, path, paths, truncated, out);
                path.pop();
            }
        }
    }
}

/// Child preference when extracting paths: `X`, then `B`, then `O`.
fn preference(n: &Node) -> (u8, Node) {
    let rank = match n.kind {
        NodeKind::X => 0,
        NodeKind::B => 1,
        _ => 2,
    };
    (rank, *n)
}

/// Fewest `T ... X` paths covering every mention link of `g`, found as a
/// minimum flow with unit lower bounds on the links.
fn min_cover(g: &EncodedSubgraph) -> Decoded {
    let starts = g.starts();
    // index nodes: 0 = source, 1 = X, then T/B/O nodes
    let mut index: BTreeMap<Node, usize> = BTreeMap::new();
    index.insert(Node::X, 1);
    let mut nodes = vec![Node::X, Node::X];
    let mut reach: VecDeque<Node> = starts.iter().copied().collect();
    while let Some(v) = reach.pop_front() {
        if index.contains_key(&v) {
            continue;
        }
        index.insert(v, nodes.len());
        nodes.push(v);
        if let Some(children) = g.edges.get(&v) {
            reach.extend(children.iter().copied());
        }
    }
    struct Arc {
        from: usize,
        to: usize,
        lower: i64,
        flow: i64,
    }
    let mut arcs: Vec<Arc> = Vec::new();
    let mut out_arcs: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    let mut in_arcs: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    let mut add = |from: usize, to: usize, lower: i64, arcs: &mut Vec<Arc>| {
        out_arcs[from].push(arcs.len());
        in_arcs[to].push(arcs.len());
        arcs.push(Arc {
            from,
            to,
            lower,
            flow: 0,
        });
    };
    for &s in &starts {
        add(0, index[&s], 0, &mut arcs);
    }
    for (vi, v) in nodes.iter().enumerate().skip(2) {
        let mut children: Vec<Node> = g.edges[v].iter().copied().collect();
        children.sort_by_key(preference);
        for c in children {
            add(vi, index[&c], 1, &mut arcs);
        }
    }
    // feasible flow: route one unit through each arc along first-choice paths
    let first_in: Vec<Option<usize>> = in_arcs.iter().map(|a| a.first().copied()).collect();
    let first_out: Vec<Option<usize>> = out_arcs.iter().map(|a| a.first().copied()).collect();
    for a in 0..arcs.len() {
        if arcs[a].from == 0 {
            continue;
        }
        let mut route = vec![a];
        let mut v = arcs[a].from;
        while v != 0 {
            let b = first_in[v].expect("every node is reached from a start");
            route.push(b);
            v = arcs[b].from;
        }
        let mut v = arcs[a].to;
        while v != 1 {
            let b = first_out[v].expect("every node reaches X");
            route.push(b);
            v = arcs[b].to;
        }
        for b in route {
            arcs[b].flow += 1;
        }
    }
    // cancel flow along X -> source paths in the residual graph
    loop {
        let mut prev: Vec<Option<(usize, bool)>> = vec![None; nodes.len()];
        let mut seen = vec![false; nodes.len()];
        seen[1] = true;
        let mut queue = VecDeque::from([1usize]);
        while let Some(v) = queue.pop_front() {
            if v == 0 {
                break;
            }
            for &a in &in_arcs[v] {
                let u = arcs[a].from;
                if !seen[u] && arcs[a].flow > arcs[a].lower {
                    seen[u] = true;
                    prev[u] = Some((a, false));
                    queue.push_back(u);
                }
            }
            for &a in &out_arcs[v] {
                let u = arcs[a].to;
                if !seen[u] {
                    seen[u] = true;
                    prev[u] = Some((a, true));
                    queue.push_back(u);
                }
            }
        }
        if !seen[0] {
            break;
        }
        let mut bottleneck = i64::MAX;
        let mut v = 0;
        while v != 1 {
            let (a, forward) = prev[v].unwrap();
            if !forward {
                bottleneck = bottleneck.min(arcs[a].flow - arcs[a].lower);
            }
            v = if forward { arcs[a].from } else { arcs[a].to };
        }
        let mut v = 0;
        while v != 1 {
            let (a, forward) = prev[v].unwrap();
            if forward {
                arcs[a].flow += bottleneck;
                v = arcs[a].from;
            } else {
                arcs[a].flow -= bottleneck;
                v = arcs[a].to;
            }
        }
    }
    let mut out = Decoded::default();
    for &s in &starts {
        let root_arc = out_arcs[0]
            .iter()
            .copied()
            .find(|&a| arcs[a].to == index[&s])
            .unwrap();
        while arcs[root_arc].flow > 0 {
            arcs[root_arc].flow -= 1;
            let mut path = vec![s];
            let mut v = index[&s];
            while v != 1 {
                let a = out_arcs[v]
                    .iter()
                    .copied()
                    .find(|&a| arcs[a].flow > 0)
                    .expect("flow is conserved");
                arcs[a].flow -= 1;
                v = arcs[a].to;
                if v != 1 {
                    path.push(nodes[v]);
                }
            }
            out.mentions.insert(g.mention_of_path(&path));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SINK;

    fn sp(a: usize, b: usize) -> Span {
        Span::new(a, b).unwrap()
    }

    fn m(spans: &[(usize, usize)]) -> Mention {
        Mention::from_components("D", spans.iter().map(|&(a, b)| sp(a, b)).collect())
    }

    fn schema(variant: Variant, k: usize) -> Schema {
        Schema::new(variant, k, vec!["D".into()])
    }

    fn infarctions() -> AnnotatedSentence {
        AnnotatedSentence::from_words("Infarctions either water shed or embolic").with_mentions([
            m(&[(0, 1)]),
            m(&[(0, 1), (2, 4)]),
            m(&[(0, 1), (5, 6)]),
        ])
    }

    #[test]
    fn debug_string_round_trip() {
        let s = infarctions();
        for variant in [Variant::Shared, Variant::Split] {
            let sc = schema(variant, 3);
            let g = encode_mentions(&sc, &s).unwrap();
            let back =
                EncodedSubgraph::from_debug_string(&sc, s.len(), &g.to_debug_string()).unwrap();
            assert_eq!(back, g);
        }
        let sc = schema(Variant::Shared, 3);
        assert!(EncodedSubgraph::from_debug_string(&sc, 6, "B(0,0,1,_) -> Q(1)").is_err());
        assert!(EncodedSubgraph::from_debug_string(&sc, 2, "B(5,0,1,_) -> X").is_err());
    }

    #[test]
    fn single_token_graph() {
        let g = build_full_graph(&schema(Variant::Shared, 1), 1);
        assert_eq!(g.num_nodes(), 5);
        assert_eq!(g.num_edges(), 5);
        let t = g.id(&Node::t(0, 0, 0)).unwrap();
        assert_eq!(g.outgoing(t).len(), 2);
        assert_eq!(g.edge(g.outgoing(t)[0]).children.as_slice(), &[SINK]);
    }

    #[test]
    fn b_node_has_seven_edges_and_o_three() {
        let g = build_full_graph(&schema(Variant::Shared, 3), 8);
        assert_eq!(g.outgoing(g.id(&Node::b(1, 0, 1, 0)).unwrap()).len(), 7);
        assert_eq!(g.outgoing(g.id(&Node::o(1, 0, 2, 0)).unwrap()).len(), 3);
        // the last component index cannot open another gap
        assert_eq!(g.outgoing(g.id(&Node::b(5, 0, 3, 0)).unwrap()).len(), 3);
        // a third component needs two earlier components and two gaps
        assert!(g.id(&Node::b(3, 0, 3, 0)).is_none());
        // at the right boundary only X survives
        assert_eq!(g.outgoing(g.id(&Node::b(7, 0, 1, 0)).unwrap()).len(), 1);
        assert!(g.id(&Node::o(7, 0, 2, 0)).is_none());
    }

    #[test]
    fn split_and_shared_agree_at_k1() {
        let a = build_full_graph(&schema(Variant::Shared, 1), 4);
        let b = build_full_graph(&schema(Variant::Split, 1), 4);
        assert_eq!(a.num_nodes(), b.num_nodes());
        assert_eq!(a.num_edges(), b.num_edges());
    }

    #[test]
    fn infarctions_has_three_mention_ends() {
        let g = encode_mentions(&schema(Variant::Shared, 3), &infarctions()).unwrap();
        let ends = g
            .edges
            .iter()
            .filter(|(p, c)| p.kind != NodeKind::T && c.contains(&Node::X))
            .count();
        assert_eq!(ends, 3);
        // Infarctions ends one mention and continues two others
        let b0 = &g.edges[&Node::b(0, 0, 1, 0)];
        assert_eq!(b0, &BTreeSet::from([Node::o(1, 0, 2, 0), Node::X]));
        for h in [Heuristic::All, Heuristic::Enough] {
            assert_eq!(decode_subgraph(&g, h).mentions, infarctions().mentions);
        }
    }

    #[test]
    fn overlapping_end_and_continue() {
        let s = AnnotatedSentence::from_words("a b c").with_mentions([m(&[(0, 1)]), m(&[(0, 2)])]);
        let g = encode_mentions(&schema(Variant::Shared, 3), &s).unwrap();
        assert_eq!(
            g.edges[&Node::b(0, 0, 1, 0)],
            BTreeSet::from([Node::b(1, 0, 1, 0), Node::X])
        );
    }

    #[test]
    fn empty_subgraph() {
        let sch = schema(Variant::Shared, 3);
        let g = encode_mention_set(&sch, 2, []).unwrap();
        assert_eq!(g, EncodedSubgraph::empty(&sch, 2));
        assert_eq!(g.edges.len(), 6);
        assert!(decode_subgraph(&g, Heuristic::All).mentions.is_empty());
        assert!(decode_subgraph(&g, Heuristic::Enough).mentions.is_empty());
    }

    /// Two mentions pass through the gap node O at token 2, entering from a
    /// B and an O parent and leaving to a B and an O child; the subgraph
    /// also admits the two crossed combinations.
    fn crossed() -> (EncodedSubgraph, BTreeSet<Mention>) {
        let s = AnnotatedSentence::from_words("a b c d e f")
            .with_mentions([m(&[(0, 1), (3, 4)]), m(&[(0, 2), (4, 5)])]);
        let g = encode_mentions(&schema(Variant::Shared, 3), &s).unwrap();
        (g, s.mentions)
    }

    /// Independent path enumeration over the raw edge map.
    fn count_paths(g: &EncodedSubgraph) -> usize {
        fn from(g: &EncodedSubgraph, v: &Node) -> usize {
            if v.kind == NodeKind::X {
                return 1;
            }
            g.edges[v].iter().map(|c| from(g, c)).sum()
        }
        g.edges
            .iter()
            .filter(|(p, c)| p.kind == NodeKind::T && !c.contains(&Node::X))
            .map(|(p, _)| from(g, p))
            .sum()
    }

    #[test]
    fn shared_gap_node_all_and_enough() {
        let (g, gold) = crossed();
        let o = Node::o(2, 0, 2, 0);
        let parents = g.edges.values().filter(|c| c.contains(&o)).count();
        assert_eq!(parents, 2);
        assert_eq!(g.edges[&o].len(), 2);
        let all = decode_subgraph(&g, Heuristic::All).mentions;
        assert_eq!(all.len(), 4);
        assert_eq!(count_paths(&g), 4);
        let enough = decode_subgraph(&g, Heuristic::Enough).mentions;
        assert_eq!(enough.len(), 2);
        let sch = schema(Variant::Shared, 3);
        assert_eq!(encode_mention_set(&sch, 6, &enough).unwrap(), g);
        assert!(all.is_superset(&gold));
    }

    #[test]
    fn split_separates_crossed_paths() {
        let s = AnnotatedSentence::from_words("a b c d e f g h")
            .with_mentions([m(&[(0, 1), (3, 4)]), m(&[(0, 2), (4, 5), (6, 7)])]);
        let sp = encode_mentions(&schema(Variant::Split, 3), &s).unwrap();
        let sh = encode_mentions(&schema(Variant::Shared, 3), &s).unwrap();
        assert_eq!(sp.project_to_shared(), sh);
        assert_eq!(decode_subgraph(&sp, Heuristic::All).mentions, s.mentions);
        assert_eq!(decode_subgraph(&sh, Heuristic::All).mentions.len(), 4);
    }

    #[test]
    fn debug_format() {
        let s = AnnotatedSentence::from_words("a").with_mentions([m(&[(0, 1)])]);
        let g = encode_mentions(&schema(Variant::Split, 2), &s).unwrap();
        let text = g.to_debug_string();
        assert!(text.contains("A(0,_,_,_) -> E(0,_,_,_)\n"));
        assert!(text.contains("T(0,0,_,1) -> B(0,0,1,1)\n"));
        assert!(text.contains("T(0,0,_,2) -> X\n"));
        assert!(text.contains("B(0,0,1,1) -> X\n"));
    }

    #[test]
    fn encoded_subgraph_lives_in_full_graph() {
        for variant in [Variant::Shared, Variant::Split] {
            let sch = schema(variant, 3);
            let g = encode_mentions(&sch, &infarctions()).unwrap();
            let full = build_full_graph(&sch, 6);
            let chosen = g.edge_choices(&full).expect("all edges exist");
            assert_eq!(chosen.iter().flatten().count(), g.edges.len());
        }
    }

    #[test]
    fn too_many_components() {
        let s = AnnotatedSentence::from_words("a b c d e").with_mentions([m(&[
            (0, 1),
            (2, 3),
            (4, 5),
        ])]);
        assert!(matches!(
            encode_mentions(&schema(Variant::Shared, 2), &s),
            Err(HyperError::TooManyComponents {
                found: 3,
                max: 2,
                ..
            })
        ));
    }
}
