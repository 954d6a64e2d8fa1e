//! Packed directed acyclic hypergraphs shared by the trellis and the mention
//! hypergraph.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use smallvec::SmallVec;

pub type NodeId = usize;
pub type EdgeId = usize;

/// The sink is always node 0.
pub const SINK: NodeId = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hyperedge {
    pub parent: NodeId,
    /// Sorted, duplicate-free.
    pub children: SmallVec<[NodeId; 4]>,
}

/// A DAG in which every node reaches the sink and is reachable from the root.
///
/// Outgoing edges of a node are sorted by child list, so an edge touching the
/// sink comes first.
#[derive(Debug, Clone)]
pub struct PackedGraph<N> {
    nodes: Vec<N>,
    ids: HashMap<N, NodeId>,
    edges: Vec<Hyperedge>,
    out: Vec<Vec<EdgeId>>,
    order: Vec<NodeId>,
    root: NodeId,
}

impl<N: Clone + Eq + Hash> PackedGraph<N> {
    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: NodeId) -> &N {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[N] {
        &self.nodes
    }

    pub fn id(&self, node: &N) -> Option<NodeId> {
        self.ids.get(node).copied()
    }

    pub fn edge(&self, e: EdgeId) -> &Hyperedge {
        &self.edges[e]
    }

    pub fn edges(&self) -> &[Hyperedge] {
        &self.edges
    }

    pub fn outgoing(&self, v: NodeId) -> &[EdgeId] {
        &self.out[v]
    }

    /// Children before parents; starts with the sink, ends with the root.
    pub fn topological(&self) -> &[NodeId] {
        &self.order
    }

    /// The edge from `parent` with exactly `children` (any order).
    pub fn find_edge(&self, parent: NodeId, children: &[NodeId]) -> Option<EdgeId> {
        let mut wanted: SmallVec<[NodeId; 4]> = children.iter().copied().collect();
        wanted.sort_unstable();
        wanted.dedup();
        self.out[parent]
            .iter()
            .copied()
            .find(|&e| self.edges[e].children == wanted)
    }

    /// How many times each node occurs in the tree unrolling of a
    /// sub-structure with one chosen edge per node (`chosen[v]`).
    pub fn multiplicities(&self, chosen: &[Option<EdgeId>]) -> Vec<f64> {
        let mut mult = vec![0.0; self.nodes.len()];
        mult[self.root] = 1.0;
        for &v in self.order.iter().rev() {
            if mult[v] == 0.0 {
                continue;
            }
            if let Some(e) = chosen[v] {
                for &c in &self.edges[e].children {
                    mult[c] += mult[v];
                }
            }
        }
        mult
    }
}

/// Accumulates nodes and edges, then prunes and freezes them.
#[derive(Debug, Clone)]
pub struct GraphBuilder<N> {
    nodes: Vec<N>,
    ids: HashMap<N, NodeId>,
    edges: Vec<Hyperedge>,
}

impl<N: Clone + Eq + Hash> GraphBuilder<N> {
    pub fn new(sink: N) -> Self {
        let mut b = GraphBuilder {
            nodes: Vec::new(),
            ids: HashMap::new(),
            edges: Vec::new(),
        };
        b.node(sink);
        b
    }

    /// Returns the id of `node`, adding it if new.
    pub fn node(&mut self, node: N) -> NodeId {
        if let Some(&id) = self.ids.get(&node) {
            return id;
        }
        let id = self.nodes.len();
        self.ids.insert(node.clone(), id);
        self.nodes.push(node);
        id
    }

    pub fn edge(&mut self, parent: NodeId, children: impl IntoIterator<Item = NodeId>) {
        let mut children: SmallVec<[NodeId; 4]> = children.into_iter().collect();
        children.sort_unstable();
        children.dedup();
        assert!(!children.is_empty(), "hyperedge without children");
        self.edges.push(Hyperedge { parent, children });
    }

    /// Drops nodes that cannot reach the sink (and edges into them), then
    /// nodes unreachable from `root`, and renumbers densely.
    pub fn finish(self, root: N) -> PackedGraph<N> {
        let n = self.nodes.len();
        let root_id = self.ids[&root];
        let mut out: Vec<Vec<EdgeId>> = vec![Vec::new(); n];
        let mut incoming: Vec<Vec<EdgeId>> = vec![Vec::new(); n];
        for (e, edge) in self.edges.iter().enumerate() {
            out[edge.parent].push(e);
            for &c in &edge.children {
                incoming[c].push(e);
            }
        }
        // an edge is alive when all its children are alive; a node is alive
        // when it is the sink or has a live edge
        let mut dead_children: Vec<usize> = self.edges.iter().map(|e| e.children.len()).collect();
        let mut alive = vec![false; n];
        let mut edge_alive = vec![false; self.edges.len()];
        let mut stack = vec![SINK];
        alive[SINK] = true;
        while let Some(v) = stack.pop() {
            for &e in &incoming[v] {
                dead_children[e] -= 1;
                if dead_children[e] == 0 {
                    edge_alive[e] = true;
                    let p = self.edges[e].parent;
                    if !alive[p] {
                        alive[p] = true;
                        stack.push(p);
                    }
                }
            }
        }
        let mut reached = vec![false; n];
        if alive[root_id] {
            let mut stack = vec![root_id];
            reached[root_id] = true;
            while let Some(v) = stack.pop() {
                for &e in &out[v] {
                    if !edge_alive[e] {
                        continue;
                    }
                    for &c in &self.edges[e].children {
                        if !reached[c] {
                            reached[c] = true;
                            stack.push(c);
                        }
                    }
                }
            }
        }
        reached[SINK] = true;
        let mut remap = vec![usize::MAX; n];
        let mut nodes = Vec::new();
        let mut ids = HashMap::new();
        for (old, node) in self.nodes.into_iter().enumerate() {
            if reached[old] {
                remap[old] = nodes.len();
                ids.insert(node.clone(), nodes.len());
                nodes.push(node);
            }
        }
        let mut edges = Vec::new();
        let mut new_out: Vec<Vec<EdgeId>> = vec![Vec::new(); nodes.len()];
        let mut seen = HashSet::new();
        for (e, edge) in self.edges.into_iter().enumerate() {
            if !edge_alive[e] || !reached[edge.parent] {
                continue;
            }
            let mut children: SmallVec<[NodeId; 4]> =
                edge.children.iter().map(|&c| remap[c]).collect();
            children.sort_unstable();
            if !seen.insert((edge.parent, children.clone())) {
                continue;
            }
            new_out[remap[edge.parent]].push(edges.len());
            edges.push(Hyperedge {
                parent: remap[edge.parent],
                children,
            });
        }
        for list in &mut new_out {
            list.sort_by(|&a, &b| edges[a].children.cmp(&edges[b].children));
        }
        let root = if alive[root_id] { remap[root_id] } else { SINK };
        let order = topological_order(nodes.len(), root, &new_out, &edges);
        PackedGraph {
            nodes,
            ids,
            edges,
            out: new_out,
            order,
            root,
        }
    }
}

fn topological_order(
    n: usize,
    root: NodeId,
    out: &[Vec<EdgeId>],
    edges: &[Hyperedge],
) -> Vec<NodeId> {
    let mut state = vec![0u8; n];
    let mut order = Vec::with_capacity(n);
    let mut stack: Vec<(NodeId, usize, usize)> = vec![(root, 0, 0)];
    state[root] = 1;
    while let Some(top) = stack.len().checked_sub(1) {
        let (v, ei, ci) = stack[top];
        if ei == out[v].len() {
            state[v] = 2;
            order.push(v);
            stack.pop();
            continue;
        }
        let edge = &edges[out[v][ei]];
        if ci == edge.children.len() {
            stack[top] = (v, ei + 1, 0);
            continue;
        }
        let c = edge.children[ci];
        stack[top].2 += 1;
        match state[c] {
            0 => {
                state[c] = 1;
                stack.push((c, 0, 0));
            }
            1 => panic!("cycle in packed graph"),
            _ => {}
        }
    }
    if state[SINK] == 0 {
        order.insert(0, SINK);
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prunes_dead_and_unreachable_nodes() {
        let mut b = GraphBuilder::new("x");
        let r = b.node("r");
        let a = b.node("a");
        let dead = b.node("dead");
        let orphan = b.node("orphan");
        b.edge(r, [a]);
        b.edge(r, [a, dead]);
        b.edge(a, [SINK]);
        b.edge(orphan, [SINK]);
        let g = b.finish("r");
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.num_edges(), 2);
        assert!(g.id(&"dead").is_none());
        assert!(g.id(&"orphan").is_none());
        assert_eq!(g.topological().first(), Some(&SINK));
        assert_eq!(g.topological().last(), Some(&g.root()));
    }

    #[test]
    fn sink_edges_sort_first() {
        let mut b = GraphBuilder::new("x");
        let r = b.node("r");
        let a = b.node("a");
        b.edge(r, [a]);
        b.edge(r, [a, SINK]);
        b.edge(r, [SINK]);
        b.edge(a, [SINK]);
        let g = b.finish("r");
        let first = g.outgoing(g.root())[0];
        assert_eq!(g.edge(first).children.as_slice(), &[SINK]);
        assert!(g
            .find_edge(g.root(), &[g.id(&"a").unwrap(), SINK])
            .is_some());
    }

    #[test]
    fn multiplicities_count_shared_nodes_twice() {
        let mut b = GraphBuilder::new("x");
        let r = b.node("r");
        let a = b.node("a");
        let c = b.node("c");
        let s = b.node("s");
        b.edge(r, [a, c]);
        b.edge(a, [s]);
        b.edge(c, [s]);
        b.edge(s, [SINK]);
        let g = b.finish("r");
        let chosen: Vec<Option<EdgeId>> = (0..g.num_nodes())
            .map(|v| g.outgoing(v).first().copied())
            .collect();
        let mult = g.multiplicities(&chosen);
        assert_eq!(mult[g.id(&"s").unwrap()], 2.0);
        assert_eq!(mult[SINK], 2.0);
    }
}
