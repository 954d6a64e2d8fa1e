//! The linear-chain trellis as a packed graph.

use crate::graph::{EdgeId, GraphBuilder, PackedGraph};
use crate::inference::MapResult;
use crate::tagging::{TagSequence, TagSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrellisNode {
    End,
    Start,
    /// Tag index `tag` at position `k`.
    Tag {
        k: u32,
        tag: u16,
    },
}

pub type Trellis = PackedGraph<TrellisNode>;

/// Every tag at every position; `forbid_invalid` removes transitions into
/// inside tags that do not continue a compatible tag.
pub fn build_trellis(tags: &TagSet, n: usize, forbid_invalid: bool) -> Trellis {
    assert!(n >= 1, "empty sentence");
    let mut g = GraphBuilder::new(TrellisNode::End);
    let start = g.node(TrellisNode::Start);
    let node = |k: usize, y: usize| TrellisNode::Tag {
        k: k as u32,
        tag: y as u16,
    };
    let allowed =
        |prev: Option<usize>, y: usize| !forbid_invalid || tags.transition_allowed(prev, y);
    for y in (0..tags.len()).filter(|&y| allowed(None, y)) {
        let v = g.node(node(0, y));
        g.edge(start, [v]);
    }
    for k in 0..n {
        for y in 0..tags.len() {
            let v = g.node(node(k, y));
            if k + 1 == n {
                g.edge(v, [crate::graph::SINK]);
                continue;
            }
            for y2 in (0..tags.len()).filter(|&y2| allowed(Some(y), y2)) {
                let w = g.node(node(k + 1, y2));
                g.edge(v, [w]);
            }
        }
    }
    g.finish(TrellisNode::Start)
}

/// The path of a tag sequence, or `None` if it uses a missing edge or tag.
pub fn path_edges(g: &Trellis, tags: &TagSet, seq: &TagSequence) -> Option<Vec<Option<EdgeId>>> {
    let mut chosen = vec![None; g.num_nodes()];
    let mut prev = g.root();
    for (k, tag) in seq.tags.iter().enumerate() {
        let y = tags.index_of(tag)?;
        let v = g.id(&TrellisNode::Tag {
            k: k as u32,
            tag: y as u16,
        })?;
        chosen[prev] = Some(g.find_edge(prev, &[v])?);
        prev = v;
    }
    chosen[prev] = Some(g.find_edge(prev, &[crate::graph::SINK])?);
    Some(chosen)
}

/// Reads the tag sequence off a MAP result.
pub fn map_tags(g: &Trellis, tags: &TagSet, map: &MapResult) -> TagSequence {
    let mut out = Vec::new();
    let mut v = g.root();
    while let Some(e) = map.chosen[v] {
        v = g.edge(e).children[0];
        match g.node(v) {
            TrellisNode::Tag { tag, .. } => out.push(tags.tag(*tag as usize)),
            _ => break,
        }
    }
    TagSequence::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{edge_marginals, inside_log_z, map_decode};
    use crate::tagging::TagKind;

    fn tagset() -> TagSet {
        TagSet::new(vec!["D".into()])
    }

    #[test]
    fn zero_scores_give_uniform_counts() {
        for n in 1..=4 {
            let g = build_trellis(&tagset(), n, false);
            let z = inside_log_z(&g, &vec![0.0; g.num_edges()]);
            assert!((z - n as f64 * 7f64.ln()).abs() < 1e-9);
        }
        let g = build_trellis(&tagset(), 3, false);
        let m = edge_marginals(&g, &vec![0.0; g.num_edges()]);
        for v in 0..g.num_nodes() {
            if let TrellisNode::Tag { .. } = g.node(v) {
                assert!((m.nodes[v] - 1.0 / 7.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constrained_trellis_has_fewer_paths() {
        let g = build_trellis(&tagset(), 2, true);
        let z = inside_log_z(&g, &vec![0.0; g.num_edges()]).exp();
        // 4 begin-or-O tags first, then 4 + compatible inside tags
        assert!(z < 49.0 - 0.5);
    }

    #[test]
    fn map_can_emit_invalid_sequence() {
        let ts = tagset();
        let g = build_trellis(&ts, 3, false);
        let seq = TagSequence::from_kinds(&[TagKind::O, TagKind::O, TagKind::BD], "D");
        let chosen = path_edges(&g, &ts, &seq).unwrap();
        let mut scores = vec![0.0; g.num_edges()];
        for e in chosen.into_iter().flatten() {
            scores[e] = 1.0;
        }
        let map = map_decode(&g, &scores);
        assert_eq!(map_tags(&g, &ts, &map), seq);
        assert!(!crate::tagging::is_valid_sequence(&seq));
    }
}
