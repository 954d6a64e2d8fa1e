//! Model families, per-sentence instances and prediction.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decode::{Decoded, Heuristic};
use crate::features::{
    feature_strings, observations, EdgeContext, FeatureError, FeatureId, FeatureIndex,
    FeatureTemplate,
};
use crate::graph::{EdgeId, NodeId, PackedGraph};
use crate::hypergraph::{
    build_full_graph, encode_mentions, EncodedSubgraph, HyperDecoder, HyperGraph, NodeKind, Schema,
    Variant,
};
use crate::inference::{map_decode, MapResult};
use crate::mention::AnnotatedSentence;
use crate::tagging::{encode_linear, LinearDecoder, TagSet};
use crate::trellis::{build_trellis, map_tags, path_edges, Trellis, TrellisNode};

/// Version written to and required from model files.
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Shared,
    Split,
}

impl ModelKind {
    /// Hypergraph variant, `None` for the linear model.
    pub fn variant(self) -> Option<Variant> {
        match self {
            ModelKind::Linear => None,
            ModelKind::Shared => Some(Variant::Shared),
            ModelKind::Split => Some(Variant::Split),
        }
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(ModelKind::Linear),
            "shared" => Ok(ModelKind::Shared),
            "split" => Ok(ModelKind::Split),
            other => Err(format!(
                "unknown model '{other}' (expected linear|shared|split)"
            )),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Linear => "linear",
            ModelKind::Shared => "shared",
            ModelKind::Split => "split",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub max_components: usize,
    pub labels: Vec<String>,
    /// Trellis only: drop transitions into incompatible inside tags.
    #[serde(default)]
    pub forbid_invalid: bool,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, max_components: usize, labels: Vec<String>) -> Self {
        ModelSpec {
            kind,
            max_components,
            labels,
            forbid_invalid: false,
        }
    }

    pub fn tagset(&self) -> TagSet {
        TagSet::new(self.labels.clone())
    }

    pub fn schema(&self) -> Option<Schema> {
        let variant = self.kind.variant()?;
        Some(Schema::new(
            variant,
            self.max_components,
            self.labels.clone(),
        ))
    }
}

/// The full structure an instance is scored over.
#[derive(Debug, Clone)]
pub enum Graph {
    Trellis(Arc<Trellis>),
    Hyper(Arc<HyperGraph>),
}

impl Graph {
    pub fn num_nodes(&self) -> usize {
        match self {
            Graph::Trellis(g) => g.num_nodes(),
            Graph::Hyper(g) => g.num_nodes(),
        }
    }

    pub fn num_edges(&self) -> usize {
        match self {
            Graph::Trellis(g) => g.num_edges(),
            Graph::Hyper(g) => g.num_edges(),
        }
    }
}

/// Full graphs depend only on the spec and sentence length.
#[derive(Debug)]
pub struct GraphCache {
    spec: ModelSpec,
    graphs: Mutex<HashMap<usize, Graph>>,
}

impl GraphCache {
    pub fn new(spec: &ModelSpec) -> Self {
        GraphCache {
            spec: spec.clone(),
            graphs: Mutex::new(HashMap::new()),
        }
    }

    pub fn get(&self, n: usize) -> Graph {
        if let Some(g) = self.graphs.lock().unwrap().get(&n) {
            return g.clone();
        }
        let g = match self.spec.schema() {
            None => Graph::Trellis(Arc::new(build_trellis(
                &self.spec.tagset(),
                n,
                self.spec.forbid_invalid,
            ))),
            Some(schema) => Graph::Hyper(Arc::new(build_full_graph(&schema, n))),
        };
        self.graphs.lock().unwrap().entry(n).or_insert(g).clone()
    }
}

fn trellis_contexts(g: &Trellis, tags: &TagSet, e: EdgeId) -> Vec<EdgeContext> {
    let edge = g.edge(e);
    let name = |v: NodeId| match g.node(v) {
        TrellisNode::Tag { tag, .. } => tags.tag(*tag as usize).to_string(),
        TrellisNode::Start => "start".to_owned(),
        TrellisNode::End => "end".to_owned(),
    };
    let child = edge.children[0];
    let transition = EdgeContext::global(format!("{}>{}", name(edge.parent), name(child)));
    match g.node(child) {
        TrellisNode::Tag { k, .. } => vec![EdgeContext::at(*k as usize, name(child)), transition],
        _ => vec![transition],
    }
}

fn hyper_contexts(g: &HyperGraph, labels: &[String], e: EdgeId) -> Vec<EdgeContext> {
    let edge = g.edge(e);
    let p = g.node(edge.parent);
    let prefix = match p.kind {
        NodeKind::A | NodeKind::E | NodeKind::X => return Vec::new(),
        NodeKind::T => format!("T:{}", labels[p.t as usize]),
        NodeKind::B => format!("B:{}:{}", labels[p.t as usize], p.i),
        NodeKind::O => format!("O:{}:{}", labels[p.t as usize], p.i),
    };
    let j = if p.j > 0 {
        format!(":{}", p.j)
    } else {
        String::new()
    };
    let kinds: Vec<&str> = edge
        .children
        .iter()
        .map(|&c| match g.node(c).kind {
            NodeKind::B => "B",
            NodeKind::O => "O",
            NodeKind::X => "X",
            _ => "?",
        })
        .collect();
    vec![EdgeContext::at(
        p.pos(),
        format!("{prefix}{j}>{}", kinds.join("+")),
    )]
}

/// Feature contexts of every edge of `graph`.
pub fn edge_contexts(spec: &ModelSpec, graph: &Graph) -> Vec<Vec<EdgeContext>> {
    match graph {
        Graph::Trellis(g) => {
            let tags = spec.tagset();
            (0..g.num_edges())
                .map(|e| trellis_contexts(g, &tags, e))
                .collect()
        }
        Graph::Hyper(g) => (0..g.num_edges())
            .map(|e| hyper_contexts(g, &spec.labels, e))
            .collect(),
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("gold structure not encodable: {0}")]
    Unencodable(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Format(#[from] serde_json::Error),
    #[error("model file version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
}

/// A sentence prepared for scoring.
#[derive(Debug, Clone)]
pub struct Instance {
    pub n: usize,
    pub graph: Graph,
    /// Feature ids per edge.
    pub features: Vec<Vec<FeatureId>>,
    /// Edges of the gold structure with their occurrence counts in its
    /// tree unrolling.
    pub gold: Vec<(EdgeId, f64)>,
}

impl Instance {
    pub fn scores(&self, w: &[f64]) -> Vec<f64> {
        self.features
            .iter()
            .map(|fs| fs.iter().map(|&f| w[f as usize]).sum())
            .collect()
    }
}

fn gold_from_choices<N: Clone + Eq + std::hash::Hash>(
    g: &PackedGraph<N>,
    chosen: &[Option<EdgeId>],
) -> Vec<(EdgeId, f64)> {
    let mult = g.multiplicities(chosen);
    let mut gold: Vec<(EdgeId, f64)> = chosen
        .iter()
        .enumerate()
        .filter_map(|(v, e)| e.map(|e| (e, mult[v])))
        .filter(|&(_, m)| m > 0.0)
        .collect();
    gold.sort_unstable_by_key(|&(e, _)| e);
    gold
}

/// Gold edges of a sentence in `graph`.
pub fn gold_edges(
    spec: &ModelSpec,
    graph: &Graph,
    s: &AnnotatedSentence,
) -> Result<Vec<(EdgeId, f64)>, ModelError> {
    match graph {
        Graph::Trellis(g) => {
            let seq = encode_linear(s).map_err(|e| ModelError::Unencodable(e.to_string()))?;
            let chosen = path_edges(g, &spec.tagset(), &seq)
                .ok_or_else(|| ModelError::Unencodable("tag path not in trellis".into()))?;
            Ok(gold_from_choices(g, &chosen))
        }
        Graph::Hyper(g) => {
            let schema = spec.schema().expect("hypergraph spec");
            let sub =
                encode_mentions(&schema, s).map_err(|e| ModelError::Unencodable(e.to_string()))?;
            let chosen = sub
                .edge_choices(g)
                .ok_or_else(|| ModelError::Unencodable("subgraph not in full graph".into()))?;
            Ok(gold_from_choices(g, &chosen))
        }
    }
}

/// Builds an instance, adding new features to `index` unless it is frozen.
/// With `with_gold` false the gold list is left empty.
pub fn prepare(
    spec: &ModelSpec,
    templates: &[FeatureTemplate],
    cache: &GraphCache,
    index: &mut FeatureIndex,
    s: &AnnotatedSentence,
    with_gold: bool,
) -> Result<Instance, ModelError> {
    let graph = cache.get(s.len());
    let gold = if with_gold {
        gold_edges(spec, &graph, s)?
    } else {
        Vec::new()
    };
    let obs = observations(s, templates)?;
    let features = edge_contexts(spec, &graph)
        .iter()
        .map(|ctx| {
            feature_strings(ctx, &obs)
                .iter()
                .filter_map(|f| index.intern(f))
                .collect()
        })
        .collect();
    Ok(Instance {
        n: s.len(),
        graph,
        features,
        gold,
    })
}

/// Read-only variant of [`prepare`] for a frozen index.
pub fn prepare_frozen(
    spec: &ModelSpec,
    templates: &[FeatureTemplate],
    cache: &GraphCache,
    index: &FeatureIndex,
    s: &AnnotatedSentence,
) -> Result<Instance, ModelError> {
    let graph = cache.get(s.len());
    let obs = observations(s, templates)?;
    let features = edge_contexts(spec, &graph)
        .iter()
        .map(|ctx| index.lookup(&feature_strings(ctx, &obs)))
        .collect();
    Ok(Instance {
        n: s.len(),
        graph,
        features,
        gold: Vec::new(),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub lambda: f64,
    pub iterations: u64,
    pub objective: f64,
    pub skipped: usize,
    /// Objective after each optimizer iteration.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub version: u32,
    pub spec: ModelSpec,
    pub templates: Vec<FeatureTemplate>,
    pub index: FeatureIndex,
    pub weights: Vec<f64>,
    pub meta: TrainMeta,
}

/// A prediction: the decoded mentions and the raw structure.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub decoded: Decoded,
    pub structure: Structure,
}

#[derive(Debug, Clone)]
pub enum Structure {
    Tags(crate::tagging::TagSequence),
    Subgraph(EncodedSubgraph),
}

impl Model {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model, ModelError> {
        let value: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        let found = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != MODEL_VERSION {
            return Err(ModelError::Version {
                found,
                expected: MODEL_VERSION,
            });
        }
        Ok(serde_json::from_value(value)?)
    }

    /// MAP structure of a prepared instance, decoded into mentions.
    pub fn predict_instance(&self, inst: &Instance, heuristic: Heuristic) -> Prediction {
        let scores = inst.scores(&self.weights);
        match &inst.graph {
            Graph::Trellis(g) => {
                let map = map_decode(g.as_ref(), &scores);
                let seq = map_tags(g, &self.spec.tagset(), &map);
                let decoder = LinearDecoder {
                    max_components: self.spec.max_components,
                    ..LinearDecoder::default()
                };
                Prediction {
                    decoded: decoder.decode(&seq, heuristic),
                    structure: Structure::Tags(seq),
                }
            }
            Graph::Hyper(g) => {
                let map: MapResult = map_decode(g.as_ref(), &scores);
                let schema = self.spec.schema().expect("hypergraph spec");
                let sub = EncodedSubgraph::from_map(&schema, inst.n, g, &map);
                Prediction {
                    decoded: HyperDecoder::default().decode(&sub, heuristic),
                    structure: Structure::Subgraph(sub),
                }
            }
        }
    }

    pub fn predict(
        &self,
        cache: &GraphCache,
        s: &AnnotatedSentence,
        heuristic: Heuristic,
    ) -> Result<Prediction, ModelError> {
        if s.is_empty() {
            return Ok(Prediction {
                decoded: Decoded::default(),
                structure: Structure::Tags(Default::default()),
            });
        }
        let inst = prepare_frozen(&self.spec, &self.templates, cache, &self.index, s)?;
        Ok(self.predict_instance(&inst, heuristic))
    }
}
