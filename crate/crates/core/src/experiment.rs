//! How much each model loses when decoding its own gold encoding.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::decode::{Decoded, Heuristic};
use crate::eval::{evaluate, Prf};
use crate::hypergraph::{encode_mentions, HyperDecoder, Schema};
use crate::mention::{Corpus, Mention};
use crate::model::ModelKind;
use crate::tagging::{encode_linear, LinearDecoder};

#[derive(Debug, Clone, Serialize)]
pub struct HeuristicRow {
    pub heuristic: Heuristic,
    /// Mentions produced over the whole corpus.
    pub mentions: usize,
    pub precision_error: f64,
    pub recall_error: f64,
    pub prf: Prf,
    /// Sentences whose decoding was truncated or fell back.
    pub diagnostics: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelRow {
    pub model: ModelKind,
    /// Sentences whose gold could not be encoded; they are left out of
    /// this model's rows.
    pub unencodable: usize,
    pub gold_mentions: usize,
    pub rows: Vec<HeuristicRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AmbiguityReport {
    pub sentences: usize,
    pub gold_mentions: usize,
    pub models: Vec<ModelRow>,
}

impl AmbiguityReport {
    pub fn row(&self, model: ModelKind, heuristic: Heuristic) -> Option<&HeuristicRow> {
        self.models
            .iter()
            .find(|m| m.model == model)?
            .rows
            .iter()
            .find(|r| r.heuristic == heuristic)
    }
}

fn decode_gold(
    kind: ModelKind,
    max_components: usize,
    labels: &[String],
    s: &crate::mention::AnnotatedSentence,
    h: Heuristic,
) -> Option<Decoded> {
    match kind {
        ModelKind::Linear => {
            let seq = encode_linear(s).ok()?;
            let dec = LinearDecoder {
                max_components,
                ..LinearDecoder::default()
            };
            Some(dec.decode(&seq, h))
        }
        ModelKind::Shared | ModelKind::Split => {
            let variant = kind.variant().expect("hypergraph kind");
            let schema = Schema::new(variant, max_components, labels.to_vec());
            let g = encode_mentions(&schema, s).ok()?;
            Some(HyperDecoder::default().decode(&g, h))
        }
    }
}

/// Encodes every gold structure with each model and decodes it back with
/// both heuristics.
pub fn ambiguity_experiment(
    corpus: &Corpus,
    models: &[ModelKind],
    max_components: usize,
) -> AmbiguityReport {
    let labels = corpus.labels();
    let mut rows = Vec::new();
    for &kind in models {
        let mut model_row = ModelRow {
            model: kind,
            unencodable: 0,
            gold_mentions: 0,
            rows: Vec::new(),
        };
        for h in [Heuristic::All, Heuristic::Enough] {
            let mut gold: Vec<&BTreeSet<Mention>> = Vec::new();
            let mut pred = Vec::new();
            let mut diagnostics = 0;
            let mut unencodable = 0;
            for s in &corpus.sentences {
                match decode_gold(kind, max_components, &labels, s, h) {
                    Some(d) => {
                        diagnostics += usize::from(!d.diagnostics.is_empty());
                        gold.push(&s.mentions);
                        pred.push(d.mentions);
                    }
                    None => unencodable += 1,
                }
            }
            let prf = evaluate(gold.iter().copied(), pred.iter()).expect("aligned");
            model_row.unencodable = unencodable;
            model_row.gold_mentions = prf.gold();
            model_row.rows.push(HeuristicRow {
                heuristic: h,
                mentions: prf.predicted(),
                precision_error: 1.0 - prf.precision,
                recall_error: 1.0 - prf.recall,
                prf,
                diagnostics,
            });
        }
        rows.push(model_row);
    }
    AmbiguityReport {
        sentences: corpus.len(),
        gold_mentions: corpus.num_mentions(),
        models: rows,
    }
}
