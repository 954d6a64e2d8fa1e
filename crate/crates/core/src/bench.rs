//! Training cost as the number of entity types grows.

use std::time::Instant;

use serde::Serialize;

use crate::features::FeatureTemplate;
use crate::model::{GraphCache, ModelError, ModelKind, ModelSpec};
use crate::synth::{generate_synthetic, SynthConfig, SynthError};
use crate::train::{build_training_set, Objective};

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub model: ModelKind,
    pub types: usize,
    /// Mean seconds per objective-and-gradient pass.
    pub seconds: f64,
    /// `seconds` divided by the one-type time of the same model.
    pub relative: f64,
    /// Nodes and edges of the full graph for a sentence of `probe_len` tokens.
    pub nodes: usize,
    pub edges: usize,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub models: Vec<ModelKind>,
    pub types: Vec<usize>,
    pub sentences: usize,
    pub passes: usize,
    pub seed: u64,
    pub max_components: usize,
    pub probe_len: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            models: vec![ModelKind::Linear, ModelKind::Shared, ModelKind::Split],
            types: vec![1, 2, 4, 8, 16],
            sentences: 50,
            passes: 3,
            seed: 0,
            max_components: 3,
            probe_len: 20,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Times gradient passes at `w = 0` on a synthetic corpus per type count.
/// Relative times use the smallest type count as the base.
pub fn bench_types(cfg: &BenchConfig) -> Result<Vec<BenchRow>, BenchError> {
    let templates = vec![FeatureTemplate::Words { window: 1 }];
    let mut rows = Vec::new();
    for &model in &cfg.models {
        let mut base = None;
        for &types in &cfg.types {
            let synth = SynthConfig {
                seed: cfg.seed,
                sentences: cfg.sentences,
                max_components: cfg.max_components,
                ..SynthConfig::with_types(types)
            };
            let corpus = generate_synthetic(&synth)?;
            let labels = synth.labels.clone();
            let spec = ModelSpec::new(model, cfg.max_components, labels);
            let cache = GraphCache::new(&spec);
            let set = build_training_set(&spec, &templates, &cache, &corpus)?;
            let objective = Objective {
                instances: &set.instances,
                num_features: set.index.len(),
                lambda: 0.125,
            };
            let w = vec![0.0; set.index.len()];
            let start = Instant::now();
            for _ in 0..cfg.passes.max(1) {
                std::hint::black_box(objective.evaluate(&w));
            }
            let seconds = start.elapsed().as_secs_f64() / cfg.passes.max(1) as f64;
            let base = *base.get_or_insert(seconds);
            let probe = cache.get(cfg.probe_len);
            rows.push(BenchRow {
                model,
                types,
                seconds,
                relative: seconds / base,
                nodes: probe.num_nodes(),
                edges: probe.num_edges(),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_row_is_one_and_edges_scale() {
        let cfg = BenchConfig {
            types: vec![1, 2, 4],
            sentences: 5,
            passes: 1,
            ..BenchConfig::default()
        };
        let rows = bench_types(&cfg).unwrap();
        assert_eq!(rows.len(), 9);
        for model in &cfg.models {
            let r: Vec<&BenchRow> = rows.iter().filter(|r| r.model == *model).collect();
            assert_eq!(r[0].relative, 1.0);
            let growth = r[2].edges as f64 / r[0].edges as f64;
            match model {
                // transitions grow with the square of the tag count
                ModelKind::Linear => assert!(growth > 10.0, "{growth}"),
                _ => assert!((3.5..=4.5).contains(&growth), "{growth}"),
            }
        }
    }
}
