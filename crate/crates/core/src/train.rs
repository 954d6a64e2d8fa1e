//! L2-regularized conditional log-likelihood training.
//!
//! The objective is `sum_x [score(gold(x)) - log Z(x)] - lambda * |w|^2`,
//! maximized with L-BFGS from `w = 0`.

use std::sync::{Arc, Mutex};

use argmin::core::observers::{Observe, ObserverMode};
use argmin::core::{CostFunction, Error as ArgminError, Executor, Gradient, State, KV};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decode::Heuristic;
use crate::eval::{evaluate, Prf};
use crate::features::{FeatureIndex, FeatureTemplate};
use crate::inference::edge_marginals;
use crate::mention::Corpus;
use crate::model::{
    prepare, prepare_frozen, Graph, GraphCache, Instance, Model, ModelError, ModelSpec, TrainMeta,
    MODEL_VERSION,
};

/// Regularization grid for model selection.
pub const LAMBDA_GRID: [f64; 5] = [0.125, 0.25, 0.5, 1.0, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    /// Gradient-norm stopping tolerance.
    pub tolerance: f64,
    pub max_iters: u64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Recorded with the model; training itself draws no random numbers.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.125,
            tolerance: 1e-6,
            max_iters: 500,
            workers: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training sentence has an encodable gold structure")]
    NoEncodableInstances,
    #[error("lambda must be non-negative, got {0}")]
    NegativeLambda(f64),
    #[error("objective became non-finite")]
    NonFinite,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("optimizer failed: {0}")]
    Optimizer(String),
}

/// Objective value and gradient for a fixed instance set.
#[derive(Debug)]
pub struct Objective<'a> {
    pub instances: &'a [Instance],
    pub num_features: usize,
    pub lambda: f64,
}

/// Gold score minus log Z, and the per-edge gradient coefficients
/// `gold count - expected count`.
fn instance_terms(inst: &Instance, w: &[f64]) -> (f64, Vec<f64>) {
    let scores = inst.scores(w);
    let marg = match &inst.graph {
        Graph::Trellis(g) => edge_marginals(g.as_ref(), &scores),
        Graph::Hyper(g) => edge_marginals(g.as_ref(), &scores),
    };
    let mut coef: Vec<f64> = marg.edges.iter().map(|m| -m).collect();
    let mut gold = 0.0;
    for &(e, mult) in &inst.gold {
        gold += mult * scores[e];
        coef[e] += mult;
    }
    (gold - marg.log_z, coef)
}

impl Objective<'_> {
    /// Log-likelihood and its gradient. Instances are evaluated in parallel
    /// and combined in instance order.
    pub fn evaluate(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let terms: Vec<(f64, Vec<f64>)> = self
            .instances
            .par_iter()
            .map(|inst| instance_terms(inst, w))
            .collect();
        let mut value = 0.0;
        let mut grad = vec![0.0; self.num_features];
        for (inst, (v, coef)) in self.instances.iter().zip(&terms) {
            value += v;
            for (feats, &c) in inst.features.iter().zip(coef) {
                if c == 0.0 {
                    continue;
                }
                for &f in feats {
                    grad[f as usize] += c;
                }
            }
        }
        value -= self.lambda * w.iter().map(|x| x * x).sum::<f64>();
        for (g, x) in grad.iter_mut().zip(w) {
            *g -= 2.0 * self.lambda * x;
        }
        (value, grad)
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        self.evaluate(w).0
    }
}

/// Point, cost and negated gradient.
type Evaluation = (Vec<f64>, f64, Vec<f64>);
/// Lowest cost seen and its point.
type BestPoint = Arc<Mutex<Option<(f64, Vec<f64>)>>>;

/// Caches the last evaluation, since argmin asks for cost and gradient
/// separately at the same point.
struct Problem<'a> {
    objective: Objective<'a>,
    last: Mutex<Option<Evaluation>>,
    best: BestPoint,
}

impl Problem<'_> {
    fn at(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let mut last = self.last.lock().unwrap();
        if let Some((p, c, g)) = last.as_ref() {
            if p.as_slice() == w {
                return (*c, g.clone());
            }
        }
        let (value, grad) = self.objective.evaluate(w);
        let cost = -value;
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut best = self.best.lock().unwrap();
        if cost.is_finite() && best.as_ref().is_none_or(|(c, _)| cost < *c) {
            *best = Some((cost, w.to_vec()));
        }
        *last = Some((w.to_vec(), cost, neg.clone()));
        (cost, neg)
    }
}

impl CostFunction for Problem<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> Result<Self::Output, ArgminError> {
        Ok(self.at(p).0)
    }
}

impl Gradient for Problem<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, p: &Self::Param) -> Result<Self::Gradient, ArgminError> {
        Ok(self.at(p).1)
    }
}

#[derive(Clone, Default)]
struct Trace(Arc<Mutex<Vec<f64>>>);

impl<I: State<Float = f64>> Observe<I> for Trace {
    fn observe_iter(&mut self, state: &I, _kv: &KV) -> Result<(), ArgminError> {
        let objective = -state.get_cost();
        debug!("iteration {}: objective {objective:.6}", state.get_iter());
        self.0.lock().unwrap().push(objective);
        Ok(())
    }
}

/// Prepared training data: feature index plus instances.
pub struct TrainingSet {
    pub index: FeatureIndex,
    pub instances: Vec<Instance>,
    pub skipped: usize,
}

/// Builds the feature index from all full-graph edges of the training
/// sentences and prepares their instances. Sentences whose gold structure
/// cannot be encoded are skipped and counted.
pub fn build_training_set(
    spec: &ModelSpec,
    templates: &[FeatureTemplate],
    cache: &GraphCache,
    corpus: &Corpus,
) -> Result<TrainingSet, ModelError> {
    let mut index = FeatureIndex::new();
    let mut instances = Vec::new();
    let mut skipped = 0;
    for (i, s) in corpus.sentences.iter().enumerate() {
        if s.is_empty() {
            continue;
        }
        match prepare(spec, templates, cache, &mut index, s, true) {
            Ok(inst) => instances.push(inst),
            Err(ModelError::Unencodable(why)) => {
                warn!("skipping sentence {i}: {why}");
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    index.freeze();
    Ok(TrainingSet {
        index,
        instances,
        skipped,
    })
}

fn optimize(
    objective: Objective<'_>,
    config: &TrainConfig,
) -> Result<(Vec<f64>, u64, Vec<f64>), TrainError> {
    let n = objective.num_features;
    let best: BestPoint = Arc::new(Mutex::new(None));
    let problem = Problem {
        objective,
        last: Mutex::new(None),
        best: best.clone(),
    };
    let trace = Trace::default();
    let solver = LBFGS::new(MoreThuenteLineSearch::new(), 7)
        .with_tolerance_grad(config.tolerance)
        .map_err(|e| TrainError::Optimizer(e.to_string()))?
        .with_tolerance_cost(0.0)
        .map_err(|e| TrainError::Optimizer(e.to_string()))?;
    let result = Executor::new(problem, solver)
        .configure(|s| s.param(vec![0.0; n]).max_iters(config.max_iters))
        .add_observer(trace.clone(), ObserverMode::Always)
        .run();
    let iterations;
    let weights = match result {
        Ok(res) => {
            let state = res.state();
            iterations = state.get_iter();
            info!(
                "optimizer stopped after {iterations} iterations: {}",
                state.get_termination_status()
            );
            state
                .get_best_param()
                .cloned()
                .unwrap_or_else(|| vec![0.0; n])
        }
        Err(e) => {
            // line searches can fail near the optimum; keep the best point seen
            warn!("optimizer stopped early: {e}");
            iterations = trace.0.lock().unwrap().len() as u64;
            best.lock()
                .unwrap()
                .take()
                .map(|(_, w)| w)
                .ok_or_else(|| TrainError::Optimizer(e.to_string()))?
        }
    };
    let trace = trace.0.lock().unwrap().clone();
    Ok((weights, iterations, trace))
}

/// Trains a model from `w = 0`.
pub fn train(
    corpus: &Corpus,
    spec: &ModelSpec,
    templates: &[FeatureTemplate],
    config: &TrainConfig,
) -> Result<Model, TrainError> {
    if config.lambda.is_nan() || config.lambda < 0.0 {
        return Err(TrainError::NegativeLambda(config.lambda));
    }
    let run = || -> Result<Model, TrainError> {
        let cache = GraphCache::new(spec);
        let set = build_training_set(spec, templates, &cache, corpus)?;
        if set.instances.is_empty() {
            return Err(TrainError::NoEncodableInstances);
        }
        info!(
            "{} instances, {} skipped, {} features",
            set.instances.len(),
            set.skipped,
            set.index.len()
        );
        let objective = Objective {
            instances: &set.instances,
            num_features: set.index.len(),
            lambda: config.lambda,
        };
        let (weights, iterations, trace) = optimize(objective, config)?;
        let final_objective = Objective {
            instances: &set.instances,
            num_features: set.index.len(),
            lambda: config.lambda,
        }
        .value(&weights);
        if !final_objective.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(TrainError::NonFinite);
        }
        Ok(Model {
            version: MODEL_VERSION,
            spec: spec.clone(),
            templates: templates.to_vec(),
            index: set.index,
            weights,
            meta: TrainMeta {
                lambda: config.lambda,
                iterations,
                objective: final_objective,
                skipped: set.skipped,
                trace,
            },
        })
    };
    match config.workers {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| TrainError::Optimizer(e.to_string()))?
            .install(run),
        None => run(),
    }
}

/// Regularized log-likelihood of `corpus` under `model`.
pub fn log_likelihood(model: &Model, corpus: &Corpus) -> Result<f64, ModelError> {
    let (instances, _) = frozen_instances(model, corpus)?;
    Ok(Objective {
        instances: &instances,
        num_features: model.weights.len(),
        lambda: model.meta.lambda,
    }
    .value(&model.weights))
}

/// Gradient of [`log_likelihood`] with respect to the weights.
pub fn gradient(model: &Model, corpus: &Corpus) -> Result<Vec<f64>, ModelError> {
    let (instances, _) = frozen_instances(model, corpus)?;
    Ok(Objective {
        instances: &instances,
        num_features: model.weights.len(),
        lambda: model.meta.lambda,
    }
    .evaluate(&model.weights)
    .1)
}

/// Instances against the model's frozen index, with gold edges; returns
/// the number of skipped sentences as well.
pub fn frozen_instances(
    model: &Model,
    corpus: &Corpus,
) -> Result<(Vec<Instance>, usize), ModelError> {
    let cache = GraphCache::new(&model.spec);
    let mut out = Vec::new();
    let mut skipped = 0;
    for s in corpus.sentences.iter().filter(|s| !s.is_empty()) {
        let gold = match crate::model::gold_edges(&model.spec, &cache.get(s.len()), s) {
            Ok(g) => g,
            Err(ModelError::Unencodable(_)) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut inst = prepare_frozen(&model.spec, &model.templates, &cache, &model.index, s)?;
        inst.gold = gold;
        out.push(inst);
    }
    Ok((out, skipped))
}

/// Predicts every sentence of `corpus`.
pub fn predict_corpus(
    model: &Model,
    corpus: &Corpus,
    heuristic: Heuristic,
) -> Result<Vec<crate::model::Prediction>, ModelError> {
    let cache = GraphCache::new(&model.spec);
    corpus
        .sentences
        .par_iter()
        .map(|s| model.predict(&cache, s, heuristic))
        .collect()
}

/// Mention-level score of `model` on `corpus`.
pub fn score(model: &Model, corpus: &Corpus, heuristic: Heuristic) -> Result<Prf, ModelError> {
    let preds = predict_corpus(model, corpus, heuristic)?;
    let pred_sets: Vec<_> = preds.into_iter().map(|p| p.decoded.mentions).collect();
    Ok(evaluate(
        corpus.sentences.iter().map(|s| &s.mentions),
        pred_sets.iter(),
    )
    .expect("aligned by construction"))
}

/// Trains one model per `lambda` and keeps the one with the best dev F1
/// under ENOUGH decoding; ties go to the smaller `lambda`.
pub fn select_lambda(
    train_corpus: &Corpus,
    dev: &Corpus,
    spec: &ModelSpec,
    templates: &[FeatureTemplate],
    config: &TrainConfig,
    lambdas: &[f64],
) -> Result<(Model, Vec<(f64, Prf)>), TrainError> {
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(Model, f64)> = None;
    let mut report = Vec::new();
    for lambda in sorted {
        let cfg = TrainConfig {
            lambda,
            ..config.clone()
        };
        let model = train(train_corpus, spec, templates, &cfg)?;
        let prf = score(&model, dev, Heuristic::Enough)?;
        info!("lambda {lambda}: dev F1 {:.4}", prf.f1);
        report.push((lambda, prf));
        if best.as_ref().is_none_or(|(_, f)| prf.f1 > *f) {
            best = Some((model, prf.f1));
        }
    }
    let (model, _) = best.ok_or(TrainError::NoEncodableInstances)?;
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mention::{AnnotatedSentence, Mention, Span};
    use crate::model::ModelKind;

    fn corpus() -> Corpus {
        let s = AnnotatedSentence::from_words("pain in left arm")
            .with_mentions([Mention::contiguous("D", Span::new(0, 1).unwrap())]);
        Corpus::new(vec![s])
    }

    fn templates() -> Vec<FeatureTemplate> {
        vec![FeatureTemplate::Words { window: 1 }]
    }

    #[test]
    fn zero_weights_trellis_likelihood() {
        let spec = ModelSpec::new(ModelKind::Linear, 3, vec!["D".into()]);
        let cache = GraphCache::new(&spec);
        let set = build_training_set(&spec, &templates(), &cache, &corpus()).unwrap();
        let obj = Objective {
            instances: &set.instances,
            num_features: set.index.len(),
            lambda: 3.0,
        };
        let v = obj.value(&vec![0.0; set.index.len()]);
        assert!((v + 4.0 * 7f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn huge_lambda_keeps_weights_small() {
        let spec = ModelSpec::new(ModelKind::Shared, 3, vec!["D".into()]);
        let cfg = TrainConfig {
            lambda: 1e6,
            ..TrainConfig::default()
        };
        let model = train(&corpus(), &spec, &templates(), &cfg).unwrap();
        assert!(model.weights.iter().all(|w| w.abs() < 1e-4));
    }

    #[test]
    fn negative_lambda_rejected() {
        let spec = ModelSpec::new(ModelKind::Shared, 3, vec!["D".into()]);
        let cfg = TrainConfig {
            lambda: -1.0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&corpus(), &spec, &templates(), &cfg),
            Err(TrainError::NegativeLambda(_))
        ));
    }
}
