//! Exact-match mention scoring.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::mention::Mention;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Prf {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = if tp + fp == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            1.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        Prf {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }

    pub fn predicted(&self) -> usize {
        self.tp + self.fp
    }

    pub fn gold(&self) -> usize {
        self.tp + self.fn_
    }
}

/// Harmonic mean, 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("gold has {gold} sentences but predictions have {pred}")]
pub struct LengthMismatch {
    pub gold: usize,
    pub pred: usize,
}

/// Scores per-sentence predictions against gold mention sets.
pub fn evaluate<'a>(
    gold: impl ExactSizeIterator<Item = &'a BTreeSet<Mention>>,
    pred: impl ExactSizeIterator<Item = &'a BTreeSet<Mention>>,
) -> Result<Prf, LengthMismatch> {
    if gold.len() != pred.len() {
        return Err(LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (g, p) in gold.zip(pred) {
        let hit = g.intersection(p).count();
        tp += hit;
        fp += p.len() - hit;
        fn_ += g.len() - hit;
    }
    Ok(Prf::from_counts(tp, fp, fn_))
}
