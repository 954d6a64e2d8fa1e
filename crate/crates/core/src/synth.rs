//! Synthetic corpora with discontiguous and overlapping mentions.
//!
//! Each mention is built from one of a few block shapes. Blocks are
//! separated by filler words, and each block holds mentions of a single
//! label, so every sentence can also be encoded by the linear tagger.
//! Mention words come from per-label, per-role pools (`contiguous`, `body`,
//! `head`), so a model that memorizes words can fit the training data.

use std::collections::BTreeSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mention::{AnnotatedSentence, Corpus, Mention, Span};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub labels: Vec<String>,
    /// Weights for 0, 1, 2, ... mention blocks per sentence.
    pub blocks_per_sentence: Vec<f64>,
    /// Weights for 1, 2, ..., `max_components` components.
    pub component_weights: Vec<f64>,
    /// Target share of discontiguous mentions. Applied only when both
    /// contiguous and discontiguous mentions are possible.
    pub discontiguous_target: Option<f64>,
    /// Probability that a block holds two mentions sharing a component.
    pub overlap_prob: f64,
    /// Share of overlapping blocks whose mentions cross.
    pub crossed_share: f64,
    pub max_components: usize,
    /// Words per role and label.
    pub cue_words: usize,
    pub filler_words: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            sentences: 500,
            min_len: 8,
            max_len: 30,
            labels: vec!["Disorder".into()],
            blocks_per_sentence: vec![0.1, 0.4, 0.3, 0.2],
            component_weights: vec![0.46, 0.44, 0.10],
            discontiguous_target: Some(0.54),
            overlap_prob: 0.3,
            crossed_share: 0.4,
            max_components: 3,
            cue_words: 12,
            filler_words: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("infeasible configuration: {0}")]
    InfeasibleConfig(String),
}

impl SynthConfig {
    /// Config with `types` labels named `T0`, `T1`, ...
    pub fn with_types(types: usize) -> Self {
        SynthConfig {
            labels: (0..types).map(|t| format!("T{t}")).collect(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::InfeasibleConfig(m));
        if self.labels.is_empty() {
            return fail("no labels".into());
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return fail(format!(
                "bad length range {}..={}",
                self.min_len, self.max_len
            ));
        }
        if self.max_components == 0 {
            return fail("max_components must be at least 1".into());
        }
        if self.component_weights.len() > self.max_components {
            return fail(format!(
                "{} component weights for at most {} components",
                self.component_weights.len(),
                self.max_components
            ));
        }
        if !valid_weights(&self.component_weights) || !valid_weights(&self.blocks_per_sentence) {
            return fail("weights must be non-negative with a positive sum".into());
        }
        let widest = self
            .component_weights
            .iter()
            .rposition(|&w| w > 0.0)
            .unwrap()
            + 1;
        // c components need c words and c - 1 gap words
        if 2 * widest - 1 > self.max_len {
            return fail(format!(
                "{widest}-component mentions need {} tokens but max_len is {}",
                2 * widest - 1,
                self.max_len
            ));
        }
        if !(0.0..=1.0).contains(&self.overlap_prob) {
            return fail(format!("overlap_prob {} outside [0, 1]", self.overlap_prob));
        }
        if !(0.0..=1.0).contains(&self.crossed_share) {
            return fail(format!(
                "crossed_share {} outside [0, 1]",
                self.crossed_share
            ));
        }
        if let Some(t) = self.discontiguous_target {
            if !(0.0..=1.0).contains(&t) {
                return fail(format!("discontiguous_target {t} outside [0, 1]"));
            }
        }
        if self.overlap_prob > 0.0 && (widest < 2 || 5 > self.max_len) {
            return fail("overlapping blocks need 2 components and 5 tokens".into());
        }
        if self.cue_words == 0 || self.filler_words == 0 {
            return fail("word pools must be non-empty".into());
        }
        Ok(())
    }
}

fn valid_weights(w: &[f64]) -> bool {
    w.iter().all(|&x| x >= 0.0 && x.is_finite()) && w.iter().sum::<f64>() > 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Contiguous,
    Body,
    Head,
}

/// Tokens of one block plus its mentions, relative to the block start.
struct Block {
    tokens: Vec<String>,
    mentions: Vec<Vec<(usize, usize)>>,
}

struct Generator<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
    contiguous: usize,
    discontiguous: usize,
}

impl Generator<'_> {
    fn cue(&mut self, label: usize, role: Role) -> String {
        let tag = match role {
            Role::Contiguous => "c",
            Role::Body => "b",
            Role::Head => "h",
        };
        let i = self.rng.gen_range(0..self.cfg.cue_words);
        format!("{}_{tag}{i}", self.cfg.labels[label].to_lowercase())
    }

    fn filler(&mut self) -> String {
        const JOINERS: [&str; 4] = ["and", "or", ",", "of"];
        if self.rng.gen_bool(0.25) {
            JOINERS.choose(&mut self.rng).unwrap().to_string()
        } else {
            format!("w{}", self.rng.gen_range(0..self.cfg.filler_words))
        }
    }

    fn wants_discontiguous(&mut self, widest: usize) -> bool {
        let contiguous_possible = self.cfg.component_weights.first().is_some_and(|&w| w > 0.0);
        if widest < 2 {
            return false;
        }
        if !contiguous_possible {
            return true;
        }
        match self.cfg.discontiguous_target {
            Some(target) => {
                let total = self.contiguous + self.discontiguous;
                let current = if total == 0 {
                    0.0
                } else {
                    self.discontiguous as f64 / total as f64
                };
                if (current - target).abs() < 1e-12 {
                    self.rng.gen_bool(target)
                } else {
                    current < target
                }
            }
            None => {
                let w = &self.cfg.component_weights;
                let disc: f64 = w[1..].iter().sum();
                self.rng.gen_bool(disc / (disc + w[0]))
            }
        }
    }

    fn components(&mut self, room: usize) -> Option<usize> {
        let w = &self.cfg.component_weights;
        let choices: Vec<(usize, f64)> = (2..=w.len())
            .filter(|&c| 2 * c - 1 <= room)
            .map(|c| (c, w[c - 1]))
            .filter(|&(_, x)| x > 0.0)
            .collect();
        let dist = WeightedIndex::new(choices.iter().map(|c| c.1)).ok()?;
        Some(choices[dist.sample(&mut self.rng)].0)
    }

    fn words(&mut self, label: usize, role: Role, len: usize) -> Vec<String> {
        (0..len).map(|_| self.cue(label, role)).collect()
    }

    fn contiguous_block(&mut self, label: usize, room: usize) -> Block {
        let len = self.rng.gen_range(1..=3.min(room));
        self.contiguous += 1;
        Block {
            tokens: self.words(label, Role::Contiguous, len),
            mentions: vec![vec![(0, len)]],
        }
    }

    fn discontiguous_block(&mut self, label: usize, c: usize, room: usize) -> Block {
        let mut tokens = Vec::new();
        let mut spans = Vec::new();
        let mut spare = room - (2 * c - 1);
        for i in 0..c {
            if i > 0 {
                let gap = 1 + self.rng.gen_range(0..=spare.min(2));
                spare -= gap - 1;
                for _ in 0..gap {
                    tokens.push(self.filler());
                }
            }
            let len = 1 + self.rng.gen_range(0..=spare.min(1));
            spare -= len - 1;
            let start = tokens.len();
            let role = if i == 0 { Role::Head } else { Role::Body };
            tokens.extend(self.words(label, role, len));
            spans.push((start, start + len));
        }
        self.discontiguous += 1;
        Block {
            tokens,
            mentions: vec![spans],
        }
    }

    /// Two mentions sharing a component. Shapes, with `x` a filler word:
    /// `A x B H` (A+H, BH), `H A x B` (HA, H+B), `H x A x B x T` (H+A+T, H+B),
    /// `H A x B C` (H+B, HA+C) and `H A x B C x T` (H+B, HA+C+T).
    fn overlap_block(&mut self, label: usize, room: usize) -> Block {
        use Role::{Body as Bo, Head as He};
        type Shape = (
            &'static [Option<Role>],
            &'static [&'static [(usize, usize)]],
        );
        const SHAPES: [Shape; 5] = [
            (
                &[Some(Bo), None, Some(Bo), Some(He)],
                &[&[(0, 1), (3, 4)], &[(2, 4)]],
            ),
            (
                &[Some(He), Some(Bo), None, Some(Bo)],
                &[&[(0, 2)], &[(0, 1), (3, 4)]],
            ),
            (
                &[Some(He), None, Some(Bo), None, Some(Bo), None, Some(Bo)],
                &[&[(0, 1), (2, 3), (6, 7)], &[(0, 1), (4, 5)]],
            ),
            (
                &[Some(He), Some(Bo), None, Some(Bo), Some(Bo)],
                &[&[(0, 1), (3, 4)], &[(0, 2), (4, 5)]],
            ),
            (
                &[Some(He), Some(Bo), None, Some(Bo), Some(Bo), None, Some(Bo)],
                &[&[(0, 1), (3, 4)], &[(0, 2), (4, 5), (6, 7)]],
            ),
        ];
        let widest = self.cfg.component_weights.len();
        let fits =
            |(roles, ms): &&Shape| roles.len() <= room && ms.iter().all(|m| m.len() <= widest);
        let crossed: Vec<&Shape> = SHAPES[3..].iter().filter(fits).collect();
        let fitting = if !crossed.is_empty() && self.rng.gen_bool(self.cfg.crossed_share) {
            crossed
        } else {
            SHAPES[..3].iter().filter(fits).collect()
        };
        let (roles, mentions) = **fitting
            .choose(&mut self.rng)
            .expect("two-component shapes fit");
        let tokens = roles
            .iter()
            .map(|r| match r {
                Some(r) => self.cue(label, *r),
                None => self.filler(),
            })
            .collect();
        for m in mentions {
            if m.len() > 1 {
                self.discontiguous += 1;
            } else {
                self.contiguous += 1;
            }
        }
        Block {
            tokens,
            mentions: mentions.iter().map(|m| m.to_vec()).collect(),
        }
    }

    fn block(&mut self, label: usize, room: usize) -> Block {
        let widest = self
            .cfg
            .component_weights
            .iter()
            .rposition(|&w| w > 0.0)
            .unwrap()
            + 1;
        if self.cfg.overlap_prob > 0.0 && room >= 4 && self.rng.gen_bool(self.cfg.overlap_prob) {
            return self.overlap_block(label, room);
        }
        if self.wants_discontiguous(widest) {
            if let Some(c) = self.components(room) {
                return self.discontiguous_block(label, c, room);
            }
        }
        self.contiguous_block(label, room)
    }

    fn sentence(&mut self) -> AnnotatedSentence {
        let cfg = self.cfg;
        let target = self.rng.gen_range(cfg.min_len..=cfg.max_len);
        let blocks = WeightedIndex::new(&cfg.blocks_per_sentence)
            .unwrap()
            .sample(&mut self.rng);
        let mut tokens: Vec<String> = Vec::new();
        let mut mentions = BTreeSet::new();
        for _ in 0..blocks {
            let sep = usize::from(!tokens.is_empty());
            let room = cfg.max_len.saturating_sub(tokens.len() + sep);
            if room == 0 {
                break;
            }
            let lead = self.rng.gen_range(0..=room.saturating_sub(1).min(2));
            let label = self.rng.gen_range(0..cfg.labels.len());
            let block = self.block(label, room - lead);
            for _ in 0..sep + lead {
                tokens.push(self.filler());
            }
            let offset = tokens.len();
            for spans in block.mentions {
                let spans = spans
                    .into_iter()
                    .map(|(s, e)| Span::new(offset + s, offset + e).unwrap())
                    .collect();
                mentions.insert(Mention::from_components(cfg.labels[label].clone(), spans));
            }
            tokens.extend(block.tokens);
        }
        while tokens.len() < target {
            tokens.push(self.filler());
        }
        AnnotatedSentence::new(tokens).with_mentions(mentions)
    }
}

/// Generates a corpus; the result depends only on `cfg`.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Corpus, SynthError> {
    cfg.validate()?;
    let lowered: BTreeSet<String> = cfg.labels.iter().map(|l| l.to_lowercase()).collect();
    if lowered.len() != cfg.labels.len() {
        return Err(SynthError::InfeasibleConfig(
            "labels must be distinct ignoring case".into(),
        ));
    }
    let mut g = Generator {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        contiguous: 0,
        discontiguous: 0,
    };
    let sentences = (0..cfg.sentences).map(|_| g.sentence()).collect();
    Ok(Corpus::new(sentences))
}
