//! Mentions, annotated sentences and corpora.
//!
//! A mention is a typed, ordered list of token spans ("components"). Components
//! of one mention never overlap and are separated by at least one token;
//! touching spans are merged when a mention is normalized.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// Default maximum number of components per mention.
pub const DEFAULT_MAX_COMPONENTS: usize = 3;

/// Half-open token interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Result<Self, MentionError> {
        if start >= end {
            return Err(MentionError::EmptySpan { start, end });
        }
        Ok(Span { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn contains(&self, token: usize) -> bool {
        self.start <= token && token < self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn intersection(&self, other: &Span) -> Option<Span> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (start < end).then_some(Span { start, end })
    }

    pub fn tokens(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MentionError {
    #[error("span [{start},{end}) is empty")]
    EmptySpan { start: usize, end: usize },
    #[error("mention has no spans")]
    NoSpans,
    #[error("spans {first} and {second} overlap within one mention")]
    OverlapWithinMention { first: Span, second: Span },
    #[error("mention has {found} components, more than the maximum of {max}")]
    TooManyComponents { found: usize, max: usize },
}

/// A typed entity mention.
///
/// Ordering is `(label, components)` lexicographic, which orders first by
/// label, then by the first component's start.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mention {
    label: String,
    components: Vec<Span>,
}

impl Mention {
    /// Builds a normalized mention: spans are sorted and touching spans merged.
    pub fn new(
        label: impl Into<String>,
        spans: impl IntoIterator<Item = Span>,
        max_components: usize,
    ) -> Result<Self, MentionError> {
        normalize_mention(label, spans, max_components)
    }

    /// Single-span mention.
    pub fn contiguous(label: impl Into<String>, span: Span) -> Self {
        Mention {
            label: label.into(),
            components: vec![span],
        }
    }

    /// Builds a mention from components that are already sorted and
    /// gap-separated. Panics if they are not.
    pub fn from_components(label: impl Into<String>, components: Vec<Span>) -> Self {
        assert!(!components.is_empty(), "mention without components");
        for pair in components.windows(2) {
            assert!(
                pair[0].end < pair[1].start,
                "components {} and {} are not gap-separated",
                pair[0],
                pair[1]
            );
        }
        Mention {
            label: label.into(),
            components,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn components(&self) -> &[Span] {
        &self.components
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn is_discontiguous(&self) -> bool {
        self.components.len() > 1
    }

    pub fn start(&self) -> usize {
        self.components[0].start
    }

    pub fn end(&self) -> usize {
        self.components[self.components.len() - 1].end
    }

    pub fn contains(&self, token: usize) -> bool {
        self.components.iter().any(|c| c.contains(token))
    }

    pub fn tokens(&self) -> impl Iterator<Item = usize> + '_ {
        self.components.iter().flat_map(|c| c.tokens())
    }

    pub fn with_label(&self, label: impl Into<String>) -> Mention {
        Mention {
            label: label.into(),
            components: self.components.clone(),
        }
    }
}

impl fmt::Display for Mention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.label)?;
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                write!(f, "+")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Sorts spans, merges touching ones and checks the component limit.
pub fn normalize_mention(
    label: impl Into<String>,
    spans: impl IntoIterator<Item = Span>,
    max_components: usize,
) -> Result<Mention, MentionError> {
    let mut spans: Vec<Span> = spans.into_iter().collect();
    if spans.is_empty() {
        return Err(MentionError::NoSpans);
    }
    if let Some(bad) = spans.iter().find(|s| s.is_empty()) {
        return Err(MentionError::EmptySpan {
            start: bad.start,
            end: bad.end,
        });
    }
    spans.sort();
    let mut merged: Vec<Span> = Vec::with_capacity(spans.len());
    for span in spans {
        match merged.last_mut() {
            Some(last) if last.overlaps(&span) => {
                return Err(MentionError::OverlapWithinMention {
                    first: *last,
                    second: span,
                });
            }
            Some(last) if last.end == span.start => last.end = span.end,
            _ => merged.push(span),
        }
    }
    if merged.len() > max_components {
        return Err(MentionError::TooManyComponents {
            found: merged.len(),
            max: max_components,
        });
    }
    Ok(Mention {
        label: label.into(),
        components: merged,
    })
}

/// A rule broken by an [`AnnotatedSentence`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Mention (by index in set order) reaches past the last token.
    OutOfBounds(usize),
    /// Token attribute column whose length differs from the token count.
    AttributeLength {
        name: String,
        expected: usize,
        found: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OutOfBounds(i) => write!(f, "mention {i} is out of bounds"),
            Violation::AttributeLength {
                name,
                expected,
                found,
            } => write!(
                f,
                "attribute column '{name}' has {found} values, expected {expected}"
            ),
        }
    }
}

/// Tokens, attribute columns and a set of gold mentions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotatedSentence {
    pub tokens: Vec<String>,
    pub token_attrs: BTreeMap<String, Vec<String>>,
    pub sentence_attrs: BTreeMap<String, String>,
    pub mentions: BTreeSet<Mention>,
}

impl AnnotatedSentence {
    pub fn new(tokens: Vec<String>) -> Self {
        AnnotatedSentence {
            tokens,
            ..Default::default()
        }
    }

    pub fn from_words(words: &str) -> Self {
        Self::new(words.split_whitespace().map(str::to_owned).collect())
    }

    pub fn with_mentions(mut self, mentions: impl IntoIterator<Item = Mention>) -> Self {
        self.mentions.extend(mentions);
        self
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Same tokens and attributes with a different mention set.
    pub fn with_mention_set(&self, mentions: BTreeSet<Mention>) -> Self {
        AnnotatedSentence {
            tokens: self.tokens.clone(),
            token_attrs: self.token_attrs.clone(),
            sentence_attrs: self.sentence_attrs.clone(),
            mentions,
        }
    }

    pub fn max_components(&self) -> usize {
        self.mentions
            .iter()
            .map(Mention::num_components)
            .max()
            .unwrap_or(0)
    }
}

/// Checks the sentence invariants. An empty result means the sentence is
/// well formed.
pub fn validate_sentence(s: &AnnotatedSentence) -> Vec<Violation> {
    let n = s.len();
    let mut out = Vec::new();
    for (i, m) in s.mentions.iter().enumerate() {
        if m.end() > n {
            out.push(Violation::OutOfBounds(i));
        }
    }
    for (name, column) in &s.token_attrs {
        if column.len() != n {
            out.push(Violation::AttributeLength {
                name: name.clone(),
                expected: n,
                found: column.len(),
            });
        }
    }
    out
}

/// A sequence of sentences and the labels used by their mentions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub sentences: Vec<AnnotatedSentence>,
    pub label_set: BTreeSet<String>,
}

impl Corpus {
    pub fn new(sentences: Vec<AnnotatedSentence>) -> Self {
        let label_set = sentences
            .iter()
            .flat_map(|s| s.mentions.iter().map(|m| m.label().to_owned()))
            .collect();
        Corpus {
            sentences,
            label_set,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn num_mentions(&self) -> usize {
        self.sentences.iter().map(|s| s.mentions.len()).sum()
    }

    pub fn labels(&self) -> Vec<String> {
        self.label_set.iter().cloned().collect()
    }

    /// Fraction of mentions with more than one component.
    pub fn discontiguous_fraction(&self) -> f64 {
        let total = self.num_mentions();
        if total == 0 {
            return 0.0;
        }
        let disc = self
            .sentences
            .iter()
            .flat_map(|s| s.mentions.iter())
            .filter(|m| m.is_discontiguous())
            .count();
        disc as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(a: usize, b: usize) -> Span {
        Span::new(a, b).unwrap()
    }

    /// Token-set union, then split into maximal runs.
    fn union_oracle(spans: &[Span]) -> Vec<Span> {
        let mut tokens: Vec<usize> = spans.iter().flat_map(|s| s.tokens()).collect();
        tokens.sort_unstable();
        tokens.dedup();
        let mut runs: Vec<Span> = Vec::new();
        for t in tokens {
            match runs.last_mut() {
                Some(r) if r.end == t => r.end = t + 1,
                _ => runs.push(sp(t, t + 1)),
            }
        }
        runs
    }

    #[test]
    fn single_span_is_identity() {
        let m = normalize_mention("D", [sp(2, 4)], 3).unwrap();
        assert_eq!(m.components(), &[sp(2, 4)]);
        assert_eq!(m.label(), "D");
    }

    #[test]
    fn spans_are_sorted() {
        let m = normalize_mention("D", [sp(5, 6), sp(0, 2)], 3).unwrap();
        assert_eq!(m.components(), &[sp(0, 2), sp(5, 6)]);
    }

    #[test]
    fn touching_spans_merge() {
        let input = [sp(0, 2), sp(2, 3)];
        let m = normalize_mention("D", input, 3).unwrap();
        assert_eq!(m.components(), &[sp(0, 3)]);
        assert_eq!(m.components(), union_oracle(&input).as_slice());
    }

    #[test]
    fn merge_matches_union_oracle() {
        let cases: &[&[(usize, usize)]] = &[
            &[(0, 1), (1, 2), (3, 4)],
            &[(4, 6), (0, 1), (1, 3), (6, 7)],
            &[(2, 3), (5, 6), (8, 9)],
        ];
        for case in cases {
            let spans: Vec<Span> = case.iter().map(|&(a, b)| sp(a, b)).collect();
            let m = normalize_mention("D", spans.clone(), 5).unwrap();
            assert_eq!(m.components(), union_oracle(&spans).as_slice());
        }
    }

    #[test]
    fn overlap_is_rejected() {
        let err = normalize_mention("D", [sp(0, 3), sp(2, 4)], 3).unwrap_err();
        assert!(matches!(err, MentionError::OverlapWithinMention { .. }));
    }

    #[test]
    fn too_many_components() {
        let err = normalize_mention("D", [sp(0, 1), sp(2, 3), sp(4, 5), sp(6, 7)], 3).unwrap_err();
        assert_eq!(err, MentionError::TooManyComponents { found: 4, max: 3 });
        // merging first brings the count back under the limit
        assert!(normalize_mention("D", [sp(0, 1), sp(1, 2), sp(4, 5), sp(6, 7)], 3).is_ok());
    }

    #[test]
    fn empty_inputs() {
        assert_eq!(
            normalize_mention("D", Vec::<Span>::new(), 3).unwrap_err(),
            MentionError::NoSpans
        );
        assert!(Span::new(3, 3).is_err());
    }

    #[test]
    fn normalization_is_idempotent() {
        let m = normalize_mention("D", [sp(4, 5), sp(0, 2), sp(2, 3)], 3).unwrap();
        let again = normalize_mention("D", m.components().to_vec(), 3).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn validation() {
        let mut s = AnnotatedSentence::from_words("a b c");
        s.mentions.insert(Mention::contiguous("D", sp(0, 2)));
        assert!(validate_sentence(&s).is_empty());

        let mut bad = AnnotatedSentence::from_words("a b c");
        bad.mentions.insert(Mention::contiguous("D", sp(2, 5)));
        assert_eq!(validate_sentence(&bad), vec![Violation::OutOfBounds(0)]);

        bad.token_attrs
            .insert("pos".into(), vec!["DT".into(), "NN".into()]);
        assert_eq!(validate_sentence(&bad).len(), 2);
    }

    #[test]
    fn duplicate_mentions_collapse() {
        let m = Mention::contiguous("D", sp(0, 1));
        let s = AnnotatedSentence::from_words("a b").with_mentions([m.clone(), m]);
        assert_eq!(s.mentions.len(), 1);
        assert!(validate_sentence(&s).is_empty());
    }

    #[test]
    fn ordering_is_label_then_components() {
        let a = Mention::contiguous("A", sp(5, 6));
        let b = Mention::contiguous("B", sp(0, 1));
        let c = Mention::from_components("B", vec![sp(0, 1), sp(3, 4)]);
        let d = Mention::contiguous("B", sp(1, 2));
        let mut v = vec![d.clone(), c.clone(), b.clone(), a.clone()];
        v.sort();
        assert_eq!(v, vec![a, b, c, d]);
    }

    #[test]
    fn corpus_label_set() {
        let s1 = AnnotatedSentence::from_words("a b")
            .with_mentions([Mention::contiguous("X", sp(0, 1))]);
        let s2 =
            AnnotatedSentence::from_words("c").with_mentions([Mention::contiguous("Y", sp(0, 1))]);
        let c = Corpus::new(vec![s1, s2]);
        assert_eq!(c.labels(), vec!["X".to_string(), "Y".to_string()]);
        assert_eq!(c.num_mentions(), 2);
    }
}
