//! Seven-tag linear-chain encoding of discontiguous, overlapping mentions.
//!
//! Every token gets one of `B I O BD ID BH IH`, qualified by the mention
//! label. Tokens shared by two or more mentions are head tokens (`BH`/`IH`):
//! a head component is the overlap of two components of different mentions.
//! Remaining tokens of discontiguous mentions are body tokens (`BD`/`ID`),
//! remaining tokens of contiguous mentions get `B`/`I`. A `B*` tag marks the
//! first word of the component it was assigned for; tokens labelled earlier
//! keep their tag.
//!
//! The encoding is lossy. Decoding with [`Heuristic::All`] returns every
//! mention consistent with the tags; [`Heuristic::Enough`] returns a
//! smallest mention set whose encoding is exactly the input.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::decode::{Decoded, Diagnostic, Heuristic, DEFAULT_ALL_LIMIT};
use crate::mention::{AnnotatedSentence, Mention, Span, DEFAULT_MAX_COMPONENTS};

/// Search-node budget for exact ENOUGH decoding.
pub const DEFAULT_SEARCH_BUDGET: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TagKind {
    O,
    B,
    I,
    BD,
    ID,
    BH,
    IH,
}

/// Component type a tag belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Contiguous,
    Body,
    Head,
}

impl TagKind {
    pub const ALL: [TagKind; 7] = [
        TagKind::B,
        TagKind::I,
        TagKind::O,
        TagKind::BD,
        TagKind::ID,
        TagKind::BH,
        TagKind::IH,
    ];

    pub fn role(self) -> Option<Role> {
        match self {
            TagKind::O => None,
            TagKind::B | TagKind::I => Some(Role::Contiguous),
            TagKind::BD | TagKind::ID => Some(Role::Body),
            TagKind::BH | TagKind::IH => Some(Role::Head),
        }
    }

    pub fn is_begin(self) -> bool {
        matches!(self, TagKind::B | TagKind::BD | TagKind::BH)
    }

    pub fn is_inside(self) -> bool {
        matches!(self, TagKind::I | TagKind::ID | TagKind::IH)
    }

    pub fn is_head(self) -> bool {
        matches!(self, TagKind::BH | TagKind::IH)
    }

    pub fn begin(role: Role) -> TagKind {
        match role {
            Role::Contiguous => TagKind::B,
            Role::Body => TagKind::BD,
            Role::Head => TagKind::BH,
        }
    }

    pub fn inside(role: Role) -> TagKind {
        match role {
            Role::Contiguous => TagKind::I,
            Role::Body => TagKind::ID,
            Role::Head => TagKind::IH,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TagKind::O => "O",
            TagKind::B => "B",
            TagKind::I => "I",
            TagKind::BD => "BD",
            TagKind::ID => "ID",
            TagKind::BH => "BH",
            TagKind::IH => "IH",
        }
    }

    /// Tags allowed directly before an inside tag.
    fn may_follow(self, prev: TagKind) -> bool {
        match self {
            TagKind::I => matches!(prev, TagKind::B | TagKind::I | TagKind::BH | TagKind::IH),
            TagKind::ID => matches!(prev, TagKind::BD | TagKind::ID | TagKind::BH | TagKind::IH),
            TagKind::IH => matches!(prev, TagKind::BH | TagKind::IH),
            _ => true,
        }
    }
}

impl FromStr for TagKind {
    type Err = TagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "O" => TagKind::O,
            "B" => TagKind::B,
            "I" => TagKind::I,
            "BD" => TagKind::BD,
            "ID" => TagKind::ID,
            "BH" => TagKind::BH,
            "IH" => TagKind::IH,
            other => return Err(TagError::UnknownTag(other.to_owned())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TagError {
    #[error("token {token} belongs to mentions of different labels: {labels:?}")]
    MultiLabelConflict { token: usize, labels: Vec<String> },
    #[error("unknown tag '{0}'")]
    UnknownTag(String),
    #[error("malformed tagged token '{0}' (expected TOKEN/TAG)")]
    Malformed(String),
}

/// A tag with its entity label (`None` for `O`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tag {
    pub kind: TagKind,
    pub label: Option<String>,
}

impl Tag {
    pub fn outside() -> Self {
        Tag {
            kind: TagKind::O,
            label: None,
        }
    }

    pub fn new(kind: TagKind, label: impl Into<String>) -> Self {
        if kind == TagKind::O {
            return Tag::outside();
        }
        Tag {
            kind,
            label: Some(label.into()),
        }
    }

    /// Parses `KIND` or `KIND-label`; a bare kind takes `default_label`.
    pub fn parse(s: &str, default_label: &str) -> Result<Self, TagError> {
        if s == "O" {
            return Ok(Tag::outside());
        }
        match s.split_once('-') {
            Some((kind, label)) => Ok(Tag::new(kind.parse()?, label)),
            None => Ok(Tag::new(s.parse()?, default_label)),
        }
    }

    /// `O`, or `KIND-label` when `qualified`, else the bare kind.
    pub fn format(&self, qualified: bool) -> String {
        match (&self.label, qualified) {
            (Some(label), true) => format!("{}-{}", self.kind.as_str(), label),
            _ => self.kind.as_str().to_owned(),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.format(true))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct TagSequence {
    pub tags: Vec<Tag>,
}

impl TagSequence {
    pub fn new(tags: Vec<Tag>) -> Self {
        TagSequence { tags }
    }

    /// Single-label sequence from bare kinds.
    pub fn from_kinds(kinds: &[TagKind], label: &str) -> Self {
        TagSequence {
            tags: kinds.iter().map(|&k| Tag::new(k, label)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn labels(&self) -> BTreeSet<&str> {
        self.tags
            .iter()
            .filter_map(|t| t.label.as_deref())
            .collect()
    }

    /// The kinds carrying `label`; tokens of other labels read as `O`.
    pub fn kinds_for(&self, label: &str) -> Vec<TagKind> {
        self.tags
            .iter()
            .map(|t| match &t.label {
                Some(l) if l == label => t.kind,
                _ => TagKind::O,
            })
            .collect()
    }

    /// `TOKEN/TAG` pairs separated by spaces.
    pub fn to_line(&self, tokens: &[String], qualified: bool) -> String {
        tokens
            .iter()
            .zip(&self.tags)
            .map(|(tok, tag)| format!("{}/{}", tok, tag.format(qualified)))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Inverse of [`TagSequence::to_line`].
    pub fn parse_line(
        line: &str,
        default_label: &str,
    ) -> Result<(Vec<String>, TagSequence), TagError> {
        let mut tokens = Vec::new();
        let mut tags = Vec::new();
        for item in line.split_whitespace() {
            let (tok, tag) = item
                .rsplit_once('/')
                .ok_or_else(|| TagError::Malformed(item.to_owned()))?;
            tokens.push(tok.to_owned());
            tags.push(Tag::parse(tag, default_label)?);
        }
        Ok((tokens, TagSequence { tags }))
    }
}

/// Tag alphabet for a label set: `O` plus six tags per label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSet {
    labels: Vec<String>,
}

impl TagSet {
    const LABELLED: [TagKind; 6] = [
        TagKind::B,
        TagKind::I,
        TagKind::BD,
        TagKind::ID,
        TagKind::BH,
        TagKind::IH,
    ];

    pub fn new(labels: Vec<String>) -> Self {
        TagSet { labels }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        1 + 6 * self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index 0 is `O`.
    pub fn tag(&self, index: usize) -> Tag {
        if index == 0 {
            return Tag::outside();
        }
        let label = &self.labels[(index - 1) / 6];
        Tag::new(Self::LABELLED[(index - 1) % 6], label.clone())
    }

    pub fn kind(&self, index: usize) -> TagKind {
        if index == 0 {
            TagKind::O
        } else {
            Self::LABELLED[(index - 1) % 6]
        }
    }

    pub fn label_index(&self, index: usize) -> Option<usize> {
        (index > 0).then(|| (index - 1) / 6)
    }

    pub fn index_of(&self, tag: &Tag) -> Option<usize> {
        if tag.kind == TagKind::O {
            return Some(0);
        }
        let label = tag.label.as_deref()?;
        let li = self.labels.iter().position(|l| l == label)?;
        let ki = Self::LABELLED.iter().position(|&k| k == tag.kind)?;
        Some(1 + 6 * li + ki)
    }

    /// Whether `next` may directly follow `prev` under the inside-tag rules.
    pub fn transition_allowed(&self, prev: Option<usize>, next: usize) -> bool {
        let kind = self.kind(next);
        if !kind.is_inside() {
            return true;
        }
        match prev {
            None => false,
            Some(p) => {
                self.label_index(p) == self.label_index(next) && kind.may_follow(self.kind(p))
            }
        }
    }
}

/// Encodes a sentence's mentions as a tag sequence.
pub fn encode_linear(s: &AnnotatedSentence) -> Result<TagSequence, TagError> {
    encode_mentions(s.len(), s.mentions.iter())
}

/// Encodes an arbitrary mention collection over `n` tokens. Duplicates are
/// ignored.
pub fn encode_mentions<'a>(
    n: usize,
    mentions: impl IntoIterator<Item = &'a Mention>,
) -> Result<TagSequence, TagError> {
    let unique: BTreeSet<&Mention> = mentions.into_iter().collect();
    let mut owner: Vec<Option<&str>> = vec![None; n];
    for m in &unique {
        for t in m.tokens() {
            match owner[t] {
                Some(l) if l != m.label() => {
                    let mut labels = vec![l.to_owned(), m.label().to_owned()];
                    labels.sort();
                    return Err(TagError::MultiLabelConflict { token: t, labels });
                }
                _ => owner[t] = Some(m.label()),
            }
        }
    }
    let mut by_label: BTreeMap<&str, Vec<&[Span]>> = BTreeMap::new();
    for m in &unique {
        by_label.entry(m.label()).or_default().push(m.components());
    }
    let mut tags = vec![Tag::outside(); n];
    for (label, comps) in by_label {
        let kinds = encode_kinds(n, &comps);
        for (t, k) in kinds.into_iter().enumerate() {
            if k != TagKind::O {
                tags[t] = Tag::new(k, label);
            }
        }
    }
    Ok(TagSequence { tags })
}

/// Single-label encoder over component lists, which must be distinct.
pub fn encode_kinds(n: usize, mentions: &[&[Span]]) -> Vec<TagKind> {
    let mut heads: BTreeSet<Span> = BTreeSet::new();
    for (i, a) in mentions.iter().enumerate() {
        for b in &mentions[i + 1..] {
            for ca in a.iter() {
                for cb in b.iter() {
                    if let Some(h) = ca.intersection(cb) {
                        heads.insert(h);
                    }
                }
            }
        }
    }
    let mut kinds: Vec<Option<TagKind>> = vec![None; n];
    let assign =
        |span: &Span, begin: TagKind, inside: TagKind, kinds: &mut Vec<Option<TagKind>>| {
            for t in span.tokens() {
                if kinds[t].is_none() {
                    kinds[t] = Some(if t == span.start { begin } else { inside });
                }
            }
        };
    for h in &heads {
        assign(h, TagKind::BH, TagKind::IH, &mut kinds);
    }
    for m in mentions.iter().filter(|m| m.len() > 1) {
        for c in m.iter() {
            assign(c, TagKind::BD, TagKind::ID, &mut kinds);
        }
    }
    for m in mentions.iter().filter(|m| m.len() == 1) {
        assign(&m[0], TagKind::B, TagKind::I, &mut kinds);
    }
    kinds.into_iter().map(|k| k.unwrap_or(TagKind::O)).collect()
}

/// Maximal runs of one role; a run continues only through inside tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Piece {
    role: Role,
    span: Span,
    /// Starts with an inside tag right after a head piece, so its component
    /// begins inside that head.
    attached: bool,
}

fn pieces(kinds: &[TagKind]) -> Vec<Piece> {
    let mut out: Vec<Piece> = Vec::new();
    for (t, &k) in kinds.iter().enumerate() {
        let Some(role) = k.role() else { continue };
        let continues = t > 0
            && k.is_inside()
            && kinds[t - 1].role() == Some(role)
            && out.last().is_some_and(|p| p.span.end == t);
        if continues {
            out.last_mut().unwrap().span.end = t + 1;
        } else {
            let attached = k.is_inside() && t > 0 && kinds[t - 1].is_head() && role != Role::Head;
            out.push(Piece {
                role,
                span: Span {
                    start: t,
                    end: t + 1,
                },
                attached,
            });
        }
    }
    out
}

/// Local well-formedness of a tag sequence, checked per label:
/// inside tags follow a compatible tag of the same label; a label with body
/// tokens has at least two body/head pieces; a label with head tokens has
/// room for two distinct mentions.
pub fn is_valid_sequence(seq: &TagSequence) -> bool {
    for (i, tag) in seq.tags.iter().enumerate() {
        if tag.kind.is_inside() {
            let Some(prev) = i.checked_sub(1).map(|p| &seq.tags[p]) else {
                return false;
            };
            if prev.label != tag.label || !tag.kind.may_follow(prev.kind) {
                return false;
            }
        }
    }
    seq.labels()
        .into_iter()
        .all(|l| kinds_valid(&seq.kinds_for(l)))
}

/// [`is_valid_sequence`] for a single-label kind sequence.
pub fn kinds_valid(kinds: &[TagKind]) -> bool {
    for (i, k) in kinds.iter().enumerate() {
        if k.is_inside() && (i == 0 || !k.may_follow(kinds[i - 1])) {
            return false;
        }
    }
    let ps = pieces(kinds);
    let bodies = ps.iter().filter(|p| p.role == Role::Body).count();
    let heads: Vec<&Piece> = ps.iter().filter(|p| p.role == Role::Head).collect();
    if bodies > 0 && bodies + heads.len() < 2 {
        return false;
    }
    if !heads.is_empty() && ps.len() < 2 && heads[0].span.len() < 3 {
        return false;
    }
    true
}

/// Settings for linear-chain decoding.
#[derive(Debug, Clone, Copy)]
pub struct LinearDecoder {
    pub max_components: usize,
    pub all_limit: usize,
    pub search_budget: usize,
}

impl Default for LinearDecoder {
    fn default() -> Self {
        LinearDecoder {
            max_components: DEFAULT_MAX_COMPONENTS,
            all_limit: DEFAULT_ALL_LIMIT,
            search_budget: DEFAULT_SEARCH_BUDGET,
        }
    }
}

/// Decodes with default settings.
pub fn decode_linear(seq: &TagSequence, heuristic: Heuristic) -> Decoded {
    LinearDecoder::default().decode(seq, heuristic)
}

/// Result of decoding one label's kinds.
#[derive(Debug, Default)]
pub struct KindDecoding {
    pub mentions: Vec<Vec<Span>>,
    pub dropped: Vec<Span>,
    pub truncated: bool,
    pub fallback: bool,
}

impl LinearDecoder {
    pub fn decode(&self, seq: &TagSequence, heuristic: Heuristic) -> Decoded {
        let mut out = Decoded::default();
        for label in seq.labels() {
            let kinds = seq.kinds_for(label);
            let d = match heuristic {
                Heuristic::All => self.decode_all_kinds(&kinds),
                Heuristic::Enough => self.decode_enough_kinds(&kinds),
            };
            out.mentions.extend(
                d.mentions
                    .into_iter()
                    .map(|c| Mention::from_components(label, c)),
            );
            out.diagnostics
                .extend(d.dropped.into_iter().map(|span| Diagnostic::Dropped {
                    label: label.to_owned(),
                    span,
                }));
            if d.truncated {
                out.diagnostics.push(Diagnostic::Truncated {
                    limit: self.all_limit,
                });
            }
            if d.fallback {
                out.diagnostics.push(Diagnostic::Fallback);
            }
        }
        out
    }

    /// Every mention (up to `max_components` components) whose tokens carry
    /// tags the encoder could have produced for it.
    pub fn decode_all_kinds(&self, kinds: &[TagKind]) -> KindDecoding {
        let (mentions, truncated) = consistent_mentions(kinds, self.max_components, self.all_limit);
        let dropped = uncovered_runs(kinds, &mentions);
        KindDecoding {
            mentions,
            dropped,
            truncated,
            fallback: false,
        }
    }

    /// A minimum-size mention set that re-encodes to `kinds`, or the pairing
    /// rules when no such set is found within the search budget.
    pub fn decode_enough_kinds(&self, kinds: &[TagKind]) -> KindDecoding {
        let (cands, truncated) = consistent_mentions(kinds, self.max_components, self.all_limit);
        if !truncated {
            if let Some(found) = minimum_interpretation(kinds, &cands, self.search_budget) {
                return KindDecoding {
                    mentions: found.into_iter().map(|i| cands[i].clone()).collect(),
                    ..Default::default()
                };
            }
        }
        let (mentions, dropped) = pairing_rules(kinds, self.max_components);
        KindDecoding {
            mentions,
            dropped,
            truncated: false,
            fallback: true,
        }
    }
}

/// Whether the sequence is the encoding of some mention set with at most
/// `max_components` components per mention.
pub fn is_canonical(seq: &TagSequence, max_components: usize) -> bool {
    if !is_valid_sequence(seq) {
        return false;
    }
    seq.labels()
        .into_iter()
        .all(|l| kinds_canonical(&seq.kinds_for(l), max_components))
}

/// [`is_canonical`] for a single-label kind sequence, with an unbounded search.
pub fn kinds_canonical(kinds: &[TagKind], max_components: usize) -> bool {
    if !kinds_valid(kinds) {
        return false;
    }
    let (cands, _) = consistent_mentions(kinds, max_components, usize::MAX);
    minimum_interpretation(kinds, &cands, usize::MAX).is_some()
}

/// Per-token part of the component check: token `t` may sit in a component
/// of `role` that starts at `start`.
fn token_fits(kinds: &[TagKind], t: usize, start: usize, role: Role) -> bool {
    let k = kinds[t];
    if k == TagKind::O {
        return false;
    }
    if k.is_head() {
        return true;
    }
    k.role() == Some(role) && k.is_begin() == (t == start)
}

/// Spans that can be a component of a mention of `role` (contiguous or body).
fn component_spans(kinds: &[TagKind], role: Role) -> Vec<Span> {
    let n = kinds.len();
    let mut out = Vec::new();
    for s in 0..n {
        for e in s + 1..=n {
            if !token_fits(kinds, e - 1, s, role) {
                break;
            }
            // a non-head token continued by an inside tag of the same role
            // cannot end a component
            if e < n && !kinds[e - 1].is_head() && kinds[e] == TagKind::inside(role) {
                continue;
            }
            out.push(Span { start: s, end: e });
        }
    }
    out
}

/// All mentions consistent with `kinds`, sorted; the flag reports truncation.
fn consistent_mentions(
    kinds: &[TagKind],
    max_components: usize,
    limit: usize,
) -> (Vec<Vec<Span>>, bool) {
    let mut out: Vec<Vec<Span>> = component_spans(kinds, Role::Contiguous)
        .into_iter()
        .map(|s| vec![s])
        .collect();
    if out.len() > limit {
        out.truncate(limit);
        out.sort();
        return (out, true);
    }
    let bodies = component_spans(kinds, Role::Body);
    let mut truncated = false;
    let mut stack: Vec<Span> = Vec::new();
    fn extend(
        bodies: &[Span],
        from: usize,
        stack: &mut Vec<Span>,
        max: usize,
        limit: usize,
        out: &mut Vec<Vec<Span>>,
        truncated: &mut bool,
    ) {
        for (i, b) in bodies.iter().enumerate().skip(from) {
            if *truncated {
                return;
            }
            if stack.last().is_some_and(|l| b.start <= l.end) {
                continue;
            }
            stack.push(*b);
            if stack.len() >= 2 {
                if out.len() >= limit {
                    *truncated = true;
                    stack.pop();
                    return;
                }
                out.push(stack.clone());
            }
            if stack.len() < max {
                extend(bodies, i + 1, stack, max, limit, out, truncated);
            }
            stack.pop();
        }
    }
    extend(
        &bodies,
        0,
        &mut stack,
        max_components,
        limit,
        &mut out,
        &mut truncated,
    );
    out.sort();
    (out, truncated)
}

/// Maximal runs of tagged tokens that no mention covers.
fn uncovered_runs(kinds: &[TagKind], mentions: &[Vec<Span>]) -> Vec<Span> {
    let mut covered = vec![false; kinds.len()];
    for m in mentions {
        for c in m {
            for t in c.tokens() {
                covered[t] = true;
            }
        }
    }
    let mut runs: Vec<Span> = Vec::new();
    for (t, k) in kinds.iter().enumerate() {
        if *k != TagKind::O && !covered[t] {
            match runs.last_mut() {
                Some(r) if r.end == t => r.end = t + 1,
                _ => runs.push(Span {
                    start: t,
                    end: t + 1,
                }),
            }
        }
    }
    runs
}

/// Runs of non-head tokens joined by inside tags. Each belongs to exactly
/// one mention in any preimage.
fn segments(kinds: &[TagKind]) -> Vec<Option<usize>> {
    let mut seg = vec![None; kinds.len()];
    let mut next = 0;
    for (t, &k) in kinds.iter().enumerate() {
        if k == TagKind::O || k.is_head() {
            continue;
        }
        let joins =
            t > 0 && k.is_inside() && seg[t - 1].is_some() && kinds[t - 1].role() == k.role();
        if joins {
            seg[t] = seg[t - 1];
        } else {
            seg[t] = Some(next);
            next += 1;
        }
    }
    seg
}

struct Search<'a> {
    kinds: &'a [TagKind],
    cands: &'a [Vec<Span>],
    cand_segs: Vec<Vec<usize>>,
    by_seg: Vec<Vec<usize>>,
    head_only: Vec<usize>,
    budget: usize,
    spent: usize,
}

impl Search<'_> {
    fn matches(&self, chosen: &[usize]) -> bool {
        let comps: Vec<&[Span]> = chosen.iter().map(|&i| self.cands[i].as_slice()).collect();
        encode_kinds(self.kinds.len(), &comps) == self.kinds
    }

    fn tick(&mut self) -> bool {
        self.spent += 1;
        self.spent <= self.budget
    }

    /// Depth-limited search; `Err(())` when out of budget.
    fn dfs(
        &mut self,
        chosen: &mut Vec<usize>,
        covered: &mut [bool],
        size: usize,
    ) -> Result<bool, ()> {
        if !self.tick() {
            return Err(());
        }
        if let Some(seg) = covered.iter().position(|c| !c) {
            if chosen.len() >= size {
                return Ok(false);
            }
            for ci in self.by_seg[seg].clone() {
                if self.cand_segs[ci].iter().any(|&s| covered[s]) {
                    continue;
                }
                for &s in &self.cand_segs[ci] {
                    covered[s] = true;
                }
                chosen.push(ci);
                let found = self.dfs(chosen, covered, size)?;
                if found {
                    return Ok(true);
                }
                chosen.pop();
                for &s in &self.cand_segs[ci] {
                    covered[s] = false;
                }
            }
            return Ok(false);
        }
        let extra = size - chosen.len();
        self.add_heads(chosen, 0, extra)
    }

    fn add_heads(
        &mut self,
        chosen: &mut Vec<usize>,
        from: usize,
        extra: usize,
    ) -> Result<bool, ()> {
        if extra == 0 {
            if !self.tick() {
                return Err(());
            }
            return Ok(self.matches(chosen));
        }
        for i in from..self.head_only.len() {
            if self.head_only.len() - i < extra {
                break;
            }
            chosen.push(self.head_only[i]);
            if self.add_heads(chosen, i + 1, extra - 1)? {
                return Ok(true);
            }
            chosen.pop();
        }
        Ok(false)
    }
}

/// Smallest subset of `cands` whose encoding equals `kinds`, preferring
/// earlier candidates among equal sizes.
fn minimum_interpretation(
    kinds: &[TagKind],
    cands: &[Vec<Span>],
    budget: usize,
) -> Option<Vec<usize>> {
    if kinds.iter().all(|&k| k == TagKind::O) {
        return Some(Vec::new());
    }
    let seg = segments(kinds);
    let num_segs = seg.iter().flatten().max().map_or(0, |m| m + 1);
    let mut cand_segs = Vec::with_capacity(cands.len());
    let mut by_seg = vec![Vec::new(); num_segs];
    let mut head_only = Vec::new();
    for (ci, c) in cands.iter().enumerate() {
        let mut segs: Vec<usize> = c
            .iter()
            .flat_map(|s| s.tokens())
            .filter_map(|t| seg[t])
            .collect();
        segs.dedup();
        if segs.is_empty() {
            head_only.push(ci);
        }
        for &s in &segs {
            by_seg[s].push(ci);
        }
        cand_segs.push(segs);
    }
    if by_seg.iter().any(Vec::is_empty) {
        return None;
    }
    let head_tokens = kinds.iter().filter(|k| k.is_head()).count();
    let mut search = Search {
        kinds,
        cands,
        cand_segs,
        by_seg,
        head_only,
        budget,
        spent: 0,
    };
    // each candidate covers at most one segment per component
    let lower = num_segs.div_ceil(kinds.len().max(1)).max(1);
    let upper = num_segs + 2 * head_tokens;
    for size in lower..=upper {
        let mut chosen = Vec::new();
        let mut covered = vec![false; num_segs];
        match search.dfs(&mut chosen, &mut covered, size) {
            Ok(true) => {
                chosen.sort_unstable();
                return Some(chosen);
            }
            Ok(false) => {}
            Err(()) => return None,
        }
    }
    None
}

/// Deterministic pairing of components, used when the exact search fails:
/// each head pairs with up to two nearest bodies (leftward ties), plus the
/// last remaining body if exactly one is left; leftover bodies pair up left
/// to right into two- or three-component mentions; contiguous components
/// stand alone.
fn pairing_rules(kinds: &[TagKind], max_components: usize) -> (Vec<Vec<Span>>, Vec<Span>) {
    let ps = pieces(kinds);
    let mut mentions: BTreeSet<Vec<Span>> = BTreeSet::new();
    let mut dropped = Vec::new();
    // attached pieces absorb the head piece directly before them
    let widen = |p: &Piece| -> Span {
        if !p.attached {
            return p.span;
        }
        let head = ps
            .iter()
            .rev()
            .find(|h| h.role == Role::Head && h.span.end == p.span.start);
        match head {
            Some(h) => Span {
                start: h.span.start,
                end: p.span.end,
            },
            None => p.span,
        }
    };
    let heads: Vec<Span> = ps
        .iter()
        .filter(|p| p.role == Role::Head)
        .map(|p| p.span)
        .collect();
    let bodies: Vec<Span> = ps
        .iter()
        .filter(|p| p.role == Role::Body)
        .map(&widen)
        .collect();
    for p in ps.iter().filter(|p| p.role == Role::Contiguous) {
        mentions.insert(vec![widen(p)]);
    }
    let separated = |a: &Span, b: &Span| a.end < b.start || b.end < a.start;
    let ordered = |a: Span, b: Span| {
        if a.start < b.start {
            vec![a, b]
        } else {
            vec![b, a]
        }
    };
    let mut used = vec![false; bodies.len()];
    for h in &heads {
        let mut near: Vec<(usize, usize)> = bodies
            .iter()
            .enumerate()
            .filter(|(_, b)| separated(h, b))
            .map(|(i, b)| {
                let dist = if b.end <= h.start {
                    h.start - b.end
                } else {
                    b.start - h.end
                };
                // leftward bodies win ties
                (dist * 2 + usize::from(b.start > h.start), i)
            })
            .collect();
        near.sort_unstable();
        let mut paired = 0;
        for &(_, i) in near.iter().take(2) {
            if max_components >= 2 {
                mentions.insert(ordered(*h, bodies[i]));
                used[i] = true;
                paired += 1;
            }
        }
        let left: Vec<usize> = (0..bodies.len()).filter(|&i| !used[i]).collect();
        if left.len() == 1 && separated(h, &bodies[left[0]]) && max_components >= 2 {
            mentions.insert(ordered(*h, bodies[left[0]]));
            used[left[0]] = true;
            paired += 1;
        }
        if paired == 0 {
            mentions.insert(vec![*h]);
        }
    }
    let mut rest: Vec<Span> = (0..bodies.len())
        .filter(|&i| !used[i])
        .map(|i| bodies[i])
        .collect();
    let mut i = 0;
    while i < rest.len() {
        let remaining = rest.len() - i;
        let take = if remaining == 3 && max_components >= 3 {
            3
        } else {
            2
        };
        if remaining < 2 || max_components < 2 {
            dropped.push(rest[i]);
            i += 1;
            continue;
        }
        let group = &mut rest[i..i + take];
        group.sort();
        if group.windows(2).all(|w| w[0].end < w[1].start) {
            mentions.insert(group.to_vec());
        } else {
            dropped.extend(group.iter().copied());
        }
        i += take;
    }
    (mentions.into_iter().collect(), dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mention::Mention;
    use TagKind::*;

    fn sp(a: usize, b: usize) -> Span {
        Span::new(a, b).unwrap()
    }

    fn m(spans: &[(usize, usize)]) -> Mention {
        Mention::from_components("D", spans.iter().map(|&(a, b)| sp(a, b)).collect())
    }

    fn kinds_of(seq: &TagSequence) -> Vec<TagKind> {
        seq.tags.iter().map(|t| t.kind).collect()
    }

    fn infarctions() -> AnnotatedSentence {
        AnnotatedSentence::from_words("Infarctions either water shed or embolic").with_mentions([
            m(&[(0, 1)]),
            m(&[(0, 1), (2, 4)]),
            m(&[(0, 1), (5, 6)]),
        ])
    }

    fn figure_one() -> AnnotatedSentence {
        AnnotatedSentence::from_words(
            "EGD showed hiatal hernia and vertical laceration in distal esophagus with blood in stomach and overlying lac .",
        )
        .with_mentions([
            m(&[(2, 4)]),
            m(&[(6, 7), (9, 10)]),
            m(&[(11, 14)]),
            m(&[(13, 14), (16, 17)]),
        ])
    }

    #[test]
    fn figure_one_encoding() {
        let seq = encode_linear(&figure_one()).unwrap();
        let expected = [O, O, B, I, O, O, BD, O, O, BD, O, B, I, BH, O, O, BD, O];
        assert_eq!(kinds_of(&seq), expected);
        assert!(is_valid_sequence(&seq));
    }

    #[test]
    fn infarctions_encoding() {
        let seq = encode_linear(&infarctions()).unwrap();
        assert_eq!(kinds_of(&seq), [BH, O, BD, ID, O, BD]);
        // bare "Infarctions" leaves no trace
        let two = AnnotatedSentence::from_words("Infarctions either water shed or embolic")
            .with_mentions([m(&[(0, 1), (2, 4)]), m(&[(0, 1), (5, 6)])]);
        assert_eq!(encode_linear(&two).unwrap(), seq);
    }

    #[test]
    fn no_mentions_is_all_outside() {
        let seq = encode_linear(&AnnotatedSentence::from_words("a b c")).unwrap();
        assert_eq!(kinds_of(&seq), [O, O, O]);
        assert!(decode_linear(&seq, Heuristic::All).mentions.is_empty());
        assert!(decode_linear(&seq, Heuristic::Enough).mentions.is_empty());
    }

    #[test]
    fn validity_examples() {
        let v = |k: &[TagKind]| is_valid_sequence(&TagSequence::from_kinds(k, "D"));
        assert!(v(&[B, I, O]));
        assert!(!v(&[O, O, BD]));
        assert!(!v(&[O, ID, O]));
        assert!(!v(&[BH]));
        assert!(v(&[BH, O, BD]));
        assert!(!v(&[B, ID]));
    }

    #[test]
    fn multi_label_conflict() {
        let s = AnnotatedSentence::from_words("a b c").with_mentions([
            Mention::contiguous("X", sp(0, 2)),
            Mention::contiguous("Y", sp(1, 3)),
        ]);
        assert_eq!(
            encode_linear(&s).unwrap_err(),
            TagError::MultiLabelConflict {
                token: 1,
                labels: vec!["X".into(), "Y".into()]
            }
        );
    }

    #[test]
    fn multi_label_tags_are_qualified() {
        let s = AnnotatedSentence::from_words("a b c d").with_mentions([
            Mention::contiguous("X", sp(0, 2)),
            Mention::contiguous("Y", sp(3, 4)),
        ]);
        let seq = encode_linear(&s).unwrap();
        assert_eq!(seq.to_line(&s.tokens, true), "a/B-X b/I-X c/O d/B-Y");
        let (tokens, parsed) = TagSequence::parse_line("a/B-X b/I-X c/O d/B-Y", "D").unwrap();
        assert_eq!(tokens, s.tokens);
        assert_eq!(parsed, seq);
        let decoded = decode_linear(&seq, Heuristic::Enough);
        assert_eq!(decoded.mentions, s.mentions);
    }

    #[test]
    fn enough_on_infarctions() {
        let seq = encode_linear(&infarctions()).unwrap();
        let got = decode_linear(&seq, Heuristic::Enough);
        let expected: BTreeSet<Mention> = [m(&[(0, 1), (2, 4)]), m(&[(0, 1), (5, 6)])].into();
        assert_eq!(got.mentions, expected);
        assert!(got.diagnostics.is_empty());
    }

    /// Brute force: every mention of some mention set that encodes to
    /// `kinds`.
    fn all_oracle(n: usize, kinds: &[TagKind], max: usize) -> BTreeSet<Vec<Span>> {
        let mut pool: Vec<Vec<Span>> = Vec::new();
        for c in 1..=max {
            let mut pts = Vec::new();
            fn choose(
                n: usize,
                k: usize,
                from: usize,
                cur: &mut Vec<usize>,
                out: &mut Vec<Vec<usize>>,
            ) {
                if cur.len() == k {
                    out.push(cur.clone());
                    return;
                }
                for p in from..=n {
                    cur.push(p);
                    choose(n, k, p + 1, cur, out);
                    cur.pop();
                }
            }
            choose(n, 2 * c, 0, &mut Vec::new(), &mut pts);
            for b in pts {
                pool.push((0..c).map(|i| sp(b[2 * i], b[2 * i + 1])).collect());
            }
        }
        // keep only mentions on tagged tokens to bound the subset search
        pool.retain(|mm| mm.iter().all(|s| s.tokens().all(|t| kinds[t] != O)));
        let mut out = BTreeSet::new();
        for mask in 0u64..(1u64 << pool.len()) {
            let set: Vec<&[Span]> = (0..pool.len())
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| pool[i].as_slice())
                .collect();
            if encode_kinds(n, &set) == kinds {
                out.extend(set.iter().map(|s| s.to_vec()));
            }
        }
        out
    }

    #[test]
    fn all_on_infarctions_contains_enumerated_combinations() {
        let seq = encode_linear(&infarctions()).unwrap();
        let got = decode_linear(&seq, Heuristic::All).mentions;
        let oracle = all_oracle(6, &kinds_of(&seq), 3);
        for expected in [
            m(&[(0, 1)]),
            m(&[(0, 1), (2, 4)]),
            m(&[(0, 1), (5, 6)]),
            m(&[(2, 4), (5, 6)]),
        ] {
            assert!(got.contains(&expected), "missing {expected}");
        }
        // every preimage mention is in the ALL output
        for o in &oracle {
            assert!(got.contains(&Mention::from_components("D", o.clone())));
        }
    }

    #[test]
    fn invalid_output_drops_lone_body() {
        let seq = TagSequence::from_kinds(&[O, O, BD], "D");
        let enough = decode_linear(&seq, Heuristic::Enough);
        assert!(enough.mentions.is_empty());
        assert!(enough.diagnostics.contains(&Diagnostic::Dropped {
            label: "D".into(),
            span: sp(2, 3)
        }));
        let all = decode_linear(&seq, Heuristic::All);
        assert!(all.mentions.is_empty());
        assert_eq!(all.diagnostics.len(), 1);
    }

    #[test]
    fn pairing_rules_on_heads_and_bodies() {
        // head with two bodies on its right, then a lone pair of bodies
        let kinds = [BH, O, BD, O, BD, O, O, BD, O, BD];
        let (ms, dropped) = pairing_rules(&kinds, 3);
        assert!(dropped.is_empty());
        assert!(ms.contains(&vec![sp(0, 1), sp(2, 3)]));
        assert!(ms.contains(&vec![sp(0, 1), sp(4, 5)]));
        assert!(ms.contains(&vec![sp(7, 8), sp(9, 10)]));
        // a single leftover body is dropped
        let (_, dropped) = pairing_rules(&[BD, O, O], 3);
        assert_eq!(dropped, vec![sp(0, 1)]);
    }

    #[test]
    fn canonical_small_cases() {
        let c = |k: &[TagKind]| kinds_canonical(k, 3);
        assert!(c(&[B]));
        assert!(c(&[O]));
        assert!(!c(&[BH]));
        assert!(c(&[BH, BH]));
        assert!(!c(&[BH, IH]));
        assert!(c(&[BH, IH, IH]));
        assert!(c(&[BH, I]));
        assert!(!c(&[BD, O, O]));
    }

    #[test]
    fn tagset_indexing() {
        let ts = TagSet::new(vec!["A".into(), "B".into()]);
        assert_eq!(ts.len(), 13);
        for i in 0..ts.len() {
            assert_eq!(ts.index_of(&ts.tag(i)), Some(i));
        }
        let bd_a = ts.index_of(&Tag::new(BD, "A")).unwrap();
        let id_a = ts.index_of(&Tag::new(ID, "A")).unwrap();
        let id_b = ts.index_of(&Tag::new(ID, "B")).unwrap();
        assert!(ts.transition_allowed(Some(bd_a), id_a));
        assert!(!ts.transition_allowed(Some(bd_a), id_b));
        assert!(!ts.transition_allowed(None, id_a));
        assert!(ts.transition_allowed(Some(0), bd_a));
    }
}
