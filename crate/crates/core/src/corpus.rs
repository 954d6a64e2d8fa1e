//! JSON-lines corpus format.
//!
//! One sentence per line:
//!
//! ```text
//! {"tokens":["Infarctions","either","water"],"attrs":{"pos":["NNS","CC","NN"]},
//!  "sattrs":{"note_type":"radiology"},"mentions":[{"label":"D","spans":[[0,1]]}]}
//! ```
//!
//! Spans are `[start, end)` token offsets. Missing `attrs`, `sattrs` or
//! `mentions` keys mean empty.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mention::{
    normalize_mention, validate_sentence, AnnotatedSentence, Corpus, MentionError, Span, Violation,
    DEFAULT_MAX_COMPONENTS,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    Mention {
        line: usize,
        #[source]
        source: MentionError,
    },
    #[error("{} invalid sentence(s); first: line {}: {}", .0.len(), .0[0].0, .0[0].1)]
    Validation(Vec<(usize, Violation)>),
}

#[derive(Debug, Serialize, Deserialize)]
struct RawMention {
    label: String,
    spans: Vec<[usize; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawSentence {
    tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    attrs: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    sattrs: BTreeMap<String, String>,
    #[serde(default)]
    mentions: Vec<RawMention>,
}

/// Parses one JSON line into a sentence, normalizing its mentions.
pub fn parse_sentence(
    json: &str,
    line: usize,
    max_components: usize,
) -> Result<AnnotatedSentence, CorpusError> {
    let raw: RawSentence = serde_json::from_str(json).map_err(|e| CorpusError::Parse {
        line,
        message: e.to_string(),
    })?;
    let mut sentence = AnnotatedSentence {
        tokens: raw.tokens,
        token_attrs: raw.attrs,
        sentence_attrs: raw.sattrs,
        mentions: Default::default(),
    };
    for m in raw.mentions {
        let mut spans = Vec::with_capacity(m.spans.len());
        for [start, end] in m.spans {
            spans.push(
                Span::new(start, end).map_err(|source| CorpusError::Mention { line, source })?,
            );
        }
        let mention = normalize_mention(m.label, spans, max_components)
            .map_err(|source| CorpusError::Mention { line, source })?;
        sentence.mentions.insert(mention);
    }
    Ok(sentence)
}

/// Serializes a sentence as one JSON line (no trailing newline).
pub fn sentence_to_json(s: &AnnotatedSentence) -> String {
    let raw = RawSentence {
        tokens: s.tokens.clone(),
        attrs: s.token_attrs.clone(),
        sattrs: s.sentence_attrs.clone(),
        mentions: s
            .mentions
            .iter()
            .map(|m| RawMention {
                label: m.label().to_owned(),
                spans: m.components().iter().map(|c| [c.start, c.end]).collect(),
            })
            .collect(),
    };
    serde_json::to_string(&raw).expect("sentence serialization cannot fail")
}

/// Reads a corpus, allowing at most `max_components` components per mention.
pub fn read_corpus_from<R: Read>(reader: R, max_components: usize) -> Result<Corpus, CorpusError> {
    let mut sentences = Vec::new();
    let mut violations = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sentence = parse_sentence(&line, line_no, max_components)?;
        violations.extend(
            validate_sentence(&sentence)
                .into_iter()
                .map(|v| (line_no, v)),
        );
        sentences.push(sentence);
    }
    if !violations.is_empty() {
        return Err(CorpusError::Validation(violations));
    }
    Ok(Corpus::new(sentences))
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    read_corpus_with(path, DEFAULT_MAX_COMPONENTS)
}

pub fn read_corpus_with(
    path: impl AsRef<Path>,
    max_components: usize,
) -> Result<Corpus, CorpusError> {
    read_corpus_from(File::open(path)?, max_components)
}

pub fn write_corpus_to<W: Write>(corpus: &Corpus, writer: W) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(writer);
    for s in &corpus.sentences {
        writeln!(w, "{}", sentence_to_json(s))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    write_corpus_to(corpus, File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mention::Mention;

    const FIGURE_ONE: &str = r#"{"tokens":["EGD","showed","hiatal","hernia","and","vertical","laceration","in","distal","esophagus","with","blood","in","stomach","and","overlying","lac","."],"mentions":[{"label":"D","spans":[[2,4]]},{"label":"D","spans":[[6,7],[9,10]]},{"label":"D","spans":[[11,14]]},{"label":"D","spans":[[13,14],[16,17]]}]}"#;

    #[test]
    fn figure_one_sentence() {
        let s = parse_sentence(FIGURE_ONE, 1, 3).unwrap();
        assert_eq!(s.mentions.len(), 4);
        let stomach = 13;
        let sharing: Vec<&Mention> = s.mentions.iter().filter(|m| m.contains(stomach)).collect();
        assert_eq!(sharing.len(), 2);
        assert_eq!(s.tokens[stomach], "stomach");
    }

    #[test]
    fn malformed_span_reports_line() {
        let text = format!(
            "{}\n{}\n",
            r#"{"tokens":["a"],"mentions":[]}"#,
            r#"{"tokens":["a","b","c","d"],"mentions":[{"label":"D","spans":[[3]]}]}"#
        );
        match read_corpus_from(text.as_bytes(), 3) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_bounds_is_validation_error() {
        let text = r#"{"tokens":["a","b"],"mentions":[{"label":"D","spans":[[1,3]]}]}"#;
        match read_corpus_from(text.as_bytes(), 3) {
            Err(CorpusError::Validation(v)) => assert_eq!(v, vec![(1, Violation::OutOfBounds(0))]),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn overlapping_spans_in_one_mention() {
        let text = r#"{"tokens":["a","b","c"],"mentions":[{"label":"D","spans":[[0,2],[1,3]]}]}"#;
        assert!(matches!(
            read_corpus_from(text.as_bytes(), 3),
            Err(CorpusError::Mention { line: 1, .. })
        ));
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let text = [
            FIGURE_ONE,
            r#"{"tokens":["Infarctions","either","water","shed","or","embolic"],"attrs":{"pos":["NNS","CC","NN","NN","CC","JJ"]},"sattrs":{"note_type":"radiology"},"mentions":[{"label":"D","spans":[[0,1],[5,6]]},{"label":"D","spans":[[0,1]]},{"label":"D","spans":[[0,1],[2,4]]}]}"#,
            r#"{"tokens":["no","findings"]}"#,
        ]
        .join("\n");
        let corpus = read_corpus_from(text.as_bytes(), 3).unwrap();
        assert_eq!(corpus.len(), 3);
        let mut first = Vec::new();
        write_corpus_to(&corpus, &mut first).unwrap();
        let reread = read_corpus_from(first.as_slice(), 3).unwrap();
        assert_eq!(reread, corpus);
        let mut second = Vec::new();
        write_corpus_to(&reread, &mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let corpus = read_corpus_from(FIGURE_ONE.as_bytes(), 3).unwrap();
        write_corpus(&corpus, &path).unwrap();
        assert_eq!(read_corpus(&path).unwrap(), corpus);
    }
}
