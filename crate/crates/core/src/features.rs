//! Observation templates and the feature dictionary.
//!
//! Templates produce observation strings per token position. An edge lists
//! contexts `(position, signature)`; its features are `signature|bias` and
//! `signature|obs` for every observation at that position.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mention::{AnnotatedSentence, Corpus};

pub type FeatureId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("template references missing attribute '{0}'")]
    UnknownAttribute(String),
}

/// Name of the token attribute whose values are hierarchical cluster paths.
pub const CLUSTER_COLUMN: &str = "cluster";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "template", rename_all = "snake_case")]
pub enum FeatureTemplate {
    /// `w[o]=word` for `|o| <= window`.
    Words {
        window: usize,
    },
    /// `w[o]|w[0]` for `0 < |o| <= window`.
    WordPairs {
        window: usize,
    },
    /// Word n-grams containing the current word, `2 <= n <= max_n`.
    WordNgrams {
        max_n: usize,
    },
    /// Attribute unigrams in a window, plus bigrams through the current token.
    Attribute {
        column: String,
        window: usize,
    },
    Affixes {
        max_len: usize,
    },
    Shape,
    SentenceAttribute {
        name: String,
    },
    /// Every prefix of the token's cluster path.
    ClusterPrefixes {
        column: String,
    },
}

/// The standard inventory, with attribute templates for every column the
/// corpus declares.
pub fn default_templates(corpus: &Corpus) -> Vec<FeatureTemplate> {
    let mut t = vec![
        FeatureTemplate::Words { window: 3 },
        FeatureTemplate::WordPairs { window: 2 },
        FeatureTemplate::WordNgrams { max_n: 3 },
        FeatureTemplate::Affixes { max_len: 4 },
        FeatureTemplate::Shape,
    ];
    let columns: BTreeSet<&String> = corpus
        .sentences
        .iter()
        .flat_map(|s| s.token_attrs.keys())
        .collect();
    for c in columns {
        if c == CLUSTER_COLUMN {
            t.push(FeatureTemplate::ClusterPrefixes { column: c.clone() });
        } else {
            t.push(FeatureTemplate::Attribute {
                column: c.clone(),
                window: 2,
            });
        }
    }
    let names: BTreeSet<&String> = corpus
        .sentences
        .iter()
        .flat_map(|s| s.sentence_attrs.keys())
        .collect();
    for n in names {
        t.push(FeatureTemplate::SentenceAttribute { name: n.clone() });
    }
    t
}

/// Capitalization shape; long words keep the first three and last characters.
pub fn shape(word: &str) -> String {
    let class = |c: char| {
        if c.is_uppercase() {
            'X'
        } else if c.is_lowercase() {
            'x'
        } else if c.is_numeric() {
            'd'
        } else {
            c
        }
    };
    let chars: Vec<char> = word.chars().collect();
    if chars.len() <= 4 {
        return chars.into_iter().map(class).collect();
    }
    let mut s: String = chars[..3].iter().map(|&c| class(c)).collect();
    s.push_str("...");
    s.push(class(chars[chars.len() - 1]));
    s
}

fn word_at(s: &AnnotatedSentence, k: usize, o: isize) -> &str {
    let p = k as isize + o;
    if p < 0 {
        "<BOS>"
    } else if p as usize >= s.len() {
        "<EOS>"
    } else {
        &s.tokens[p as usize]
    }
}

fn column_at(col: &[String], k: usize, o: isize) -> &str {
    let p = k as isize + o;
    if p < 0 {
        "<BOS>"
    } else if p as usize >= col.len() {
        "<EOS>"
    } else {
        &col[p as usize]
    }
}

/// Observation strings for every position of `s`.
pub fn observations(
    s: &AnnotatedSentence,
    templates: &[FeatureTemplate],
) -> Result<Vec<Vec<String>>, FeatureError> {
    let n = s.len();
    let mut out = vec![Vec::new(); n];
    for t in templates {
        match t {
            FeatureTemplate::Attribute { column, .. }
            | FeatureTemplate::ClusterPrefixes { column }
                if !s.token_attrs.contains_key(column) =>
            {
                return Err(FeatureError::UnknownAttribute(column.clone()));
            }
            FeatureTemplate::SentenceAttribute { name } if !s.sentence_attrs.contains_key(name) => {
                return Err(FeatureError::UnknownAttribute(name.clone()));
            }
            _ => {}
        }
    }
    for (k, obs) in out.iter_mut().enumerate() {
        for t in templates {
            match t {
                FeatureTemplate::Words { window } => {
                    let w = *window as isize;
                    for o in -w..=w {
                        obs.push(format!("w[{o}]={}", word_at(s, k, o)));
                    }
                }
                FeatureTemplate::WordPairs { window } => {
                    let w = *window as isize;
                    for o in (-w..=w).filter(|&o| o != 0) {
                        obs.push(format!(
                            "w[{o}]|w[0]={}|{}",
                            word_at(s, k, o),
                            word_at(s, k, 0)
                        ));
                    }
                }
                FeatureTemplate::WordNgrams { max_n } => {
                    for size in 2..=*max_n as isize {
                        for first in (1 - size)..=0 {
                            let gram: Vec<&str> =
                                (first..first + size).map(|o| word_at(s, k, o)).collect();
                            obs.push(format!("ng[{first}:{size}]={}", gram.join("_")));
                        }
                    }
                }
                FeatureTemplate::Attribute { column, window } => {
                    let col = &s.token_attrs[column];
                    let w = *window as isize;
                    for o in -w..=w {
                        obs.push(format!("{column}[{o}]={}", column_at(col, k, o)));
                    }
                    for first in [-1isize, 0] {
                        obs.push(format!(
                            "{column}[{first}:2]={}_{}",
                            column_at(col, k, first),
                            column_at(col, k, first + 1)
                        ));
                    }
                }
                FeatureTemplate::Affixes { max_len } => {
                    let chars: Vec<char> = s.tokens[k].chars().collect();
                    for len in 1..=(*max_len).min(chars.len()) {
                        let pre: String = chars[..len].iter().collect();
                        let suf: String = chars[chars.len() - len..].iter().collect();
                        obs.push(format!("pre{len}={pre}"));
                        obs.push(format!("suf{len}={suf}"));
                    }
                }
                FeatureTemplate::Shape => obs.push(format!("shape={}", shape(&s.tokens[k]))),
                FeatureTemplate::SentenceAttribute { name } => {
                    obs.push(format!("s:{name}={}", s.sentence_attrs[name]));
                }
                FeatureTemplate::ClusterPrefixes { column } => {
                    let path = &s.token_attrs[column][k];
                    for len in 1..=path.chars().count() {
                        let prefix: String = path.chars().take(len).collect();
                        obs.push(format!("{column}={prefix}"));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Where an edge's features come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeContext {
    pub pos: Option<usize>,
    pub signature: String,
}

impl EdgeContext {
    pub fn at(pos: usize, signature: impl Into<String>) -> Self {
        EdgeContext {
            pos: Some(pos),
            signature: signature.into(),
        }
    }

    pub fn global(signature: impl Into<String>) -> Self {
        EdgeContext {
            pos: None,
            signature: signature.into(),
        }
    }
}

/// Feature strings of one edge.
pub fn feature_strings(contexts: &[EdgeContext], obs: &[Vec<String>]) -> Vec<String> {
    let mut out = Vec::new();
    for c in contexts {
        out.push(format!("{}|bias", c.signature));
        if let Some(p) = c.pos {
            out.extend(obs[p].iter().map(|o| format!("{}|{o}", c.signature)));
        }
    }
    out
}

/// Dense ids for feature strings, assigned in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "IndexFile", into = "IndexFile")]
pub struct FeatureIndex {
    names: Vec<String>,
    ids: HashMap<String, FeatureId>,
    frozen: bool,
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    frozen: bool,
    names: Vec<String>,
}

impl From<IndexFile> for FeatureIndex {
    fn from(f: IndexFile) -> Self {
        let ids = f
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as FeatureId))
            .collect();
        FeatureIndex {
            names: f.names,
            ids,
            frozen: f.frozen,
        }
    }
}

impl From<FeatureIndex> for IndexFile {
    fn from(f: FeatureIndex) -> Self {
        IndexFile {
            frozen: f.frozen,
            names: f.names,
        }
    }
}

impl FeatureIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn get(&self, name: &str) -> Option<FeatureId> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: FeatureId) -> &str {
        &self.names[id as usize]
    }

    /// Id of `name`, adding it unless the index is frozen.
    pub fn intern(&mut self, name: &str) -> Option<FeatureId> {
        if let Some(id) = self.get(name) {
            return Some(id);
        }
        if self.frozen {
            return None;
        }
        let id = self.names.len() as FeatureId;
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        Some(id)
    }

    /// Ids of the known features among `names`; unknown ones are dropped.
    pub fn lookup(&self, names: &[String]) -> Vec<FeatureId> {
        names.iter().filter_map(|n| self.get(n)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        assert_eq!(shape("Infarctions"), "Xxx...x");
        assert_eq!(shape("EGD"), "XXX");
        assert_eq!(shape("a1-B"), "xd-X");
        assert_eq!(shape("12345"), "ddd...d");
    }

    #[test]
    fn boundary_words() {
        let s = AnnotatedSentence::from_words("Infarctions either");
        let obs = observations(&s, &[FeatureTemplate::Words { window: 1 }]).unwrap();
        assert!(obs[0].contains(&"w[-1]=<BOS>".to_owned()));
        assert!(obs[1].contains(&"w[1]=<EOS>".to_owned()));
        assert!(obs[0].contains(&"w[0]=Infarctions".to_owned()));
    }

    #[test]
    fn shape_conjoined_with_signature() {
        let s = AnnotatedSentence::from_words("Infarctions");
        let obs = observations(&s, &[FeatureTemplate::Shape]).unwrap();
        let f = feature_strings(&[EdgeContext::at(0, "T:D>B")], &obs);
        assert_eq!(
            f,
            vec!["T:D>B|bias".to_owned(), "T:D>B|shape=Xxx...x".to_owned()]
        );
    }

    #[test]
    fn cluster_prefixes_and_attributes() {
        let mut s = AnnotatedSentence::from_words("a b");
        s.token_attrs
            .insert("cluster".into(), vec!["0110".into(), "10".into()]);
        s.token_attrs
            .insert("pos".into(), vec!["DT".into(), "NN".into()]);
        let obs = observations(
            &s,
            &[
                FeatureTemplate::ClusterPrefixes {
                    column: "cluster".into(),
                },
                FeatureTemplate::Attribute {
                    column: "pos".into(),
                    window: 1,
                },
            ],
        )
        .unwrap();
        for p in [
            "cluster=0",
            "cluster=01",
            "cluster=011",
            "cluster=0110",
            "pos[1]=NN",
            "pos[0:2]=DT_NN",
        ] {
            assert!(obs[0].contains(&p.to_owned()), "{p}");
        }
        let missing = observations(
            &s,
            &[FeatureTemplate::SentenceAttribute {
                name: "section".into(),
            }],
        );
        assert_eq!(
            missing,
            Err(FeatureError::UnknownAttribute("section".into()))
        );
    }

    #[test]
    fn frozen_index_drops_unseen() {
        let mut idx = FeatureIndex::new();
        assert_eq!(idx.intern("a"), Some(0));
        assert_eq!(idx.intern("b"), Some(1));
        assert_eq!(idx.intern("a"), Some(0));
        idx.freeze();
        assert_eq!(idx.intern("c"), None);
        assert_eq!(idx.len(), 2);
        assert_eq!(idx.lookup(&["b".into(), "c".into()]), vec![1]);
        let json = serde_json::to_string(&idx).unwrap();
        let back: FeatureIndex = serde_json::from_str(&json).unwrap();
        assert_eq!(back, idx);
    }
}
