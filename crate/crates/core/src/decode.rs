//! Types shared by the linear-chain and hypergraph decoders.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::mention::{Mention, Span};

/// Default cap on the number of mentions an ALL decoding may produce.
pub const DEFAULT_ALL_LIMIT: usize = 10_000;

/// How an ambiguous output structure is turned into mentions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Heuristic {
    /// A small set of mentions that encodes back to the structure.
    Enough,
    /// Every mention consistent with the structure.
    All,
}

impl FromStr for Heuristic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "enough" => Ok(Heuristic::Enough),
            "all" => Ok(Heuristic::All),
            other => Err(format!("unknown heuristic '{other}' (expected enough|all)")),
        }
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Heuristic::Enough => "enough",
            Heuristic::All => "all",
        })
    }
}

/// Something the decoder had to skip or approximate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    /// Tagged tokens that no well-formed mention can contain.
    Dropped { label: String, span: Span },
    /// ALL enumeration stopped at the limit.
    Truncated { limit: usize },
    /// Exact ENOUGH search failed or ran out of budget; the pairing rules
    /// were used instead.
    Fallback,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Dropped { label, span } => write!(f, "dropped {label} component {span}"),
            Diagnostic::Truncated { limit } => {
                write!(f, "ALL decoding truncated at {limit} mentions")
            }
            Diagnostic::Fallback => write!(f, "ENOUGH fell back to pairing rules"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Decoded {
    pub mentions: BTreeSet<Mention>,
    pub diagnostics: Vec<Diagnostic>,
}
