//! Recognition of discontiguous and overlapping mentions.

pub mod bench;
pub mod corpus;
pub mod counting;
pub mod decode;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod graph;
pub mod hypergraph;
pub mod inference;
pub mod mention;
pub mod model;
pub mod synth;
pub mod tagging;
pub mod train;
pub mod trellis;
