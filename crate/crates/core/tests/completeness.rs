//! Decoding an encoding never loses a mention, and ENOUGH output encodes
//! back to the same structure.

use std::collections::BTreeSet;

use proptest::prelude::*;

use discner::decode::Heuristic;
use discner::hypergraph::{encode_mention_set, HyperDecoder, Schema, Variant};
use discner::mention::{Mention, Span};
use discner::tagging::{encode_mentions, LinearDecoder};

const K: usize = 3;

fn all_mentions(n: usize, label: &str) -> Vec<Mention> {
    fn rec(n: usize, cur: &mut Vec<Span>, out: &mut Vec<Vec<Span>>) {
        if !cur.is_empty() {
            out.push(cur.clone());
        }
        if cur.len() == K {
            return;
        }
        let from = cur.last().map_or(0, |s| s.end + 1);
        for s in from..n {
            for e in s + 1..=n {
                cur.push(Span::new(s, e).unwrap());
                rec(n, cur, out);
                cur.pop();
            }
        }
    }
    let mut spans = Vec::new();
    rec(n, &mut Vec::new(), &mut spans);
    spans
        .into_iter()
        .map(|c| Mention::from_components(label, c))
        .collect()
}

fn labels(set: &BTreeSet<Mention>) -> Vec<String> {
    let mut l: Vec<String> = set.iter().map(|m| m.label().to_owned()).collect();
    l.sort();
    l.dedup();
    if l.is_empty() {
        l.push("D".into());
    }
    l
}

/// Checks every model on one mention set; returns a description of the
/// first failure.
fn check(n: usize, set: &BTreeSet<Mention>) -> Result<(), String> {
    let linear = LinearDecoder {
        max_components: K,
        ..LinearDecoder::default()
    };
    // cross-label overlaps cannot be tagged; the hypergraphs still apply
    if let Ok(seq) = encode_mentions(n, set.iter()) {
        let all = linear.decode(&seq, Heuristic::All).mentions;
        if !set.is_subset(&all) {
            return Err(format!("linear ALL misses mentions of {set:?}"));
        }
        let enough = linear.decode(&seq, Heuristic::Enough).mentions;
        if encode_mentions(n, enough.iter()).ok().as_ref() != Some(&seq) {
            return Err(format!("linear ENOUGH of {set:?} re-encodes differently"));
        }
    }
    for variant in [Variant::Shared, Variant::Split] {
        let schema = Schema::new(variant, K, labels(set));
        let g = encode_mention_set(&schema, n, set.iter()).map_err(|e| e.to_string())?;
        let all = HyperDecoder::default().decode(&g, Heuristic::All).mentions;
        if !set.is_subset(&all) {
            return Err(format!("{variant} ALL misses mentions of {set:?}"));
        }
        let enough = HyperDecoder::default()
            .decode(&g, Heuristic::Enough)
            .mentions;
        let again = encode_mention_set(&schema, n, enough.iter()).map_err(|e| e.to_string())?;
        if again != g {
            return Err(format!(
                "{variant} ENOUGH of {set:?} gives {enough:?}, which re-encodes differently"
            ));
        }
    }
    Ok(())
}

#[test]
fn exhaustive_up_to_four_tokens() {
    for n in 1..=4 {
        let mentions = all_mentions(n, "D");
        for mask in 0u32..(1 << mentions.len()) {
            let set: BTreeSet<Mention> = mentions
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, m)| m.clone())
                .collect();
            if let Err(e) = check(n, &set) {
                panic!("n={n}: {e}");
            }
        }
    }
}

fn mention_strategy(n: usize) -> impl Strategy<Value = Mention> {
    // 2c sorted distinct boundaries in 0..=n give c gap-separated spans
    (
        1..=K.min(n.div_ceil(2)),
        prop::sample::select(vec!["D", "F"]),
    )
        .prop_flat_map(move |(c, label)| {
            prop::sample::subsequence((0..=n).collect::<Vec<_>>(), 2 * c).prop_map(move |b| {
                let spans = b
                    .chunks(2)
                    .map(|p| Span::new(p[0], p[1]).unwrap())
                    .collect();
                Mention::from_components(label, spans)
            })
        })
}

fn set_strategy() -> impl Strategy<Value = (usize, BTreeSet<Mention>)> {
    (1usize..=8).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::btree_set(mention_strategy(n), 0..=5),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn random_sets_up_to_eight_tokens((n, set) in set_strategy()) {
        prop_assert!(check(n, &set).is_ok(), "{}", check(n, &set).unwrap_err());
    }
}
