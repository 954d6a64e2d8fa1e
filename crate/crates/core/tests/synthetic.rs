//! Generator statistics and the decoding-ambiguity ordering on generated corpora.

use proptest::prelude::*;

use discner::decode::Heuristic;
use discner::experiment::ambiguity_experiment;
use discner::model::ModelKind;
use discner::synth::{generate_synthetic, SynthConfig};
use discner::tagging::encode_linear;

const MODELS: [ModelKind; 3] = [ModelKind::Linear, ModelKind::Shared, ModelKind::Split];

#[test]
fn default_config_hits_discontiguous_target() {
    for seed in 0..5 {
        let c = generate_synthetic(&SynthConfig {
            seed,
            sentences: 1000,
            ..SynthConfig::default()
        })
        .unwrap();
        assert!((c.discontiguous_fraction() - 0.54).abs() <= 0.03);
    }
}

#[test]
fn multi_type_corpora_use_every_type_and_stay_taggable() {
    let cfg = SynthConfig {
        sentences: 300,
        ..SynthConfig::with_types(3)
    };
    let c = generate_synthetic(&cfg).unwrap();
    assert_eq!(c.labels(), vec!["T0", "T1", "T2"]);
    assert!(c.sentences.iter().all(|s| encode_linear(s).is_ok()));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn all_decoding_counts_are_ordered(seed in any::<u64>(), overlap in 0.0f64..0.6, crossed in 0.0f64..1.0) {
        let corpus = generate_synthetic(&SynthConfig {
            seed,
            sentences: 60,
            overlap_prob: overlap,
            crossed_share: crossed,
            ..SynthConfig::default()
        })
        .unwrap();
        let report = ambiguity_experiment(&corpus, &MODELS, 3);
        let all: Vec<usize> = MODELS
            .iter()
            .map(|&m| report.row(m, Heuristic::All).unwrap().mentions)
            .collect();
        prop_assert!(all[0] >= all[1] && all[1] >= all[2] && all[2] >= report.gold_mentions, "{all:?}");
        for m in MODELS {
            prop_assert_eq!(report.row(m, Heuristic::All).unwrap().recall_error, 0.0);
        }
    }
}
