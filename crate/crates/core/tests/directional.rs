//! Seeded directional checks of the training pipeline on the 2D benchmark.

use fairgan::data::DatasetPair;
use fairgan::harness::experiment::stream_seed;
use fairgan::harness::{build_pair, cell_seed, run_cell, ExperimentConfig, GridMethod};
use fairgan::metrics::{AttrClassifier, Classify};
use fairgan::numerics::Rng;
use fairgan::pipeline::{pretrain, TrainHooks};

const SEEDS: u64 = 5;

fn class_shares(cfg: &ExperimentConfig, state: &fairgan::gan::GanState, seed: u64) -> Vec<f64> {
    let oracle =
        AttrClassifier::bayes_oracle(&cfg.family().unwrap(), &cfg.data.attributes).unwrap();
    let samples = state.sample(4096, &mut Rng::new(seed)).unwrap();
    let labels = oracle.classify_batch(&samples);
    let mut counts = vec![0.0; oracle.num_classes()];
    for l in labels {
        counts[l] += 1.0;
    }
    counts.iter().map(|c| c / 4096.0).collect()
}

fn pretrained_shares(bias: &[f64]) -> Vec<Vec<f64>> {
    let cfg = ExperimentConfig::default();
    (0..SEEDS)
        .map(|s| {
            let cell = cell_seed(cfg.seed, 0, 0, s);
            let pair: DatasetPair = build_pair(&cfg, bias, 0.1, cell).unwrap();
            let mut stage = cfg.pretrain_stage(stream_seed(cell, GridMethod::Pretrained));
            stage.eval_every = 0;
            let union = pair.union_features();
            let state = pretrain(
                &union,
                &cfg.arch(union.dim()),
                &stage,
                TrainHooks::default(),
            )
            .unwrap()
            .state;
            class_shares(&cfg, &state, s)
        })
        .collect()
}

#[test]
fn unbiased_pretraining_is_balanced() {
    for shares in pretrained_shares(&[0.5, 0.5]) {
        assert!((shares[0] - 0.5).abs() <= 0.1, "{shares:?}");
    }
}

#[test]
fn biased_pretraining_favours_the_majority() {
    for shares in pretrained_shares(&[0.9, 0.1]) {
        assert!(shares[0] > 0.6, "{shares:?}");
    }
}

fn fd_by_method(perc_index: usize, perc: f64, methods: &[GridMethod]) -> Vec<Vec<f64>> {
    let cfg = ExperimentConfig::default();
    let hash = cfg.hash();
    (0..SEEDS)
        .map(|s| {
            let cell = cell_seed(cfg.seed, 0, perc_index, s);
            run_cell(&cfg, &hash, &[0.9, 0.1], perc, cell, methods)
                .unwrap()
                .iter()
                .map(|r| r.report.fd)
                .collect()
        })
        .collect()
}

#[test]
fn fairtl_lowers_fd_in_most_seeds() {
    let runs = fd_by_method(1, 0.1, &[GridMethod::Pretrained, GridMethod::FairTl]);
    let improved = runs.iter().filter(|fd| fd[1] < fd[0]).count();
    assert!(improved >= 4, "{runs:?}");
}

#[test]
fn fairtlpp_is_no_worse_than_fairtl_at_the_smallest_reference() {
    let runs = fd_by_method(3, 0.025, &[GridMethod::FairTl, GridMethod::FairTlPp]);
    let mean = |i: usize| runs.iter().map(|fd| fd[i]).sum::<f64>() / runs.len() as f64;
    assert!(
        mean(1) <= mean(0),
        "fairtl {} fairtlpp {}",
        mean(0),
        mean(1)
    );
}
