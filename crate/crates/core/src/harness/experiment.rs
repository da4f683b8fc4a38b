//! One grid cell end to end: data, classifier, pretraining, adaptation and
//! evaluation. The CLI and the grid runner share these pieces.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use super::checkpoint::save_checkpoint;
use super::config::{ClassifierChoice, ExperimentConfig, GridMethod};
use crate::data::{build_dataset_pair, generate_base, DatasetPair, FamilyKind, SyntheticFamily};
use crate::error::{Error, Result};
use crate::gan::GanState;
use crate::metrics::{
    balanced_reference_stats, train_classifier_for_pair, AttrClassifier, ClassifierConfig,
    Classify, Evaluate, Evaluator, GaussStats, MetricsReport,
};
use crate::numerics::{mix_seed, Rng};
use crate::pipeline::{adapt_fairtl, adapt_fairtlpp, pretrain, RunRecord, TrainHooks};

const DATA_STREAM: u64 = 0x10;
const SPLIT_STREAM: u64 = 0x11;
const CLASSIFIER_STREAM: u64 = 0x12;
const REFERENCE_STREAM: u64 = 0x13;
const PRETRAIN_STREAM: u64 = 0x14;
const FAIRTL_STREAM: u64 = 0x15;
const FAIRTLPP_STREAM: u64 = 0x16;

/// Seed of a grid cell, a function of the root seed and the cell's
/// coordinates only.
pub fn cell_seed(root: u64, bias_index: usize, perc_index: usize, seed: u64) -> u64 {
    let s = mix_seed(root, seed);
    let s = mix_seed(s, bias_index as u64 + 1);
    mix_seed(s, perc_index as u64 + 1)
}

pub fn stream_seed(cell: u64, method: GridMethod) -> u64 {
    mix_seed(
        cell,
        match method {
            GridMethod::Pretrained => PRETRAIN_STREAM,
            GridMethod::FairTl => FAIRTL_STREAM,
            GridMethod::FairTlPp => FAIRTLPP_STREAM,
        },
    )
}

/// Generates a base pool and splits it into `D_bias`, `D_ref` and the
/// evaluation holdout.
pub fn build_pair(
    cfg: &ExperimentConfig,
    bias: &[f64],
    perc: f64,
    cell: u64,
) -> Result<DatasetPair> {
    let family = cfg.family()?;
    let spec = &cfg.data.attributes;
    let n = cfg.data.base_per_class * spec.joint_cardinality();
    let base = generate_base(&family, spec, n, &mut Rng::new(mix_seed(cell, DATA_STREAM)))?;
    build_dataset_pair(
        &base,
        bias,
        cfg.data.size_bias,
        perc,
        &mut Rng::new(mix_seed(cell, SPLIT_STREAM)),
    )
}

/// Attribute classifier and balanced reference statistics for one pair.
pub struct EvalContext {
    pub classifier: AttrClassifier,
    pub reference: GaussStats,
}

impl EvalContext {
    pub fn new(cfg: &ExperimentConfig, pair: &DatasetPair, cell: u64) -> Result<Self> {
        let family = cfg.family()?;
        let classifier = make_classifier(cfg, &family, pair, cell)?;
        classifier.ensure_usable()?;
        let reference = balanced_reference_stats(
            &pair.eval_holdout,
            &cfg.data.attributes,
            cfg.eval.reference_per_class,
            &mut Rng::new(mix_seed(cell, REFERENCE_STREAM)),
        )?;
        Ok(EvalContext {
            classifier,
            reference,
        })
    }

    pub fn evaluator(&self, cfg: &ExperimentConfig, config_hash: &str) -> Evaluator<'_> {
        Evaluator {
            classifier: &self.classifier,
            reference: self.reference.clone(),
            n_samples: cfg.eval.n_samples,
            seed: cfg.eval.noise_seed,
            config_hash: config_hash.to_string(),
        }
    }
}

fn make_classifier(
    cfg: &ExperimentConfig,
    family: &SyntheticFamily,
    pair: &DatasetPair,
    cell: u64,
) -> Result<AttrClassifier> {
    let spec = &cfg.data.attributes;
    let learned = match cfg.eval.classifier {
        ClassifierChoice::Auto => family.kind() != FamilyKind::GaussianMixture2d,
        ClassifierChoice::BayesOracle => false,
        ClassifierChoice::Learned => true,
    };
    if learned {
        let c = ClassifierConfig::for_family(family.kind());
        train_classifier_for_pair(
            pair,
            spec,
            &c,
            &mut Rng::new(mix_seed(cell, CLASSIFIER_STREAM)),
        )
    } else {
        AttrClassifier::bayes_oracle(family, spec)
    }
}

/// Final metrics and time series of one method in one cell.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: GridMethod,
    pub report: MetricsReport,
    pub evals: Vec<MetricsReport>,
    pub runtime_s: f64,
    pub state: GanState,
}

fn finish(
    method: GridMethod,
    record: RunRecord,
    epochs: usize,
    evaluator: &dyn Evaluate,
    started: Instant,
) -> Result<MethodResult> {
    let report = match record.evals.last() {
        Some(r) if r.epoch == epochs => r.clone(),
        _ => evaluator.evaluate(&record.state, epochs)?,
    };
    Ok(MethodResult {
        method,
        report,
        evals: record.evals,
        runtime_s: started.elapsed().as_secs_f64(),
        state: record.state,
    })
}

/// Runs the requested methods on one cell. Pretraining always runs, since
/// both adaptation methods start from it.
pub fn run_cell(
    cfg: &ExperimentConfig,
    config_hash: &str,
    bias: &[f64],
    perc: f64,
    cell: u64,
    methods: &[GridMethod],
) -> Result<Vec<MethodResult>> {
    let pair = build_pair(cfg, bias, perc, cell)?;
    let ctx = EvalContext::new(cfg, &pair, cell)?;
    let evaluator = ctx.evaluator(cfg, config_hash);
    let arch = cfg.arch(pair.bias_features().dim());

    let started = Instant::now();
    let stage = cfg.pretrain_stage(stream_seed(cell, GridMethod::Pretrained));
    let record = pretrain(
        &pair.union_features(),
        &arch,
        &stage,
        TrainHooks::with_evaluator(&evaluator),
    )?;
    let pre = finish(
        GridMethod::Pretrained,
        record,
        stage.epochs,
        &evaluator,
        started,
    )?;

    let reference = pair.ref_features();
    let mut out = Vec::new();
    for &method in methods {
        let started = Instant::now();
        let seed = stream_seed(cell, method);
        let result = match method {
            GridMethod::Pretrained => continue,
            GridMethod::FairTl => {
                let stage = cfg.fairtl_stage(reference.len(), seed);
                let record = adapt_fairtl(
                    &pre.state,
                    &reference,
                    &stage,
                    TrainHooks::with_evaluator(&evaluator),
                )?;
                finish(method, record, stage.epochs, &evaluator, started)?
            }
            GridMethod::FairTlPp => {
                let stage = cfg.fairtlpp_stage(reference.len(), seed)?;
                let record = adapt_fairtlpp(
                    &pre.state,
                    &reference,
                    &stage,
                    TrainHooks::with_evaluator(&evaluator),
                )?;
                finish(method, record, stage.epochs, &evaluator, started)?
            }
        };
        out.push(result);
    }
    if methods.contains(&GridMethod::Pretrained) {
        out.insert(0, pre);
    }
    out.sort_by_key(|r| r.method);
    Ok(out)
}

/// Writes `epoch,fd,frechet_sq` rows.
pub fn metrics_series_csv(evals: &[MetricsReport]) -> String {
    let mut s = String::from("epoch,fd,frechet_sq\n");
    for r in evals {
        let _ = writeln!(s, "{},{:.16e},{:.16e}", r.epoch, r.fd, r.frechet_sq);
    }
    s
}

/// Persists one cell's checkpoints and metric series under `dir`.
pub fn persist_cell(
    dir: &Path,
    results: &[MethodResult],
    seed: u64,
    config_hash: &str,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    for r in results {
        let name = r.method.name();
        save_checkpoint(
            &r.state,
            &dir.join(format!("{name}.ckpt")),
            seed,
            config_hash,
        )?;
        fs::write(
            dir.join(format!("{name}_metrics.csv")),
            metrics_series_csv(&r.evals),
        )?;
    }
    Ok(())
}

pub(crate) fn require_methods(methods: &[GridMethod]) -> Result<()> {
    if methods.is_empty() {
        return Err(Error::invalid("no methods requested"));
    }
    Ok(())
}
