use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fairgan::data::io::{load_pair, read_samples, save_pair};
use fairgan::data::{DatasetPair, FeatureSet, StripLabels};
use fairgan::gan::{FreezeMask, Stage};
use fairgan::harness::experiment::stream_seed;
use fairgan::harness::grid::CONFIG_FILE;
use fairgan::harness::{
    build_pair, cell_seed, read_checkpoint, run_grid, save_checkpoint, EvalContext,
    ExperimentConfig, GridMethod,
};
use fairgan::metrics::{balanced_reference_rows, Evaluate};
use fairgan::numerics::{Matrix, Rng};
use fairgan::pipeline::{
    adapt_fairtl, adapt_fairtlpp, debias_pretrained, fixed_noise_gallery, layer_change_study,
    pretrain, LayerStudyConfig, Method, Network, RunRecord, StageConfig, TrainHooks,
};
use fairgan::{Error, Result};

fn holdout_only(path: &Path) -> Result<DatasetPair> {
    let (eval_holdout, k) = read_samples(path)?;
    Ok(DatasetPair {
        d_bias: Vec::new(),
        d_ref: Vec::new(),
        eval_holdout,
        bias_vector: vec![1.0 / k as f64; k],
        perc: 0.0,
    })
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "fairgan",
    version,
    about = "Fair GAN adaptation with fairTL and fairTL++"
)]
struct Cli {
    /// TOML run configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dataset operations.
    Dataset {
        #[command(subcommand)]
        action: DatasetAction,
    },
    /// Pretrain on D_bias ∪ D_ref from a dataset directory.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Adapt a pretrained checkpoint on the D_ref of a dataset directory.
    Adapt {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        adapt: AdaptArgs,
    },
    /// Debias a saved model using only a reference sample file.
    Debias {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Reference samples in the dataset text format.
        #[arg(long)]
        reference: PathBuf,
        #[command(flatten)]
        adapt: AdaptArgs,
    },
    /// Report FD and Fréchet distance of a checkpoint against a dataset's holdout.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, required_unless_present = "holdout", conflicts_with = "holdout")]
        data: Option<PathBuf>,
        /// Holdout sample file, for when the training splits are gone.
        #[arg(long)]
        holdout: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Experiment grids.
    Grid {
        #[command(subcommand)]
        action: GridAction,
    },
    /// Mean per-layer weight change under fairTL with a large balanced reference.
    LayerStudy {
        #[arg(long)]
        out: PathBuf,
        /// Override the adaptation epochs; 0 gives the no-op control.
        #[arg(long)]
        adapt_epochs: Option<usize>,
        #[arg(long, default_value_t = 0.5)]
        min_reference_ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sample two checkpoints on one shared noise batch.
    Gallery {
        #[arg(long)]
        before: PathBuf,
        #[arg(long)]
        after: PathBuf,
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum DatasetAction {
    /// Generate a biased/reference/holdout split and write it to a directory.
    Build {
        #[arg(long)]
        out: PathBuf,
        /// Override the configured perc.
        #[arg(long)]
        perc: Option<f64>,
        /// Override the configured bias vector, comma separated.
        #[arg(long, value_delimiter = ',')]
        bias: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum GridAction {
    /// Run the configured grid and write reports.
    Run {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
    },
}

#[derive(Args)]
struct AdaptArgs {
    #[arg(long, default_value = "fairtlpp")]
    method: String,
    /// Weight of the adapted discriminator in the fairTL++ generator loss.
    #[arg(long)]
    lambda: Option<f64>,
    /// Epochs with the lower discriminator layers frozen (fairTL++ only).
    #[arg(long)]
    lp_epochs: Option<usize>,
    /// Override the adaptation epochs.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            })
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run(cli: Cli) -> Result<u8> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Dataset {
            action:
                DatasetAction::Build {
                    out,
                    perc,
                    bias,
                    seed,
                },
        } => {
            if let Some(p) = perc {
                cfg.data.perc = p;
            }
            if let Some(b) = bias {
                cfg.data.bias = b;
            }
            cfg.validate()?;
            let pair = build_pair(
                &cfg,
                &cfg.data.bias,
                cfg.data.perc,
                cell_seed(cfg.seed, 0, 0, seed),
            )?;
            save_pair(&pair, &out)?;
            fs::write(out.join(CONFIG_FILE), cfg.resolved_toml())?;
            println!(
                "d_bias={} d_ref={} eval_holdout={} dir={}",
                pair.d_bias.len(),
                pair.d_ref.len(),
                pair.eval_holdout.len(),
                out.display()
            );
        }
        Command::Pretrain { data, out, seed } => {
            let pair = load_pair(&data)?;
            let union = pair.union_features();
            let cell = cell_seed(cfg.seed, 0, 0, seed);
            let stage = cfg.pretrain_stage(stream_seed(cell, GridMethod::Pretrained));
            let record = pretrain(
                &union,
                &cfg.arch(union.dim()),
                &stage,
                TrainHooks::default(),
            )?;
            report_losses(&record);
            save_checkpoint(&record.state, &out, seed, &cfg.hash())?;
            println!("checkpoint={}", out.display());
        }
        Command::Adapt {
            data,
            checkpoint,
            adapt,
        } => {
            let pair = load_pair(&data)?;
            let source = read_checkpoint(&checkpoint)?.into_state()?;
            if source.stage() != Stage::Pretrained {
                return Err(Error::Stage(format!(
                    "source checkpoint is {}",
                    source.stage()
                )));
            }
            let reference = pair.ref_features();
            let method: Method = adapt.method.parse()?;
            let stage = adapt_stage(
                &mut cfg,
                &adapt,
                method,
                reference.len(),
                source.discriminator().num_layers(),
            )?;
            let record = match method {
                Method::FairTl => adapt_fairtl(&source, &reference, &stage, TrainHooks::default())?,
                Method::FairTlPp => {
                    adapt_fairtlpp(&source, &reference, &stage, TrainHooks::default())?
                }
            };
            report_losses(&record);
            save_checkpoint(&record.state, &adapt.out, adapt.seed, &cfg.hash())?;
            println!("checkpoint={}", adapt.out.display());
        }
        Command::Debias {
            checkpoint,
            reference,
            adapt,
        } => {
            let ckpt = read_checkpoint(&checkpoint)?;
            let (samples, _) = read_samples(&reference)?;
            let reference = samples.strip_labels();
            let method: Method = adapt.method.parse()?;
            let layers = ckpt
                .discriminator
                .as_ref()
                .ok_or(Error::MissingDiscriminator)?
                .num_layers();
            let stage = adapt_stage(&mut cfg, &adapt, method, reference.len(), layers)?;
            let record =
                debias_pretrained(&ckpt, &reference, method, &stage, TrainHooks::default())?;
            report_losses(&record);
            save_checkpoint(&record.state, &adapt.out, adapt.seed, &cfg.hash())?;
            println!("checkpoint={}", adapt.out.display());
        }
        Command::Eval {
            checkpoint,
            data,
            holdout,
            seed,
        } => {
            let state = read_checkpoint(&checkpoint)?.into_state()?;
            let pair = match (data, holdout) {
                (Some(dir), _) => load_pair(&dir)?,
                (None, Some(file)) => holdout_only(&file)?,
                (None, None) => unreachable!("clap requires --data or --holdout"),
            };
            let ctx = EvalContext::new(&cfg, &pair, cell_seed(cfg.seed, 0, 0, seed))?;
            let report = ctx.evaluator(&cfg, &cfg.hash()).evaluate(&state, 0)?;
            println!(
                "stage={} fd={:.16e} frechet_sq={:.16e} n_samples={}",
                state.stage(),
                report.fd,
                report.frechet_sq,
                report.n_samples
            );
        }
        Command::Grid {
            action: GridAction::Run { out, parallelism },
        } => {
            let outcome = run_grid(&cfg, parallelism, Some(&out))?;
            print!("{}", outcome.csv);
            for f in &outcome.failures {
                eprintln!("cell {} failed: {}", f.cell.dir_name(), f.error);
            }
            if !outcome.failures.is_empty() {
                return Ok(EXIT_PARTIAL);
            }
        }
        Command::LayerStudy {
            out,
            adapt_epochs,
            min_reference_ratio,
            seed,
        } => {
            let cell = cell_seed(cfg.seed, 0, 0, seed);
            let pair = build_pair(&cfg, &cfg.data.bias, cfg.data.perc, cell)?;
            let large = balanced_holdout(&pair.eval_holdout, &cfg, cell)?;
            let union = pair.union_features();
            let mut adapt = cfg.fairtl_stage(large.len(), stream_seed(cell, GridMethod::FairTl));
            if let Some(e) = adapt_epochs {
                adapt.epochs = e;
            }
            adapt.eval_every = 0;
            let mut pre = cfg.pretrain_stage(stream_seed(cell, GridMethod::Pretrained));
            pre.eval_every = 0;
            let study = LayerStudyConfig {
                pretrain: pre,
                adapt,
                min_reference_ratio,
            };
            let (table, _, _) = layer_change_study(&union, &large, &cfg.arch(union.dim()), &study)?;
            let mut csv = String::from("network,layer,mean_abs_change\n");
            for r in &table.rows {
                let net = match r.network {
                    Network::Generator => "generator",
                    Network::Discriminator => "discriminator",
                };
                let _ = writeln!(csv, "{net},{},{:.16e}", r.layer, r.mean_abs_change);
            }
            fs::write(&out, &csv)?;
            print!("{csv}");
            println!(
                "lower_discriminator_layers_smallest={}",
                table.lower_discriminator_layers_smallest()
            );
        }
        Command::Gallery {
            before,
            after,
            n,
            out,
            seed,
        } => {
            let a = read_checkpoint(&before)?.into_state()?;
            let b = read_checkpoint(&after)?.into_state()?;
            let g = fixed_noise_gallery(&a, &b, n, &mut Rng::new(seed))?;
            let mut csv = String::from("index,side");
            for j in 0..g.noise.cols() {
                let _ = write!(csv, ",z{j}");
            }
            for j in 0..g.before.cols() {
                let _ = write!(csv, ",x{j}");
            }
            csv.push('\n');
            for i in 0..g.noise.rows() {
                for (side, m) in [("before", &g.before), ("after", &g.after)] {
                    let _ = write!(csv, "{i},{side}");
                    write_row(&mut csv, g.noise.row(i));
                    write_row(&mut csv, m.row(i));
                    csv.push('\n');
                }
            }
            fs::write(&out, &csv)?;
            println!(
                "rows={} noise_hash_before={:016x} noise_hash_after={:016x}",
                g.noise.rows(),
                g.noise_hash_before,
                g.noise_hash_after
            );
        }
    }
    Ok(0)
}

fn write_row(s: &mut String, row: &[f64]) {
    for v in row {
        let _ = write!(s, ",{v}");
    }
}

fn adapt_stage(
    cfg: &mut ExperimentConfig,
    args: &AdaptArgs,
    method: Method,
    reference_len: usize,
    layers: usize,
) -> Result<StageConfig> {
    if let Some(l) = args.lambda {
        cfg.train.lambda = l;
    }
    cfg.validate()?;
    if method == Method::FairTl && (args.lp_epochs.is_some() || args.lambda.is_some()) {
        return Err(Error::InvalidArgument(
            "--lambda and --lp-epochs apply to fairtlpp only".into(),
        ));
    }
    let seed = cell_seed(cfg.seed, 0, 0, args.seed);
    let mut stage = match method {
        Method::FairTl => cfg.fairtl_stage(reference_len, stream_seed(seed, GridMethod::FairTl)),
        Method::FairTlPp => {
            cfg.fairtlpp_stage(reference_len, stream_seed(seed, GridMethod::FairTlPp))?
        }
    };
    if let Some(e) = args.epochs {
        stage.epochs = e;
        if let Some(mask) = &stage.freeze {
            let t = (e as f64 * cfg.train.lp_fraction).floor() as usize;
            stage.freeze = Some(FreezeMask::new(mask.layers().to_vec(), t));
        }
    }
    if let Some(t) = args.lp_epochs {
        stage.freeze = Some(FreezeMask::lower_layers(layers, cfg.train.lp_layers, t)?);
    }
    stage.eval_every = 0;
    Ok(stage)
}

fn balanced_holdout(
    holdout: &[fairgan::data::LabeledSample],
    cfg: &ExperimentConfig,
    cell: u64,
) -> Result<FeatureSet> {
    let k = cfg.data.attributes.joint_cardinality();
    let per_class = (0..k)
        .map(|c| holdout.iter().filter(|s| s.joint_label == c).count())
        .min()
        .unwrap_or(0);
    let rows = balanced_reference_rows(
        holdout,
        &cfg.data.attributes,
        per_class,
        &mut Rng::new(cell),
    )?;
    let dim = rows.first().map_or(0, |s| s.features.len());
    let refs: Vec<&[f64]> = rows.iter().map(|s| s.features.as_slice()).collect();
    Ok(FeatureSet::new(Matrix::from_rows(&refs, dim)?))
}

fn report_losses(record: &RunRecord) {
    if let Some(l) = record.losses.last() {
        println!(
            "epochs={} d_objective={:.6} g_loss={:.6} saturated={}",
            l.epoch, l.discriminator, l.generator, l.saturated_outputs
        );
    } else {
        println!("epochs=0");
    }
}
