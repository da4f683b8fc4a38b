use fairgan::data::FeatureSet;
use fairgan::gan::{FreezeMask, GanArch, GanState, Stage};
use fairgan::harness::Checkpoint;
use fairgan::numerics::{Matrix, Rng};
use fairgan::pipeline::{
    adapt_fairtl, adapt_fairtlpp, debias_pretrained, fixed_noise_gallery, layer_change_study,
    pretrain, LayerStudyConfig, Method, StageConfig, TrainHooks,
};

fn features(n: usize, seed: u64) -> FeatureSet {
    let mut rng = Rng::new(seed);
    let mut m = rng.gauss_sample(n, 2).unwrap();
    for v in m.as_mut_slice().iter_mut().step_by(2) {
        *v += 2.0;
    }
    FeatureSet::new(m)
}

fn source() -> GanState {
    let mut cfg = StageConfig::new(3, 1);
    cfg.eval_every = 0;
    pretrain(
        &features(256, 1),
        &GanArch::desk_scale(2),
        &cfg,
        TrainHooks::default(),
    )
    .unwrap()
    .state
}

fn trajectory(run: impl FnOnce(&mut dyn FnMut(usize, &GanState))) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut cb = |_: usize, s: &GanState| {
        let mut p = s.generator().flat_params();
        p.extend(s.discriminator().flat_params());
        out.push(p);
    };
    run(&mut cb);
    out
}

#[test]
fn pretraining_is_deterministic() {
    let a = source();
    let b = source();
    assert_eq!(a.generator(), b.generator());
    assert_eq!(a.discriminator(), b.discriminator());
    assert_eq!(a.stage(), Stage::Pretrained);
}

#[test]
fn different_seeds_diverge() {
    let data = features(128, 2);
    let arch = GanArch::desk_scale(2);
    let run = |seed| {
        pretrain(
            &data,
            &arch,
            &StageConfig::new(2, seed),
            TrainHooks::default(),
        )
        .unwrap()
    };
    assert_ne!(run(1).state.generator(), run(2).state.generator());
}

#[test]
fn zero_epoch_adaptation_is_a_no_op() {
    let src = source();
    let reference = features(50, 3);
    let cfg = StageConfig::new(0, 9);
    let tl = adapt_fairtl(&src, &reference, &cfg, TrainHooks::default()).unwrap();
    assert_eq!(tl.state.generator(), src.generator());
    assert_eq!(tl.state.discriminator(), src.discriminator());
    assert!(tl.losses.is_empty());
    let pp = adapt_fairtlpp(&src, &reference, &cfg, TrainHooks::default()).unwrap();
    assert_eq!(pp.state.generator(), src.generator());
}

#[test]
fn lambda_one_without_probing_reproduces_fairtl() {
    let src = source();
    let reference = features(100, 4);
    let mut cfg = StageConfig::new(6, 5);
    cfg.loss.lambda = 1.0;
    let tl = trajectory(|cb| {
        adapt_fairtl(
            &src,
            &reference,
            &cfg,
            TrainHooks {
                evaluator: None,
                on_epoch: Some(cb),
            },
        )
        .unwrap();
    });
    let pp = trajectory(|cb| {
        adapt_fairtlpp(
            &src,
            &reference,
            &cfg,
            TrainHooks {
                evaluator: None,
                on_epoch: Some(cb),
            },
        )
        .unwrap();
    });
    assert_eq!(tl.len(), 6);
    for (a, b) in tl.iter().zip(&pp) {
        let dist = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(dist <= 1e-12, "parameter distance {dist}");
    }
}

#[test]
fn adaptation_leaves_source_untouched() {
    let src = source();
    let before = src.clone();
    let mut cfg = StageConfig::new(2, 6);
    cfg.freeze = Some(FreezeMask::lower_layers(3, 2, 1).unwrap());
    let out = adapt_fairtlpp(&src, &features(64, 6), &cfg, TrainHooks::default()).unwrap();
    assert_eq!(src.generator(), before.generator());
    assert_eq!(src.discriminator(), before.discriminator());
    assert_eq!(out.state.stage(), Stage::FairTlPp);
    assert_eq!(out.state.frozen_source().unwrap(), before.discriminator());
}

#[test]
fn freeze_holds_lower_layers_until_t() {
    let src = source();
    let t = 3;
    let mut cfg = StageConfig::new(6, 7);
    cfg.freeze = Some(FreezeMask::lower_layers(3, 2, t).unwrap());
    let mut sums = Vec::new();
    let mut cb = |epoch: usize, s: &GanState| {
        let d = s.discriminator();
        sums.push((
            epoch,
            d.layer_checksum(0),
            d.layer_checksum(1),
            d.layer_checksum(2),
            s.frozen_source().unwrap().checksum(),
        ));
    };
    adapt_fairtlpp(
        &src,
        &features(128, 7),
        &cfg,
        TrainHooks {
            evaluator: None,
            on_epoch: Some(&mut cb),
        },
    )
    .unwrap();
    let d0 = src.discriminator();
    for &(epoch, l0, l1, l2, s) in &sums {
        assert_eq!(s, d0.checksum());
        if epoch <= t {
            assert_eq!(
                (l0, l1),
                (d0.layer_checksum(0), d0.layer_checksum(1)),
                "epoch {epoch}"
            );
        } else {
            assert_ne!(l0, d0.layer_checksum(0));
        }
        assert_ne!(l2, d0.layer_checksum(2));
    }
}

#[test]
fn probing_for_the_whole_run_is_rejected() {
    let mut cfg = StageConfig::new(4, 1);
    cfg.freeze = Some(FreezeMask::lower_layers(3, 2, 4).unwrap());
    assert!(adapt_fairtlpp(&source(), &features(32, 1), &cfg, TrainHooks::default()).is_err());
    let mut tl = StageConfig::new(4, 1);
    tl.freeze = cfg.freeze.clone();
    assert!(adapt_fairtl(&source(), &features(32, 1), &tl, TrainHooks::default()).is_err());
}

#[test]
fn debias_matches_in_memory_adaptation() {
    let src = source();
    let ckpt = Checkpoint::from_state(&src, 1, "h");
    let reloaded = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap();
    let reference = features(80, 8);
    let cfg = StageConfig::new(3, 8);
    for method in [Method::FairTl, Method::FairTlPp] {
        let a =
            debias_pretrained(&reloaded, &reference, method, &cfg, TrainHooks::default()).unwrap();
        let b = match method {
            Method::FairTl => adapt_fairtl(&src, &reference, &cfg, TrainHooks::default()),
            Method::FairTlPp => adapt_fairtlpp(&src, &reference, &cfg, TrainHooks::default()),
        }
        .unwrap();
        assert_eq!(a.state.generator(), b.state.generator());
        assert_eq!(a.state.discriminator(), b.state.discriminator());
    }
}

#[test]
fn debias_needs_a_discriminator() {
    let ckpt = Checkpoint::from_state(&source(), 1, "h").generator_only();
    let err = debias_pretrained(
        &ckpt,
        &features(10, 1),
        Method::FairTlPp,
        &StageConfig::new(1, 1),
        TrainHooks::default(),
    );
    assert!(matches!(err, Err(fairgan::Error::MissingDiscriminator)));
}

#[test]
fn gallery_shares_noise() {
    let a = source();
    let g = fixed_noise_gallery(&a, &a, 5, &mut Rng::new(3)).unwrap();
    assert_eq!(g.before, g.after);
    assert_eq!(g.noise_hash_before, g.noise_hash_after);
    assert_eq!(g.noise.rows(), 5);
    let empty = fixed_noise_gallery(&a, &a, 0, &mut Rng::new(3)).unwrap();
    assert_eq!(empty.before.rows(), 0);

    let mut arch = GanArch::desk_scale(2);
    arch.latent_dim = 3;
    let other = arch.init(&mut Rng::new(1)).unwrap();
    assert!(fixed_noise_gallery(&a, &other, 2, &mut Rng::new(3)).is_err());
}

#[test]
fn layer_study_reports_every_layer() {
    let arch = GanArch::desk_scale(2);
    let mut cfg = LayerStudyConfig {
        pretrain: StageConfig::new(2, 1),
        adapt: StageConfig::new(2, 2),
        min_reference_ratio: 0.5,
    };
    let (table, _, _) =
        layer_change_study(&features(200, 1), &features(120, 2), &arch, &cfg).unwrap();
    assert_eq!(table.rows.len(), 6);
    assert!(table.rows.iter().all(|r| r.mean_abs_change > 0.0));

    cfg.adapt.epochs = 0;
    let (control, _, _) =
        layer_change_study(&features(200, 1), &features(120, 2), &arch, &cfg).unwrap();
    assert!(control.rows.iter().all(|r| r.mean_abs_change == 0.0));

    assert!(layer_change_study(&features(200, 1), &features(50, 2), &arch, &cfg).is_err());
}

#[test]
fn empty_reference_rejected() {
    let empty = FeatureSet::new(Matrix::zeros(0, 2));
    assert!(adapt_fairtl(
        &source(),
        &empty,
        &StageConfig::new(1, 1),
        TrainHooks::default()
    )
    .is_err());
}
