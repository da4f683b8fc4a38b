//! Independent oracles shared by the integration tests: a scalar forward
//! evaluator written from scratch and central finite differences.

#![allow(dead_code, clippy::needless_range_loop)]

use fairgan::gan::{
    discriminator_loss, generator_loss, GanState, GeneratorLossForm, LossConfig, OptimizerState,
    Stage,
};
use fairgan::numerics::{Activation, Matrix, MlpParams, Rng};

pub const FD_STEP: f64 = 1e-6;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-7;

fn act(a: Activation, x: f64) -> f64 {
    match a {
        Activation::LeakyRelu(s) => {
            if x > 0.0 {
                x
            } else {
                s * x
            }
        }
        Activation::Tanh => x.tanh(),
        Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        Activation::Identity => x,
    }
}

/// Row-by-row forward pass. Also returns the signs of every pre-activation
/// feeding a leaky ReLU, so callers can detect kink crossings.
pub fn naive_forward(net: &MlpParams, x: &[f64]) -> (Vec<f64>, Vec<bool>) {
    let mut h = x.to_vec();
    let mut signs = Vec::new();
    for layer in net.layers() {
        let (rows, cols) = layer.weights.shape();
        let mut next = vec![0.0; rows];
        for (i, out) in next.iter_mut().enumerate() {
            let mut z = layer.biases[i];
            for j in 0..cols {
                z += layer.weights[(i, j)] * h[j];
            }
            if let Activation::LeakyRelu(_) = layer.activation {
                signs.push(z > 0.0);
            }
            *out = act(layer.activation, z);
        }
        h = next;
    }
    (h, signs)
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.to_vec()).collect()
}

/// Discriminator objective `mean ln D(x) + mean ln(1 - D(x_fake))` computed
/// from probabilities.
pub fn naive_d_value(d: &MlpParams, real: &Matrix, fake: &Matrix) -> (f64, Vec<bool>) {
    let mut signs = Vec::new();
    let mut term = |batch: &Matrix, is_real: bool| {
        let rs = rows(batch);
        let mut acc = 0.0;
        for r in &rs {
            let (p, s) = naive_forward(d, r);
            signs.extend(s);
            acc += if is_real {
                p[0].ln()
            } else {
                (1.0 - p[0]).ln()
            };
        }
        acc / rs.len() as f64
    };
    let v = term(real, true) + term(fake, false);
    (v, signs)
}

/// Generator objective under a weighted list of critics.
pub fn naive_g_value(
    g: &MlpParams,
    critics: &[(&MlpParams, f64)],
    noise: &Matrix,
    form: GeneratorLossForm,
) -> (f64, Vec<bool>) {
    let mut signs = Vec::new();
    let zs = rows(noise);
    let mut value = 0.0;
    for z in &zs {
        let (x, s) = naive_forward(g, z);
        signs.extend(s);
        for (d, w) in critics {
            let (p, s) = naive_forward(d, &x);
            signs.extend(s);
            value += w * match form {
                GeneratorLossForm::Saturating => (1.0 - p[0]).ln(),
                GeneratorLossForm::NonSaturating => -p[0].ln(),
            };
        }
    }
    (value / zs.len() as f64, signs)
}

/// Central-difference gradient of `f` over the flat parameters of `net`.
/// Coordinates whose perturbation crosses a leaky-ReLU kink are `None`.
pub fn numeric_gradient(
    net: &MlpParams,
    f: impl Fn(&MlpParams) -> (f64, Vec<bool>),
) -> Vec<Option<f64>> {
    let base = net.flat_params();
    let mut probe = net.clone();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + FD_STEP;
        probe.set_flat_params(&p).unwrap();
        let (plus, s_plus) = f(&probe);
        p[i] = base[i] - FD_STEP;
        probe.set_flat_params(&p).unwrap();
        let (minus, s_minus) = f(&probe);
        out.push((s_plus == s_minus).then(|| (plus - minus) / (2.0 * FD_STEP)));
    }
    out
}

/// Largest relative error (with the absolute floor applied) and the count
/// of coordinates skipped at kinks.
#[derive(Debug, Clone, Copy, Default)]
pub struct Agreement {
    pub worst: f64,
    pub checked: usize,
    pub skipped: usize,
}

impl Agreement {
    pub fn passes(&self) -> bool {
        self.worst < REL_TOL && self.checked > 0 && self.skipped * 50 <= self.checked
    }

    pub fn merge(self, other: Agreement) -> Agreement {
        Agreement {
            worst: self.worst.max(other.worst),
            checked: self.checked + other.checked,
            skipped: self.skipped + other.skipped,
        }
    }
}

pub fn compare(analytic: &[f64], numeric: &[Option<f64>]) -> Agreement {
    assert_eq!(analytic.len(), numeric.len());
    let mut a = Agreement::default();
    for (&x, y) in analytic.iter().zip(numeric) {
        let Some(y) = *y else {
            a.skipped += 1;
            continue;
        };
        a.checked += 1;
        let diff = (x - y).abs();
        let err = if diff < ABS_FLOOR {
            0.0
        } else {
            diff / x.abs().max(y.abs())
        };
        a.worst = a.worst.max(err);
    }
    a
}

fn random_activation(rng: &mut Rng) -> Activation {
    match rng.below(4) {
        0 => Activation::LeakyRelu(rng.uniform_range(0.05, 0.3)),
        1 => Activation::Tanh,
        2 => Activation::Sigmoid,
        _ => Activation::Identity,
    }
}

/// Random net of 2 to 4 layers with hidden widths up to 32, mixed hidden
/// activations and random biases.
pub fn random_net(rng: &mut Rng, input: usize, output: usize, last: Activation) -> MlpParams {
    let layers = 2 + rng.below(3);
    let mut dims = vec![input];
    for _ in 0..layers - 1 {
        dims.push(1 + rng.below(32));
    }
    dims.push(output);
    let mut acts: Vec<Activation> = (0..layers - 1).map(|_| random_activation(rng)).collect();
    acts.push(last);
    let mut net = MlpParams::new(&dims, &acts, rng).unwrap();
    let flat: Vec<f64> = net
        .flat_params()
        .iter()
        .map(|w| 0.7 * w + 0.1 * rng.normal())
        .collect();
    net.set_flat_params(&flat).unwrap();
    net
}

pub fn random_discriminator(rng: &mut Rng, input: usize) -> MlpParams {
    random_net(rng, input, 1, Activation::Sigmoid)
}

pub fn batch(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    rng.gauss_sample(rows, cols).unwrap()
}

/// D-loss gradient check on one random net.
pub fn check_d_loss(seed: u64) -> Agreement {
    let mut rng = Rng::new(seed);
    let dim = 1 + rng.below(4);
    let d = random_discriminator(&mut rng, dim);
    let g = random_net(&mut rng, 3, dim, Activation::Identity);
    let state = GanState::new(g, d.clone()).unwrap();
    let real = {
        let n = 1 + rng.below(12);
        batch(&mut rng, n, dim)
    };
    let fake = {
        let n = 1 + rng.below(12);
        batch(&mut rng, n, dim)
    };
    let analytic = discriminator_loss(&state, &real, &fake, &[])
        .unwrap()
        .grads
        .flat();
    let numeric = numeric_gradient(&d, |net| naive_d_value(net, &real, &fake));
    compare(&analytic, &numeric)
}

/// Single-critic G-loss gradient check, both loss forms.
pub fn check_g_loss_single(seed: u64) -> Agreement {
    let mut rng = Rng::new(seed);
    let (latent, dim) = (1 + rng.below(5), 1 + rng.below(4));
    let g = random_net(&mut rng, latent, dim, Activation::Identity);
    let d = random_discriminator(&mut rng, dim);
    let opt = OptimizerState::fresh(&g, &d);
    let state = GanState::from_parts(g.clone(), d.clone(), None, Stage::FairTl, opt).unwrap();
    let noise = {
        let n = 1 + rng.below(12);
        batch(&mut rng, n, latent)
    };
    let mut agreement = Agreement::default();
    for form in [
        GeneratorLossForm::NonSaturating,
        GeneratorLossForm::Saturating,
    ] {
        let cfg = LossConfig {
            lambda: 1.0,
            generator_loss_form: form,
            ..LossConfig::default()
        };
        let analytic = generator_loss(&state, &noise, &cfg).unwrap().grads.flat();
        let numeric = numeric_gradient(&g, |net| naive_g_value(net, &[(&d, 1.0)], &noise, form));
        agreement = agreement.merge(compare(&analytic, &numeric));
    }
    agreement
}

/// Two-critic G-loss gradient check with a random mixing weight.
pub fn check_g_loss_mixed(seed: u64) -> Agreement {
    let mut rng = Rng::new(seed);
    let (latent, dim) = (1 + rng.below(5), 1 + rng.below(4));
    let g = random_net(&mut rng, latent, dim, Activation::Identity);
    let dt = random_discriminator(&mut rng, dim);
    // the source shares the adapted critic's shape but not its weights
    let mut ds = dt.clone();
    let moved: Vec<f64> = dt
        .flat_params()
        .iter()
        .map(|w| w + 0.3 * rng.normal())
        .collect();
    ds.set_flat_params(&moved).unwrap();
    let lambda = rng.uniform_range(0.05, 0.95);
    let opt = OptimizerState::fresh(&g, &dt);
    let state = GanState::from_parts(
        g.clone(),
        dt.clone(),
        Some(ds.clone()),
        Stage::FairTlPp,
        opt,
    )
    .unwrap();
    let noise = {
        let n = 1 + rng.below(12);
        batch(&mut rng, n, latent)
    };
    let mut agreement = Agreement::default();
    for form in [
        GeneratorLossForm::NonSaturating,
        GeneratorLossForm::Saturating,
    ] {
        let cfg = LossConfig {
            lambda,
            generator_loss_form: form,
            ..LossConfig::default()
        };
        let analytic = generator_loss(&state, &noise, &cfg).unwrap().grads.flat();
        let critics = [(&dt, lambda), (&ds, 1.0 - lambda)];
        let numeric = numeric_gradient(&g, |net| naive_g_value(net, &critics, &noise, form));
        agreement = agreement.merge(compare(&analytic, &numeric));
    }
    agreement
}
