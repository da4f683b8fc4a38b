mod common;

use common::{check_d_loss, check_g_loss_mixed, check_g_loss_single, naive_forward, random_net};
use fairgan::numerics::{Activation, Rng};

const NETS: u64 = 25;

#[test]
fn discriminator_loss_matches_finite_differences() {
    for seed in 0..NETS {
        let a = check_d_loss(1000 + seed);
        assert!(a.passes(), "net {seed}: {a:?}");
    }
}

#[test]
fn single_critic_generator_loss_matches_finite_differences() {
    for seed in 0..NETS {
        let a = check_g_loss_single(2000 + seed);
        assert!(a.passes(), "net {seed}: {a:?}");
    }
}

#[test]
fn mixed_critic_generator_loss_matches_finite_differences() {
    for seed in 0..NETS {
        let a = check_g_loss_mixed(3000 + seed);
        assert!(a.passes(), "net {seed}: {a:?}");
    }
}

#[test]
fn library_forward_matches_naive_evaluator() {
    let mut rng = Rng::new(9);
    for _ in 0..20 {
        let net = random_net(&mut rng, 3, 2, Activation::Tanh);
        let x = rng.gauss_sample(7, 3).unwrap();
        let out = net.predict(&x).unwrap();
        for (i, row) in x.row_iter().enumerate() {
            let (naive, _) = naive_forward(&net, row);
            for (j, v) in naive.iter().enumerate() {
                assert!((out[(i, j)] - v).abs() < 1e-12);
            }
        }
    }
}
