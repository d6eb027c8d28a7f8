#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lrcssp::model::{GeneratorSpec, GeneratorVariant, LossNoise};
use lrcssp::ssp::SspInstance;

/// Random SSP whose every row sends at least `min_goal` to the goal.
pub fn random_ssp(seed: u64, n: usize, m: usize, min_goal: f64) -> SspInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut loss = Vec::with_capacity(n * m);
    let mut trans = Vec::with_capacity(n * m * n);
    for _ in 0..n * m {
        loss.push(rng.random::<f64>());
        let goal = min_goal + (1.0 - min_goal) * rng.random::<f64>();
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let total: f64 = w.iter().sum();
        trans.extend(w.iter().map(|x| (1.0 - goal) * x / total));
    }
    SspInstance::new(n, m, loss, trans).unwrap()
}

/// Exact value of a proper deterministic policy from `(I − P_π) V = ℓ_π`.
pub fn exact_value(ssp: &SspInstance, actions: &[usize]) -> DVector<f64> {
    let n = ssp.n_states();
    let mut a = DMatrix::identity(n, n);
    let mut b = DVector::zeros(n);
    for s in 0..n {
        b[s] = ssp.loss(s, actions[s]);
        for (t, p) in ssp.trans_row(s, actions[s]).iter().enumerate() {
            a[(s, t)] -= p;
        }
    }
    a.lu().solve(&b).expect("proper policy")
}

/// Pointwise minimum of the exact values of all deterministic policies.
pub fn enumerated_optimum(ssp: &SspInstance) -> Vec<f64> {
    let (n, m) = (ssp.n_states(), ssp.n_actions());
    let mut best = vec![f64::INFINITY; n];
    for code in 0..m.pow(n as u32) {
        let actions: Vec<usize> = (0..n).map(|s| (code / m.pow(s as u32)) % m).collect();
        let v = exact_value(ssp, &actions);
        for s in 0..n {
            best[s] = best[s].min(v[s]);
        }
    }
    best
}

pub fn spec(d: usize, n_states: usize, n_actions: usize, seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        d,
        n_states,
        n_actions,
        gamma_goal: 0.1,
        l_min_target: 0.1,
        seed,
        variant: GeneratorVariant::Uniform,
        zero_loss_pairs: 0,
        loss_noise: LossNoise::Bernoulli,
    }
}

pub fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
