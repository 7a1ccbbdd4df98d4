//! A one-parameter quadratic probe with hand-written gradients, for checking
//! the meta-step against its closed form.

use metaner::autodiff::{GradientMap, Optimizer, OptimizerKind, ParamStore, Tensor};
use metaner::metatrain::{meta_step, MetaConfig, MetaTask};
use metaner::tagger::{Draw, Learner, Objective};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOLERANCE: f64 = 1e-10;

/// Loss `½(θ − c)²` per example `c`, summed over the batch.
pub struct Probe;

impl Learner for Probe {
    type Example = f64;

    fn loss_and_grad(
        &self,
        params: &ParamStore,
        batch: &[&f64],
        _objective: &Objective,
        _draw: Draw,
    ) -> metaner::Result<(f64, GradientMap)> {
        let theta = params.get("theta").expect("theta").data()[0];
        let loss = batch.iter().map(|&&c| 0.5 * (theta - c) * (theta - c)).sum();
        let grad = batch.iter().map(|&&c| theta - c).sum();
        let mut g = GradientMap::new();
        g.insert("theta", Tensor::vector(vec![grad]));
        Ok((loss, g))
    }
}

fn theta(value: f64) -> ParamStore {
    let mut s = ParamStore::new();
    s.insert("theta", Tensor::vector(vec![value]));
    s
}

fn sgd(alpha: f64, beta: f64) -> MetaConfig {
    MetaConfig {
        inner_lr: alpha,
        meta_lr: beta,
        inner_steps: 1,
        inner_optimizer: OptimizerKind::Sgd,
        meta_optimizer: OptimizerKind::Sgd,
        ..MetaConfig::default()
    }
}

/// θ after one meta-step over tasks given as (train targets, test target).
pub fn meta_step_value(theta0: f64, alpha: f64, beta: f64, tasks: &[(Vec<f64>, f64)]) -> f64 {
    let built: Vec<MetaTask<'_, f64>> = tasks
        .iter()
        .enumerate()
        .map(|(id, (train, test))| MetaTask {
            id,
            train: train.iter().collect(),
            test: vec![test],
        })
        .collect();
    let mut params = theta(theta0);
    let mut opt = Optimizer::new(OptimizerKind::Sgd);
    meta_step(&Probe, &mut params, &mut opt, &built, &sgd(alpha, beta), 0, 0).unwrap();
    params.get("theta").unwrap().data()[0]
}

/// θ − β Σ_i (θ_i' − t_i) with θ_i' = θ − α Σ_j (θ − c_ij).
pub fn closed_form(theta0: f64, alpha: f64, beta: f64, tasks: &[(Vec<f64>, f64)]) -> f64 {
    let meta_grad: f64 = tasks
        .iter()
        .map(|(train, test)| {
            let inner: f64 = train.iter().map(|c| theta0 - c).sum();
            theta0 - alpha * inner - test
        })
        .sum();
    theta0 - beta * meta_grad
}

/// The worked example θ = 1, α = β = 0.1 on `½θ²`, which lands on 0.91.
pub fn worked_example() -> f64 {
    meta_step_value(1.0, 0.1, 0.1, &[(vec![0.0], 0.0)])
}

/// Largest deviation from the closed form over random probes.
pub fn random_probes(count: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta0 = rng.random_range(-3.0..3.0);
        let alpha = rng.random_range(0.0..0.5);
        let beta = rng.random_range(0.0..0.5);
        let tasks: Vec<(Vec<f64>, f64)> = (0..rng.random_range(1..=4))
            .map(|_| {
                let train = (0..rng.random_range(1..=3)).map(|_| rng.random_range(-2.0..2.0)).collect();
                (train, rng.random_range(-2.0..2.0))
            })
            .collect();
        let got = meta_step_value(theta0, alpha, beta, &tasks);
        worst = worst.max((got - closed_form(theta0, alpha, beta, &tasks)).abs());
    }
    worst
}
