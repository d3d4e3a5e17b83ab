//! Finite-difference oracles shared by the gradient and acceptance suites.

#![allow(dead_code)]

use ipr_core::contrastive::{contrastive_loss, ContrastiveBatch, ContrastiveMode};
use ipr_core::model::{ModelConfig, ModelParams};
use ipr_core::numerics::{finite_diff_gradient, l2_normalize, RngStream};
use ipr_core::pipeline::{total_loss, AmbiguousInputs, Objective, Targets};

pub const STEP: f64 = 1e-5;
/// Entries whose magnitude is below this are compared absolutely.
pub const SCALE_FLOOR: f64 = 1e-4;

/// Largest `|a − n| / max(|a|, |n|, SCALE_FLOOR)` over all entries.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(SCALE_FLOOR))
        .fold(0.0, f64::max)
}

pub fn small_net(seed: u64) -> ModelParams {
    let cfg = ModelConfig {
        input_dim: 5,
        encoder_hidden: vec![10],
        embedding_dim: 6,
        classifier_hidden: vec![7],
        num_classes: 4,
    };
    let params = ModelParams::init(&cfg, &mut RngStream::derive(seed, 1)).unwrap();
    assert!(params.num_params() <= 500, "{} params", params.num_params());
    params
}

fn inputs(rng: &mut RngStream, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.normal()).collect()).collect()
}

fn params_gradient_error<F>(params: &ModelParams, analytic: &ModelParams, loss: F) -> f64
where
    F: Fn(&ModelParams) -> f64,
{
    let numeric = finite_diff_gradient(
        |flat| {
            let mut p = params.clone();
            p.set_flat(flat).unwrap();
            loss(&p)
        },
        &params.to_flat(),
        STEP,
    )
    .unwrap();
    max_rel_error(&analytic.to_flat(), &numeric)
}

/// Cross-entropy on a batch of four, differentiated through the whole network.
pub fn cross_entropy_error(seed: u64) -> f64 {
    let obj = Objective {
        alpha: 1.0,
        beta: 0.0,
        mu: 0.0,
        tau: 0.1,
        contrastive_mode: ContrastiveMode::Supervised,
    };
    let params = small_net(seed);
    let mut rng = RngStream::derive(seed, 3);
    let xs = inputs(&mut rng, 4, 5);
    let batch: Vec<(&[f64], usize)> = xs.iter().enumerate().map(|(i, x)| (x.as_slice(), (i * 3) % 4)).collect();
    let analytic = total_loss(&params, &batch, None, &obj).unwrap();
    params_gradient_error(&params, &analytic.grads, |p| total_loss(p, &batch, None, &obj).unwrap().total)
}

/// Contrastive loss of eight unit rows, differentiated by row.
pub fn contrastive_error(seed: u64, mode: ContrastiveMode) -> f64 {
    let mut rng = RngStream::derive(seed, 4);
    let rows: Vec<Vec<f64>> = inputs(&mut rng, 8, 5)
        .into_iter()
        .map(|v| l2_normalize(&v).unwrap())
        .collect();
    let labels: Vec<usize> = (0..8).map(|_| rng.below(3)).collect();
    let make = |flat: &[f64]| ContrastiveBatch {
        embeddings: flat.chunks(5).map(|c| c.to_vec()).collect(),
        labels: labels.clone(),
        temperature: 0.5,
    };
    let flat: Vec<f64> = rows.concat();
    let out = contrastive_loss(&make(&flat), mode).unwrap();
    let numeric = finite_diff_gradient(|f| contrastive_loss(&make(f), mode).unwrap().loss, &flat, STEP).unwrap();
    max_rel_error(&out.grads.concat(), &numeric)
}

/// Full three-term objective with every weight nonzero.
pub fn objective_error(seed: u64, obj: Objective, soft: bool) -> f64 {
    let params = small_net(seed);
    let mut rng = RngStream::derive(seed, 2);
    let precise_x = inputs(&mut rng, 4, 5);
    let precise: Vec<(&[f64], usize)> = precise_x.iter().enumerate().map(|(i, x)| (x.as_slice(), i % 4)).collect();
    let amb_x = inputs(&mut rng, 4, 5);
    let augmented = inputs(&mut rng, 4, 5);
    let targets = if soft {
        Targets::Soft(
            (0..4)
                .map(|_| {
                    let w: Vec<f64> = (0..4).map(|_| rng.uniform() + 0.05).collect();
                    let s: f64 = w.iter().sum();
                    w.into_iter().map(|v| v / s).collect()
                })
                .collect(),
        )
    } else {
        Targets::Hard(vec![0, 2, 2, 3])
    };
    let amb = AmbiguousInputs {
        originals: amb_x.iter().map(|x| x.as_slice()).collect(),
        augmented,
        targets,
        contrast_labels: vec![0, 2, 2, 3, 0, 2, 1, 3],
    };
    let analytic = total_loss(&params, &precise, Some(&amb), &obj).unwrap();
    params_gradient_error(&params, &analytic.grads, |p| {
        total_loss(p, &precise, Some(&amb), &obj).unwrap().total
    })
}

pub fn objective(alpha: f64, beta: f64, mu: f64, tau: f64, mode: ContrastiveMode) -> Objective {
    Objective {
        alpha,
        beta,
        mu,
        tau,
        contrastive_mode: mode,
    }
}
