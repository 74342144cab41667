//! End-to-end gradient checks of the training objective.

use tvsurv::data::{Cohort, TimeGrid, Trajectory};
use tvsurv::model::{Group, ModelConfig, ModelParams};
use tvsurv::objective::{batch_loss, Batch, TrainConfig};
use tvsurv_autodiff::{grad_check, Tensor};

fn tiny_batch() -> (Cohort, TimeGrid) {
    let spec: [(&[u8], f64, bool); 4] = [
        (&[0, 1, 1, 1], 0.7, true),
        (&[1, 0, 0, 1], 2.9, false),
        (&[0, 0, 1, 0], 1.6, true),
        (&[1, 1, 0, 0], 4.2, true),
    ];
    let trajectories = spec
        .iter()
        .enumerate()
        .map(|(i, (t, time, event))| Trajectory {
            id: format!("p{i}"),
            covariates: (0..4)
                .map(|k| vec![(i as f64 * 0.37 + k as f64 * 0.21).sin(), (i as f64 - k as f64) * 0.3])
                .collect(),
            treatments: t.to_vec(),
            observed_time: *time,
            event: *event,
        })
        .collect();
    let cohort = Cohort::new(trajectories).unwrap();
    let grid = TimeGrid::new(vec![0.0, 0.5, 1.0, 2.0, 3.0, 4.5]).unwrap();
    (cohort, grid)
}

fn model() -> ModelParams {
    ModelParams::init(&ModelConfig {
        d: 2,
        k: 3,
        hidden: 3,
        repr_dim: 3,
        head_hidden: 4,
        m: 5,
        treat_embed_dim: 2,
        seed: 11,
        ..ModelConfig::default()
    })
    .unwrap()
}

#[test]
fn combined_loss_gradient_matches_finite_differences() {
    let (cohort, grid) = tiny_batch();
    let params = model();
    let config = TrainConfig {
        alpha: 0.7,
        beta_reg: 0.05,
        ..TrainConfig::default()
    };
    let batch = Batch::new(cohort.trajectories.iter().collect(), &grid, vec![1.3, 0.6, 1.0, 0.9]).unwrap();
    let tensors: Vec<Tensor> = params.params.iter().map(|p| p.value.clone()).collect();
    let report = grad_check(
        |g, vars| {
            let bound = params.bind_vars(vars)?;
            let nodes = batch_loss(g, &params, &bound, &batch, &config, Some(1.0))?;
            assert!(nodes.bal.is_some());
            Ok::<_, tvsurv::Error>(nodes.total)
        },
        &tensors,
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(report.passed, "max relative deviation {}", report.max_rel);
    for (p, a) in params.params.iter().zip(&report.analytic) {
        if p.group != Group::SequenceEmbedding || p.regularized {
            assert!(a.max_abs() > 0.0, "{} receives no gradient", p.name);
        }
    }
}
