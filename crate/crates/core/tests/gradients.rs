//! Whole-network gradient checks against central finite differences.

mod common;

use common::{contrastive_error, cross_entropy_error, objective, objective_error};
use ipr_core::contrastive::ContrastiveMode;

const REL_TOL: f64 = 1e-4;
const SEEDS: [u64; 6] = [1, 2, 3, 5, 8, 13];
const MODES: [ContrastiveMode; 2] = [ContrastiveMode::Supervised, ContrastiveMode::PairwiseNtxent];

#[test]
fn cross_entropy_gradient_through_network() {
    for seed in SEEDS {
        let err = cross_entropy_error(seed);
        assert!(err <= REL_TOL, "seed {seed}: {err:e}");
    }
}

#[test]
fn contrastive_gradient_wrt_embeddings_both_modes() {
    for mode in MODES {
        for seed in SEEDS {
            let err = contrastive_error(seed, mode);
            assert!(err <= REL_TOL, "{mode:?} seed {seed}: {err:e}");
        }
    }
}

#[test]
fn total_objective_gradient_hard_targets() {
    for mode in MODES {
        for seed in SEEDS {
            let err = objective_error(seed, objective(1.0, 0.5, 0.2, 0.5, mode), false);
            assert!(err <= REL_TOL, "{mode:?} seed {seed}: {err:e}");
        }
    }
}

#[test]
fn total_objective_gradient_soft_targets() {
    for seed in SEEDS {
        let err = objective_error(seed, objective(0.7, 1.3, 0.4, 0.3, ContrastiveMode::Supervised), true);
        assert!(err <= REL_TOL, "seed {seed}: {err:e}");
    }
}

#[test]
fn low_temperature_contrastive_objective() {
    for seed in SEEDS {
        let err = objective_error(seed, objective(1.0, 0.5, 0.2, 0.1, ContrastiveMode::Supervised), false);
        assert!(err <= REL_TOL, "seed {seed}: {err:e}");
    }
}
