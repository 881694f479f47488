//! Model generators shared by the integration tests.
#![allow(dead_code)]

use qsemigroup::matrixcore::Tolerances;
use qsemigroup::models::{random_model, random_structured_model};
use qsemigroup::semigroup::{build_generator, OpenSystemModel, Qms};
use qsemigroup::states::{invariant_states, DensityState};

pub fn tol() -> Tolerances {
    Tolerances::default()
}

/// A faithful-state test model together with the state and a label.
pub struct Sample {
    pub label: String,
    pub model: OpenSystemModel,
    pub qms: Qms,
    pub state: DensityState,
}

/// Every third seed is a generic random model (trivial fixed points,
/// non-tracial state); the rest are structured models with Hermitian jumps
/// and nontrivial fixed-point algebras.
pub fn random_faithful_sample(seed: u64) -> Sample {
    let t = tol();
    let (label, model) = if seed.is_multiple_of(3) {
        (format!("random({seed})"), random_model(seed, &t).unwrap())
    } else {
        (
            format!("random_structured({seed})"),
            random_structured_model(seed, &t).unwrap(),
        )
    };
    let qms = build_generator(&model, &t).unwrap();
    let state = invariant_states(&qms, &t).unwrap().canonical;
    assert!(state.is_faithful(), "{label}: invariant state not faithful");
    Sample {
        label,
        model,
        qms,
        state,
    }
}
