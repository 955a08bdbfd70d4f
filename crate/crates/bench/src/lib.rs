//! Shared fixtures for the benchmarks.

use invlab_core::{make_demand, DemandModel, DemandSpec, ModelParams};

/// The reference model: c = 1, c_h = 1, c_p = 3, q = 0.7, x0 = 0.
pub fn reference(n: usize) -> ModelParams {
    ModelParams::new(1.0, 1.0, 3.0, 0.7, n, 0.0).expect("reference parameters are valid")
}

/// Uniform(0, 1) demand on 512 intervals.
pub fn uniform() -> DemandModel {
    make_demand(&DemandSpec::uniform(0.0, 1.0), 512).expect("uniform demand is valid")
}
