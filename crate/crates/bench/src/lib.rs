//! Shared fixtures for the benchmarks.

use qecopt::ansatz::{build_layout, generate_rea, Encoder, GateKind, LayoutKind};
use qecopt::channels::{CompositeNoise, NoiseSpec};

/// A random-parameter encoder of the given size on the full layout.
pub fn encoder(n: usize, depth: usize, seed: u64) -> Encoder {
    let layout = build_layout(LayoutKind::Full, n, None).expect("full layout");
    let ansatz = generate_rea(
        n,
        depth,
        &layout,
        seed,
        GateKind::Rzyz,
        GateKind::ControlledV,
    )
    .expect("valid ansatz");
    let params = qecopt::train::initial_params(seed, ansatz.num_params, std::f64::consts::PI);
    Encoder::new(1, ansatz, params).expect("valid encoder")
}

pub fn depolarizing(p: f64) -> CompositeNoise {
    CompositeNoise::uniform(NoiseSpec::Depolarizing { p }).expect("valid noise")
}
