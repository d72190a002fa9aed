//! Fixtures shared by the engine benchmarks.

use entangled::workbench::{generate, GenerateOptions, Instance, Profile};

/// A generated instance on the complete hypergraph with the given class sizes.
pub fn instance(sizes: &[usize], fine: i32, profile: Profile, seed: u64) -> Instance {
    let opts = GenerateOptions {
        sizes: sizes.to_vec(),
        top: 0,
        fine,
        ..GenerateOptions::default()
    };
    generate(seed, profile, &opts)
        .and_then(|s| s.build())
        .expect("fixture builds")
}
