//! Shared fixtures for the benchmarks.

use vog_core::graph::build_graph;
use vog_core::synth::{generate_scene, SyntheticScene, SyntheticSpec};
use vog_core::{BuildParams, Mmmg};

/// A default synthetic scene and its graph.
pub fn scene_with_graph(seed: u64) -> (SyntheticScene, Mmmg) {
    let scene = generate_scene(&SyntheticSpec {
        seed,
        ..SyntheticSpec::default()
    })
    .expect("default spec places its objects");
    let graph = build_graph(&scene.bundle, &BuildParams::default()).expect("default params are valid");
    (scene, graph)
}
