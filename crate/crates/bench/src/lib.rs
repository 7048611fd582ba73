//! Fixtures shared by the benchmarks.

use hoi_refine::synth::{generate_scene, GraspScene, SceneParams};

/// Deterministic scene used by every benchmark.
pub fn fixture_scene() -> GraspScene {
    generate_scene(1, 0, &SceneParams::default()).expect("fixture scene generates")
}
