//! Interaction-aware graph refinement of hand and object meshes.
//!
//! Coarse hand and object meshes become two node sets joined by four typed
//! edge sets (hand-hand, object-object, hand-object, object-hand). Edges
//! come from mesh faces, contact-seeded nearest neighbors, and thresholded
//! attention. Stacked message-passing blocks then predict per-vertex
//! displacements. Everything is in millimeters.

pub mod autodiff;
pub mod error;
pub mod graph;
pub mod losses;
pub mod mesh;
pub mod metrics;
pub mod params;
pub mod refine;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use graph::{
    attention_edges, attention_matrix, build_final_graphs, common_edges_inter, init_nodes, merge_edge_sets, EdgeKind,
    EdgeOrigin, FinalGraphs, GraphConfig, GraphInputs, NodeClass, NodeFeatureSet, TypedEdgeSet,
};
pub use losses::LossBreakdown;
pub use mesh::{load_mesh, save_mesh, signed_distance, Mesh, SignedDistanceResult};
pub use metrics::{intersection_volume, max_penetration, MetricsReport};
pub use params::{ModelDims, RefinerParams};
pub use refine::{aggregate, refine, BlockTrace};
pub use synth::{generate_dataset, generate_scene, GraspScene, NoiseParams, SceneParams};
pub use train::{train, TrainConfig};
