//! Scene-graph grounding engine.
//!
//! Builds a layered scene graph (views, objects, and their view-view,
//! view-object and object-object edges) from posed images and 3D detections,
//! then grounds referring expressions by walking that graph with a pluggable
//! decision agent under a bounded number of agent calls.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod eval;
pub mod geometry;
pub mod graph;
pub mod grid;
pub mod scene;
pub mod synth;
pub mod traversal;

pub use agent::{AgentError, DecisionAgent, OracleAgent, RemoteAgent, RemoteConfig, ScriptedAgent};
pub use geometry::{Aabb, SpatialRelation, VisibilityParams, VisibilityReport};
pub use graph::{BuildParams, Mmmg, ViewEdgeKind};
pub use grid::{DirImageSource, GridManifest, ImageSource, MemoryImageSource};
pub use scene::{CameraView, SceneBundle, SceneObject};
pub use traversal::{run_grounding, GroundingTrace, ParsedQuery, RunConfig, TerminationReason};
