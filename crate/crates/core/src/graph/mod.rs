//! The multi-modal, multi-layer scene graph: representative views, detected
//! objects, and three typed edge sets (view-view, view-object,
//! object-object).

mod build;
pub mod kmeans;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, SpatialRelation, VisibilityParams, VisibilityReport};
use crate::scene::{CameraView, SceneObject};

pub use build::{
    build_edges_oo, build_edges_vo, build_edges_vv, build_graph, cluster_views, depth_source,
    set_iou,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const GRAPH_FILE_NAME: &str = "graph.json";

#[derive(Debug, Error)]
pub enum GraphError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid build parameters: {0}")]
    InvalidParams(String),
    #[error("cannot read depth image {path}: {reason}")]
    DepthImage { path: PathBuf, reason: String },
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("graph file has schema version {found}, expected {expected}")]
    SchemaVersionMismatch { found: u64, expected: u32 },
    #[error("malformed graph file: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildParams {
    pub radius_r: f64,
    pub tau_low: f64,
    pub tau_high: f64,
    pub view_count_m: usize,
    pub visibility: VisibilityParams,
    pub kmeans_seed: u64,
}

impl Default for BuildParams {
    fn default() -> Self {
        BuildParams {
            radius_r: 0.5,
            tau_low: 0.2,
            tau_high: 0.8,
            view_count_m: 16,
            visibility: VisibilityParams::default(),
            kmeans_seed: 0,
        }
    }
}

impl BuildParams {
    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = |msg: &str| Err(GraphError::InvalidParams(msg.to_string()));
        if !(self.radius_r > 0.0) {
            return bad("radius_r > 0");
        }
        if !(0.0 <= self.tau_low && self.tau_low < self.tau_high && self.tau_high <= 1.0) {
            return bad("0 <= tau_low < tau_high <= 1");
        }
        if self.view_count_m == 0 {
            return bad("view_count_m >= 1");
        }
        if self.visibility.depth_divisor == 0 {
            return bad("depth_divisor >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViewEdgeKind {
    Adjacent,
    Complementary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectEdge {
    pub subject_id: String,
    pub relation: SpatialRelation,
    pub object_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityEdge {
    pub view_id: String,
    pub object_id: String,
    pub report: VisibilityReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewEdge {
    pub view_id_a: String,
    pub view_id_b: String,
    pub kind: ViewEdgeKind,
}

/// Immutable after construction; traversals share it read-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mmmg {
    pub scene_id: String,
    /// Bundle directory the images resolve against, as given at build time.
    pub bundle_dir: Option<String>,
    pub params: BuildParams,
    pub views: Vec<CameraView>,
    pub objects: Vec<SceneObject>,
    pub edges_oo: Vec<ObjectEdge>,
    pub edges_vo: Vec<VisibilityEdge>,
    pub edges_vv: Vec<ViewEdge>,
}

#[derive(Serialize)]
struct GraphFileRef<'a> {
    schema_version: u32,
    #[serde(flatten)]
    graph: &'a Mmmg,
}

#[derive(Deserialize)]
struct GraphFile {
    schema_version: u64,
    #[serde(flatten)]
    graph: Mmmg,
}

impl Mmmg {
    pub fn view(&self, view_id: &str) -> Option<&CameraView> {
        self.views.iter().find(|v| v.view_id == view_id)
    }

    pub fn object(&self, object_id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.object_id == object_id)
    }

    /// Objects visible from a view, in edge order.
    pub fn visible_objects<'a>(&'a self, view_id: &'a str) -> impl Iterator<Item = &'a SceneObject> + 'a {
        self.edges_vo
            .iter()
            .filter(move |e| e.view_id == view_id)
            .filter_map(|e| self.object(&e.object_id))
    }

    pub fn sees(&self, view_id: &str, object_id: &str) -> bool {
        self.edges_vo
            .iter()
            .any(|e| e.view_id == view_id && e.object_id == object_id)
    }

    /// View-view neighbors of a view with the edge kind.
    pub fn view_neighbors(&self, view_id: &str) -> Vec<(&str, ViewEdgeKind)> {
        self.edges_vv
            .iter()
            .filter_map(|e| {
                if e.view_id_a == view_id {
                    Some((e.view_id_b.as_str(), e.kind))
                } else if e.view_id_b == view_id {
                    Some((e.view_id_a.as_str(), e.kind))
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn view_edge(&self, a: &str, b: &str) -> Option<ViewEdgeKind> {
        self.edges_vv
            .iter()
            .find(|e| (e.view_id_a == a && e.view_id_b == b) || (e.view_id_a == b && e.view_id_b == a))
            .map(|e| e.kind)
    }

    /// Distinct class labels in object order.
    pub fn class_vocabulary(&self) -> Vec<String> {
        let mut labels: Vec<String> = Vec::new();
        for o in &self.objects {
            if !labels.contains(&o.class_label) {
                labels.push(o.class_label.clone());
            }
        }
        labels
    }

    pub fn class_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for o in &self.objects {
            *counts.entry(o.class_label.clone()).or_insert(0) += 1;
        }
        counts
    }

    /// Breadth-first view-view hop counts from `sources`, walking only views
    /// accepted by `admit`. Sources are always admitted.
    pub fn view_hops(&self, sources: &[&str], admit: impl Fn(&str) -> bool) -> HashMap<String, usize> {
        let mut dist = HashMap::new();
        let mut queue = VecDeque::new();
        for s in sources {
            if dist.insert(s.to_string(), 0).is_none() {
                queue.push_back(s.to_string());
            }
        }
        while let Some(v) = queue.pop_front() {
            let d = dist[&v];
            for (n, _) in self.view_neighbors(&v) {
                if !dist.contains_key(n) && admit(n) {
                    dist.insert(n.to_string(), d + 1);
                    queue.push_back(n.to_string());
                }
            }
        }
        dist
    }

    /// Checks the structural invariants: closed inverse relations, no self
    /// edges, known endpoints, and each unordered view pair at most once.
    pub fn check_invariants(&self) -> Result<(), String> {
        let has_view = |id: &str| self.view(id).is_some();
        let has_object = |id: &str| self.object(id).is_some();
        for e in &self.edges_oo {
            if e.subject_id == e.object_id {
                return Err(format!("self edge on {}", e.subject_id));
            }
            if !has_object(&e.subject_id) || !has_object(&e.object_id) {
                return Err(format!("unknown endpoint in {e:?}"));
            }
            let inverse = ObjectEdge {
                subject_id: e.object_id.clone(),
                relation: e.relation.inverse(),
                object_id: e.subject_id.clone(),
            };
            if !self.edges_oo.contains(&inverse) {
                return Err(format!("missing inverse of {e:?}"));
            }
        }
        for e in &self.edges_vo {
            if !has_view(&e.view_id) || !has_object(&e.object_id) {
                return Err(format!("unknown endpoint in {} -> {}", e.view_id, e.object_id));
            }
        }
        let mut pairs = std::collections::HashSet::new();
        for e in &self.edges_vv {
            if e.view_id_a == e.view_id_b {
                return Err(format!("self edge on {}", e.view_id_a));
            }
            if !has_view(&e.view_id_a) || !has_view(&e.view_id_b) {
                return Err(format!("unknown endpoint in {e:?}"));
            }
            let key = if e.view_id_a < e.view_id_b {
                (e.view_id_a.as_str(), e.view_id_b.as_str())
            } else {
                (e.view_id_b.as_str(), e.view_id_a.as_str())
            };
            if !pairs.insert(key) {
                return Err(format!("duplicate view pair {key:?}"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string(&GraphFileRef {
            schema_version: SCHEMA_VERSION,
            graph: self,
        })
        .expect("graph serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| GraphError::Malformed(e.to_string()))?;
        let found = raw
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| GraphError::Malformed("missing schema_version".into()))?;
        if found != SCHEMA_VERSION as u64 {
            return Err(GraphError::SchemaVersionMismatch {
                found,
                expected: SCHEMA_VERSION,
            });
        }
        let file: GraphFile =
            serde_json::from_value(raw).map_err(|e| GraphError::Malformed(e.to_string()))?;
        debug_assert_eq!(file.schema_version, SCHEMA_VERSION as u64);
        Ok(file.graph)
    }
}

pub fn save_graph(graph: &Mmmg, path: impl AsRef<Path>) -> Result<(), GraphError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| GraphError::IoFailure {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, graph.to_json()).map_err(|source| GraphError::IoFailure {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<Mmmg, GraphError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| GraphError::IoFailure {
        path: path.to_path_buf(),
        source,
    })?;
    Mmmg::from_json(&text)
}
