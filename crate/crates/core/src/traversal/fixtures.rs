//! Hand-built graphs for traversal tests.

use image::{Rgb, RgbImage};

use crate::agent::{AgentError, AgentRequest, DecisionAgent};
use crate::geometry::{Aabb, SpatialRelation, VisibilityReport};
use crate::graph::{BuildParams, Mmmg, ObjectEdge, ViewEdge, ViewEdgeKind, VisibilityEdge};
use crate::grid::MemoryImageSource;
use crate::scene::{parse_object_id, CameraView, Intrinsics, SceneObject};
use crate::traversal::RunConfig;

pub fn view(id: &str, frame: u32) -> CameraView {
    let mut pose = [0.0; 16];
    for i in 0..4 {
        pose[i * 5] = 1.0;
    }
    CameraView {
        view_id: id.into(),
        frame_index: frame,
        intrinsics: Intrinsics {
            fx: 10.0,
            fy: 10.0,
            cx: 4.0,
            cy: 3.0,
        },
        pose,
        image_ref: format!("images/{id}.png"),
        width: 8,
        height: 6,
        depth_ref: None,
    }
}

pub fn object(id: &str, x: f64) -> SceneObject {
    SceneObject {
        object_id: id.into(),
        class_label: parse_object_id(id).unwrap().0.into(),
        bbox: Aabb::from_array([x, 0.0, 0.5, 0.5, 0.5, 1.0]),
        points: vec![[x as f32, 0.0, 0.5]],
    }
}

pub fn graph(views: &[&str], objects: &[&str], vo: &[(&str, &str)], vv: &[(&str, &str, ViewEdgeKind)]) -> Mmmg {
    Mmmg {
        scene_id: "fixture".into(),
        bundle_dir: None,
        params: BuildParams::default(),
        views: views.iter().enumerate().map(|(i, v)| view(v, i as u32)).collect(),
        objects: objects.iter().enumerate().map(|(i, o)| object(o, i as f64)).collect(),
        edges_oo: Vec::new(),
        edges_vo: vo
            .iter()
            .map(|(v, o)| VisibilityEdge {
                view_id: v.to_string(),
                object_id: o.to_string(),
                report: VisibilityReport {
                    view_id: v.to_string(),
                    object_id: o.to_string(),
                    projected_fraction: 1.0,
                    unoccluded_fraction: 1.0,
                    pixel_count: 100,
                },
            })
            .collect(),
        edges_vv: vv
            .iter()
            .map(|(a, b, kind)| ViewEdge {
                view_id_a: a.to_string(),
                view_id_b: b.to_string(),
                kind: *kind,
            })
            .collect(),
    }
}

use ViewEdgeKind::{Adjacent as ADJ, Complementary as COMP};

/// v0 sees chair_0 and tv_0; v1 chair_1; v2 only table_0; v3 chair_2;
/// v4 tv_0. Edges: v0-v1 adj, v0-v2 comp, v0-v4 comp, v1-v3 adj, v2-v3 comp.
pub fn living_room() -> Mmmg {
    let mut g = graph(
        &["v0", "v1", "v2", "v3", "v4"],
        &["chair_0", "chair_1", "chair_2", "tv_0", "table_0"],
        &[
            ("v0", "chair_0"),
            ("v0", "tv_0"),
            ("v1", "chair_1"),
            ("v2", "table_0"),
            ("v3", "chair_2"),
            ("v4", "tv_0"),
        ],
        &[
            ("v0", "v1", ADJ),
            ("v0", "v2", COMP),
            ("v0", "v4", COMP),
            ("v1", "v3", ADJ),
            ("v2", "v3", COMP),
        ],
    );
    g.edges_oo = vec![
        ObjectEdge {
            subject_id: "chair_0".into(),
            relation: SpatialRelation::Right,
            object_id: "tv_0".into(),
        },
        ObjectEdge {
            subject_id: "tv_0".into(),
            relation: SpatialRelation::Left,
            object_id: "chair_0".into(),
        },
    ];
    g
}

/// `n` views in a ring, view `ri` seeing `chair_i`.
pub fn ring(n: usize) -> Mmmg {
    let views: Vec<String> = (0..n).map(|i| format!("r{i}")).collect();
    let chairs: Vec<String> = (0..n).map(|i| format!("chair_{i}")).collect();
    let vo: Vec<(&str, &str)> = (0..n).map(|i| (views[i].as_str(), chairs[i].as_str())).collect();
    let vv: Vec<(&str, &str, ViewEdgeKind)> = (0..n)
        .map(|i| (views[i].as_str(), views[(i + 1) % n].as_str(), ADJ))
        .collect();
    let vr: Vec<&str> = views.iter().map(String::as_str).collect();
    let cr: Vec<&str> = chairs.iter().map(String::as_str).collect();
    graph(&vr, &cr, &vo, &vv)
}

pub fn images(g: &Mmmg) -> MemoryImageSource {
    let mut src = MemoryImageSource::new();
    for (i, v) in g.views.iter().enumerate() {
        src.insert(v.view_id.clone(), RgbImage::from_pixel(8, 6, Rgb([(i * 40) as u8, 90, 200])));
    }
    src
}

pub fn config(seed: u64) -> RunConfig {
    RunConfig {
        seed,
        cell_size: (16, 12),
        ..RunConfig::default()
    }
}

/// Returns canned replies in order.
pub struct Canned(pub Vec<String>);

impl DecisionAgent for Canned {
    fn name(&self) -> &str {
        "canned"
    }

    fn decide(&mut self, _request: &AgentRequest<'_>) -> Result<String, AgentError> {
        if self.0.is_empty() {
            return Err(AgentError::ScriptExhausted(0));
        }
        Ok(self.0.remove(0))
    }
}
