use std::collections::{BTreeSet, HashMap};

use log::debug;
use nalgebra::Vector3;

use super::kmeans::kmeans;
use super::{BuildParams, GraphError, Mmmg, ObjectEdge, ViewEdge, ViewEdgeKind, VisibilityEdge};
use crate::geometry::{classify_relation, compute_visibility, synthesize_depth_buffer, DepthBuffer};
use crate::scene::{CameraView, SceneBundle, SceneObject};

/// Picks up to `m` representative views by clustering camera positions.
/// Each cluster contributes the member nearest its centroid (ties: lowest
/// frame index). Output keeps the bundle's view order.
pub fn cluster_views(bundle: &SceneBundle, m: usize, seed: u64) -> Vec<CameraView> {
    let views = &bundle.views;
    if views.len() <= m {
        return views.clone();
    }
    let positions: Vec<Vector3<f64>> = views.iter().map(CameraView::position).collect();
    let clustering = kmeans(&positions, m, seed);
    let mut chosen = BTreeSet::new();
    for (c, centroid) in clustering.centroids.iter().enumerate() {
        let best = (0..views.len())
            .filter(|&i| clustering.assignment[i] == c)
            .min_by(|&a, &b| {
                let da = (positions[a] - centroid).norm_squared();
                let db = (positions[b] - centroid).norm_squared();
                da.total_cmp(&db)
                    .then(views[a].frame_index.cmp(&views[b].frame_index))
                    .then(a.cmp(&b))
            });
        if let Some(i) = best {
            chosen.insert(i);
        }
    }
    chosen.into_iter().map(|i| views[i].clone()).collect()
}

fn cell_of(p: [f32; 3], cell: f64) -> (i64, i64, i64) {
    let f = |c: f32| (c as f64 / cell).floor() as i64;
    (f(p[0]), f(p[1]), f(p[2]))
}

struct PointGrid<'a> {
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<&'a [f32; 3]>>,
    lo: [f64; 3],
    hi: [f64; 3],
}

impl<'a> PointGrid<'a> {
    fn new(points: &'a [[f32; 3]], cell: f64) -> Self {
        let mut cells: HashMap<_, Vec<_>> = HashMap::new();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            cells.entry(cell_of(*p, cell)).or_default().push(p);
            for i in 0..3 {
                lo[i] = lo[i].min(p[i] as f64);
                hi[i] = hi[i].max(p[i] as f64);
            }
        }
        PointGrid { cell, cells, lo, hi }
    }

    fn bounds_gap(&self, other: &PointGrid<'_>) -> f64 {
        let mut sq = 0.0;
        for i in 0..3 {
            let gap = (other.lo[i] - self.hi[i]).max(self.lo[i] - other.hi[i]).max(0.0);
            sq += gap * gap;
        }
        sq.sqrt()
    }

    /// True when some point of `self` lies strictly within `radius` of `p`.
    /// The cell size equals the radius, so the 27-cell neighborhood suffices.
    fn any_within(&self, p: &[f32; 3], radius: f64) -> bool {
        let (cx, cy, cz) = cell_of(*p, self.cell);
        let r2 = radius * radius;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        if bucket.iter().any(|q| dist_sq(p, q) < r2) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

fn dist_sq(p: &[f32; 3], q: &[f32; 3]) -> f64 {
    (0..3).map(|i| (p[i] as f64 - q[i] as f64).powi(2)).sum()
}

/// Object-object edges: a pair connects when some point pair lies strictly
/// closer than `radius_r`; both directions are emitted with inverse labels.
/// Pairs whose box centers coincide have no defined direction and are skipped.
pub fn build_edges_oo(objects: &[SceneObject], radius_r: f64) -> Vec<ObjectEdge> {
    let grids: Vec<PointGrid<'_>> = objects.iter().map(|o| PointGrid::new(&o.points, radius_r)).collect();
    let mut connected = Vec::new();
    for i in 0..objects.len() {
        for j in (i + 1)..objects.len() {
            if grids[i].bounds_gap(&grids[j]) >= radius_r {
                continue;
            }
            if objects[i].points.iter().any(|p| grids[j].any_within(p, radius_r)) {
                connected.push((i, j));
            }
        }
    }
    let mut edges = Vec::with_capacity(connected.len() * 2);
    let mut directed = Vec::with_capacity(connected.len() * 2);
    for (i, j) in connected {
        match classify_relation(&objects[i].bbox, &objects[j].bbox) {
            Ok(rel) => {
                directed.push((i, j, rel));
                directed.push((j, i, rel.inverse()));
            }
            Err(_) => debug!(
                "{} and {} share a center; no relation",
                objects[i].object_id, objects[j].object_id
            ),
        }
    }
    directed.sort_by_key(|&(s, o, _)| (s, o));
    for (s, o, relation) in directed {
        edges.push(ObjectEdge {
            subject_id: objects[s].object_id.clone(),
            relation,
            object_id: objects[o].object_id.clone(),
        });
    }
    edges
}

/// Depth for a view: its recorded depth image when present, otherwise a
/// buffer splatted from every object's points.
pub fn depth_source(
    view: &CameraView,
    objects: &[SceneObject],
    bundle: &SceneBundle,
    params: &BuildParams,
) -> Result<DepthBuffer, GraphError> {
    match &view.depth_ref {
        Some(rel) => {
            let path = bundle.asset_path(rel);
            let img = image::open(&path).map_err(|e| GraphError::DepthImage {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            Ok(DepthBuffer::from_millimeters(&img.into_luma16()))
        }
        None => Ok(synthesize_depth_buffer(view, objects, params.visibility.depth_divisor)),
    }
}

/// View-object edges for every pair passing both visibility thresholds.
pub fn build_edges_vo(
    views: &[CameraView],
    objects: &[SceneObject],
    bundle: &SceneBundle,
    params: &BuildParams,
) -> Result<Vec<VisibilityEdge>, GraphError> {
    let mut edges = Vec::new();
    for view in views {
        let depth = depth_source(view, objects, bundle, params)?;
        for object in objects {
            let report = compute_visibility(view, object, &depth, params.visibility.occlusion_tolerance)?;
            if params.visibility.passes(&report) {
                edges.push(VisibilityEdge {
                    view_id: view.view_id.clone(),
                    object_id: object.object_id.clone(),
                    report,
                });
            }
        }
    }
    Ok(edges)
}

/// Intersection over union of two id sets; two empty sets count as identical.
pub fn set_iou(a: &BTreeSet<&str>, b: &BTreeSet<&str>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// View-view edges from visible-set overlap: complementary below `tau_low`,
/// adjacent in `[tau_low, tau_high)`, none otherwise.
pub fn build_edges_vv(
    views: &[CameraView],
    edges_vo: &[VisibilityEdge],
    tau_low: f64,
    tau_high: f64,
) -> Vec<ViewEdge> {
    let visible: Vec<BTreeSet<&str>> = views
        .iter()
        .map(|v| {
            edges_vo
                .iter()
                .filter(|e| e.view_id == v.view_id)
                .map(|e| e.object_id.as_str())
                .collect()
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..views.len() {
        for j in (i + 1)..views.len() {
            let iou = set_iou(&visible[i], &visible[j]);
            let kind = if iou < tau_low {
                ViewEdgeKind::Complementary
            } else if iou < tau_high {
                ViewEdgeKind::Adjacent
            } else {
                continue;
            };
            edges.push(ViewEdge {
                view_id_a: views[i].view_id.clone(),
                view_id_b: views[j].view_id.clone(),
                kind,
            });
        }
    }
    edges
}

pub fn build_graph(bundle: &SceneBundle, params: &BuildParams) -> Result<Mmmg, GraphError> {
    params.validate()?;
    let views = cluster_views(bundle, params.view_count_m, params.kmeans_seed);
    let edges_vo = build_edges_vo(&views, &bundle.objects, bundle, params)?;
    let edges_vv = build_edges_vv(&views, &edges_vo, params.tau_low, params.tau_high);
    let edges_oo = build_edges_oo(&bundle.objects, params.radius_r);
    Ok(Mmmg {
        scene_id: bundle.scene_id.clone(),
        bundle_dir: bundle.root.as_ref().map(|p| p.to_string_lossy().into_owned()),
        params: *params,
        views,
        objects: bundle.objects.clone(),
        edges_oo,
        edges_vo,
        edges_vv,
    })
}
