//! Synthetic rooms with known answers: furniture boxes on the floor, a ring
//! of cameras looking at the room center, point-splat renderings, and
//! relation queries whose referent is unique by construction.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use image::{Rgb, RgbImage};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{GroundTruth, GroundTruthEntry};
use crate::geometry::{classify_relation, project_point, Aabb, SpatialRelation};
use crate::grid::MemoryImageSource;
use crate::scene::{format_object_id, save_bundle, CameraView, Intrinsics, SceneBundle, SceneError, SceneObject};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("could not place {object} after {attempts} attempts; the room is too crowded")]
    PlacementFailure { object: String, attempts: usize },
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("cannot write {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub class_label: String,
    pub count: usize,
    /// Nominal extents in meters; each instance is scaled by up to
    /// `size_jitter` per axis.
    pub size: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraRing {
    pub count: usize,
    pub radius: f64,
    pub height: f64,
    /// Height of the point the cameras look at.
    pub look_height: f64,
    pub horizontal_fov_deg: f64,
    pub width: u32,
    pub height_px: u32,
}

impl Default for CameraRing {
    fn default() -> Self {
        CameraRing {
            count: 24,
            radius: 1.2,
            height: 1.4,
            look_height: 1.0,
            horizontal_fov_deg: 70.0,
            width: 320,
            height_px: 240,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub seed: u64,
    /// Floor extents along x and y, centered on the origin.
    pub room: [f64; 2],
    pub objects: Vec<ObjectSpec>,
    pub size_jitter: f64,
    /// Minimum horizontal gap between boxes, and between boxes and the
    /// camera ring.
    pub min_gap: f64,
    pub cameras: CameraRing,
    pub points_per_object: usize,
    pub max_queries: usize,
    /// Number of scenes `simulate` generates from consecutive seeds.
    pub scene_count: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let obj = |label: &str, count, size| ObjectSpec {
            class_label: label.into(),
            count,
            size,
        };
        SyntheticSpec {
            seed: 0,
            room: [8.0, 7.0],
            objects: vec![
                obj("chair", 2, [0.5, 0.5, 0.9]),
                obj("table", 1, [1.2, 0.8, 0.75]),
                obj("cabinet", 1, [0.9, 0.5, 1.2]),
                obj("sofa", 1, [1.8, 0.9, 0.8]),
                obj("lamp", 1, [0.35, 0.35, 1.5]),
            ],
            size_jitter: 0.1,
            min_gap: 0.2,
            cameras: CameraRing::default(),
            points_per_object: 400,
            max_queries: 4,
            scene_count: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.into()));
        if !(self.room[0] > 0.0 && self.room[1] > 0.0) {
            return bad("room extents must be positive");
        }
        if self.objects.iter().all(|o| o.count == 0) {
            return bad("at least one object");
        }
        if self.objects.iter().any(|o| o.size.iter().any(|s| !(*s > 0.0))) {
            return bad("object sizes must be positive");
        }
        if self.cameras.count == 0 || self.cameras.width < 8 || self.cameras.height_px < 8 {
            return bad("camera ring needs at least one camera of 8x8 pixels");
        }
        if !(self.cameras.horizontal_fov_deg > 1.0 && self.cameras.horizontal_fov_deg < 170.0) {
            return bad("field of view must lie in (1, 170) degrees");
        }
        if self.points_per_object < 5 {
            return bad("at least 5 points per object");
        }
        if !(0.0..0.5).contains(&self.size_jitter) {
            return bad("size_jitter in [0, 0.5)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticQuery {
    pub query_id: String,
    pub text: String,
    pub target_id: String,
    pub anchor_id: String,
    /// The target is `relation` of the anchor.
    pub relation: SpatialRelation,
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub bundle: SceneBundle,
    pub queries: Vec<SyntheticQuery>,
    pub images: BTreeMap<String, RgbImage>,
}

const MAX_ATTEMPTS: usize = 2000;

fn round_mm(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Horizontal distance between two footprints (0 when they overlap).
fn footprint_gap(a: &Aabb, b: &Aabb) -> f64 {
    let gap = |i: usize| ((a.center[i] - b.center[i]).abs() - 0.5 * (a.size[i] + b.size[i])).max(0.0);
    gap(0).hypot(gap(1))
}

fn footprint_distance_to_origin(b: &Aabb) -> f64 {
    let d = |i: usize| (b.center[i].abs() - 0.5 * b.size[i]).max(0.0);
    d(0).hypot(d(1))
}

fn place_objects(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<Vec<(String, String, Aabb)>, SynthError> {
    let keep_out = spec.cameras.radius + spec.min_gap;
    let mut placed: Vec<(String, String, Aabb)> = Vec::new();
    for os in &spec.objects {
        for k in 0..os.count {
            let id = format_object_id(&os.class_label, k as u32);
            let mut size = os.size.map(|s| round_mm(s * (1.0 + rng.random_range(-1.0..=1.0) * spec.size_jitter)));
            // Even millimeters keep the center height (and floor contact) exact.
            size[2] = 2.0 * round_mm(0.5 * size[2]);
            let mut ok = None;
            for _ in 0..MAX_ATTEMPTS {
                let half = [0.5 * (spec.room[0] - size[0]), 0.5 * (spec.room[1] - size[1])];
                if half[0] <= 0.0 || half[1] <= 0.0 {
                    break;
                }
                let cx = round_mm(rng.random_range(-half[0]..=half[0]));
                let cy = round_mm(rng.random_range(-half[1]..=half[1]));
                let b = Aabb {
                    center: [cx, cy, 0.5 * size[2]],
                    size,
                };
                if footprint_distance_to_origin(&b) < keep_out {
                    continue;
                }
                if placed.iter().all(|(_, _, o)| footprint_gap(o, &b) >= spec.min_gap) {
                    ok = Some(b);
                    break;
                }
            }
            let b = ok.ok_or_else(|| SynthError::PlacementFailure {
                object: id.clone(),
                attempts: MAX_ATTEMPTS,
            })?;
            placed.push((id, os.class_label.clone(), b));
        }
    }
    Ok(placed)
}

/// Points on the top face and the four sides, proportional to face area.
fn surface_points(b: &Aabb, n: usize, rng: &mut ChaCha8Rng) -> Vec<[f32; 3]> {
    let [sx, sy, sz] = b.size;
    let lo = b.min();
    let hi = b.max();
    let areas = [sx * sy, sx * sz, sx * sz, sy * sz, sy * sz];
    let total: f64 = areas.iter().sum();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Stratify faces deterministically by cumulative area.
        let t = (i as f64 + 0.5) / n as f64 * total;
        let mut acc = 0.0;
        let mut face = 4;
        for (f, a) in areas.iter().enumerate() {
            acc += a;
            if t < acc {
                face = f;
                break;
            }
        }
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        let lerp = |d: usize, s: f64| lo[d] + (hi[d] - lo[d]) * s;
        let p = match face {
            0 => [lerp(0, u), lerp(1, v), hi[2]],
            1 => [lerp(0, u), lo[1], lerp(2, v)],
            2 => [lerp(0, u), hi[1], lerp(2, v)],
            3 => [lo[0], lerp(1, u), lerp(2, v)],
            _ => [hi[0], lerp(1, u), lerp(2, v)],
        };
        out.push(p.map(|c| c as f32));
    }
    out
}

fn ring_cameras(ring: &CameraRing) -> Vec<CameraView> {
    let fx = 0.5 * ring.width as f64 / (0.5 * ring.horizontal_fov_deg.to_radians()).tan();
    let target = Vector3::new(0.0, 0.0, ring.look_height);
    let up = Vector3::z();
    (0..ring.count)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / ring.count as f64;
            let pos = Vector3::new(ring.radius * theta.cos(), ring.radius * theta.sin(), ring.height);
            let forward = (target - pos).normalize();
            let right = forward.cross(&up).normalize();
            let down = forward.cross(&right);
            let pose = [
                right.x, down.x, forward.x, pos.x,
                right.y, down.y, forward.y, pos.y,
                right.z, down.z, forward.z, pos.z,
                0.0, 0.0, 0.0, 1.0,
            ];
            let view_id = format!("frame_{k:03}");
            CameraView {
                image_ref: format!("images/{view_id}.png"),
                view_id,
                frame_index: k as u32,
                intrinsics: Intrinsics {
                    fx,
                    fy: fx,
                    cx: 0.5 * ring.width as f64,
                    cy: 0.5 * ring.height_px as f64,
                },
                pose,
                width: ring.width,
                height: ring.height_px,
                depth_ref: None,
            }
        })
        .collect()
}

fn class_color(label: &str) -> [u8; 3] {
    // FNV-1a, folded into mid-range channel values.
    let mut h: u32 = 0x811c_9dc5;
    for b in label.bytes() {
        h ^= b as u32;
        h = h.wrapping_mul(0x0100_0193);
    }
    [(h & 0xff) as u8, ((h >> 8) & 0xff) as u8, ((h >> 16) & 0xff) as u8].map(|c| 40 + c / 2)
}

/// Z-buffered splat of every object's points, 3x3 pixels each.
pub fn render_view(view: &CameraView, objects: &[SceneObject]) -> RgbImage {
    let (w, h) = (view.width, view.height);
    let horizon = view.intrinsics.cy as u32;
    let mut img = RgbImage::from_fn(w, h, |_, y| if y < horizon { Rgb([214, 220, 226]) } else { Rgb([176, 160, 138]) });
    let mut zbuf = vec![f64::INFINITY; (w * h) as usize];
    for o in objects {
        let base = class_color(&o.class_label);
        let z_lo = o.bbox.min()[2];
        let z_span = o.bbox.size[2].max(1e-6);
        for p in &o.points {
            let Some(proj) = project_point(p.map(f64::from), view) else { continue };
            let shade = 0.75 + 0.25 * ((p[2] as f64 - z_lo) / z_span);
            let color = Rgb(base.map(|c| (c as f64 * shade).min(255.0) as u8));
            let (u, v) = (proj.u.floor() as i64, proj.v.floor() as i64);
            for dv in -1..=1 {
                for du in -1..=1 {
                    let (x, y) = (u + du, v + dv);
                    if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                        continue;
                    }
                    let i = (y as u32 * w + x as u32) as usize;
                    if proj.depth < zbuf[i] {
                        zbuf[i] = proj.depth;
                        img.put_pixel(x as u32, y as u32, color);
                    }
                }
            }
        }
    }
    img
}

/// Objects of `target`'s class that are `relation` of some object of
/// `anchor_class` other than themselves.
pub fn satisfying_objects<'a>(
    objects: &'a [SceneObject],
    target_class: &str,
    relation: SpatialRelation,
    anchor_class: &str,
) -> Vec<&'a str> {
    objects
        .iter()
        .filter(|x| x.class_label == target_class)
        .filter(|x| {
            objects.iter().any(|a| {
                a.class_label == anchor_class
                    && a.object_id != x.object_id
                    && classify_relation(&a.bbox, &x.bbox).ok() == Some(relation)
            })
        })
        .map(|x| x.object_id.as_str())
        .collect()
}

fn make_queries(scene_id: &str, objects: &[SceneObject], max: usize, rng: &mut ChaCha8Rng) -> Vec<SyntheticQuery> {
    let mut found = Vec::new();
    for t in objects {
        for a in objects {
            if a.class_label == t.class_label {
                continue;
            }
            let Ok(rel) = classify_relation(&a.bbox, &t.bbox) else { continue };
            let sat = satisfying_objects(objects, &t.class_label, rel, &a.class_label);
            if sat == [t.object_id.as_str()] {
                found.push((t, a, rel));
            }
        }
    }
    found.shuffle(rng);
    found
        .into_iter()
        .take(max)
        .enumerate()
        .map(|(k, (t, a, rel))| SyntheticQuery {
            query_id: format!("{scene_id}__q{k}"),
            text: format!(
                "the {} {} the {}",
                t.class_label.replace('_', " "),
                rel.phrase(),
                a.class_label.replace('_', " ")
            ),
            target_id: t.object_id.clone(),
            anchor_id: a.object_id.clone(),
            relation: rel,
        })
        .collect()
}

pub fn scene_id_for(seed: u64) -> String {
    format!("synth_{seed:05}")
}

pub fn generate_scene(spec: &SyntheticSpec) -> Result<SyntheticScene, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scene_id = scene_id_for(spec.seed);
    let objects: Vec<SceneObject> = place_objects(spec, &mut rng)?
        .into_iter()
        .map(|(object_id, class_label, bbox)| SceneObject {
            points: surface_points(&bbox, spec.points_per_object, &mut rng),
            object_id,
            class_label,
            bbox,
        })
        .collect();
    let views = ring_cameras(&spec.cameras);
    let images = views
        .iter()
        .map(|v| (v.view_id.clone(), render_view(v, &objects)))
        .collect();
    let queries = make_queries(&scene_id, &objects, spec.max_queries, &mut rng);
    let bundle = SceneBundle {
        scene_id,
        views,
        objects,
        root: None,
    };
    bundle.validate()?;
    Ok(SyntheticScene { bundle, queries, images })
}

impl SyntheticScene {
    pub fn image_source(&self) -> MemoryImageSource {
        let mut src = MemoryImageSource::new();
        for (id, img) in &self.images {
            src.insert(id.clone(), img.clone());
        }
        src
    }

    pub fn ground_truth(&self) -> GroundTruth {
        self.queries
            .iter()
            .filter_map(|q| {
                let o = self.bundle.objects.iter().find(|o| o.object_id == q.target_id)?;
                Some((
                    q.query_id.clone(),
                    GroundTruthEntry {
                        object_id: o.object_id.clone(),
                        bbox: o.bbox.to_array(),
                    },
                ))
            })
            .collect()
    }

    /// Writes the bundle, its rendered images and `queries.json`.
    pub fn write_to(&self, dir: &Path) -> Result<(), SynthError> {
        save_bundle(&self.bundle, dir)?;
        let io = |path: &Path, e: String| SynthError::Io {
            path: path.display().to_string(),
            reason: e,
        };
        for view in &self.bundle.views {
            let path = dir.join(&view.image_ref);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| io(parent, e.to_string()))?;
            }
            self.images[&view.view_id].save(&path).map_err(|e| io(&path, e.to_string()))?;
        }
        let path = dir.join("queries.json");
        let mut text = serde_json::to_string_pretty(&self.queries).expect("queries serialize");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| io(&path, e.to_string()))
    }
}
