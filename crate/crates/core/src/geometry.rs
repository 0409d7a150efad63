//! Numeric kernels shared by the edge builders: pinhole projection, depth
//! buffers and visibility, axis-aligned 3D IoU, and directional relations.
//!
//! World frame convention: x = right, y = front, z = up. Cameras follow the
//! usual optical convention (x right, y down, z forward in camera space).

use std::collections::HashSet;
use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{CameraView, SceneObject};

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("depth buffer is {actual:?} cells, view needs {expected:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        actual: (u32, u32),
    },
    #[error("box centers coincide; no relation is defined")]
    DegenerateInput,
}

/// Axis-aligned box stored as center and full extents, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 6]", into = "[f64; 6]")]
pub struct Aabb {
    pub center: [f64; 3],
    pub size: [f64; 3],
}

impl From<[f64; 6]> for Aabb {
    fn from(a: [f64; 6]) -> Self {
        Aabb::from_array(a)
    }
}

impl From<Aabb> for [f64; 6] {
    fn from(b: Aabb) -> Self {
        b.to_array()
    }
}

impl Aabb {
    pub fn from_array(a: [f64; 6]) -> Self {
        Aabb {
            center: [a[0], a[1], a[2]],
            size: [a[3], a[4], a[5]],
        }
    }

    pub fn from_min_max(min: [f64; 3], max: [f64; 3]) -> Self {
        let mut center = [0.0; 3];
        let mut size = [0.0; 3];
        for i in 0..3 {
            center[i] = 0.5 * (min[i] + max[i]);
            size[i] = max[i] - min[i];
        }
        Aabb { center, size }
    }

    pub fn to_array(&self) -> [f64; 6] {
        let [x, y, z] = self.center;
        let [w, d, h] = self.size;
        [x, y, z, w, d, h]
    }

    pub fn min(&self) -> [f64; 3] {
        std::array::from_fn(|i| self.center[i] - 0.5 * self.size[i])
    }

    pub fn max(&self) -> [f64; 3] {
        std::array::from_fn(|i| self.center[i] + 0.5 * self.size[i])
    }

    pub fn volume(&self) -> f64 {
        self.size.iter().product()
    }

    pub fn inflated(&self, margin: f64) -> Self {
        Aabb {
            center: self.center,
            size: self.size.map(|s| s + 2.0 * margin),
        }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let (lo, hi) = (self.min(), self.max());
        (0..3).all(|i| p[i] >= lo[i] && p[i] <= hi[i])
    }

    pub fn contains_f32(&self, p: [f32; 3]) -> bool {
        self.contains(p.map(f64::from))
    }
}

/// Intersection over union of two axis-aligned boxes.
pub fn iou_3d(a: &Aabb, b: &Aabb) -> f64 {
    if a == b {
        return 1.0;
    }
    let (amin, amax, bmin, bmax) = (a.min(), a.max(), b.min(), b.max());
    let mut inter = 1.0;
    for i in 0..3 {
        let overlap = amax[i].min(bmax[i]) - amin[i].max(bmin[i]);
        if overlap <= 0.0 {
            return 0.0;
        }
        inter *= overlap;
    }
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Directional relation between two objects. `(s, r, o)` reads "o is r of s".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpatialRelation {
    Left,
    Right,
    Front,
    Behind,
    Above,
    Below,
}

impl SpatialRelation {
    pub const ALL: [SpatialRelation; 6] = [
        SpatialRelation::Left,
        SpatialRelation::Right,
        SpatialRelation::Front,
        SpatialRelation::Behind,
        SpatialRelation::Above,
        SpatialRelation::Below,
    ];

    pub fn inverse(self) -> Self {
        use SpatialRelation::*;
        match self {
            Left => Right,
            Right => Left,
            Front => Behind,
            Behind => Front,
            Above => Below,
            Below => Above,
        }
    }

    pub fn as_str(self) -> &'static str {
        use SpatialRelation::*;
        match self {
            Left => "left",
            Right => "right",
            Front => "front",
            Behind => "behind",
            Above => "above",
            Below => "below",
        }
    }

    /// Phrase used in referring expressions ("the chair left of the table").
    pub fn phrase(self) -> &'static str {
        use SpatialRelation::*;
        match self {
            Left => "left of",
            Right => "right of",
            Front => "in front of",
            Behind => "behind",
            Above => "above",
            Below => "below",
        }
    }
}

impl fmt::Display for SpatialRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

const DEGENERATE_EPS: f64 = 1e-9;

/// Relation of `object` as seen from `subject`, decided by the dominant axis
/// of the center offset. Ties go to z, then y, then x.
pub fn classify_relation(subject: &Aabb, object: &Aabb) -> Result<SpatialRelation, GeometryError> {
    let d: [f64; 3] = std::array::from_fn(|i| object.center[i] - subject.center[i]);
    if d.iter().all(|c| c.abs() <= DEGENERATE_EPS) {
        return Err(GeometryError::DegenerateInput);
    }
    let [ax, ay, az] = d.map(f64::abs);
    let rel = if az >= ay && az >= ax {
        if d[2] > 0.0 {
            SpatialRelation::Above
        } else {
            SpatialRelation::Below
        }
    } else if ay >= ax {
        if d[1] > 0.0 {
            SpatialRelation::Front
        } else {
            SpatialRelation::Behind
        }
    } else if d[0] > 0.0 {
        SpatialRelation::Right
    } else {
        SpatialRelation::Left
    };
    Ok(rel)
}

/// A point in pixel coordinates with its camera-frame depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl Projection {
    pub fn pixel(&self) -> (u32, u32) {
        (self.u.floor() as u32, self.v.floor() as u32)
    }
}

pub fn world_to_camera(point: Vector3<f64>, view: &CameraView) -> Vector3<f64> {
    let r = view.rotation();
    r.transpose() * (point - view.position())
}

/// Projects a world point; `None` when behind the camera or outside the image.
pub fn project_point(point: [f64; 3], view: &CameraView) -> Option<Projection> {
    let p = world_to_camera(Vector3::from(point), view);
    if !(p.z > 0.0) {
        return None;
    }
    let k = &view.intrinsics;
    let u = k.fx * p.x / p.z + k.cx;
    let v = k.fy * p.y / p.z + k.cy;
    if u < 0.0 || v < 0.0 || u >= view.width as f64 || v >= view.height as f64 {
        return None;
    }
    Some(Projection { u, v, depth: p.z })
}

/// Inverse of `project_point`: the world point at `depth` along the pixel ray.
pub fn unproject(u: f64, v: f64, depth: f64, view: &CameraView) -> [f64; 3] {
    let k = &view.intrinsics;
    let cam = Vector3::new((u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth);
    let world = view.rotation() * cam + view.position();
    [world.x, world.y, world.z]
}

/// Per-cell nearest depth in meters; empty cells hold `+inf`. One cell covers
/// `divisor x divisor` image pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthBuffer {
    pub width: u32,
    pub height: u32,
    pub divisor: u32,
    pub data: Vec<f32>,
}

impl DepthBuffer {
    pub fn empty(width: u32, height: u32, divisor: u32) -> Self {
        DepthBuffer {
            width,
            height,
            divisor,
            data: vec![f32::INFINITY; (width * height) as usize],
        }
    }

    /// Buffer shape a view needs at the given divisor.
    pub fn dims_for(view: &CameraView, divisor: u32) -> (u32, u32) {
        (view.width.div_ceil(divisor), view.height.div_ceil(divisor))
    }

    pub fn for_view(view: &CameraView, divisor: u32) -> Self {
        let (w, h) = Self::dims_for(view, divisor);
        Self::empty(w, h, divisor)
    }

    /// Wraps a 16-bit millimeter depth image; zero means no reading.
    pub fn from_millimeters(img: &image::ImageBuffer<image::Luma<u16>, Vec<u16>>) -> Self {
        let data = img
            .pixels()
            .map(|p| match p.0[0] {
                0 => f32::INFINITY,
                mm => mm as f32 / 1000.0,
            })
            .collect();
        DepthBuffer {
            width: img.width(),
            height: img.height(),
            divisor: 1,
            data,
        }
    }

    fn cell_index(&self, pixel: (u32, u32)) -> usize {
        let (x, y) = (pixel.0 / self.divisor, pixel.1 / self.divisor);
        (y * self.width + x) as usize
    }

    pub fn at_pixel(&self, pixel: (u32, u32)) -> f32 {
        self.data[self.cell_index(pixel)]
    }

    /// Keeps the minimum depth at the pixel's cell.
    pub fn splat(&mut self, pixel: (u32, u32), depth: f32) {
        let i = self.cell_index(pixel);
        if depth < self.data[i] {
            self.data[i] = depth;
        }
    }

    pub fn splat_points<'a>(&mut self, view: &CameraView, points: impl IntoIterator<Item = &'a [f32; 3]>) {
        for p in points {
            if let Some(proj) = project_point(p.map(f64::from), view) {
                self.splat(proj.pixel(), proj.depth as f32);
            }
        }
    }
}

/// Z-buffer splat of every object point at `1/divisor` resolution.
pub fn synthesize_depth_buffer(view: &CameraView, objects: &[SceneObject], divisor: u32) -> DepthBuffer {
    let mut buf = DepthBuffer::for_view(view, divisor.max(1));
    for object in objects {
        buf.splat_points(view, &object.points);
    }
    buf
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityReport {
    pub view_id: String,
    pub object_id: String,
    pub projected_fraction: f64,
    pub unoccluded_fraction: f64,
    pub pixel_count: u32,
}

/// Thresholds deciding when an object counts as visible from a view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityParams {
    pub min_unoccluded_fraction: f64,
    pub min_pixel_count: u32,
    pub occlusion_tolerance: f64,
    pub depth_divisor: u32,
}

impl Default for VisibilityParams {
    fn default() -> Self {
        VisibilityParams {
            min_unoccluded_fraction: 0.30,
            min_pixel_count: 20,
            occlusion_tolerance: 0.10,
            depth_divisor: 4,
        }
    }
}

impl VisibilityParams {
    pub fn passes(&self, report: &VisibilityReport) -> bool {
        report.unoccluded_fraction >= self.min_unoccluded_fraction
            && report.pixel_count >= self.min_pixel_count
    }
}

/// Fractions are taken over all sample points. `pixel_count` counts distinct
/// image pixels hit by unoccluded points.
pub fn compute_visibility(
    view: &CameraView,
    object: &SceneObject,
    depth: &DepthBuffer,
    occlusion_tolerance: f64,
) -> Result<VisibilityReport, GeometryError> {
    let expected = DepthBuffer::dims_for(view, depth.divisor.max(1));
    if depth.divisor == 0 || (depth.width, depth.height) != expected {
        return Err(GeometryError::DimensionMismatch {
            expected,
            actual: (depth.width, depth.height),
        });
    }
    let total = object.points.len();
    let mut projected = 0usize;
    let mut unoccluded = 0usize;
    let mut pixels = HashSet::new();
    for p in &object.points {
        let Some(proj) = project_point(p.map(f64::from), view) else {
            continue;
        };
        projected += 1;
        let pixel = proj.pixel();
        if proj.depth <= depth.at_pixel(pixel) as f64 + occlusion_tolerance {
            unoccluded += 1;
            pixels.insert(pixel);
        }
    }
    let frac = |n: usize| if total == 0 { 0.0 } else { n as f64 / total as f64 };
    Ok(VisibilityReport {
        view_id: view.view_id.clone(),
        object_id: object.object_id.clone(),
        projected_fraction: frac(projected),
        unoccluded_fraction: frac(unoccluded),
        pixel_count: pixels.len() as u32,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Intrinsics;
    use proptest::prelude::*;

    fn view_with_pose(pose: [f64; 16]) -> CameraView {
        CameraView {
            view_id: "v".into(),
            frame_index: 0,
            intrinsics: Intrinsics {
                fx: 500.0,
                fy: 500.0,
                cx: 320.0,
                cy: 240.0,
            },
            pose,
            image_ref: "v.png".into(),
            width: 640,
            height: 480,
            depth_ref: None,
        }
    }

    fn identity_view() -> CameraView {
        let mut p = [0.0; 16];
        for i in [0, 5, 10, 15] {
            p[i] = 1.0;
        }
        view_with_pose(p)
    }

    /// Rigid pose from yaw/pitch rotation and translation.
    fn pose_from(yaw: f64, pitch: f64, t: [f64; 3]) -> [f64; 16] {
        let r = nalgebra::Rotation3::from_euler_angles(pitch, yaw, 0.3 * yaw);
        let m = r.matrix();
        [
            m[(0, 0)], m[(0, 1)], m[(0, 2)], t[0],
            m[(1, 0)], m[(1, 1)], m[(1, 2)], t[1],
            m[(2, 0)], m[(2, 1)], m[(2, 2)], t[2],
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    fn plane_object(id: &str, z: f32, half: f32, n: usize) -> SceneObject {
        let mut points = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let x = -half + 2.0 * half * i as f32 / (n - 1) as f32;
                let y = -half + 2.0 * half * j as f32 / (n - 1) as f32;
                points.push([x, y, z]);
            }
        }
        SceneObject {
            object_id: id.into(),
            class_label: id.rsplit_once('_').unwrap().0.into(),
            bbox: Aabb::from_array([0.0, 0.0, z as f64, 2.0 * half as f64, 2.0 * half as f64, 0.02]),
            points,
        }
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let p = project_point([0.0, 0.0, 2.0], &identity_view()).unwrap();
        assert_eq!((p.u, p.v, p.depth), (320.0, 240.0, 2.0));
    }

    #[test]
    fn behind_camera_is_culled() {
        assert!(project_point([0.0, 0.0, -1.0], &identity_view()).is_none());
        assert!(project_point([0.0, 0.0, 0.0], &identity_view()).is_none());
    }

    #[test]
    fn hand_computed_projection() {
        // u = 500 * 0.5 / 2 + 320 = 445, v = 500 * 0 / 2 + 240 = 240
        let p = project_point([0.5, 0.0, 2.0], &identity_view()).unwrap();
        assert!((p.u - 445.0).abs() < 1e-6);
        assert!((p.v - 240.0).abs() < 1e-6);
        assert!((p.depth - 2.0).abs() < 1e-6);
    }

    #[test]
    fn outside_image_is_culled() {
        // u = 500 * 2 / 2 + 320 = 820 > 640
        assert!(project_point([2.0, 0.0, 2.0], &identity_view()).is_none());
    }

    #[test]
    fn iou_cases() {
        let a = Aabb::from_array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(iou_3d(&a, &a), 1.0);
        let far = Aabb::from_array([1.5, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(iou_3d(&a, &far), 0.0);
        let half = Aabb::from_array([0.5, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert!((iou_3d(&a, &half) - 1.0 / 3.0).abs() < 1e-9);
        // touching faces share no volume
        let touch = Aabb::from_array([1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(iou_3d(&a, &touch), 0.0);
    }

    #[test]
    fn relation_axis_convention() {
        let s = Aabb::from_array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let at = |d: [f64; 3]| Aabb::from_array([d[0], d[1], d[2], 1.0, 1.0, 1.0]);
        assert_eq!(classify_relation(&s, &at([1.0, 0.0, 0.0])), Ok(SpatialRelation::Right));
        assert_eq!(classify_relation(&s, &at([-1.0, 0.0, 0.0])), Ok(SpatialRelation::Left));
        assert_eq!(classify_relation(&s, &at([0.0, 0.0, 0.8])), Ok(SpatialRelation::Above));
        assert_eq!(classify_relation(&s, &at([0.3, 0.31, 0.1])), Ok(SpatialRelation::Front));
        assert_eq!(classify_relation(&s, &at([0.0, -2.0, 0.0])), Ok(SpatialRelation::Behind));
        assert_eq!(classify_relation(&s, &at([0.0, 0.0, 0.0])), Err(GeometryError::DegenerateInput));
    }

    /// Enumerates the tie-break rule over offsets drawn from {-1, 0, 1}^3 with
    /// equal magnitudes, checking the priority z > y > x.
    #[test]
    fn relation_tie_break_enumeration() {
        let s = Aabb::from_array([0.0; 6]);
        for dx in [-1.0, 0.0, 1.0] {
            for dy in [-1.0, 0.0, 1.0] {
                for dz in [-1.0, 0.0, 1.0] {
                    if dx == 0.0 && dy == 0.0 && dz == 0.0 {
                        continue;
                    }
                    let o = Aabb::from_array([dx, dy, dz, 1.0, 1.0, 1.0]);
                    let expected = if dz != 0.0 {
                        if dz > 0.0 { SpatialRelation::Above } else { SpatialRelation::Below }
                    } else if dy != 0.0 {
                        if dy > 0.0 { SpatialRelation::Front } else { SpatialRelation::Behind }
                    } else if dx > 0.0 {
                        SpatialRelation::Right
                    } else {
                        SpatialRelation::Left
                    };
                    assert_eq!(classify_relation(&s, &o).unwrap(), expected, "d = ({dx}, {dy}, {dz})");
                }
            }
        }
    }

    #[test]
    fn self_visibility_is_full() {
        let view = identity_view();
        let obj = plane_object("picture_0", 3.0, 0.5, 12);
        let buf = synthesize_depth_buffer(&view, std::slice::from_ref(&obj), 4);
        let r = compute_visibility(&view, &obj, &buf, 0.10).unwrap();
        assert_eq!(r.projected_fraction, 1.0);
        assert_eq!(r.unoccluded_fraction, 1.0);
        assert!(r.pixel_count >= 20);
    }

    #[test]
    fn wall_in_front_occludes_everything() {
        let view = identity_view();
        let obj = plane_object("picture_0", 3.0, 0.5, 12);
        // wall at half the distance, dense enough to leave no holes at divisor 4
        let wall = plane_object("wall_0", 1.5, 1.0, 201);
        let objects = vec![obj.clone(), wall];
        let buf = synthesize_depth_buffer(&view, &objects, 4);
        // brute-force check: every cell the object lands in holds a depth near 1.5
        for p in &obj.points {
            let proj = project_point(p.map(f64::from), &view).unwrap();
            assert!((buf.at_pixel(proj.pixel()) - 1.5).abs() < 1e-6);
        }
        let r = compute_visibility(&view, &obj, &buf, 0.10).unwrap();
        assert_eq!(r.projected_fraction, 1.0);
        assert_eq!(r.unoccluded_fraction, 0.0);
        assert_eq!(r.pixel_count, 0);
    }

    #[test]
    fn behind_camera_projects_nothing() {
        let view = identity_view();
        let obj = plane_object("picture_0", -3.0, 0.5, 5);
        let buf = synthesize_depth_buffer(&view, std::slice::from_ref(&obj), 4);
        let r = compute_visibility(&view, &obj, &buf, 0.10).unwrap();
        assert_eq!(r.projected_fraction, 0.0);
        assert!(buf.data.iter().all(|d| d.is_infinite()));
    }

    #[test]
    fn depth_buffer_min_semantics() {
        let view = identity_view();
        let mut buf = DepthBuffer::for_view(&view, 4);
        buf.splat_points(&view, &[[0.0, 0.0, 3.0], [0.0, 0.0, 1.0]]);
        assert_eq!(buf.at_pixel((320, 240)), 1.0);
        let empty = synthesize_depth_buffer(&view, &[], 4);
        assert_eq!((empty.width, empty.height), (160, 120));
        assert!(empty.data.iter().all(|d| *d == f32::INFINITY));
    }

    #[test]
    fn two_box_buffer_matches_exhaustive_min() {
        let view = view_with_pose(pose_from(0.1, -0.05, [0.2, -0.1, -0.5]));
        let a = plane_object("box_0", 2.0, 0.6, 25);
        let mut b = plane_object("box_1", 2.6, 0.8, 25);
        for p in &mut b.points {
            p[0] += 0.3;
        }
        let objects = vec![a, b];
        let div = 4;
        let buf = synthesize_depth_buffer(&view, &objects, div);
        // exhaustive oracle: for each cell, minimum over every point landing in it
        let all: Vec<Projection> = objects
            .iter()
            .flat_map(|o| o.points.iter())
            .filter_map(|p| project_point(p.map(f64::from), &view))
            .collect();
        for cy in 0..buf.height {
            for cx in 0..buf.width {
                let expected = all
                    .iter()
                    .filter(|p| {
                        let (px, py) = p.pixel();
                        px / div == cx && py / div == cy
                    })
                    .map(|p| p.depth as f32)
                    .fold(f32::INFINITY, f32::min);
                assert_eq!(buf.data[(cy * buf.width + cx) as usize], expected);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let view = identity_view();
        let obj = plane_object("picture_0", 3.0, 0.5, 4);
        let buf = DepthBuffer::empty(10, 10, 4);
        assert!(matches!(
            compute_visibility(&view, &obj, &buf, 0.1),
            Err(GeometryError::DimensionMismatch { expected: (160, 120), actual: (10, 10) })
        ));
    }

    #[test]
    fn millimeter_depth_conversion() {
        let img = image::ImageBuffer::from_fn(2, 1, |x, _| image::Luma([if x == 0 { 0u16 } else { 1500 }]));
        let buf = DepthBuffer::from_millimeters(&img);
        assert_eq!(buf.data, vec![f32::INFINITY, 1.5]);
    }

    fn arb_box() -> impl Strategy<Value = Aabb> {
        (prop::array::uniform3(-2.0f64..2.0), prop::array::uniform3(0.05f64..2.0))
            .prop_map(|(c, s)| Aabb { center: c, size: s })
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou_3d(&a, &b);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab, iou_3d(&b, &a));
            prop_assert_eq!(iou_3d(&a, &a), 1.0);
        }

        #[test]
        fn relation_antisymmetry(a in arb_box(), b in arb_box()) {
            if let Ok(r) = classify_relation(&a, &b) {
                prop_assert_eq!(classify_relation(&b, &a).unwrap(), r.inverse());
            }
        }

        #[test]
        fn project_unproject_round_trip(
            yaw in -3.0f64..3.0, pitch in -1.0f64..1.0,
            t in prop::array::uniform3(-3.0f64..3.0),
            cam in prop::array::uniform3(-1.0f64..1.0), depth in 0.2f64..8.0,
        ) {
            let view = view_with_pose(pose_from(yaw, pitch, t));
            let cam_pt = Vector3::new(cam[0] * depth * 0.5, cam[1] * depth * 0.4, depth);
            let world = view.rotation() * cam_pt + view.position();
            let world = [world.x, world.y, world.z];
            if let Some(p) = project_point(world, &view) {
                let back = unproject(p.u, p.v, p.depth, &view);
                for i in 0..3 {
                    prop_assert!((back[i] - world[i]).abs() < 1e-6);
                }
            }
        }

        #[test]
        fn extra_points_never_raise_visibility(
            extra in prop::collection::vec(prop::array::uniform3(-1.0f32..1.0), 0..200),
            z in 0.5f32..4.0,
        ) {
            let view = identity_view();
            let obj = plane_object("picture_0", 3.0, 0.5, 8);
            let base = synthesize_depth_buffer(&view, std::slice::from_ref(&obj), 4);
            let before = compute_visibility(&view, &obj, &base, 0.1).unwrap();
            let mut more = base.clone();
            let pts: Vec<[f32; 3]> = extra.iter().map(|p| [p[0], p[1], z + p[2]]).collect();
            more.splat_points(&view, &pts);
            let after = compute_visibility(&view, &obj, &more, 0.1).unwrap();
            prop_assert!(after.unoccluded_fraction <= before.unoccluded_fraction);
            prop_assert!(after.unoccluded_fraction <= after.projected_fraction);
        }
    }
}
