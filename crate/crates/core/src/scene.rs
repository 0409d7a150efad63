//! Scene bundles: posed camera views plus detected 3D objects, and their
//! on-disk layout.
//!
//! A bundle directory holds a `scene.json` manifest, the view images it
//! references, optional 16-bit depth images, and one little-endian `f32`
//! xyz sidecar per object.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Aabb;

pub const MANIFEST_NAME: &str = "scene.json";
pub const DEFAULT_POINT_CAP: usize = 2048;

/// Slack allowed between sample points and their detection box.
pub const POINT_BOX_TOLERANCE: f64 = 0.05;
const ORTHONORMAL_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("manifest not found: {0}")]
    MissingManifest(PathBuf),
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("invariant violated on {entity}: {invariant}")]
    InvariantViolation { entity: String, invariant: String },
    #[error("missing or undecodable asset: {0}")]
    MissingAsset(PathBuf),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SceneError {
    fn violation(entity: impl Into<String>, invariant: impl Into<String>) -> Self {
        SceneError::InvariantViolation {
            entity: entity.into(),
            invariant: invariant.into(),
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        SceneError::IoFailure {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraView {
    pub view_id: String,
    pub frame_index: u32,
    pub intrinsics: Intrinsics,
    /// Camera-to-world rigid transform, row-major.
    pub pose: [f64; 16],
    pub image_ref: String,
    pub width: u32,
    pub height: u32,
    pub depth_ref: Option<String>,
}

impl CameraView {
    pub fn pose_matrix(&self) -> Matrix4<f64> {
        Matrix4::from_row_slice(&self.pose)
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.pose_matrix().fixed_view::<3, 3>(0, 0).into_owned()
    }

    /// Camera center in world coordinates.
    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.pose[3], self.pose[7], self.pose[11])
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let id = &self.view_id;
        let k = &self.intrinsics;
        if !(k.fx > 0.0) {
            return Err(SceneError::violation(id, "fx > 0"));
        }
        if !(k.fy > 0.0) {
            return Err(SceneError::violation(id, "fy > 0"));
        }
        if !(k.cx >= 0.0 && k.cx < self.width as f64) {
            return Err(SceneError::violation(id, "0 <= cx < width"));
        }
        if !(k.cy >= 0.0 && k.cy < self.height as f64) {
            return Err(SceneError::violation(id, "0 <= cy < height"));
        }
        if self.pose.iter().any(|v| !v.is_finite()) {
            return Err(SceneError::violation(id, "pose entries finite"));
        }
        let last_row = &self.pose[12..16];
        if last_row
            .iter()
            .zip([0.0, 0.0, 0.0, 1.0])
            .any(|(a, b)| (a - b).abs() > ORTHONORMAL_TOLERANCE)
        {
            return Err(SceneError::violation(id, "pose last row = (0, 0, 0, 1)"));
        }
        let r = self.rotation();
        let gram = r * r.transpose();
        if (gram - Matrix3::identity()).abs().max() > ORTHONORMAL_TOLERANCE {
            return Err(SceneError::violation(id, "R * R^T = I"));
        }
        if (r.determinant() - 1.0).abs() > ORTHONORMAL_TOLERANCE {
            return Err(SceneError::violation(id, "det(R) = +1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub object_id: String,
    pub class_label: String,
    pub bbox: Aabb,
    pub points: Vec<[f32; 3]>,
}

impl SceneObject {
    pub fn validate(&self) -> Result<(), SceneError> {
        let id = &self.object_id;
        for (axis, size) in ["size_x", "size_y", "size_z"].iter().zip(self.bbox.size) {
            if !(size > 0.0) {
                return Err(SceneError::violation(id, format!("{axis} > 0")));
            }
        }
        match parse_object_id(id) {
            Some((label, _)) if label == self.class_label => {}
            _ => {
                return Err(SceneError::violation(
                    id,
                    "object_id has the form <class_label>_<index>",
                ))
            }
        }
        if self.points.is_empty() {
            return Err(SceneError::violation(id, "at least one sample point"));
        }
        let inflated = self.bbox.inflated(POINT_BOX_TOLERANCE);
        if let Some(p) = self.points.iter().find(|p| !inflated.contains_f32(**p)) {
            return Err(SceneError::violation(
                id,
                format!(
                    "point ({}, {}, {}) within bbox inflated by {POINT_BOX_TOLERANCE} m",
                    p[0], p[1], p[2]
                ),
            ));
        }
        Ok(())
    }
}

/// Lowercases and replaces spaces with underscores.
pub fn normalize_label(label: &str) -> String {
    label.trim().to_lowercase().replace(' ', "_")
}

/// Splits `<class_label>_<index>`; the label itself may contain underscores.
pub fn parse_object_id(id: &str) -> Option<(&str, u32)> {
    let (label, index) = id.rsplit_once('_')?;
    if label.is_empty() || index.is_empty() || !index.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((label, index.parse().ok()?))
}

pub fn format_object_id(label: &str, index: u32) -> String {
    format!("{label}_{index}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub scene_id: String,
    pub views: Vec<CameraView>,
    pub objects: Vec<SceneObject>,
    /// Directory the bundle was loaded from; image and depth refs resolve
    /// against it.
    pub root: Option<PathBuf>,
}

impl SceneBundle {
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.views.is_empty() {
            return Err(SceneError::violation(&self.scene_id, "non-empty views"));
        }
        if self.objects.is_empty() {
            return Err(SceneError::violation(&self.scene_id, "non-empty objects"));
        }
        let mut seen = std::collections::HashSet::new();
        for view in &self.views {
            view.validate()?;
            if !seen.insert(view.view_id.as_str()) {
                return Err(SceneError::violation(&view.view_id, "view_id unique"));
            }
        }
        seen.clear();
        for object in &self.objects {
            object.validate()?;
            if !seen.insert(object.object_id.as_str()) {
                return Err(SceneError::violation(&object.object_id, "object_id unique"));
            }
        }
        Ok(())
    }

    pub fn view(&self, view_id: &str) -> Option<&CameraView> {
        self.views.iter().find(|v| v.view_id == view_id)
    }

    pub fn asset_path(&self, rel: &str) -> PathBuf {
        match &self.root {
            Some(root) => root.join(rel),
            None => PathBuf::from(rel),
        }
    }
}

// On-disk manifest. Field names are part of the external format.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    scene_id: String,
    views: Vec<ManifestView>,
    objects: Vec<ManifestObject>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestView {
    id: String,
    frame: u32,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    pose: Vec<f64>,
    image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    depth: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestObject {
    id: String,
    label: String,
    bbox: Vec<f64>,
    points_file: String,
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub point_cap: usize,
    /// Decode every referenced image and depth map during load.
    pub decode_assets: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            point_cap: DEFAULT_POINT_CAP,
            decode_assets: true,
        }
    }
}

pub fn load_bundle(root: impl AsRef<Path>) -> Result<SceneBundle, SceneError> {
    load_bundle_with(root, &LoadOptions::default())
}

pub fn load_bundle_with(
    root: impl AsRef<Path>,
    options: &LoadOptions,
) -> Result<SceneBundle, SceneError> {
    let root = root.as_ref();
    let manifest_path = root.join(MANIFEST_NAME);
    if !manifest_path.is_file() {
        return Err(SceneError::MissingManifest(manifest_path));
    }
    let text = fs::read_to_string(&manifest_path).map_err(|e| SceneError::io(&manifest_path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let manifest: ManifestFile = serde_path_to_error::deserialize(de)
        .map_err(|e| SceneError::MalformedManifest(format!("{}: {}", e.path(), e.inner())))?;

    let mut views = Vec::with_capacity(manifest.views.len());
    for (i, v) in manifest.views.into_iter().enumerate() {
        let pose: [f64; 16] = v.pose.as_slice().try_into().map_err(|_| {
            SceneError::MalformedManifest(format!(
                "views[{i}].pose: expected 16 numbers, found {}",
                v.pose.len()
            ))
        })?;
        views.push(CameraView {
            view_id: v.id,
            frame_index: v.frame,
            intrinsics: Intrinsics {
                fx: v.fx,
                fy: v.fy,
                cx: v.cx,
                cy: v.cy,
            },
            pose,
            image_ref: v.image,
            width: v.width,
            height: v.height,
            depth_ref: v.depth,
        });
    }

    let mut objects = Vec::with_capacity(manifest.objects.len());
    for (i, o) in manifest.objects.into_iter().enumerate() {
        let bbox: [f64; 6] = o.bbox.as_slice().try_into().map_err(|_| {
            SceneError::MalformedManifest(format!(
                "objects[{i}].bbox: expected 6 numbers, found {}",
                o.bbox.len()
            ))
        })?;
        let points_path = root.join(&o.points_file);
        let points = read_points(&points_path)?;
        objects.push(SceneObject {
            object_id: normalize_label(&o.id),
            class_label: normalize_label(&o.label),
            bbox: Aabb::from_array(bbox),
            points,
        });
    }

    let mut bundle = SceneBundle {
        scene_id: manifest.scene_id,
        views,
        objects,
        root: Some(root.to_path_buf()),
    };
    bundle.validate()?;
    for object in &mut bundle.objects {
        object.points = subsample_uniform(&object.points, options.point_cap);
    }
    if options.decode_assets {
        for view in &bundle.views {
            let path = bundle.asset_path(&view.image_ref);
            let img = image::open(&path).map_err(|_| SceneError::MissingAsset(path.clone()))?;
            if img.width() != view.width || img.height() != view.height {
                return Err(SceneError::violation(
                    &view.view_id,
                    format!(
                        "image is {}x{}, manifest says {}x{}",
                        img.width(),
                        img.height(),
                        view.width,
                        view.height
                    ),
                ));
            }
            if let Some(depth) = &view.depth_ref {
                let path = bundle.asset_path(depth);
                image::open(&path).map_err(|_| SceneError::MissingAsset(path))?;
            }
        }
    } else {
        for view in &bundle.views {
            let path = bundle.asset_path(&view.image_ref);
            if !path.is_file() {
                return Err(SceneError::MissingAsset(path));
            }
        }
    }
    Ok(bundle)
}

/// Keeps at most `cap` points at a uniform index stride, preserving order.
pub fn subsample_uniform(points: &[[f32; 3]], cap: usize) -> Vec<[f32; 3]> {
    let n = points.len();
    if n <= cap || cap == 0 {
        return points.to_vec();
    }
    (0..cap).map(|i| points[i * n / cap]).collect()
}

pub fn points_file_name(object_id: &str) -> String {
    format!("points/{object_id}.bin")
}

fn read_points(path: &Path) -> Result<Vec<[f32; 3]>, SceneError> {
    let bytes = fs::read(path).map_err(|_| SceneError::MissingAsset(path.to_path_buf()))?;
    if bytes.len() % 12 != 0 {
        return Err(SceneError::MalformedManifest(format!(
            "{}: length {} is not a multiple of 12",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(12)
        .map(|c| {
            let f = |o: usize| f32::from_le_bytes([c[o], c[o + 1], c[o + 2], c[o + 3]]);
            [f(0), f(4), f(8)]
        })
        .collect())
}

fn write_points(path: &Path, points: &[[f32; 3]]) -> Result<(), SceneError> {
    let mut buf = Vec::with_capacity(points.len() * 12);
    for p in points {
        for c in p {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    write_file(path, &buf)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), SceneError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| SceneError::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| SceneError::io(path, e))?;
    f.write_all(bytes).map_err(|e| SceneError::io(path, e))
}

/// Serializes the manifest exactly as `save_bundle` writes it.
pub fn manifest_json(bundle: &SceneBundle) -> String {
    let manifest = ManifestFile {
        scene_id: bundle.scene_id.clone(),
        views: bundle
            .views
            .iter()
            .map(|v| ManifestView {
                id: v.view_id.clone(),
                frame: v.frame_index,
                fx: v.intrinsics.fx,
                fy: v.intrinsics.fy,
                cx: v.intrinsics.cx,
                cy: v.intrinsics.cy,
                width: v.width,
                height: v.height,
                pose: v.pose.to_vec(),
                image: v.image_ref.clone(),
                depth: v.depth_ref.clone(),
            })
            .collect(),
        objects: bundle
            .objects
            .iter()
            .map(|o| ManifestObject {
                id: o.object_id.clone(),
                label: o.class_label.clone(),
                bbox: o.bbox.to_array().to_vec(),
                points_file: points_file_name(&o.object_id),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    text
}

/// Writes the manifest and point sidecars. Image and depth assets are copied
/// from the bundle's source directory when it differs from `root`; bundles
/// without a source directory must have their assets written separately.
pub fn save_bundle(bundle: &SceneBundle, root: impl AsRef<Path>) -> Result<(), SceneError> {
    let root = root.as_ref();
    fs::create_dir_all(root).map_err(|e| SceneError::io(root, e))?;
    write_file(&root.join(MANIFEST_NAME), manifest_json(bundle).as_bytes())?;
    for object in &bundle.objects {
        write_points(&root.join(points_file_name(&object.object_id)), &object.points)?;
    }
    if let Some(src) = &bundle.root {
        if !same_dir(src, root) {
            for view in &bundle.views {
                let refs = std::iter::once(&view.image_ref).chain(view.depth_ref.as_ref());
                for rel in refs {
                    let from = src.join(rel);
                    let to = root.join(rel);
                    if let Some(parent) = to.parent() {
                        fs::create_dir_all(parent).map_err(|e| SceneError::io(parent, e))?;
                    }
                    fs::copy(&from, &to).map_err(|e| SceneError::io(&from, e))?;
                }
            }
        }
    }
    Ok(())
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => a == b,
    }
}
