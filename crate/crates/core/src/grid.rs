//! Stitches explored and candidate views into one S x S image per round.
//!
//! Explored views fill slots row-major from the top-left, candidate views
//! follow, and any remaining slot is left pure white. Every filled cell gets
//! a white banner reading `frame <index>` above the letterboxed image.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::CameraView;

pub const DEFAULT_GRID_SIZE: usize = 3;
pub const DEFAULT_CELL_SIZE: (u32, u32) = (336, 252);
pub const BANNER_HEIGHT: u32 = 24;

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
const LETTERBOX: Rgb<u8> = Rgb([128, 128, 128]);

#[derive(Debug, Error)]
pub enum GridError {
    #[error("{needed} views do not fit a {s}x{s} grid")]
    CapacityExceeded { needed: usize, s: usize },
    #[error("cannot decode image for view {view_id}: {reason}")]
    DecodeFailure { view_id: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "view_id", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CellContent {
    History(String),
    Candidate(String),
    Blank,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCell {
    pub row: usize,
    pub col: usize,
    pub content: CellContent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridManifest {
    pub grid_size_s: usize,
    pub cells: Vec<GridCell>,
    pub cell_width: u32,
    pub cell_height: u32,
    /// History entries dropped to make room for candidates.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evicted: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
}

/// Supplies decoded view images.
pub trait ImageSource: Send + Sync {
    fn image(&self, view: &CameraView) -> Result<Arc<RgbImage>, GridError>;

    /// The view's image scaled to fit within `area`, aspect preserved.
    /// Resizing dominates grid composition, so sources may cache this.
    fn fitted(&self, view: &CameraView, area: (u32, u32)) -> Result<Arc<RgbImage>, GridError> {
        Ok(Arc::new(fit(&*self.image(view)?, area)))
    }
}

/// Scales `img` to the largest size that fits within `area`.
pub fn fit(img: &RgbImage, area: (u32, u32)) -> RgbImage {
    if img.width() == 0 || img.height() == 0 {
        return img.clone();
    }
    let scale = (area.0 as f64 / img.width() as f64).min(area.1 as f64 / img.height() as f64);
    let w = ((img.width() as f64 * scale).round() as u32).clamp(1, area.0);
    let h = ((img.height() as f64 * scale).round() as u32).clamp(1, area.1);
    if (w, h) == img.dimensions() {
        img.clone()
    } else {
        imageops::resize(img, w, h, FilterType::Triangle)
    }
}

type FitCache = Mutex<HashMap<(String, (u32, u32)), Arc<RgbImage>>>;

fn cached_fit(
    cache: &FitCache,
    view: &CameraView,
    area: (u32, u32),
    load: impl FnOnce() -> Result<Arc<RgbImage>, GridError>,
) -> Result<Arc<RgbImage>, GridError> {
    let key = (view.view_id.clone(), area);
    if let Some(img) = cache.lock().unwrap().get(&key) {
        return Ok(img.clone());
    }
    let img = Arc::new(fit(&*load()?, area));
    cache.lock().unwrap().insert(key, img.clone());
    Ok(img)
}

/// Reads images relative to a bundle directory, caching decoded frames.
pub struct DirImageSource {
    root: PathBuf,
    cache: Mutex<HashMap<String, Arc<RgbImage>>>,
    fitted: FitCache,
}

impl DirImageSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirImageSource {
            root: root.into(),
            cache: Mutex::new(HashMap::new()),
            fitted: Mutex::new(HashMap::new()),
        }
    }
}

impl ImageSource for DirImageSource {
    fn image(&self, view: &CameraView) -> Result<Arc<RgbImage>, GridError> {
        if let Some(img) = self.cache.lock().unwrap().get(&view.view_id) {
            return Ok(img.clone());
        }
        let path = self.root.join(&view.image_ref);
        let img = image::open(&path)
            .map_err(|e| GridError::DecodeFailure {
                view_id: view.view_id.clone(),
                reason: format!("{}: {e}", path.display()),
            })?
            .into_rgb8();
        let img = Arc::new(img);
        self.cache
            .lock()
            .unwrap()
            .insert(view.view_id.clone(), img.clone());
        Ok(img)
    }

    fn fitted(&self, view: &CameraView, area: (u32, u32)) -> Result<Arc<RgbImage>, GridError> {
        cached_fit(&self.fitted, view, area, || self.image(view))
    }
}

/// Images held in memory, keyed by view id.
#[derive(Default, Clone)]
pub struct MemoryImageSource {
    images: HashMap<String, Arc<RgbImage>>,
    fitted: Arc<FitCache>,
}

impl MemoryImageSource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, view_id: impl Into<String>, image: RgbImage) {
        let view_id = view_id.into();
        self.fitted.lock().unwrap().retain(|(v, _), _| *v != view_id);
        self.images.insert(view_id, Arc::new(image));
    }
}

impl ImageSource for MemoryImageSource {
    fn image(&self, view: &CameraView) -> Result<Arc<RgbImage>, GridError> {
        self.images
            .get(&view.view_id)
            .cloned()
            .ok_or_else(|| GridError::DecodeFailure {
                view_id: view.view_id.clone(),
                reason: "no image registered".into(),
            })
    }

    fn fitted(&self, view: &CameraView, area: (u32, u32)) -> Result<Arc<RgbImage>, GridError> {
        cached_fit(&self.fitted, view, area, || self.image(view))
    }
}

/// Trims history so that it fits next to `candidates_needed` candidate cells.
/// The first (start) view is always kept, followed by the most recent
/// entries. Returns `(kept, evicted)`.
pub fn history_eviction(history: &[String], candidates_needed: usize, s: usize) -> (Vec<String>, Vec<String>) {
    let slots = (s * s).saturating_sub(candidates_needed).max(1);
    if history.len() <= slots {
        return (history.to_vec(), Vec::new());
    }
    let recent_start = history.len() - (slots - 1);
    let mut kept = vec![history[0].clone()];
    kept.extend(history[recent_start..].iter().cloned());
    let evicted = history[1..recent_start].to_vec();
    (kept, evicted)
}

/// Slot layout without pixels.
pub fn layout(history: &[&CameraView], candidates: &[&CameraView], s: usize) -> Result<Vec<GridCell>, GridError> {
    let needed = history.len() + candidates.len();
    if needed > s * s {
        return Err(GridError::CapacityExceeded { needed, s });
    }
    let contents = history
        .iter()
        .map(|v| CellContent::History(v.view_id.clone()))
        .chain(candidates.iter().map(|v| CellContent::Candidate(v.view_id.clone())))
        .chain(std::iter::repeat(CellContent::Blank))
        .take(s * s);
    Ok(contents
        .enumerate()
        .map(|(i, content)| GridCell {
            row: i / s,
            col: i % s,
            content,
        })
        .collect())
}

pub fn compose_grid(
    history: &[&CameraView],
    candidates: &[&CameraView],
    images: &dyn ImageSource,
    s: usize,
    cell_size: (u32, u32),
) -> Result<(RgbImage, GridManifest), GridError> {
    let cells = layout(history, candidates, s)?;
    let (cw, ch) = cell_size;
    let mut canvas = RgbImage::from_pixel(cw * s as u32, ch * s as u32, WHITE);
    let views = history.iter().chain(candidates.iter());
    for (cell, view) in cells.iter().zip(views) {
        let banner = BANNER_HEIGHT.min(ch / 2);
        let img = images.fitted(view, (cw, ch - banner))?;
        let (x0, y0) = (cell.col as u32 * cw, cell.row as u32 * ch);
        draw_cell(&mut canvas, (x0, y0), cell_size, &img, view.frame_index);
    }
    let manifest = GridManifest {
        grid_size_s: s,
        cells,
        cell_width: cw,
        cell_height: ch,
        evicted: Vec::new(),
        image_path: None,
    };
    Ok((canvas, manifest))
}

fn draw_cell(canvas: &mut RgbImage, origin: (u32, u32), cell: (u32, u32), img: &RgbImage, frame: u32) {
    let (cw, ch) = cell;
    let banner = BANNER_HEIGHT.min(ch / 2);
    let area = (cw, ch - banner);
    // letterbox background
    for y in 0..area.1 {
        for x in 0..area.0 {
            canvas.put_pixel(origin.0 + x, origin.1 + banner + y, LETTERBOX);
        }
    }
    let (w, h) = img.dimensions();
    let ox = origin.0 + area.0.saturating_sub(w) / 2;
    let oy = origin.1 + banner + area.1.saturating_sub(h) / 2;
    imageops::replace(canvas, img, ox as i64, oy as i64);
    let scale = if banner >= 18 { 2 } else { 1 };
    let text_y = origin.1 + banner.saturating_sub(7 * scale) / 2;
    draw_text(canvas, origin.0 + 4, text_y, &format!("frame {frame}"), scale, origin.0 + cw);
}

/// 5x7 glyphs, one byte per row, high five bits used.
fn glyph(c: char) -> Option<[u8; 7]> {
    Some(match c {
        '0' => [0x70, 0x88, 0x98, 0xA8, 0xC8, 0x88, 0x70],
        '1' => [0x20, 0x60, 0x20, 0x20, 0x20, 0x20, 0x70],
        '2' => [0x70, 0x88, 0x08, 0x10, 0x20, 0x40, 0xF8],
        '3' => [0xF8, 0x10, 0x20, 0x10, 0x08, 0x88, 0x70],
        '4' => [0x10, 0x30, 0x50, 0x90, 0xF8, 0x10, 0x10],
        '5' => [0xF8, 0x80, 0xF0, 0x08, 0x08, 0x88, 0x70],
        '6' => [0x30, 0x40, 0x80, 0xF0, 0x88, 0x88, 0x70],
        '7' => [0xF8, 0x08, 0x10, 0x20, 0x40, 0x40, 0x40],
        '8' => [0x70, 0x88, 0x88, 0x70, 0x88, 0x88, 0x70],
        '9' => [0x70, 0x88, 0x88, 0x78, 0x08, 0x10, 0x60],
        'a' => [0x00, 0x00, 0x70, 0x08, 0x78, 0x88, 0x78],
        'e' => [0x00, 0x00, 0x70, 0x88, 0xF8, 0x80, 0x70],
        'f' => [0x30, 0x48, 0x40, 0xE0, 0x40, 0x40, 0x40],
        'm' => [0x00, 0x00, 0xD0, 0xA8, 0xA8, 0x88, 0x88],
        'r' => [0x00, 0x00, 0xB0, 0xC8, 0x80, 0x80, 0x80],
        _ => return None,
    })
}

fn draw_text(canvas: &mut RgbImage, x: u32, y: u32, text: &str, scale: u32, x_limit: u32) {
    let mut pen = x;
    for c in text.chars() {
        if let Some(rows) = glyph(c) {
            for (ry, bits) in rows.iter().enumerate() {
                for rx in 0..5u32 {
                    if bits & (0x80 >> rx) == 0 {
                        continue;
                    }
                    for dy in 0..scale {
                        for dx in 0..scale {
                            let (px, py) = (pen + rx * scale + dx, y + ry as u32 * scale + dy);
                            if px < x_limit && px < canvas.width() && py < canvas.height() {
                                canvas.put_pixel(px, py, BLACK);
                            }
                        }
                    }
                }
            }
        }
        pen += 6 * scale;
    }
}
