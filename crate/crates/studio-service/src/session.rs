//! Editable layout sessions with a bounded undo stack.

use std::collections::VecDeque;

use scene_data::{AttributeVector, SemanticLayout};
use serde::{Deserialize, Serialize};

use crate::error::{Result, StudioError};

pub const DEFAULT_UNDO_CAPACITY: usize = 50;

/// Edit geometry in pixel coordinates, points as `[x, y]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayoutEdit {
    /// Round brush dragged through `points`.
    Brush { points: Vec<[f64; 2]>, radius: f64 },
    /// Filled polygon, even-odd rule at pixel centers.
    Polygon { points: Vec<[f64; 2]> },
    Fill,
}

/// Previous labels of every pixel an edit covered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UndoEntry {
    pub pixels: Vec<(u32, u32, u8)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub layout: SemanticLayout,
    pub attributes: AttributeVector,
    #[serde(default)]
    pub last_hallucination: Option<String>,
    #[serde(default)]
    pub last_manipulation: Option<String>,
    pub undo: VecDeque<UndoEntry>,
    pub undo_capacity: usize,
}

impl SessionState {
    pub fn new(layout: SemanticLayout, attributes: AttributeVector) -> Self {
        Self { layout, attributes, last_hallucination: None, last_manipulation: None, undo: VecDeque::new(), undo_capacity: DEFAULT_UNDO_CAPACITY }
    }

    /// Rasterizes `edit` with `label`; returns the number of covered pixels.
    /// Geometry outside the canvas is clipped; an empty mask pushes nothing.
    pub fn apply(&mut self, edit: &LayoutEdit, label: u8) -> Result<usize> {
        if u32::from(label) >= self.layout.num_classes() {
            return Err(StudioError::Validation(format!("label {label} is outside {} classes", self.layout.num_classes())));
        }
        let mask = rasterize(edit, self.layout.height(), self.layout.width())?;
        if mask.is_empty() {
            return Ok(0);
        }
        let mut pixels = Vec::with_capacity(mask.len());
        for (y, x) in mask {
            pixels.push((y as u32, x as u32, self.layout.get(y, x)));
            self.layout.set(y, x, label);
        }
        let n = pixels.len();
        self.undo.push_back(UndoEntry { pixels });
        while self.undo.len() > self.undo_capacity {
            self.undo.pop_front();
        }
        Ok(n)
    }

    /// Reverts the most recent edit; false when there is none.
    pub fn undo(&mut self) -> bool {
        let Some(entry) = self.undo.pop_back() else { return false };
        for &(y, x, old) in entry.pixels.iter().rev() {
            self.layout.set(y as usize, x as usize, old);
        }
        true
    }
}

/// Covered pixels in row-major order, deduplicated.
pub fn rasterize(edit: &LayoutEdit, height: usize, width: usize) -> Result<Vec<(usize, usize)>> {
    let finite = |pts: &[[f64; 2]]| pts.iter().all(|p| p[0].is_finite() && p[1].is_finite());
    let inside: Box<dyn Fn(f64, f64) -> bool> = match edit {
        LayoutEdit::Fill => Box::new(|_, _| true),
        LayoutEdit::Brush { points, radius } => {
            if points.is_empty() || !finite(points) || !(radius.is_finite() && *radius >= 0.0) {
                return Err(StudioError::Validation("brush needs finite points and a non-negative radius".into()));
            }
            let (pts, r2) = (points.clone(), radius * radius);
            Box::new(move |x, y| {
                if pts.len() == 1 {
                    return dist2_segment([x, y], pts[0], pts[0]) <= r2;
                }
                pts.windows(2).any(|s| dist2_segment([x, y], s[0], s[1]) <= r2)
            })
        }
        LayoutEdit::Polygon { points } => {
            if points.len() < 3 || !finite(points) {
                return Err(StudioError::Validation("polygon needs at least three finite points".into()));
            }
            let pts = points.clone();
            Box::new(move |x, y| even_odd(&pts, x, y))
        }
    };
    let mut out = Vec::new();
    for y in 0..height {
        for x in 0..width {
            if inside(x as f64 + 0.5, y as f64 + 0.5) {
                out.push((y, x));
            }
        }
    }
    Ok(out)
}

fn dist2_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
    (p[0] - cx).powi(2) + (p[1] - cy).powi(2)
}

fn even_odd(poly: &[[f64; 2]], x: f64, y: f64) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > y) != (b[1] > y) && x < (b[0] - a[0]) * (y - a[1]) / (b[1] - a[1]) + a[0] {
            inside = !inside;
        }
        j = i;
    }
    inside
}
