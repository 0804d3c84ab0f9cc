//! Scene images, samples and the resize/center-crop preprocessing.

use std::sync::Arc;

use image::{imageops, ImageBuffer, Rgb, RgbImage};
use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::attributes::AttributeVector;
use crate::error::{DataError, Result};
use crate::layout::SemanticLayout;

/// `H×W×3` image with channel values in `[-1, 1]`.
pub type SceneImage = Array3<f64>;

/// One `(image, layout, attributes)` training unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSample {
    pub id: String,
    pub image: SceneImage,
    pub layout: SemanticLayout,
    pub attributes: AttributeVector,
}

impl SceneSample {
    pub fn new(
        id: impl Into<String>,
        image: SceneImage,
        layout: SemanticLayout,
        attributes: AttributeVector,
    ) -> Result<Self> {
        let (h, w, c) = image.dim();
        if c != 3 {
            return Err(DataError::Shape(format!("image has {c} channels, expected 3")));
        }
        if (h, w) != layout.dim() {
            return Err(DataError::Shape(format!(
                "image {h}x{w} and layout {:?} disagree",
                layout.dim()
            )));
        }
        if let Some(v) = image.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(DataError::InvalidArgument(format!("pixel value {v} outside [-1, 1]")));
        }
        Ok(Self { id: id.into(), image, layout, attributes })
    }

    /// Mirrors image and layout together.
    pub fn flip_horizontal(&self) -> Self {
        Self {
            id: self.id.clone(),
            image: flip_image(&self.image),
            layout: self.layout.flip_horizontal(),
            attributes: self.attributes.clone(),
        }
    }
}

pub type SharedSample = Arc<SceneSample>;

pub fn flip_image(image: &SceneImage) -> SceneImage {
    let mut out = image.clone();
    out.invert_axis(ndarray::Axis(1));
    out.as_standard_layout().to_owned()
}

pub fn from_rgb8(img: &RgbImage) -> SceneImage {
    let (w, h) = img.dimensions();
    Array3::from_shape_fn((h as usize, w as usize, 3), |(y, x, c)| {
        f64::from(img.get_pixel(x as u32, y as u32)[c]) / 127.5 - 1.0
    })
}

pub fn to_rgb8(image: &SceneImage) -> RgbImage {
    let (h, w, _) = image.dim();
    ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let px = |c: usize| {
            let v = (image[[y as usize, x as usize, c]].clamp(-1.0, 1.0) + 1.0) * 127.5;
            v.round() as u8
        };
        Rgb([px(0), px(1), px(2)])
    })
}

/// Bilinear (triangle-filter) resize of a float image.
pub fn resize_image(image: &SceneImage, height: usize, width: usize) -> SceneImage {
    let (h, w, _) = image.dim();
    if (h, w) == (height, width) {
        return image.clone();
    }
    let buf: ImageBuffer<Rgb<f32>, Vec<f32>> = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let px = |c: usize| ((image[[y as usize, x as usize, c]] + 1.0) * 0.5) as f32;
        Rgb([px(0), px(1), px(2)])
    });
    let resized = imageops::resize(&buf, width as u32, height as u32, imageops::FilterType::Triangle);
    Array3::from_shape_fn((height, width, 3), |(y, x, c)| {
        (f64::from(resized.get_pixel(x as u32, y as u32)[c]) * 2.0 - 1.0).clamp(-1.0, 1.0)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Output side length.
    pub target: usize,
    /// Pad narrow images (edge replication) instead of rejecting them.
    pub pad_narrow: bool,
}

impl PreprocessConfig {
    pub const PAPER: PreprocessConfig = PreprocessConfig { target: 512, pad_narrow: false };
    pub const DESK: PreprocessConfig = PreprocessConfig { target: 64, pad_narrow: false };
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self::DESK
    }
}

/// Resizes the height to `cfg.target` and keeps the centered square.
///
/// The layout follows the same geometry with nearest-neighbor resampling.
pub fn preprocess(
    image: &SceneImage,
    layout: &SemanticLayout,
    cfg: &PreprocessConfig,
) -> Result<(SceneImage, SemanticLayout)> {
    let (h, w, c) = image.dim();
    if c != 3 {
        return Err(DataError::Shape(format!("image has {c} channels, expected 3")));
    }
    if h == 0 || w == 0 {
        return Err(DataError::Shape("empty image".into()));
    }
    if (h, w) != layout.dim() {
        return Err(DataError::Shape(format!(
            "image {h}x{w} and layout {:?} are not aligned",
            layout.dim()
        )));
    }
    let target = cfg.target;
    if target == 0 {
        return Err(DataError::InvalidArgument("target size must be positive".into()));
    }
    let (image, layout) = if h == target {
        (image.clone(), layout.clone())
    } else {
        let new_w = ((w as f64 * target as f64 / h as f64).round() as usize).max(1);
        (resize_image(image, target, new_w), layout.resize_nearest(target, new_w))
    };
    let width = image.dim().1;
    let (image, layout) = if width < target {
        if !cfg.pad_narrow {
            return Err(DataError::TooNarrow { width: width as u32, target: target as u32 });
        }
        pad_width(&image, &layout, target)
    } else {
        (image, layout)
    };
    let left = (image.dim().1 - target) / 2;
    let cropped = image
        .slice(ndarray::s![.., left..left + target, ..])
        .to_owned();
    let layout = layout.crop(0, left, target, target)?;
    Ok((cropped, layout))
}

/// Same as [`preprocess`] for an 8-bit RGB input.
pub fn preprocess_rgb8(
    image: &RgbImage,
    layout: &SemanticLayout,
    cfg: &PreprocessConfig,
) -> Result<(SceneImage, SemanticLayout)> {
    preprocess(&from_rgb8(image), layout, cfg)
}

fn pad_width(
    image: &SceneImage,
    layout: &SemanticLayout,
    target: usize,
) -> (SceneImage, SemanticLayout) {
    let (h, w, _) = image.dim();
    let left = (target - w) / 2;
    let src_x = |x: usize| x.saturating_sub(left).min(w - 1);
    let img = Array3::from_shape_fn((h, target, 3), |(y, x, c)| image[[y, src_x(x), c]]);
    let labels = ndarray::Array2::from_shape_fn((h, target), |(y, x)| layout.get(y, src_x(x)));
    let layout = SemanticLayout::new(labels, layout.num_classes()).expect("labels copied from a valid layout");
    (img, layout)
}
