//! Procedural scene renderer with known attribute effects.
//!
//! Every attribute rule is a per-pixel convex blend towards a target color (or
//! a uniform darkening) whose weight depends only on the attribute value and a
//! seed-derived mask, never on the pixel itself. That keeps each declared
//! statistic monotone in its attribute while all other inputs are held fixed.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attributes::{desk_attribute_names, AttributeVector};
use crate::error::{DataError, Result};
use crate::layout::SemanticLayout;
use crate::scene::SceneImage;

/// Noise pattern modulating a class's base color.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Texture {
    /// Low-frequency value noise.
    Smooth { amplitude: f64 },
    /// Independent per-pixel noise plus a smooth component.
    Fine { amplitude: f64, smooth: f64 },
    /// Row-correlated streaks.
    Streaks { amplitude: f64 },
    /// Piecewise-constant cells.
    Blocks { amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStyle {
    pub name: String,
    /// Base color in `[0, 1]` RGB.
    pub color: [f64; 3],
    pub texture: Texture,
    /// Brightening towards the bottom of the region's rows (used for sky haze).
    pub vertical_gradient: f64,
}

/// Spatial weighting of a blend rule inside its region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlendMask {
    Uniform,
    /// Seed-dependent cloud cover in `[0.25, 1]`.
    Clouds,
    /// Grows from 0.3 at the top of the image to 1 at the lowest region row.
    Horizon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RuleAction {
    /// `p ← (1 − s·v·m) p + s·v·m · target`.
    Blend { target: [f64; 3], strength: f64, mask: BlendMask },
    /// `p ← (1 − s·v) p`.
    Darken { strength: f64 },
}

/// Scalar measured over the rule's region of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statistic {
    MeanLuminance,
    LuminanceStd,
    MeanChannel(usize),
    /// Mean of `channel a − channel b`.
    ChannelDifference(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeRule {
    pub attribute: String,
    /// Labels affected; empty means the whole image.
    pub region: Vec<u8>,
    pub action: RuleAction,
    pub statistic: Statistic,
    pub direction: Direction,
    pub description: String,
}

/// Palette, textures and ordered attribute rules of the oracle renderer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecipe {
    pub palette: Vec<ClassStyle>,
    pub attribute_names: Vec<String>,
    /// Applied in order.
    pub rules: Vec<AttributeRule>,
    pub seed: u64,
}

pub const SKY: u8 = 0;
pub const GRASS: u8 = 1;
pub const TREE: u8 = 2;
pub const WATER: u8 = 3;
pub const MOUNTAIN: u8 = 4;
pub const BUILDING: u8 = 5;

impl OracleRecipe {
    /// Six classes, eight attributes.
    pub fn desk(seed: u64) -> Self {
        let style = |name: &str, color: [f64; 3], texture: Texture, vertical_gradient: f64| ClassStyle {
            name: name.into(),
            color,
            texture,
            vertical_gradient,
        };
        let palette = vec![
            style("sky", [0.42, 0.62, 0.88], Texture::Smooth { amplitude: 0.02 }, 0.08),
            style("grass", [0.36, 0.55, 0.24], Texture::Fine { amplitude: 0.04, smooth: 0.04 }, 0.0),
            style("tree", [0.14, 0.38, 0.14], Texture::Fine { amplitude: 0.11, smooth: 0.02 }, 0.0),
            style("water", [0.20, 0.34, 0.55], Texture::Streaks { amplitude: 0.07 }, 0.0),
            style("mountain", [0.46, 0.45, 0.50], Texture::Smooth { amplitude: 0.06 }, 0.0),
            style("building", [0.58, 0.50, 0.44], Texture::Blocks { amplitude: 0.07 }, 0.0),
        ];
        let rule = |attribute: &str,
                    region: &[u8],
                    action: RuleAction,
                    statistic: Statistic,
                    direction: Direction,
                    description: &str| AttributeRule {
            attribute: attribute.into(),
            region: region.to_vec(),
            action,
            statistic,
            direction,
            description: description.into(),
        };
        let blend = |target: [f64; 3], strength: f64, mask: BlendMask| RuleAction::Blend { target, strength, mask };
        let rules = vec![
            rule(
                "lush",
                &[GRASS, TREE],
                blend([0.25, 0.80, 0.20], 0.5, BlendMask::Uniform),
                Statistic::MeanChannel(1),
                Direction::Increasing,
                "raises mean green of grass and trees",
            ),
            rule(
                "autumn",
                &[TREE],
                blend([0.85, 0.45, 0.10], 0.6, BlendMask::Uniform),
                Statistic::ChannelDifference(0, 1),
                Direction::Increasing,
                "raises red-minus-green of trees",
            ),
            rule(
                "dry",
                &[GRASS],
                blend([0.60, 0.45, 0.25], 0.6, BlendMask::Uniform),
                Statistic::ChannelDifference(0, 2),
                Direction::Increasing,
                "raises red-minus-blue (brown tone) of grass",
            ),
            rule(
                "snow",
                &[GRASS, MOUNTAIN],
                blend([0.93, 0.94, 0.96], 0.85, BlendMask::Uniform),
                Statistic::MeanLuminance,
                Direction::Increasing,
                "whitens the ground and mountains",
            ),
            rule(
                "clouds",
                &[SKY],
                blend([0.86, 0.87, 0.89], 0.9, BlendMask::Clouds),
                Statistic::ChannelDifference(2, 0),
                Direction::Decreasing,
                "lowers blue-minus-red of the sky",
            ),
            rule(
                "sunset",
                &[SKY],
                blend([0.98, 0.55, 0.30], 0.7, BlendMask::Horizon),
                Statistic::MeanChannel(0),
                Direction::Increasing,
                "raises mean red of the sky, strongest near the horizon",
            ),
            rule(
                "fog",
                &[],
                blend([0.78, 0.78, 0.80], 0.65, BlendMask::Uniform),
                Statistic::LuminanceStd,
                Direction::Decreasing,
                "lowers global luminance contrast",
            ),
            rule(
                "night",
                &[],
                RuleAction::Darken { strength: 0.75 },
                Statistic::MeanLuminance,
                Direction::Decreasing,
                "lowers global mean luminance",
            ),
        ];
        Self { palette, attribute_names: desk_attribute_names(), rules, seed }
    }

    pub fn num_classes(&self) -> u32 {
        self.palette.len() as u32
    }

    pub fn rule(&self, attribute: &str) -> Option<&AttributeRule> {
        self.rules.iter().find(|r| r.attribute == attribute)
    }
}

fn luminance(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Deterministic noise fields for one rendering.
struct NoiseBank {
    fine: Array2<f64>,
    smooth: Array2<f64>,
    streaks: Array2<f64>,
    blocks: Array2<f64>,
    clouds: Array2<f64>,
}

fn value_noise(rng: &mut ChaCha8Rng, h: usize, w: usize, cell: usize) -> Array2<f64> {
    let gh = h / cell + 2;
    let gw = w / cell + 2;
    let grid = Array2::from_shape_fn((gh, gw), |_| rng.random_range(-1.0..1.0));
    Array2::from_shape_fn((h, w), |(y, x)| {
        let fy = y as f64 / cell as f64;
        let fx = x as f64 / cell as f64;
        let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
        let (ty, tx) = (fy - y0 as f64, fx - x0 as f64);
        let (sy, sx) = (ty * ty * (3.0 - 2.0 * ty), tx * tx * (3.0 - 2.0 * tx));
        let top = grid[[y0, x0]] * (1.0 - sx) + grid[[y0, x0 + 1]] * sx;
        let bottom = grid[[y0 + 1, x0]] * (1.0 - sx) + grid[[y0 + 1, x0 + 1]] * sx;
        top * (1.0 - sy) + bottom * sy
    })
}

impl NoiseBank {
    fn new(seed: u64, h: usize, w: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fine = Array2::from_shape_fn((h, w), |_| rng.random_range(-1.0..1.0));
        let smooth_cell = (h.max(w) / 8).max(2);
        let smooth = value_noise(&mut rng, h, w, smooth_cell);
        let rows: Vec<f64> = (0..h).map(|_| rng.random_range(-1.0..1.0)).collect();
        let streaks = Array2::from_shape_fn((h, w), |(y, x)| 0.75 * rows[y] + 0.25 * fine[[y, x]]);
        let block = (h.max(w) / 16).max(2);
        let cells = Array2::from_shape_fn((h / block + 1, w / block + 1), |_| rng.random_range(-1.0..1.0));
        let blocks = Array2::from_shape_fn((h, w), |(y, x)| cells[[y / block, x / block]]);
        let cloud_cell = (h.max(w) / 6).max(2);
        let clouds = value_noise(&mut rng, h, w, cloud_cell).mapv(|v| 0.25 + 0.75 * (0.5 + 0.5 * v).clamp(0.0, 1.0));
        Self { fine, smooth, streaks, blocks, clouds }
    }

    fn texture(&self, texture: Texture, y: usize, x: usize) -> f64 {
        match texture {
            Texture::Smooth { amplitude } => amplitude * self.smooth[[y, x]],
            Texture::Fine { amplitude, smooth } => amplitude * self.fine[[y, x]] + smooth * self.smooth[[y, x]],
            Texture::Streaks { amplitude } => amplitude * self.streaks[[y, x]],
            Texture::Blocks { amplitude } => amplitude * self.blocks[[y, x]],
        }
    }
}

fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Renders a `[-1, 1]` image of `layout` under `attributes`.
pub fn render_oracle(
    layout: &SemanticLayout,
    attributes: &AttributeVector,
    recipe: &OracleRecipe,
    seed: u64,
) -> Result<SceneImage> {
    let (h, w) = layout.dim();
    if let Some(&bad) = layout.labels().iter().find(|&&l| usize::from(l) >= recipe.palette.len()) {
        return Err(DataError::MissingPalette(bad.into()));
    }
    if attributes.names() != recipe.attribute_names.as_slice() {
        return Err(DataError::AttributeLength {
            expected: recipe.attribute_names.len(),
            got: attributes.len(),
        });
    }
    let noise = NoiseBank::new(mix_seed(recipe.seed, seed), h, w);

    // Lowest row of each label, for vertical gradients and horizon masks.
    let mut lowest = vec![0usize; recipe.palette.len()];
    for ((y, _), &l) in layout.labels().indexed_iter() {
        lowest[l as usize] = lowest[l as usize].max(y);
    }

    let mut img = Array3::<f64>::zeros((h, w, 3));
    for ((y, x), &l) in layout.labels().indexed_iter() {
        let style = &recipe.palette[l as usize];
        let grad = if style.vertical_gradient != 0.0 {
            style.vertical_gradient * y as f64 / lowest[l as usize].max(1) as f64
        } else {
            0.0
        };
        let t = noise.texture(style.texture, y, x);
        for c in 0..3 {
            img[[y, x, c]] = (style.color[c] + grad + t).clamp(0.02, 0.98);
        }
    }

    for rule in &recipe.rules {
        let Some(value) = attributes.get(&rule.attribute) else { continue };
        if value == 0.0 {
            continue;
        }
        for ((y, x), &l) in layout.labels().indexed_iter() {
            if !rule.region.is_empty() && !rule.region.contains(&l) {
                continue;
            }
            match &rule.action {
                RuleAction::Blend { target, strength, mask } => {
                    let m = match mask {
                        BlendMask::Uniform => 1.0,
                        BlendMask::Clouds => noise.clouds[[y, x]],
                        BlendMask::Horizon => {
                            let bottom = rule
                                .region
                                .iter()
                                .map(|&r| lowest[r as usize])
                                .max()
                                .unwrap_or(h - 1)
                                .max(1);
                            0.3 + 0.7 * (y as f64 / bottom as f64).min(1.0)
                        }
                    };
                    let s = strength * value * m;
                    for c in 0..3 {
                        img[[y, x, c]] = (1.0 - s) * img[[y, x, c]] + s * target[c];
                    }
                }
                RuleAction::Darken { strength } => {
                    let f = 1.0 - strength * value;
                    for c in 0..3 {
                        img[[y, x, c]] *= f;
                    }
                }
            }
        }
    }
    Ok(img.mapv(|v| v * 2.0 - 1.0))
}

/// Evaluates a rule's statistic; `None` if the region is absent from the layout.
pub fn rule_statistic(image: &SceneImage, layout: &SemanticLayout, rule: &AttributeRule) -> Option<f64> {
    region_statistic(image, layout, &rule.region, rule.statistic)
}

pub fn region_statistic(
    image: &SceneImage,
    layout: &SemanticLayout,
    region: &[u8],
    statistic: Statistic,
) -> Option<f64> {
    let mut values = Vec::new();
    for ((y, x), &l) in layout.labels().indexed_iter() {
        if !region.is_empty() && !region.contains(&l) {
            continue;
        }
        let px = |c: usize| image[[y, x, c]];
        values.push(match statistic {
            Statistic::MeanLuminance | Statistic::LuminanceStd => luminance(px(0), px(1), px(2)),
            Statistic::MeanChannel(c) => px(c),
            Statistic::ChannelDifference(a, b) => px(a) - px(b),
        });
    }
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Some(match statistic {
        Statistic::LuminanceStd => (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt(),
        _ => mean,
    })
}

/// Mean luminance of a `[-1, 1]` image.
pub fn mean_luminance(image: &SceneImage) -> f64 {
    let (h, w, _) = image.dim();
    let mut acc = 0.0;
    for y in 0..h {
        for x in 0..w {
            acc += luminance(image[[y, x, 0]], image[[y, x, 1]], image[[y, x, 2]]);
        }
    }
    acc / (h * w) as f64
}
