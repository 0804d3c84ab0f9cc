//! Transient attribute vectors and the attribute/class name tables.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};

/// Attributes rendered by the procedural oracle, in vector order.
pub const DESK_ATTRIBUTES: [&str; 8] =
    ["night", "sunset", "clouds", "fog", "snow", "autumn", "lush", "dry"];

/// The 40 transient attributes used by ALS18K-format data.
///
/// The public dataset does not pin down a canonical ordering. This is the
/// assumed order; everything else looks names up through this table.
pub const ALS18K_ATTRIBUTES: [&str; 40] = [
    "dirty", "daylight", "night", "sunrisesunset", "dawndusk", "sunny", "clouds", "fog",
    "storm", "snow", "warm", "cold", "busy", "beautiful", "flowers", "spring", "summer",
    "autumn", "winter", "glowing", "colorful", "dull", "rugged", "midday", "dark", "bright",
    "dry", "moist", "windy", "rain", "ice", "cluttered", "soothing", "stressful", "exciting",
    "sentimental", "mysterious", "boring", "gloomy", "lush",
];

/// Class vocabulary of the synthetic corpus.
pub const DESK_CLASSES: [&str; 6] = ["sky", "grass", "tree", "water", "mountain", "building"];

pub const ALS18K_NUM_CLASSES: u32 = 150;

pub fn desk_attribute_names() -> Vec<String> {
    DESK_ATTRIBUTES.iter().map(|s| s.to_string()).collect()
}

pub fn als18k_attribute_names() -> Vec<String> {
    ALS18K_ATTRIBUTES.iter().map(|s| s.to_string()).collect()
}

/// Real-valued scene attributes, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeVector {
    values: Vec<f64>,
    names: Vec<String>,
}

impl AttributeVector {
    pub fn new(values: Vec<f64>, names: Vec<String>) -> Result<Self> {
        if values.len() != names.len() {
            return Err(DataError::AttributeLength { expected: names.len(), got: values.len() });
        }
        for (v, n) in values.iter().zip(&names) {
            if !(0.0..=1.0).contains(v) {
                return Err(DataError::AttributeOutOfRange { name: n.clone(), value: *v });
            }
        }
        Ok(Self { values, names })
    }

    pub fn zeros(names: Vec<String>) -> Self {
        Self { values: vec![0.0; names.len()], names }
    }

    pub fn uniform<R: Rng + ?Sized>(names: Vec<String>, rng: &mut R) -> Self {
        let values = (0..names.len()).map(|_| rng.random::<f64>()).collect();
        Self { values, names }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.values[i])
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let idx = self.index_of(name).ok_or_else(|| DataError::UnknownAttribute(name.into()))?;
        if !(0.0..=1.0).contains(&value) {
            return Err(DataError::AttributeOutOfRange { name: name.into(), value });
        }
        self.values[idx] = value;
        Ok(())
    }

    pub fn with(mut self, name: &str, value: f64) -> Result<Self> {
        self.set(name, value)?;
        Ok(self)
    }

    /// Parses `night=0.8,clouds=0.3` on top of `base`.
    pub fn parse_overrides(base: &AttributeVector, spec: &str) -> Result<Self> {
        let mut out = base.clone();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, value) = part.split_once('=').ok_or_else(|| {
                DataError::InvalidArgument(format!("expected name=value, got `{part}`"))
            })?;
            let value: f64 = value.trim().parse().map_err(|_| {
                DataError::InvalidArgument(format!("`{value}` is not a number"))
            })?;
            out.set(name.trim(), value)?;
        }
        Ok(out)
    }
}
