//! Semantic label maps: the spatial condition of the scene generator.

use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};

/// Bit width of the binary layout code fed to the networks.
pub const LAYOUT_BITS: u32 = 8;

/// Integer label map with a fixed class vocabulary size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawLayout")]
pub struct SemanticLayout {
    labels: Array2<u8>,
    num_classes: u32,
}

#[derive(Deserialize)]
struct RawLayout {
    labels: Array2<u8>,
    num_classes: u32,
}

impl TryFrom<RawLayout> for SemanticLayout {
    type Error = DataError;

    fn try_from(raw: RawLayout) -> Result<Self> {
        SemanticLayout::new(raw.labels, raw.num_classes)
    }
}

impl SemanticLayout {
    pub fn new(labels: Array2<u8>, num_classes: u32) -> Result<Self> {
        let (h, w) = labels.dim();
        if h == 0 || w == 0 {
            return Err(DataError::Shape(format!("empty layout {h}x{w}")));
        }
        if num_classes == 0 || num_classes > 256 {
            return Err(DataError::InvalidArgument(format!(
                "num_classes must be in 1..=256, got {num_classes}"
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| u32::from(l) >= num_classes) {
            return Err(DataError::LabelOutOfRange { label: bad.into(), num_classes });
        }
        Ok(Self { labels, num_classes })
    }

    /// Layout filled with a single label.
    pub fn filled(height: usize, width: usize, label: u8, num_classes: u32) -> Result<Self> {
        Self::new(Array2::from_elem((height, width), label), num_classes)
    }

    pub fn labels(&self) -> &Array2<u8> {
        &self.labels
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn height(&self) -> usize {
        self.labels.nrows()
    }

    pub fn width(&self) -> usize {
        self.labels.ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.labels.dim()
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.labels[[y, x]]
    }

    /// Overwrites one pixel. Panics on an out-of-vocabulary label.
    pub fn set(&mut self, y: usize, x: usize, label: u8) {
        assert!(u32::from(label) < self.num_classes, "label {label} out of vocabulary");
        self.labels[[y, x]] = label;
    }

    pub fn into_labels(self) -> Array2<u8> {
        self.labels
    }

    /// Binary planes `H×W×bits`, most significant bit first.
    pub fn encode_binary(&self, bits: u32) -> Result<Array3<f64>> {
        encode_layout_binary(self, bits)
    }

    /// Nearest-neighbor resampling; labels stay categorical.
    pub fn resize_nearest(&self, height: usize, width: usize) -> Self {
        let (h, w) = self.dim();
        let labels = Array2::from_shape_fn((height, width), |(y, x)| {
            let sy = ((y as f64 + 0.5) * h as f64 / height as f64).floor() as usize;
            let sx = ((x as f64 + 0.5) * w as f64 / width as f64).floor() as usize;
            self.labels[[sy.min(h - 1), sx.min(w - 1)]]
        });
        Self { labels, num_classes: self.num_classes }
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut labels = self.labels.clone();
        labels.invert_axis(Axis(1));
        Self { labels: labels.as_standard_layout().to_owned(), num_classes: self.num_classes }
    }

    /// Window `[top, top+height) × [left, left+width)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        let (h, w) = self.dim();
        if top + height > h || left + width > w || height == 0 || width == 0 {
            return Err(DataError::Shape(format!(
                "crop {height}x{width}@({top},{left}) outside {h}x{w}"
            )));
        }
        let labels = self
            .labels
            .slice(ndarray::s![top..top + height, left..left + width])
            .to_owned();
        Ok(Self { labels, num_classes: self.num_classes })
    }

    /// Pixel count per class.
    pub fn histogram(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes as usize];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Boolean mask of pixels carrying `label`.
    pub fn mask(&self, label: u8) -> Array2<bool> {
        self.labels.mapv(|l| l == label)
    }

    /// Fraction of pixels whose labels differ. Layouts must share a shape.
    pub fn disagreement(&self, other: &SemanticLayout) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(DataError::Shape(format!(
                "layouts {:?} and {:?} differ in shape",
                self.dim(),
                other.dim()
            )));
        }
        let diff = self
            .labels
            .iter()
            .zip(other.labels.iter())
            .filter(|(a, b)| a != b)
            .count();
        Ok(diff as f64 / self.labels.len() as f64)
    }
}

/// Encodes every label into `bits` binary planes, most significant bit first.
pub fn encode_layout_binary(layout: &SemanticLayout, bits: u32) -> Result<Array3<f64>> {
    if bits == 0 || bits > 8 {
        return Err(DataError::InvalidArgument(format!("bits must be in 1..=8, got {bits}")));
    }
    let capacity = 1u32 << bits;
    if let Some(&bad) = layout.labels.iter().find(|&&l| u32::from(l) >= capacity) {
        return Err(DataError::EncodingCapacity { label: bad.into(), bits });
    }
    let (h, w) = layout.dim();
    let b = bits as usize;
    let mut out = Array3::<f64>::zeros((h, w, b));
    for ((y, x), &label) in layout.labels.indexed_iter() {
        for plane in 0..b {
            let shift = b - 1 - plane;
            out[[y, x, plane]] = f64::from((label >> shift) & 1);
        }
    }
    Ok(out)
}

/// Inverse of [`encode_layout_binary`]; planes are thresholded at 0.5.
pub fn decode_layout_binary(planes: &Array3<f64>, num_classes: u32) -> Result<SemanticLayout> {
    let (h, w, b) = planes.dim();
    if b == 0 || b > 8 {
        return Err(DataError::Shape(format!("expected 1..=8 planes, got {b}")));
    }
    let labels = Array2::from_shape_fn((h, w), |(y, x)| {
        (0..b).fold(0u8, |acc, plane| (acc << 1) | u8::from(planes[[y, x, plane]] > 0.5))
    });
    SemanticLayout::new(labels, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(label: u8, classes: u32) -> SemanticLayout {
        SemanticLayout::filled(1, 1, label, classes).unwrap()
    }

    #[test]
    fn zero_label_encodes_to_zeros() {
        let planes = single(0, 150).encode_binary(8).unwrap();
        assert_eq!(planes.iter().copied().collect::<Vec<_>>(), vec![0.0; 8]);
    }

    #[test]
    fn label_149_msb_first() {
        let planes = single(149, 150).encode_binary(8).unwrap();
        let bits: Vec<f64> = planes.iter().copied().collect();
        assert_eq!(bits, vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn capacity_error() {
        let err = single(5, 6).encode_binary(2).unwrap_err();
        assert!(matches!(err, DataError::EncodingCapacity { label: 5, bits: 2 }));
    }

    #[test]
    fn rejects_out_of_vocabulary_label() {
        let labels = Array2::from_elem((2, 2), 150u8);
        assert!(matches!(
            SemanticLayout::new(labels, 150),
            Err(DataError::LabelOutOfRange { label: 150, .. })
        ));
    }

    #[test]
    fn nearest_resize_keeps_labels_categorical() {
        let labels = Array2::from_shape_fn((4, 4), |(y, _)| if y < 2 { 0 } else { 3 });
        let l = SemanticLayout::new(labels, 4).unwrap();
        let up = l.resize_nearest(8, 8);
        assert!(up.labels().iter().all(|&v| v == 0 || v == 3));
        assert_eq!(up.get(3, 0), 0);
        assert_eq!(up.get(4, 0), 3);
        assert_eq!(up.resize_nearest(4, 4), l);
    }

    #[test]
    fn flip_is_an_involution() {
        let labels = Array2::from_shape_fn((3, 5), |(y, x)| (y * 5 + x) as u8);
        let l = SemanticLayout::new(labels, 16).unwrap();
        assert_eq!(l.flip_horizontal().get(0, 0), 4);
        assert_eq!(l.flip_horizontal().flip_horizontal(), l);
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(bits in 1u32..=8, h in 1usize..6, w in 1usize..6, raw in proptest::collection::vec(any::<u8>(), 36)) {
            let cap = 1u32 << bits;
            let labels = Array2::from_shape_fn((h, w), |(y, x)| (u32::from(raw[y * 6 + x]) % cap) as u8);
            let layout = SemanticLayout::new(labels, cap).unwrap();
            let planes = layout.encode_binary(bits).unwrap();
            prop_assert_eq!(decode_layout_binary(&planes, layout.num_classes()).unwrap(), layout);
        }
    }
}
