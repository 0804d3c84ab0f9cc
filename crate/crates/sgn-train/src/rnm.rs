//! Relevant negative mining: the nearest training layout serves as the
//! mismatched condition for each sample.

use ndarray::Array2;
use scene_data::{SceneSample, SemanticLayout};

use crate::error::{Result, TrainError};

/// Side of the downsampled label grid used for layout distances.
pub const RNM_GRID: usize = 16;

/// Labels on the `16×16` nearest-neighbour grid.
pub fn rnm_signature(layout: &SemanticLayout) -> Array2<u8> {
    layout.resize_nearest(RNM_GRID, RNM_GRID).into_labels()
}

fn disagreements(a: &Array2<u8>, b: &Array2<u8>) -> usize {
    a.iter().zip(b.iter()).filter(|(x, y)| x != y).count()
}

/// Fraction of disagreeing cells between two layouts' signatures.
pub fn layout_distance(a: &SemanticLayout, b: &SemanticLayout) -> f64 {
    disagreements(&rnm_signature(a), &rnm_signature(b)) as f64 / (RNM_GRID * RNM_GRID) as f64
}

/// Index into `pool` of the closest layout to `anchor`, skipping the anchor's own id.
///
/// Ties go to the lexicographically lowest sample id.
pub fn rnm_nearest(anchor: &SceneSample, pool: &[&SceneSample]) -> Result<usize> {
    if pool.len() < 2 {
        return Err(TrainError::NoNegative(pool.len()));
    }
    let sig = rnm_signature(&anchor.layout);
    let mut best: Option<(usize, usize)> = None;
    for (i, s) in pool.iter().enumerate() {
        if s.id == anchor.id {
            continue;
        }
        let d = disagreements(&sig, &rnm_signature(&s.layout));
        best = match best {
            Some((bi, bd)) if bd < d || (bd == d && pool[bi].id <= s.id) => Some((bi, bd)),
            _ => Some((i, d)),
        };
    }
    best.map(|(i, _)| i).ok_or(TrainError::NoNegative(1))
}

/// Precomputed nearest neighbour of every pool member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RnmIndex {
    pub neighbors: Vec<usize>,
}

impl RnmIndex {
    pub fn build(pool: &[&SceneSample]) -> Result<Self> {
        if pool.len() < 2 {
            return Err(TrainError::NoNegative(pool.len()));
        }
        let sigs: Vec<Array2<u8>> = pool.iter().map(|s| rnm_signature(&s.layout)).collect();
        let neighbors = (0..pool.len())
            .map(|i| {
                let mut best: Option<(usize, usize)> = None;
                for j in 0..pool.len() {
                    if pool[j].id == pool[i].id {
                        continue;
                    }
                    let d = disagreements(&sigs[i], &sigs[j]);
                    best = match best {
                        Some((bj, bd)) if bd < d || (bd == d && pool[bj].id <= pool[j].id) => Some((bj, bd)),
                        _ => Some((j, d)),
                    };
                }
                best.map(|(j, _)| j).ok_or(TrainError::NoNegative(1))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { neighbors })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use scene_data::AttributeVector;

    fn sample(id: &str, labels: Array2<u8>) -> SceneSample {
        let (h, w) = labels.dim();
        SceneSample::new(
            id,
            ndarray::Array3::zeros((h, w, 3)),
            SemanticLayout::new(labels, 6).unwrap(),
            AttributeVector::zeros(scene_data::desk_attribute_names()),
        )
        .unwrap()
    }

    #[test]
    fn duplicate_under_other_id_wins() {
        let base = Array2::from_shape_fn((16, 16), |(y, _)| (y / 8) as u8);
        let other = Array2::from_elem((16, 16), 3u8);
        let a = sample("b", base.clone());
        let dup = sample("z", base);
        let far = sample("a", other);
        let pool = [&a, &far, &dup];
        assert_eq!(rnm_nearest(&a, &pool).unwrap(), 2);
    }

    #[test]
    fn ties_break_on_lowest_id() {
        let a = sample("m", Array2::zeros((16, 16)));
        let x = sample("q", Array2::from_elem((16, 16), 1));
        let y = sample("c", Array2::from_elem((16, 16), 2));
        let pool = [&a, &x, &y];
        assert_eq!(rnm_nearest(&a, &pool).unwrap(), 2);
        assert_eq!(RnmIndex::build(&pool).unwrap().neighbors[0], 2);
    }

    #[test]
    fn singleton_pool_is_error() {
        let a = sample("a", Array2::zeros((4, 4)));
        assert!(matches!(rnm_nearest(&a, &[&a]), Err(TrainError::NoNegative(1))));
    }
}
