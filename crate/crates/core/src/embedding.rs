//! Fixed beam lookup table and padded bounding-box features sharing one
//! N-dimensional input space.

use crate::error::{Error, Result};
use crate::scene::Detection;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// Per-detection feature width: centre, first corner, second corner.
pub const BOX_FEATURES: usize = 6;

/// `Q` Gaussian vectors of length `N`, drawn once from a seeded generator and
/// never trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamEmbeddingTable {
    pub beams: usize,
    pub dim: usize,
    pub seed: u64,
    entries: Vec<f64>,
}

impl BeamEmbeddingTable {
    pub fn new(beams: usize, dim: usize, seed: u64) -> Self {
        let mut rng = crate::util::rng_for(&[seed, 0xBEA3]);
        let entries = (0..beams * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        Self {
            beams,
            dim,
            seed,
            entries,
        }
    }

    /// Entry for 1-based beam index `b`.
    pub fn embed(&self, b: usize) -> Result<&[f64]> {
        if b == 0 || b > self.beams {
            return Err(Error::BeamOutOfRange {
                index: b,
                count: self.beams,
            });
        }
        Ok(&self.entries[(b - 1) * self.dim..b * self.dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }
}

pub fn embed_beam(table: &BeamEmbeddingTable, b: usize) -> Result<&[f64]> {
    table.embed(b)
}

/// Largest number of detections that fit in an `n`-vector.
pub fn max_boxes(n: usize) -> usize {
    n / BOX_FEATURES
}

/// Canonical stacking order: descending box area, then ascending centre x.
fn canonical(a: &Detection, b: &Detection) -> Ordering {
    b.bbox
        .area()
        .total_cmp(&a.bbox.area())
        .then(a.bbox.center().0.total_cmp(&b.bbox.center().0))
}

/// Serializes detections as `[xc, yc, x1, y1, x2, y2]` blocks in canonical
/// order and zero-pads to length `n`. When more than `n / 6` detections are
/// given, the lowest-confidence ones are dropped first.
pub fn embed_bboxes(detections: &[Detection], n: usize) -> Vec<f64> {
    let cap = max_boxes(n);
    let mut kept: Vec<&Detection> = detections.iter().collect();
    if kept.len() > cap {
        log::debug!("truncating {} of {} detections", kept.len() - cap, kept.len());
        kept.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        kept.truncate(cap);
    }
    kept.sort_by(|a, b| canonical(a, b));
    let mut out = vec![0.0; n];
    for (slot, d) in out.chunks_exact_mut(BOX_FEATURES).zip(&kept) {
        let b = &d.bbox;
        let (xc, yc) = b.center();
        slot.copy_from_slice(&[xc, yc, b.x1, b.y1, b.x2, b.y2]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{BBox, VehicleClass};

    fn det(x1: f64, y1: f64, x2: f64, y2: f64, confidence: f64) -> Detection {
        Detection {
            class: VehicleClass::Car,
            bbox: BBox::new(x1, y1, x2, y2).unwrap(),
            confidence,
        }
    }

    #[test]
    fn lookup_is_deterministic() {
        let t = BeamEmbeddingTable::new(64, 256, 5);
        assert_eq!(t.embed(7).unwrap(), t.embed(7).unwrap());
        assert_eq!(t, BeamEmbeddingTable::new(64, 256, 5));
        assert_ne!(t, BeamEmbeddingTable::new(64, 256, 6));
        assert!(t.embed(0).is_err());
        assert!(t.embed(65).is_err());
        assert_eq!(t.embed(64).unwrap().len(), 256);
    }

    #[test]
    fn empty_list_is_all_padding() {
        assert!(embed_bboxes(&[], 256).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_box_layout() {
        let v = embed_bboxes(&[det(0.2, 0.4, 0.6, 0.8, 0.9)], 256);
        let expect = [0.4, 0.6000000000000001, 0.2, 0.4, 0.6, 0.8];
        for (a, b) in v[..6].iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(v[6..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn canonical_order_and_truncation() {
        let dets = vec![
            det(0.0, 0.0, 0.1, 0.1, 0.9),
            det(0.5, 0.5, 0.9, 0.9, 0.2),
            det(0.3, 0.3, 0.5, 0.5, 0.7),
        ];
        let v = embed_bboxes(&dets, 12);
        // capacity 2: lowest confidence (largest box) dropped
        assert_eq!(&v[2..6], &[0.3, 0.3, 0.5, 0.5]);
        assert_eq!(&v[8..12], &[0.0, 0.0, 0.1, 0.1]);
    }
}
