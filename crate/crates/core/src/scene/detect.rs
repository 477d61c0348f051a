use super::camera::CameraProjection;
use super::{Camera, VehicleClass, World};
use crate::config::OcclusionConfig;
use crate::error::{Error, Result};
use crate::util::rng_for;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Axis-aligned box `(x1, y1)`-`(x2, y2)` with `x1 < x2` and `y1 < y2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if [x1, y1, x2, y2].iter().all(|v| v.is_finite()) && x1 < x2 && y1 < y2 {
            Ok(Self { x1, y1, x2, y2 })
        } else {
            Err(Error::InvalidBox(x1, y1, x2, y2))
        }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn is_normalized(&self) -> bool {
        self.x1 >= 0.0 && self.y1 >= 0.0 && self.x2 <= 1.0 && self.y2 <= 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class: VehicleClass,
    pub bbox: BBox,
    pub confidence: f64,
}

/// Imperfections of the synthetic detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorNoiseModel {
    /// Probability that a visible object is dropped.
    pub p_miss: f64,
    /// Standard deviation of the per-coordinate jitter, in pixels.
    pub jitter_sigma: f64,
    /// Probability of one spurious box per frame.
    pub p_false_positive: f64,
    pub rng_seed: u64,
}

impl Default for DetectorNoiseModel {
    fn default() -> Self {
        Self {
            p_miss: 0.0,
            jitter_sigma: 0.0,
            p_false_positive: 0.0,
            rng_seed: 0,
        }
    }
}

impl DetectorNoiseModel {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.p_miss) || !prob(self.p_false_positive) {
            return Err(Error::Config("detector probabilities must lie in [0,1]".into()));
        }
        if !(self.jitter_sigma >= 0.0) {
            return Err(Error::Config("jitter_sigma must be >= 0".into()));
        }
        Ok(())
    }

    fn is_noiseless(&self) -> bool {
        self.p_miss == 0.0 && self.jitter_sigma == 0.0 && self.p_false_positive == 0.0
    }
}

/// Unoccluded fraction of every projected box.
///
/// Each box is split into a `grid`x`grid` lattice of cells; a cell is hidden
/// when its centre falls inside the box of any object with strictly smaller
/// depth. `boxes[i]` is `(pixel box [x1,y1,x2,y2], depth)`.
pub fn occlusion_fractions(boxes: &[([f64; 4], f64)], grid: usize) -> Vec<f64> {
    assert!((1..=64).contains(&grid));
    let full: u64 = if grid == 64 { u64::MAX } else { (1u64 << grid) - 1 };
    let mut covered_rows = vec![0u64; grid];
    boxes
        .iter()
        .enumerate()
        .map(|(i, &(a, depth_a))| {
            covered_rows.iter_mut().for_each(|r| *r = 0);
            let cw = (a[2] - a[0]) / grid as f64;
            let ch = (a[3] - a[1]) / grid as f64;
            for (j, &(b, depth_b)) in boxes.iter().enumerate() {
                if j == i || depth_b >= depth_a {
                    continue;
                }
                if b[0] > a[2] || b[2] < a[0] || b[1] > a[3] || b[3] < a[1] {
                    continue;
                }
                let mut cols = 0u64;
                for k in 0..grid {
                    let cx = a[0] + (k as f64 + 0.5) * cw;
                    if cx >= b[0] && cx <= b[2] {
                        cols |= 1 << k;
                    }
                }
                if cols == 0 {
                    continue;
                }
                for (k, row) in covered_rows.iter_mut().enumerate() {
                    let cy = a[1] + (k as f64 + 0.5) * ch;
                    if cy >= b[1] && cy <= b[3] {
                        *row |= cols;
                    }
                }
            }
            let hidden: u32 = covered_rows.iter().map(|r| (r & full).count_ones()).sum();
            1.0 - hidden as f64 / (grid * grid) as f64
        })
        .collect()
}

/// Synthetic detections of one camera frame.
///
/// Objects whose projected box is at least `visibility_threshold` unoccluded are
/// reported with their true class and the unoccluded fraction as confidence.
/// Noise draws are keyed by (seed, camera, frame, object id), so the result
/// does not depend on the order of `world.objects`. Output is sorted by object
/// id with any false positive last.
pub fn detect(
    cam: &Camera,
    world: &World,
    noise: &DetectorNoiseModel,
    occlusion: &OcclusionConfig,
) -> Vec<Detection> {
    let proj = CameraProjection::new(cam);
    let (w, h) = proj.image_size();
    let mut projected: Vec<(u32, VehicleClass, [f64; 4], f64)> = world
        .objects
        .iter()
        .filter_map(|o| {
            let px = proj.project_box(&o.aabb())?;
            Some((o.id, o.class, px, proj.depth(o.center)))
        })
        .collect();
    projected.sort_by_key(|p| p.0);
    let boxes: Vec<([f64; 4], f64)> = projected.iter().map(|p| (p.2, p.3)).collect();
    let fractions = occlusion_fractions(&boxes, occlusion.grid);

    let noiseless = noise.is_noiseless();
    let jitter = Normal::new(0.0, noise.jitter_sigma.max(0.0)).expect("sigma >= 0");
    let mut out = Vec::new();
    for ((id, class, px, _), frac) in projected.iter().zip(&fractions) {
        if *frac < occlusion.visibility_threshold {
            continue;
        }
        let mut px = *px;
        if !noiseless {
            let mut rng = rng_for(&[noise.rng_seed, cam.id as u64, world.frame, *id as u64]);
            if rng.random::<f64>() < noise.p_miss {
                continue;
            }
            if noise.jitter_sigma > 0.0 {
                for v in px.iter_mut() {
                    *v += jitter.sample(&mut rng);
                }
            }
        }
        let nb = [
            (px[0] / w).clamp(0.0, 1.0),
            (px[1] / h).clamp(0.0, 1.0),
            (px[2] / w).clamp(0.0, 1.0),
            (px[3] / h).clamp(0.0, 1.0),
        ];
        if let Ok(bbox) = BBox::new(nb[0], nb[1], nb[2], nb[3]) {
            out.push(Detection {
                class: *class,
                bbox,
                confidence: *frac,
            });
        }
    }
    if noise.p_false_positive > 0.0 {
        let mut rng = rng_for(&[noise.rng_seed, cam.id as u64, world.frame, u64::MAX]);
        if rng.random::<f64>() < noise.p_false_positive {
            let class = VehicleClass::ALL[rng.random_range(0..3)];
            let (cx, cy) = (rng.random::<f64>(), rng.random::<f64>());
            let (bw, bh) = (0.02 + 0.2 * rng.random::<f64>(), 0.02 + 0.2 * rng.random::<f64>());
            let b = BBox::new(
                (cx - bw / 2.0).max(0.0),
                (cy - bh / 2.0).max(0.0),
                (cx + bw / 2.0).min(1.0),
                (cy + bh / 2.0).min(1.0),
            );
            if let Ok(bbox) = b {
                out.push(Detection {
                    class,
                    bbox,
                    confidence: rng.random::<f64>(),
                });
            }
        }
    }
    out
}
