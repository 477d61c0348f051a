//! Independent reference implementations shared by the integration tests.
//!
//! Everything here is written from the definitions, without calling the
//! routine under test, so agreement means something.

#![allow(dead_code)]

use blockage_core::dataset::{FutureLabel, ObservedSequence, Sample};
use blockage_core::evalkit::{GroundTruthBox, ScoredBox};
use blockage_core::geom::{Aabb, Vec3};
use blockage_core::phy::{ChannelPath, ChannelVector, Codebook, Complex64, OfdmParams};
use blockage_core::scene::{BBox, Camera, Detection, SceneObject, Street, VehicleClass, World};
use blockage_core::config::ScenarioConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::Arc;

pub fn rng_for(parts: &[u64]) -> ChaCha8Rng {
    let seed = parts.iter().fold(0x9E37_79B9_7F4A_7C15u64, |acc, &p| acc.rotate_left(17) ^ p.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Channel and beams

pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// `h[k][m]` by the literal triple sum over subcarrier, tap and path.
pub fn naive_channel(
    paths: &[ChannelPath],
    ofdm: &OfdmParams,
    elements: usize,
    spacing: f64,
    wavelength: f64,
    boresight: f64,
) -> Vec<Vec<Complex64>> {
    let axis = boresight - PI / 2.0;
    let k_total = ofdm.subcarriers;
    let mut h = vec![vec![Complex64::new(0.0, 0.0); elements]; k_total];
    for (k, hk) in h.iter_mut().enumerate() {
        for (m, hkm) in hk.iter_mut().enumerate() {
            for d in 0..ofdm.cyclic_prefix {
                for p in paths {
                    let dir = Vec3::new(
                        p.elevation.cos() * p.azimuth.cos(),
                        p.elevation.cos() * p.azimuth.sin(),
                        p.elevation.sin(),
                    );
                    let cos_psi = dir.dot(Vec3::new(axis.cos(), axis.sin(), 0.0));
                    let ofdm_phase = -2.0 * PI * (k * d) as f64 / k_total as f64;
                    let array_phase = -2.0 * PI / wavelength * spacing * m as f64 * cos_psi;
                    let tap = sinc((d as f64 * ofdm.sampling_time - p.delay) / ofdm.sampling_time);
                    *hkm += p.gain * Complex64::from_polar(tap, ofdm_phase + array_phase);
                }
            }
        }
    }
    h
}

pub fn random_paths<R: Rng>(rng: &mut R, count: usize, ofdm: &OfdmParams) -> Vec<ChannelPath> {
    let max_delay = ofdm.cyclic_prefix as f64 * ofdm.sampling_time;
    (0..count)
        .map(|_| ChannelPath {
            gain: Complex64::from_polar(rng.random_range(0.1..1.0), rng.random_range(-PI..PI)),
            delay: rng.random_range(0.0..max_delay * 0.999),
            azimuth: rng.random_range(-PI..PI),
            elevation: rng.random_range(-0.6..0.6),
        })
        .collect()
}

pub fn random_channel<R: Rng>(rng: &mut R, elements: usize, ofdm: &OfdmParams) -> ChannelVector {
    let mut h = ChannelVector::zeros(ofdm, elements);
    for v in h.subcarriers.iter_mut().flatten() {
        *v = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    }
    h
}

/// 1-based index of the first beam with the largest `sum_k |h_k^T f|^2`.
pub fn scan_beam(h: &[Vec<Complex64>], cb: &Codebook) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for q in 1..=cb.len() {
        let f = cb.beam(q).unwrap();
        let mut power = 0.0;
        for hk in h {
            let mut y = Complex64::new(0.0, 0.0);
            for m in 0..f.len() {
                y += hk[m] * f[m];
            }
            power += y.norm_sqr();
        }
        if power > best.1 {
            best = (q, power);
        }
    }
    best.0
}

// ---------------------------------------------------------------------------
// Line of sight

fn box_distance(b: &Aabb, p: Vec3) -> f64 {
    let mut s = 0.0;
    for axis in 0..3 {
        let (v, lo, hi) = (p.get(axis), b.min.get(axis), b.max.get(axis));
        let e = (lo - v).max(0.0).max(v - hi);
        s += e * e;
    }
    s.sqrt()
}

/// Smallest sampled distance between the segment and a box; zero means a
/// sample landed inside. Each pass samples 512 points and zooms in on the
/// closest one; the distance to a convex box is convex along the segment, so
/// the zoom never loses the nearest approach.
pub fn sampled_segment_gap(a: Vec3, b: Vec3, bx: &Aabb) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut best = (f64::INFINITY, 0.0);
    for _ in 0..8 {
        let n = 512;
        let step = (hi - lo) / n as f64;
        for i in 0..=n {
            let t = lo + step * i as f64;
            let d = box_distance(bx, a + (b - a) * t);
            if d == 0.0 {
                return 0.0;
            }
            if d < best.0 {
                best = (d, t);
            }
        }
        lo = (best.1 - step).max(0.0);
        hi = (best.1 + step).min(1.0);
    }
    best.0
}

pub fn vehicle(id: u32, class: VehicleClass, x: f64, y: f64) -> SceneObject {
    let dims = class.dims();
    SceneObject {
        id,
        class,
        center: Vec3::new(x, y, dims.z / 2.0),
        dims,
        velocity: Vec3::default(),
        lane: 0,
    }
}

pub fn random_class<R: Rng>(rng: &mut R) -> VehicleClass {
    VehicleClass::ALL[rng.random_range(0..3)]
}

pub fn world_of(objects: Vec<SceneObject>) -> World {
    World {
        street: Street::from_config(&ScenarioConfig::default()),
        objects,
        frame: 0,
        time: 0.0,
    }
}

/// A mast, a user and a handful of vehicles scattered around the link, so that
/// both outcomes are common.
pub fn random_link_scene<R: Rng>(rng: &mut R) -> (Vec3, SceneObject, World) {
    let bs = Vec3::new(rng.random_range(-50.0..50.0), rng.random_range(-15.0..15.0), rng.random_range(3.0..8.0));
    let user = vehicle(0, random_class(rng), rng.random_range(-60.0..60.0), rng.random_range(-10.0..10.0));
    let mut objects = vec![user.clone()];
    let target = rng.random_range(1..=6usize);
    for _ in 0..100 {
        if objects.len() > target {
            break;
        }
        let t = rng.random_range(0.05..0.95);
        let x = bs.x + (user.center.x - bs.x) * t + rng.random_range(-4.0..4.0);
        let y = bs.y + (user.center.y - bs.y) * t + rng.random_range(-4.0..4.0);
        let v = vehicle(objects.len() as u32, random_class(rng), x, y);
        // Vehicles never interpenetrate, and none may swallow the mast.
        let clear = objects.iter().all(|o| !footprints_overlap(o, &v)) && !v.aabb().contains(bs);
        if clear {
            objects.push(v);
        }
    }
    (bs, user, world_of(objects))
}

pub fn footprints_overlap(a: &SceneObject, b: &SceneObject) -> bool {
    (a.center.x - b.center.x).abs() < (a.dims.x + b.dims.x) / 2.0
        && (a.center.y - b.center.y).abs() < (a.dims.y + b.dims.y) / 2.0
}

pub fn closest_gap(bs: Vec3, user: &SceneObject, world: &World) -> f64 {
    world
        .objects
        .iter()
        .filter(|o| o.id != user.id)
        .map(|o| sampled_segment_gap(bs, user.antenna_point(), &o.aabb()))
        .fold(f64::INFINITY, f64::min)
}

pub fn sampled_los_blocked(bs: Vec3, user: &SceneObject, world: &World) -> bool {
    world
        .objects
        .iter()
        .filter(|o| o.id != user.id)
        .any(|o| sampled_segment_gap(bs, user.antenna_point(), &o.aabb()) == 0.0)
}

// ---------------------------------------------------------------------------
// Camera projection

/// Pinhole model re-derived from the camera pose: returns (right, up, depth)
/// and the pixel position when the depth is positive.
pub struct Pinhole {
    origin: Vec3,
    forward: Vec3,
    right: Vec3,
    up: Vec3,
    fx: f64,
    fy: f64,
    pub width: f64,
    pub height: f64,
}

impl Pinhole {
    pub fn new(cam: &Camera) -> Self {
        let forward = Vec3::new(cam.pitch.cos() * cam.yaw.cos(), cam.pitch.cos() * cam.yaw.sin(), cam.pitch.sin());
        let right = Vec3::new(cam.yaw.sin(), -cam.yaw.cos(), 0.0);
        let up = right.cross(forward);
        Self {
            origin: cam.position,
            forward,
            right,
            up,
            fx: cam.width as f64 / 2.0 / (cam.hfov / 2.0).tan(),
            fy: cam.height as f64 / 2.0 / (cam.vfov / 2.0).tan(),
            width: cam.width as f64,
            height: cam.height as f64,
        }
    }

    pub fn depth(&self, p: Vec3) -> f64 {
        (p - self.origin).dot(self.forward)
    }

    pub fn pixel(&self, p: Vec3) -> (f64, f64) {
        let d = p - self.origin;
        let z = d.dot(self.forward);
        (
            self.width / 2.0 + self.fx * d.dot(self.right) / z,
            self.height / 2.0 - self.fy * d.dot(self.up) / z,
        )
    }
}

/// Pixel bounding box of the visible part of a box lying wholly in front of
/// the camera, from densely sampled edges and faces.
///
/// Extremes of the clipped silhouette lie either on a projected edge inside the
/// image or on an image border the silhouette reaches; a border counts as
/// reached when some sample lies beyond it within the other axis' range.
pub fn sampled_projection(cam: &Pinhole, b: &Aabb) -> Option<[f64; 4]> {
    let (w, h) = (cam.width, cam.height);
    let mut pts = Vec::new();
    let corners = b.corners();
    for (i, j) in Aabb::EDGES {
        let n = 4000;
        for s in 0..=n {
            let t = s as f64 / n as f64;
            pts.push(cam.pixel(corners[i] + (corners[j] - corners[i]) * t));
        }
    }
    let n = 100;
    for axis in 0..3 {
        for side in [b.min.get(axis), b.max.get(axis)] {
            for u in 0..=n {
                for v in 0..=n {
                    let (fu, fv) = (u as f64 / n as f64, v as f64 / n as f64);
                    let lerp = |a: usize, f: f64| b.min.get(a) + (b.max.get(a) - b.min.get(a)) * f;
                    let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
                    let mut c = [0.0; 3];
                    c[axis] = side;
                    c[a1] = lerp(a1, fu);
                    c[a2] = lerp(a2, fv);
                    pts.push(cam.pixel(Vec3::new(c[0], c[1], c[2])));
                }
            }
        }
    }
    let inside: Vec<(f64, f64)> = pts
        .iter()
        .copied()
        .filter(|&(x, y)| (0.0..=w).contains(&x) && (0.0..=h).contains(&y))
        .collect();
    if inside.is_empty() {
        return None;
    }
    let mut bb = [f64::MAX, f64::MAX, f64::MIN, f64::MIN];
    for &(x, y) in &inside {
        bb = [bb[0].min(x), bb[1].min(y), bb[2].max(x), bb[3].max(y)];
    }
    let in_y = |y: f64| (0.0..=h).contains(&y);
    let in_x = |x: f64| (0.0..=w).contains(&x);
    if pts.iter().any(|&(x, y)| x < 0.0 && in_y(y)) {
        bb[0] = 0.0;
    }
    if pts.iter().any(|&(x, y)| x > w && in_y(y)) {
        bb[2] = w;
    }
    if pts.iter().any(|&(x, y)| y < 0.0 && in_x(x)) {
        bb[1] = 0.0;
    }
    if pts.iter().any(|&(x, y)| y > h && in_x(x)) {
        bb[3] = h;
    }
    Some(bb)
}

// ---------------------------------------------------------------------------
// Occlusion

/// Per-cell rasterization: a cell of box `i` is hidden when its centre lies in
/// any strictly nearer box.
pub fn rasterized_visibility(boxes: &[([f64; 4], f64)], grid: usize) -> Vec<f64> {
    boxes
        .iter()
        .enumerate()
        .map(|(i, (a, depth))| {
            let mut hidden = 0usize;
            for gy in 0..grid {
                for gx in 0..grid {
                    let cx = a[0] + (gx as f64 + 0.5) * (a[2] - a[0]) / grid as f64;
                    let cy = a[1] + (gy as f64 + 0.5) * (a[3] - a[1]) / grid as f64;
                    let covered = boxes.iter().enumerate().any(|(j, (b, d))| {
                        j != i && d < depth && cx >= b[0] && cx <= b[2] && cy >= b[1] && cy <= b[3]
                    });
                    hidden += usize::from(covered);
                }
            }
            1.0 - hidden as f64 / (grid * grid) as f64
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Average precision

/// Greedy confidence-ordered matching, then the interpolated precision
/// `max{p_j : r_j >= r}` integrated over recall on a fine grid.
pub fn integrated_ap(dets: &[ScoredBox], truth: &[GroundTruthBox], class: VehicleClass, thr: f64) -> f64 {
    let gts: Vec<&GroundTruthBox> = truth.iter().filter(|g| g.class == class).collect();
    let mut order: Vec<&ScoredBox> = dets.iter().filter(|d| d.class == class).collect();
    order.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap());
    let mut used = vec![false; gts.len()];
    let mut tp = 0.0;
    let mut curve = Vec::new();
    for (rank, d) in order.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt.image != d.image {
                continue;
            }
            let o = box_iou(&d.bbox, &gt.bbox);
            if best.is_none_or(|(_, v)| o > v) {
                best = Some((g, o));
            }
        }
        if let Some((g, o)) = best {
            if o >= thr && !used[g] {
                used[g] = true;
                tp += 1.0;
            }
        }
        curve.push((tp / gts.len() as f64, tp / (rank + 1) as f64));
    }
    let steps = 200_000;
    let mut area = 0.0;
    for s in 0..steps {
        let r = (s as f64 + 0.5) / steps as f64;
        let p = curve.iter().filter(|c| c.0 >= r).map(|c| c.1).fold(0.0, f64::max);
        area += p / steps as f64;
    }
    area
}

pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    inter / ((a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter)
}

// ---------------------------------------------------------------------------
// Synthetic sequences

pub fn random_bbox<R: Rng>(rng: &mut R) -> BBox {
    let x1 = rng.random_range(0.0..0.8);
    let y1 = rng.random_range(0.0..0.8);
    BBox::new(x1, y1, x1 + rng.random_range(0.02..0.2), y1 + rng.random_range(0.02..0.2)).unwrap()
}

pub fn random_detections<R: Rng>(rng: &mut R, max: usize) -> Arc<[Detection]> {
    let n = rng.random_range(0..=max);
    (0..n)
        .map(|_| Detection {
            class: random_class(rng),
            bbox: random_bbox(rng),
            confidence: rng.random_range(0.3..1.0),
        })
        .collect::<Vec<_>>()
        .into()
}

/// Sequences whose label is fixed by which beam the user sits in.
pub fn beam_rule_samples<R: Rng>(rng: &mut R, count: usize, beams: usize, observed: usize) -> Vec<Sample> {
    (0..count)
        .map(|i| {
            let beam = rng.random_range(1..=beams);
            let s = u8::from(beam > beams / 2);
            Sample {
                observed: ObservedSequence {
                    basestation: 1,
                    camera: 2,
                    user: i as u32,
                    start_frame: 0,
                    detections: (0..observed).map(|_| random_detections(rng, 3)).collect(),
                    beams: vec![beam; observed],
                },
                label: FutureLabel::from_window(&[0, 0, 0, 0, s]),
            }
        })
        .collect()
}
