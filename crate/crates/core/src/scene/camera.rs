use super::{BBox, SceneObject};
use crate::geom::{Aabb, Vec3};
use serde::{Deserialize, Serialize};

/// Points closer than this along the optical axis are clipped away.
pub const NEAR_PLANE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    /// Global id, 1..=6.
    pub id: u32,
    pub position: Vec3,
    pub yaw: f64,
    /// Negative looks down.
    pub pitch: f64,
    pub hfov: f64,
    pub vfov: f64,
    pub width: u32,
    pub height: u32,
}

/// Orthonormal camera frame plus pinhole intrinsics.
#[derive(Debug, Clone, Copy)]
pub struct CameraProjection {
    origin: Vec3,
    forward: Vec3,
    right: Vec3,
    up: Vec3,
    fx: f64,
    fy: f64,
    width: f64,
    height: f64,
}

impl CameraProjection {
    pub fn new(cam: &Camera) -> Self {
        let (sy, cy) = cam.yaw.sin_cos();
        let (sp, cp) = cam.pitch.sin_cos();
        let forward = Vec3::new(cp * cy, cp * sy, sp);
        let right = Vec3::new(sy, -cy, 0.0);
        let up = right.cross(forward);
        Self {
            origin: cam.position,
            forward,
            right,
            up,
            fx: (cam.width as f64 / 2.0) / (cam.hfov / 2.0).tan(),
            fy: (cam.height as f64 / 2.0) / (cam.vfov / 2.0).tan(),
            width: cam.width as f64,
            height: cam.height as f64,
        }
    }

    /// World point to camera coordinates (right, up, depth).
    pub fn to_camera(&self, p: Vec3) -> Vec3 {
        let d = p - self.origin;
        Vec3::new(d.dot(self.right), d.dot(self.up), d.dot(self.forward))
    }

    /// Camera coordinates to pixel coordinates (x right, y down). Requires depth > 0.
    pub fn to_pixel(&self, c: Vec3) -> (f64, f64) {
        (
            self.width / 2.0 + self.fx * c.x / c.z,
            self.height / 2.0 - self.fy * c.y / c.z,
        )
    }

    pub fn image_size(&self) -> (f64, f64) {
        (self.width, self.height)
    }

    pub fn depth(&self, p: Vec3) -> f64 {
        (p - self.origin).dot(self.forward)
    }

    /// Pixel-space hull of a box, clipped to the near plane and the image.
    pub fn project_box(&self, aabb: &Aabb) -> Option<[f64; 4]> {
        let cam: Vec<Vec3> = aabb.corners().iter().map(|&c| self.to_camera(c)).collect();
        let mut pts: Vec<(f64, f64)> = cam
            .iter()
            .filter(|c| c.z >= NEAR_PLANE)
            .map(|&c| self.to_pixel(c))
            .collect();
        for (a, b) in Aabb::EDGES {
            let (ca, cb) = (cam[a], cam[b]);
            if (ca.z - NEAR_PLANE) * (cb.z - NEAR_PLANE) < 0.0 {
                let t = (NEAR_PLANE - ca.z) / (cb.z - ca.z);
                let p = ca + (cb - ca) * t;
                pts.push(self.to_pixel(Vec3::new(p.x, p.y, NEAR_PLANE)));
            }
        }
        if pts.len() < 3 {
            return None;
        }
        let hull = convex_hull(pts);
        let clipped = clip_to_rect(&hull, self.width, self.height);
        if clipped.is_empty() {
            return None;
        }
        let (mut x1, mut y1, mut x2, mut y2) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for (x, y) in clipped {
            x1 = x1.min(x);
            y1 = y1.min(y);
            x2 = x2.max(x);
            y2 = y2.max(y);
        }
        (x2 > x1 && y2 > y1).then_some([x1, y1, x2, y2])
    }
}

/// Normalized image-space bounding box of `obj`, or `None` when it is behind
/// the camera or entirely outside the field of view.
pub fn project_object(cam: &Camera, obj: &SceneObject) -> Option<BBox> {
    let proj = CameraProjection::new(cam);
    let [x1, y1, x2, y2] = proj.project_box(&obj.aabb())?;
    let (w, h) = proj.image_size();
    BBox::new(x1 / w, y1 / h, x2 / w, y2 / h).ok()
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Andrew's monotone chain, counter-clockwise (in a y-up sense).
fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Sutherland-Hodgman clip of a convex polygon against [0,w]x[0,h].
fn clip_to_rect(poly: &[(f64, f64)], w: f64, h: f64) -> Vec<(f64, f64)> {
    // (axis, bound, keep_greater)
    let planes = [(0, 0.0, true), (0, w, false), (1, 0.0, true), (1, h, false)];
    let mut out = poly.to_vec();
    for (axis, bound, keep_greater) in planes {
        if out.is_empty() {
            break;
        }
        let coord = |p: (f64, f64)| if axis == 0 { p.0 } else { p.1 };
        let inside = |p: (f64, f64)| {
            if keep_greater {
                coord(p) >= bound
            } else {
                coord(p) <= bound
            }
        };
        let input = std::mem::take(&mut out);
        for i in 0..input.len() {
            let cur = input[i];
            let prev = input[(i + input.len() - 1) % input.len()];
            let (ci, pi) = (inside(cur), inside(prev));
            if ci != pi {
                let t = (bound - coord(prev)) / (coord(cur) - coord(prev));
                let x = prev.0 + (cur.0 - prev.0) * t;
                let y = prev.1 + (cur.1 - prev.1) * t;
                out.push(if axis == 0 { (bound, y) } else { (x, bound) });
            }
            if ci {
                out.push(cur);
            }
        }
    }
    out
}
