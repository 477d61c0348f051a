use super::{ChannelPath, Complex64};
use crate::config::{PhyConfig, SPEED_OF_LIGHT};
use crate::geom::Vec3;
use crate::scene::{Basestation, SceneObject, World};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkStatus {
    Los,
    Nlos,
}

impl LinkStatus {
    /// 0 for LOS, 1 for NLOS.
    pub fn bit(self) -> u8 {
        match self {
            LinkStatus::Los => 0,
            LinkStatus::Nlos => 1,
        }
    }

    pub fn from_bit(bit: u8) -> Self {
        if bit == 0 {
            LinkStatus::Los
        } else {
            LinkStatus::Nlos
        }
    }
}

/// NLOS iff the segment from the basestation antenna to the user's roof point
/// touches the box of any other object.
pub fn los_status(bs: &Basestation, user: &SceneObject, world: &World) -> LinkStatus {
    let (a, b) = (bs.position, user.antenna_point());
    let blocked = world
        .objects
        .iter()
        .any(|o| o.id != user.id && o.aabb().intersects_segment(a, b));
    if blocked {
        LinkStatus::Nlos
    } else {
        LinkStatus::Los
    }
}

fn free_space_path(from: Vec3, to: Vec3, wavelength: f64, extra_loss_db: f64) -> ChannelPath {
    let d = to - from;
    let length = d.norm();
    let amp = wavelength / (4.0 * PI * length) * 10f64.powf(-extra_loss_db / 20.0);
    ChannelPath {
        gain: Complex64::from_polar(amp, -2.0 * PI * length / wavelength),
        delay: length / SPEED_OF_LIGHT,
        azimuth: d.y.atan2(d.x),
        elevation: d.z.atan2(d.x.hypot(d.y)),
    }
}

/// Direct path (LOS only) plus one specular bounce off each building facade.
///
/// Facades are the vertical planes `y = +-wall_offset`. A bounce is modelled
/// by its image source: the user mirrored in the facade. Angles are those of
/// the departure direction at the basestation.
pub fn synthesize_paths(bs: &Basestation, user: &SceneObject, world: &World, phy: &PhyConfig) -> Vec<ChannelPath> {
    let wavelength = phy.wavelength();
    let target = user.antenna_point();
    let mut paths = Vec::with_capacity(3);
    if los_status(bs, user, world) == LinkStatus::Los {
        paths.push(free_space_path(bs.position, target, wavelength, 0.0));
    }
    for wall in [world.street.wall_offset, -world.street.wall_offset] {
        let image = Vec3::new(target.x, 2.0 * wall - target.y, target.z);
        paths.push(free_space_path(bs.position, image, wavelength, phy.reflection_loss_db));
    }
    paths
}
