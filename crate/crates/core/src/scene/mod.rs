//! Procedural street world: vehicles, basestations with their cameras, and
//! occlusion-aware synthetic detections standing in for camera frames.

mod camera;
mod detect;

pub use camera::{project_object, Camera, CameraProjection, NEAR_PLANE};
pub use detect::{detect, occlusion_fractions, BBox, Detection, DetectorNoiseModel};

use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::geom::{Aabb, Vec3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VehicleClass {
    Car,
    Bus,
    Truck,
}

impl VehicleClass {
    pub const ALL: [VehicleClass; 3] = [VehicleClass::Car, VehicleClass::Bus, VehicleClass::Truck];

    /// Length, width, height in metres.
    pub fn dims(self) -> Vec3 {
        match self {
            VehicleClass::Car => Vec3::new(4.5, 1.8, 1.5),
            VehicleClass::Bus => Vec3::new(12.0, 2.5, 3.2),
            VehicleClass::Truck => Vec3::new(10.0, 2.5, 3.6),
        }
    }

    pub fn role(self) -> Role {
        match self {
            VehicleClass::Car => Role::PotentialUser,
            VehicleClass::Bus | VehicleClass::Truck => Role::PotentialBlocker,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    PotentialUser,
    PotentialBlocker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: u32,
    pub class: VehicleClass,
    pub center: Vec3,
    /// Length (along the street), width, height.
    pub dims: Vec3,
    pub velocity: Vec3,
    pub lane: u32,
}

impl SceneObject {
    pub fn aabb(&self) -> Aabb {
        Aabb::from_center(self.center, self.dims)
    }

    /// Roof-centre point where the user's antenna sits.
    pub fn antenna_point(&self) -> Vec3 {
        self.center + Vec3::new(0.0, 0.0, self.dims.z / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Street {
    pub x_min: f64,
    pub length: f64,
    pub lanes: u32,
    pub lane_width: f64,
    pub wall_offset: f64,
}

impl Street {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            x_min: -cfg.street.length / 2.0,
            length: cfg.street.length,
            lanes: cfg.street.lanes,
            lane_width: cfg.street.lane_width,
            wall_offset: cfg.street.wall_offset,
        }
    }

    pub fn lane_center(&self, lane: u32) -> f64 {
        (lane as f64 - (self.lanes as f64 - 1.0) / 2.0) * self.lane_width
    }

    /// Lanes south of the axis travel towards +x, the others towards -x.
    pub fn lane_direction(&self, lane: u32) -> f64 {
        if self.lane_center(lane) < 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn wrap_x(&self, x: f64) -> f64 {
        self.x_min + (x - self.x_min).rem_euclid(self.length)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub street: Street,
    pub objects: Vec<SceneObject>,
    pub frame: u64,
    pub time: f64,
}

impl World {
    /// Places the configured vehicle mix at random positions, lanes and speeds.
    pub fn generate(cfg: &ScenarioConfig) -> Self {
        let street = Street::from_config(cfg);
        let mut rng = crate::util::rng_for(&[cfg.seed, 0x5CE4E]);
        let v = &cfg.vehicles;
        let classes = std::iter::repeat_n(VehicleClass::Car, v.cars as usize)
            .chain(std::iter::repeat_n(VehicleClass::Bus, v.buses as usize))
            .chain(std::iter::repeat_n(VehicleClass::Truck, v.trucks as usize));
        let objects = classes
            .enumerate()
            .map(|(id, class)| {
                let lane = rng.random_range(0..street.lanes);
                let x = street.x_min + rng.random::<f64>() * street.length;
                let speed = v.speed_min + rng.random::<f64>() * (v.speed_max - v.speed_min);
                let dims = class.dims();
                SceneObject {
                    id: id as u32,
                    class,
                    center: Vec3::new(x, street.lane_center(lane), dims.z / 2.0),
                    dims,
                    velocity: Vec3::new(street.lane_direction(lane) * speed, 0.0, 0.0),
                    lane,
                }
            })
            .collect();
        World {
            street,
            objects,
            frame: 0,
            time: 0.0,
        }
    }

    pub fn object(&self, id: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn users(&self) -> impl Iterator<Item = &SceneObject> {
        self.objects
            .iter()
            .filter(|o| o.class.role() == Role::PotentialUser)
    }
}

/// Advances every object by `velocity * dt`; objects leaving the street re-enter
/// at the opposite end.
pub fn step_world(world: &World, dt: f64) -> World {
    assert!(dt > 0.0, "dt must be positive");
    let mut next = world.clone();
    for obj in &mut next.objects {
        let moved = obj.center + obj.velocity * dt;
        obj.center = Vec3::new(next.street.wrap_x(moved.x), moved.y, moved.z);
    }
    next.frame += 1;
    next.time += dt;
    next
}

/// `frames` consecutive snapshots starting from the seeded initial world.
pub fn simulate(cfg: &ScenarioConfig, frames: usize) -> Result<Vec<World>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(frames);
    let mut world = World::generate(cfg);
    for _ in 0..frames {
        let next = step_world(&world, cfg.frame_period);
        out.push(world);
        world = next;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ula {
    pub elements: usize,
    pub spacing: f64,
    pub wavelength: f64,
    /// Azimuth of the array's broadside direction.
    pub boresight: f64,
}

impl Ula {
    /// Azimuth of the array axis; element m sits at `m * spacing` along it.
    pub fn axis_azimuth(&self) -> f64 {
        self.boresight - FRAC_PI_2
    }

    /// Cosine of the angle between the array axis and a direction given by
    /// azimuth and elevation.
    pub fn axis_cosine(&self, azimuth: f64, elevation: f64) -> f64 {
        elevation.cos() * (azimuth - self.axis_azimuth()).cos()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Basestation {
    pub id: u8,
    pub position: Vec3,
    pub ula: Ula,
    pub cameras: Vec<Camera>,
}

/// The two basestations on opposite kerbs, `separation` apart, each with a
/// left, central and right camera.
pub fn basestations(cfg: &ScenarioConfig) -> Vec<Basestation> {
    let b = &cfg.basestations;
    let lateral = 2.0 * b.kerb_offset;
    let dx = (b.separation * b.separation - lateral * lateral).sqrt();
    let specs = [
        (1u8, Vec3::new(-dx / 2.0, -b.kerb_offset, b.height), FRAC_PI_2),
        (2u8, Vec3::new(dx / 2.0, b.kerb_offset, b.height), -FRAC_PI_2),
    ];
    let cam = &cfg.cameras;
    let side = cam.side_yaw_deg.to_radians();
    // Cameras 1 and 4 look towards -x, 3 and 6 towards +x, so 3 and 4 both
    // cover the stretch between the masts.
    specs
        .into_iter()
        .map(|(id, position, boresight)| {
            let offsets = if id == 1 { [side, 0.0, -side] } else { [-side, 0.0, side] };
            let cameras = offsets
                .into_iter()
                .enumerate()
                .map(|(k, offset)| Camera {
                    id: (id as u32 - 1) * 3 + k as u32 + 1,
                    position,
                    yaw: boresight + offset,
                    pitch: cam.pitch_deg.to_radians(),
                    hfov: cam.hfov_deg.to_radians(),
                    vfov: cam.vfov_deg.to_radians(),
                    width: cam.width,
                    height: cam.height,
                })
                .collect();
            Basestation {
                id,
                position,
                ula: Ula {
                    elements: cfg.phy.antennas,
                    spacing: cfg.phy.spacing(),
                    wavelength: cfg.phy.wavelength(),
                    boresight,
                },
                cameras,
            }
        })
        .collect()
}
