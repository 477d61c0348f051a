//! Scenario configuration, read from TOML.
//!
//! Every field has a default, so an empty file describes the reference street:
//! six lanes, 200 m long, 50 cars / 8 buses / 2 trucks, two 28 GHz
//! basestations 80 m apart on opposite kerbs with antennas 4.5 m up.

use crate::error::{Error, Result};
use crate::scene::DetectorNoiseModel;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Frame period in seconds.
    pub frame_period: f64,
    pub street: StreetConfig,
    pub vehicles: VehicleConfig,
    pub basestations: BasestationConfig,
    pub cameras: CameraConfig,
    pub phy: PhyConfig,
    pub detector: DetectorNoiseModel,
    pub occlusion: OcclusionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreetConfig {
    pub length: f64,
    pub lanes: u32,
    pub lane_width: f64,
    /// Distance of the building facades from the street axis (reflecting walls).
    pub wall_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleConfig {
    pub cars: u32,
    pub buses: u32,
    pub trucks: u32,
    pub speed_min: f64,
    pub speed_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasestationConfig {
    /// Straight-line distance between the two antenna positions.
    pub separation: f64,
    pub height: f64,
    /// Lateral distance of each mast from the street axis.
    pub kerb_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub hfov_deg: f64,
    pub vfov_deg: f64,
    pub width: u32,
    pub height: u32,
    pub pitch_deg: f64,
    /// Yaw offset of the two side cameras from the central one.
    pub side_yaw_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhyConfig {
    pub carrier_hz: f64,
    pub antennas: usize,
    pub beams: usize,
    pub subcarriers: usize,
    pub cyclic_prefix: usize,
    pub sampling_time: f64,
    /// Element spacing in wavelengths.
    pub spacing_wavelengths: f64,
    pub reflection_loss_db: f64,
    pub tx_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcclusionConfig {
    pub visibility_threshold: f64,
    pub grid: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            frame_period: 0.1,
            street: StreetConfig::default(),
            vehicles: VehicleConfig::default(),
            basestations: BasestationConfig::default(),
            cameras: CameraConfig::default(),
            phy: PhyConfig::default(),
            detector: DetectorNoiseModel::default(),
            occlusion: OcclusionConfig::default(),
        }
    }
}

impl Default for StreetConfig {
    fn default() -> Self {
        Self {
            length: 200.0,
            lanes: 6,
            lane_width: 3.5,
            wall_offset: 20.0,
        }
    }
}

impl Default for VehicleConfig {
    fn default() -> Self {
        Self {
            cars: 50,
            buses: 8,
            trucks: 2,
            speed_min: 5.0,
            speed_max: 15.0,
        }
    }
}

impl Default for BasestationConfig {
    fn default() -> Self {
        Self {
            separation: 80.0,
            height: 4.5,
            kerb_offset: 12.0,
        }
    }
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            hfov_deg: 70.0,
            vfov_deg: 54.0,
            width: 640,
            height: 480,
            pitch_deg: -8.0,
            side_yaw_deg: 60.0,
        }
    }
}

impl Default for PhyConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 28.0e9,
            antennas: 32,
            beams: 64,
            subcarriers: 64,
            cyclic_prefix: 16,
            sampling_time: 5.0e-8,
            spacing_wavelengths: 0.5,
            reflection_loss_db: 10.0,
            tx_power: 1.0,
        }
    }
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        Self {
            visibility_threshold: 0.3,
            grid: 64,
        }
    }
}

impl PhyConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn spacing(&self) -> f64 {
        self.spacing_wavelengths * self.wavelength()
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.frame_period > 0.0) {
            return bad("frame_period must be > 0");
        }
        if !(self.street.length > 0.0) || self.street.lanes == 0 || !(self.street.lane_width > 0.0) {
            return bad("street length, lanes and lane_width must be positive");
        }
        if self.street.wall_offset <= self.street.lanes as f64 * self.street.lane_width / 2.0 {
            return bad("wall_offset must lie outside the carriageway");
        }
        if !(self.vehicles.speed_min >= 0.0 && self.vehicles.speed_max >= self.vehicles.speed_min) {
            return bad("vehicle speeds must satisfy 0 <= speed_min <= speed_max");
        }
        let b = &self.basestations;
        if !(b.height > 0.0) || !(b.kerb_offset > 0.0) || !(b.separation > 2.0 * b.kerb_offset) {
            return bad("basestation separation must exceed twice the kerb offset");
        }
        let c = &self.cameras;
        for fov in [c.hfov_deg, c.vfov_deg] {
            if !(fov > 0.0 && fov < 180.0) {
                return bad("camera fields of view must lie in (0, 180) degrees");
            }
        }
        if c.width == 0 || c.height == 0 {
            return bad("image size must be positive");
        }
        let p = &self.phy;
        if p.antennas == 0 || p.beams == 0 || p.subcarriers == 0 || p.cyclic_prefix == 0 {
            return bad("antennas, beams, subcarriers and cyclic_prefix must be >= 1");
        }
        if !(p.carrier_hz > 0.0) || !(p.sampling_time > 0.0) || !(p.spacing_wavelengths > 0.0) {
            return bad("carrier, sampling time and spacing must be positive");
        }
        self.detector.validate()?;
        if !(0.0..=1.0).contains(&self.occlusion.visibility_threshold) || self.occlusion.grid == 0 {
            return bad("visibility_threshold must lie in [0,1] and grid >= 1");
        }
        if self.occlusion.grid > 64 {
            return bad("occlusion grid is limited to 64 cells per side");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.vehicles.cars + cfg.vehicles.buses + cfg.vehicles.trucks, 60);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = ScenarioConfig::default();
        cfg.vehicles.cars = 7;
        cfg.detector.p_miss = 0.25;
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ScenarioConfig::from_toml_str("bogus = 1").is_err());
        assert!(ScenarioConfig::from_toml_str("frame_period = 0.0").is_err());
        assert!(ScenarioConfig::from_toml_str("[cameras]\nhfov_deg = 180.0").is_err());
        assert!(ScenarioConfig::from_toml_str("[detector]\np_miss = 1.5").is_err());
    }
}
