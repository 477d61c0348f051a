//! Newline-delimited JSON records (`.ndrec`): one object per line, fixed
//! field order.

use super::{ConjugateSample, FutureLabel, ObservedSequence, Sample};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::scene::{Detection, World};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub basestation: u8,
    pub camera: u32,
    pub user: u32,
    pub start_frame: u64,
    pub tau: u64,
    pub beams: Vec<usize>,
    pub detections: Vec<Vec<Detection>>,
    pub s: u8,
    pub window: Vec<u8>,
    pub blockage_instance: Option<u8>,
}

impl From<&Sample> for SampleRecord {
    fn from(s: &Sample) -> Self {
        let o = &s.observed;
        Self {
            basestation: o.basestation,
            camera: o.camera,
            user: o.user,
            start_frame: o.start_frame,
            tau: o.tau(),
            beams: o.beams.clone(),
            detections: o.detections.iter().map(|d| d.to_vec()).collect(),
            s: s.label.s,
            window: s.label.window.clone(),
            blockage_instance: s.label.blockage_instance,
        }
    }
}

impl SampleRecord {
    pub fn into_sample(self) -> std::result::Result<Sample, String> {
        if self.beams.len() != self.detections.len() || self.beams.is_empty() {
            return Err("beams and detections must have equal, nonzero length".into());
        }
        if self.tau != self.start_frame + self.beams.len() as u64 - 1 {
            return Err("tau inconsistent with start_frame".into());
        }
        let label = FutureLabel::from_window(&self.window);
        if label.s != self.s || label.blockage_instance != self.blockage_instance {
            return Err("label inconsistent with its window".into());
        }
        Ok(Sample {
            observed: ObservedSequence {
                basestation: self.basestation,
                camera: self.camera,
                user: self.user,
                start_frame: self.start_frame,
                detections: self.detections.into_iter().map(Arc::from).collect(),
                beams: self.beams,
            },
            label,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PairRecord {
    user: u32,
    tau: u64,
    serving: u8,
    category: u8,
    bs1: SampleRecord,
    bs2: SampleRecord,
}

/// Provenance written next to every dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub scenario_seed: u64,
    pub quota: usize,
    pub train_fraction: f64,
    pub observed: usize,
    pub future: usize,
    pub antennas: usize,
    pub beams: usize,
    pub carrier_hz: f64,
    pub spacing_wavelengths: f64,
    pub frames: usize,
    pub available: BTreeMap<String, usize>,
    pub train: BTreeMap<String, usize>,
    pub val: BTreeMap<String, usize>,
    pub pairs: BTreeMap<String, usize>,
}

fn write_lines<T: Serialize>(path: &Path, items: impl Iterator<Item = T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Record {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_samples(path: &Path, samples: &[Sample]) -> Result<()> {
    write_lines(path, samples.iter().map(SampleRecord::from))
}

pub fn read_samples(path: &Path) -> Result<Vec<Sample>> {
    read_lines::<SampleRecord>(path)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.into_sample().map_err(|msg| Error::Record {
                path: path.display().to_string(),
                line: i + 1,
                msg,
            })
        })
        .collect()
}

pub fn write_pairs(path: &Path, pairs: &[ConjugateSample]) -> Result<()> {
    write_lines(
        path,
        pairs.iter().map(|p| PairRecord {
            user: p.user,
            tau: p.tau,
            serving: p.serving,
            category: p.category,
            bs1: (&p.bs1).into(),
            bs2: (&p.bs2).into(),
        }),
    )
}

pub fn read_pairs(path: &Path) -> Result<Vec<ConjugateSample>> {
    let err = |line: usize, msg: String| Error::Record {
        path: path.display().to_string(),
        line,
        msg,
    };
    read_lines::<PairRecord>(path)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let bs1 = r.bs1.into_sample().map_err(|m| err(i + 1, m))?;
            let bs2 = r.bs2.into_sample().map_err(|m| err(i + 1, m))?;
            Ok(ConjugateSample {
                user: r.user,
                tau: r.tau,
                serving: r.serving,
                category: r.category,
                bs1,
                bs2,
            })
        })
        .collect()
}

/// A trace directory holds `scenario.toml` and `frames.ndrec` (one world per line).
pub fn write_trace(dir: &Path, cfg: &ScenarioConfig, frames: &[World]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("scenario.toml"), cfg.to_toml_string())?;
    write_lines(&dir.join("frames.ndrec"), frames.iter())
}

pub fn read_trace(dir: &Path) -> Result<(ScenarioConfig, Vec<World>)> {
    let cfg = ScenarioConfig::load(&dir.join("scenario.toml"))?;
    let frames = read_lines(&dir.join("frames.ndrec"))?;
    Ok((cfg, frames))
}
