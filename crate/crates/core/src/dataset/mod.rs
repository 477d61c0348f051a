//! From simulated frames to balanced, labelled observation/label pairs.

mod build;
mod io;

pub use build::{build_dataset, read_dataset, write_dataset, BuildOptions, BuiltDataset};

pub use io::{
    read_pairs, read_samples, read_trace, write_pairs, write_samples, write_trace, DatasetManifest,
    SampleRecord,
};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::phy::{los_status, select_beam_from_paths, synthesize_paths, Codebook, LinkStatus, OfdmParams};
use crate::scene::{detect, project_object, Basestation, Detection, World};
use rand::seq::{index, SliceRandom};
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

/// Observation length.
pub const OBSERVED: usize = 8;
/// Future window length.
pub const FUTURE: usize = 5;

/// One (user, frame, camera) record: detections stand in for the image.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedTuple {
    pub user: u32,
    pub frame: u64,
    pub detections: Arc<[Detection]>,
    /// 1-based codebook index.
    pub beam: usize,
    pub status: LinkStatus,
    pub position: Vec3,
}

/// Consecutive frames of one user owned by one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedStream {
    pub basestation: u8,
    pub camera: u32,
    pub user: u32,
    pub tuples: Vec<SeedTuple>,
}

#[derive(Debug, Clone, Default)]
pub struct SeedDataset {
    pub streams: Vec<SeedStream>,
    /// Per basestation, users never seen by any of its cameras.
    pub skipped_users: BTreeMap<u8, usize>,
}

pub fn ofdm_params(cfg: &ScenarioConfig) -> OfdmParams {
    OfdmParams {
        subcarriers: cfg.phy.subcarriers,
        cyclic_prefix: cfg.phy.cyclic_prefix,
        sampling_time: cfg.phy.sampling_time,
    }
}

pub fn codebook(cfg: &ScenarioConfig) -> Result<Codebook> {
    Codebook::new(cfg.phy.antennas, cfg.phy.beams, cfg.phy.wavelength(), cfg.phy.spacing())
}

/// Builds per-user, per-camera tuple streams from a world trace.
///
/// A user's frame at a basestation belongs to the camera (of that basestation)
/// with the largest projected box of the user; frames where no camera sees
/// the user end the current stream.
pub fn build_seed(trace: &[World], basestations: &[Basestation], cfg: &ScenarioConfig) -> Result<SeedDataset> {
    let ofdm = ofdm_params(cfg);
    let cb = codebook(cfg)?;
    let mut open: BTreeMap<(u8, u32), SeedStream> = BTreeMap::new();
    let mut seen: BTreeMap<(u8, u32), bool> = BTreeMap::new();
    let mut out = SeedDataset::default();
    let mut dropped_paths = 0usize;

    for world in trace {
        for bs in basestations {
            let frames: Vec<(u32, Arc<[Detection]>)> = bs
                .cameras
                .iter()
                .map(|c| (c.id, detect(c, world, &cfg.detector, &cfg.occlusion).into()))
                .collect();
            for user in world.users() {
                let key = (bs.id, user.id);
                let owner = bs
                    .cameras
                    .iter()
                    .zip(&frames)
                    .filter_map(|(cam, frame)| project_object(cam, user).map(|b| (b.area(), frame)))
                    .fold(None::<(f64, &(u32, Arc<[Detection]>))>, |best, cur| match best {
                        Some(b) if b.0 >= cur.0 => Some(b),
                        _ => Some(cur),
                    });
                seen.entry(key).or_insert(false);
                let Some((_, (camera, dets))) = owner else {
                    if let Some(s) = open.remove(&key) {
                        out.streams.push(s);
                    }
                    continue;
                };
                seen.insert(key, true);
                let mut paths = synthesize_paths(bs, user, world, &cfg.phy);
                let before = paths.len();
                paths.retain(|p| p.delay < ofdm.max_delay());
                dropped_paths += before - paths.len();
                let tuple = SeedTuple {
                    user: user.id,
                    frame: world.frame,
                    detections: dets.clone(),
                    beam: select_beam_from_paths(&paths, &ofdm, &bs.ula, &cb)?,
                    status: los_status(bs, user, world),
                    position: user.center,
                };
                let continues = open
                    .get(&key)
                    .is_some_and(|s| s.camera == *camera && s.tuples.last().is_some_and(|t| t.frame + 1 == world.frame));
                if !continues {
                    if let Some(s) = open.remove(&key) {
                        out.streams.push(s);
                    }
                    open.insert(
                        key,
                        SeedStream {
                            basestation: bs.id,
                            camera: *camera,
                            user: user.id,
                            tuples: Vec::new(),
                        },
                    );
                }
                open.get_mut(&key).expect("stream just opened").tuples.push(tuple);
            }
        }
    }
    out.streams.extend(open.into_values());
    out.streams
        .sort_by_key(|s| (s.basestation, s.user, s.tuples.first().map(|t| t.frame)));
    for ((bs, _), visible) in seen {
        if !visible {
            *out.skipped_users.entry(bs).or_default() += 1;
        }
    }
    for (bs, n) in &out.skipped_users {
        log::info!("basestation {bs}: {n} users never visible, skipped");
    }
    if dropped_paths > 0 {
        log::warn!("{dropped_paths} paths exceeded the cyclic prefix and were dropped");
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservedSequence {
    pub basestation: u8,
    pub camera: u32,
    pub user: u32,
    pub start_frame: u64,
    pub detections: Vec<Arc<[Detection]>>,
    pub beams: Vec<usize>,
}

impl ObservedSequence {
    /// Last observed frame.
    pub fn tau(&self) -> u64 {
        self.start_frame + self.beams.len() as u64 - 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FutureLabel {
    /// 1 when the link is blocked at any future instant.
    pub s: u8,
    pub window: Vec<u8>,
    /// 1-based index of the first blocked future instant.
    pub blockage_instance: Option<u8>,
}

impl FutureLabel {
    pub fn from_window(window: &[u8]) -> Self {
        let first = window.iter().position(|&a| a == 1);
        Self {
            s: u8::from(first.is_some()),
            window: window.to_vec(),
            blockage_instance: first.map(|i| i as u8 + 1),
        }
    }

    pub fn is_pivotal(&self) -> bool {
        self.s == 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub observed: ObservedSequence,
    pub label: FutureLabel,
}

impl Sample {
    pub fn key(&self) -> (u32, u64) {
        (self.observed.user, self.observed.tau())
    }
}

/// Stride-1 windows of `observed + future` tuples; the first `observed`
/// tuples form the input and the last `future` link statuses the label.
pub fn window_sequences(stream: &SeedStream, observed: usize, future: usize) -> Vec<Sample> {
    let span = observed + future;
    if stream.tuples.len() < span || observed == 0 {
        return Vec::new();
    }
    stream
        .tuples
        .windows(span)
        .map(|w| {
            let (obs, fut) = w.split_at(observed);
            let statuses: Vec<u8> = fut.iter().map(|t| t.status.bit()).collect();
            Sample {
                observed: ObservedSequence {
                    basestation: stream.basestation,
                    camera: stream.camera,
                    user: stream.user,
                    start_frame: obs[0].frame,
                    detections: obs.iter().map(|t| t.detections.clone()).collect(),
                    beams: obs.iter().map(|t| t.beam).collect(),
                },
                label: FutureLabel::from_window(&statuses),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub split: Split,
    pub samples: Vec<Sample>,
}

/// Per camera, draws up to `quota` pivotal and `quota` non-pivotal samples
/// without replacement, then splits each (camera, label) group so that
/// `round(n * train_fraction)` go to training.
pub fn balance_and_split(
    samples: &[Sample],
    quota: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no sequences to balance"));
    }
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::InvalidParameter("split fraction must lie in [0,1]".into()));
    }
    let mut groups: BTreeMap<(u32, u8), Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        groups.entry((s.observed.camera, s.label.s)).or_default().push(i);
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for ((camera, label), members) in groups {
        let mut rng = crate::util::rng_for(&[seed, camera as u64, label as u64]);
        let take = quota.min(members.len());
        if take < quota {
            log::warn!(
                "camera {camera}, label {label}: only {} sequences available for quota {quota}",
                members.len()
            );
        }
        let mut chosen: Vec<usize> = index::sample(&mut rng, members.len(), take)
            .into_iter()
            .map(|i| members[i])
            .collect();
        chosen.sort_unstable();
        chosen.shuffle(&mut rng);
        let n_train = (take as f64 * train_fraction).round() as usize;
        train.extend(chosen[..n_train].iter().map(|&i| samples[i].clone()));
        val.extend(chosen[n_train..].iter().map(|&i| samples[i].clone()));
    }
    Ok((
        LabeledDataset {
            split: Split::Train,
            samples: train,
        },
        LabeledDataset {
            split: Split::Val,
            samples: val,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateSample {
    pub user: u32,
    pub tau: u64,
    /// Basestation whose future link is blocked and which serves the user.
    pub serving: u8,
    /// 1: handoff 1 -> 2 needed, 2: handoff 2 -> 1 needed.
    pub category: u8,
    pub bs1: Sample,
    pub bs2: Sample,
}

/// Same-user, same-time sequence pairs whose future link statuses differ
/// between the two basestations. `cameras`, when given, restricts both sides
/// to those camera ids.
pub fn conjugate_pairs(bs1: &[Sample], bs2: &[Sample], cameras: Option<&[u32]>) -> Vec<ConjugateSample> {
    let allowed = |s: &Sample| cameras.is_none_or(|c| c.contains(&s.observed.camera));
    let index: HashMap<(u32, u64), &Sample> = bs2.iter().filter(|s| allowed(s)).map(|s| (s.key(), s)).collect();
    bs1.iter()
        .filter(|s| allowed(s))
        .filter_map(|a| {
            let b = index.get(&a.key())?;
            if a.label.s == b.label.s {
                return None;
            }
            let serving = if a.label.s == 1 { 1 } else { 2 };
            Some(ConjugateSample {
                user: a.observed.user,
                tau: a.observed.tau(),
                serving,
                category: serving,
                bs1: a.clone(),
                bs2: (*b).clone(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{basestations, SceneObject, Street, VehicleClass};

    fn stream(statuses: &[u8]) -> SeedStream {
        SeedStream {
            basestation: 1,
            camera: 2,
            user: 9,
            tuples: statuses
                .iter()
                .enumerate()
                .map(|(i, &a)| SeedTuple {
                    user: 9,
                    frame: 100 + i as u64,
                    detections: Arc::from(Vec::new()),
                    beam: 1 + i,
                    status: LinkStatus::from_bit(a),
                    position: Vec3::default(),
                })
                .collect(),
        }
    }

    #[test]
    fn thirteen_tuples_make_one_window() {
        let w = window_sequences(&stream(&[0; 13]), OBSERVED, FUTURE);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].label.s, 0);
        assert_eq!(w[0].observed.beams, (1..=8).collect::<Vec<_>>());
        assert_eq!(w[0].observed.tau(), 107);
        assert!(window_sequences(&stream(&[0; 12]), OBSERVED, FUTURE).is_empty());
        assert_eq!(window_sequences(&stream(&[0; 20]), OBSERVED, FUTURE).len(), 8);
    }

    #[test]
    fn label_uses_only_future_statuses() {
        let mut st = vec![1u8; 8];
        st.extend([0, 0, 0, 1, 0]);
        let w = window_sequences(&stream(&st), OBSERVED, FUTURE);
        assert_eq!(w[0].label.s, 1);
        assert_eq!(w[0].label.blockage_instance, Some(4));
        let mut st = vec![1u8; 8];
        st.extend([0; 5]);
        assert_eq!(window_sequences(&stream(&st), OBSERVED, FUTURE)[0].label.s, 0);
    }

    #[test]
    fn zero_quota_gives_empty_sets() {
        let w = window_sequences(&stream(&[0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0]), 8, 5);
        let (tr, va) = balance_and_split(&w, 0, 0.5, 1).unwrap();
        assert!(tr.samples.is_empty() && va.samples.is_empty());
        assert!(balance_and_split(&[], 5, 0.5, 1).is_err());
    }

    #[test]
    fn conjugate_categories() {
        let a = window_sequences(&stream(&[0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0]), 8, 5);
        let b = window_sequences(&stream(&[0; 13]), 8, 5);
        let pairs = conjugate_pairs(&a, &b, None);
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].serving, pairs[0].category), (1, 1));
        let pairs = conjugate_pairs(&b, &a, None);
        assert_eq!(pairs[0].category, 2);
        assert!(conjugate_pairs(&b, &b, None).is_empty());
        assert!(conjugate_pairs(&a, &b, Some(&[5])).is_empty());
    }

    fn car(id: u32, x: f64, y: f64) -> SceneObject {
        let dims = VehicleClass::Car.dims();
        SceneObject {
            id,
            class: VehicleClass::Car,
            center: Vec3::new(x, y, dims.z / 2.0),
            dims,
            velocity: Vec3::default(),
            lane: 0,
        }
    }

    #[test]
    fn unobstructed_user_gets_los_tuple() {
        let cfg = ScenarioConfig::default();
        let bs = basestations(&cfg);
        let world = World {
            street: Street::from_config(&cfg),
            objects: vec![car(0, -30.0, 1.75)],
            frame: 0,
            time: 0.0,
        };
        let seed = build_seed(&[world], &bs[..1], &cfg).unwrap();
        assert_eq!(seed.streams.len(), 1);
        assert_eq!(seed.streams[0].tuples[0].status, LinkStatus::Los);
        assert!(seed.skipped_users.is_empty());
    }

    #[test]
    fn user_behind_parked_bus_is_always_nlos() {
        let cfg = ScenarioConfig::default();
        let bs = basestations(&cfg);
        let user = car(0, -30.0, 8.75);
        let mid = (bs[0].position + user.antenna_point()) * 0.5;
        let bus_dims = VehicleClass::Bus.dims();
        let bus = SceneObject {
            id: 1,
            class: VehicleClass::Bus,
            center: Vec3::new(mid.x, mid.y, bus_dims.z / 2.0),
            dims: bus_dims,
            velocity: Vec3::default(),
            lane: 0,
        };
        let trace: Vec<World> = (0..15)
            .map(|f| World {
                street: Street::from_config(&cfg),
                objects: vec![user.clone(), bus.clone()],
                frame: f,
                time: f as f64 * 0.1,
            })
            .collect();
        let seed = build_seed(&trace, &bs[..1], &cfg).unwrap();
        let tuples: Vec<&SeedTuple> = seed.streams.iter().flat_map(|s| &s.tuples).collect();
        assert_eq!(tuples.len(), 15);
        assert!(tuples.iter().all(|t| t.status == LinkStatus::Nlos));
    }
}
