use super::{
    balance_and_split, build_seed, conjugate_pairs, read_pairs, read_samples, window_sequences, write_pairs,
    write_samples, ConjugateSample, DatasetManifest, Sample, FUTURE, OBSERVED,
};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::scene::{basestations, World};
use rand::seq::index;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildOptions {
    /// Sequences drawn per label per camera.
    pub quota: usize,
    pub train_fraction: f64,
    pub seed: u64,
    /// Cap on conjugate pairs kept per handoff category.
    pub pairs_per_category: usize,
    /// Restrict conjugate pairs to these cameras; empty keeps all.
    pub pair_cameras: Vec<u32>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            quota: 300,
            train_fraction: 0.5,
            seed: 11,
            pairs_per_category: 250,
            pair_cameras: vec![3, 4],
        }
    }
}

#[derive(Debug, Clone)]
pub struct BuiltDataset {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub pairs: Vec<ConjugateSample>,
    pub manifest: DatasetManifest,
}

fn count_by<T>(items: &[T], key: impl Fn(&T) -> String) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for it in items {
        *m.entry(key(it)).or_default() += 1;
    }
    m
}

fn group_key(s: &Sample) -> String {
    format!("camera{}_s{}", s.observed.camera, s.label.s)
}

/// Windows every stream, balances and splits per camera, and draws conjugate
/// pairs from the sequences not used for training.
pub fn build_dataset(trace: &[World], cfg: &ScenarioConfig, opts: &BuildOptions) -> Result<BuiltDataset> {
    if trace.is_empty() {
        return Err(Error::EmptyInput("trace has no frames"));
    }
    let bss = basestations(cfg);
    let seed = build_seed(trace, &bss, cfg)?;
    let all: Vec<Sample> = seed
        .streams
        .iter()
        .flat_map(|s| window_sequences(s, OBSERVED, FUTURE))
        .collect();
    if all.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (train, val) = balance_and_split(&all, opts.quota, opts.train_fraction, opts.seed)?;
    let used: HashSet<(u8, u32, u64)> = train
        .samples
        .iter()
        .map(|s| (s.observed.basestation, s.observed.user, s.observed.tau()))
        .collect();
    let held_out = |bs: u8| -> Vec<Sample> {
        all.iter()
            .filter(|s| s.observed.basestation == bs)
            .filter(|s| !used.contains(&(bs, s.observed.user, s.observed.tau())))
            .cloned()
            .collect()
    };
    let cameras = (!opts.pair_cameras.is_empty()).then_some(opts.pair_cameras.as_slice());
    let candidates = conjugate_pairs(&held_out(1), &held_out(2), cameras);
    let pairs = cap_pairs(candidates, opts.pairs_per_category, opts.seed);

    let manifest = DatasetManifest {
        seed: opts.seed,
        scenario_seed: cfg.seed,
        quota: opts.quota,
        train_fraction: opts.train_fraction,
        observed: OBSERVED,
        future: FUTURE,
        antennas: cfg.phy.antennas,
        beams: cfg.phy.beams,
        carrier_hz: cfg.phy.carrier_hz,
        spacing_wavelengths: cfg.phy.spacing_wavelengths,
        frames: trace.len(),
        available: count_by(&all, group_key),
        train: count_by(&train.samples, group_key),
        val: count_by(&val.samples, group_key),
        pairs: count_by(&pairs, |p| format!("category{}", p.category)),
    };
    Ok(BuiltDataset {
        train: train.samples,
        val: val.samples,
        pairs,
        manifest,
    })
}

fn cap_pairs(candidates: Vec<ConjugateSample>, cap: usize, seed: u64) -> Vec<ConjugateSample> {
    let mut by_cat: BTreeMap<u8, Vec<ConjugateSample>> = BTreeMap::new();
    for p in candidates {
        by_cat.entry(p.category).or_default().push(p);
    }
    let mut out = Vec::new();
    for (cat, mut group) in by_cat {
        group.sort_by_key(|p| (p.user, p.tau));
        let mut rng = crate::util::rng_for(&[seed, 0xC0_u64, cat as u64]);
        let mut pick: Vec<usize> = index::sample(&mut rng, group.len(), cap.min(group.len())).into_vec();
        pick.sort_unstable();
        out.extend(pick.into_iter().map(|i| group[i].clone()));
    }
    out
}

/// Writes `train.ndrec`, `val.ndrec`, `pairs.ndrec` and `manifest.json`.
pub fn write_dataset(dir: &Path, ds: &BuiltDataset) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_samples(&dir.join("train.ndrec"), &ds.train)?;
    write_samples(&dir.join("val.ndrec"), &ds.val)?;
    write_pairs(&dir.join("pairs.ndrec"), &ds.pairs)?;
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&ds.manifest)? + "\n")?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<BuiltDataset> {
    let manifest: DatasetManifest = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
    Ok(BuiltDataset {
        train: read_samples(&dir.join("train.ndrec"))?,
        val: read_samples(&dir.join("val.ndrec"))?,
        pairs: read_pairs(&dir.join("pairs.ndrec"))?,
        manifest,
    })
}
