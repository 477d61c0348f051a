use super::{
    adam_step, cross_entropy, sample_backward, sample_forward, AdamState, BeamProjection, GradBuffer, GruNet, Mode,
    Pass, Prediction, StepInput, Workspace,
};
use crate::dataset::Sample;
use crate::embedding::BeamEmbeddingTable;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Samples per gradient chunk. Chunks are reduced in order, so results do not
/// depend on the number of worker threads.
const CHUNK: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: usize,
    /// Common embedding length `N`.
    pub embed_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            embed_dim: 256,
            epochs: 100,
            batch_size: 200,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            dropout: 0.3,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.hidden == 0 || self.embed_dim == 0 || self.epochs == 0 || self.batch_size == 0 {
            return bad("hidden, embed_dim, epochs and batch_size must be positive");
        }
        if self.embed_dim < crate::embedding::BOX_FEATURES {
            return bad("embed_dim must hold at least one box");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("invalid Adam constants");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_top1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation top-1 (earliest on ties).
    pub best: GruNet,
    pub best_epoch: usize,
    pub history: Vec<EpochMetrics>,
}

pub fn encode_dataset(samples: &[Sample], mode: Mode, table: &BeamEmbeddingTable) -> Result<Vec<(Vec<StepInput>, u8)>> {
    samples
        .iter()
        .map(|s| Ok((super::encode(s, mode, table)?, s.label.s)))
        .collect()
}

/// Eval-mode predictions for every sample.
pub fn predict_all(net: &GruNet, table: &BeamEmbeddingTable, samples: &[Sample]) -> Result<Vec<Prediction>> {
    let encoded = encode_dataset(samples, net.mode, table)?;
    let (preds, _) = evaluate(net, table, &encoded)?;
    Ok(preds)
}

fn evaluate(
    net: &GruNet,
    table: &BeamEmbeddingTable,
    data: &[(Vec<StepInput>, u8)],
) -> Result<(Vec<Prediction>, f64)> {
    let proj = BeamProjection::new(net, table);
    let per_chunk: Vec<Result<Vec<(Prediction, f64)>>> = data
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut w = Workspace::default();
            chunk
                .iter()
                .map(|(inputs, label)| {
                    net.check_len(inputs)?;
                    let logits = sample_forward(net, inputs, &proj, None::<(f64, &mut ChaCha8Rng)>, &mut w)?;
                    let p = super::softmax2(logits);
                    Ok((
                        Prediction {
                            p_los: p[0],
                            p_nlos: p[1],
                        },
                        cross_entropy(logits, *label as usize),
                    ))
                })
                .collect()
        })
        .collect();
    let mut preds = Vec::with_capacity(data.len());
    let mut loss = 0.0;
    for chunk in per_chunk {
        for (p, l) in chunk? {
            preds.push(p);
            loss += l;
        }
    }
    Ok((preds, loss / data.len().max(1) as f64))
}

/// Trains a fresh network; the validation set selects the returned epoch.
pub fn train(
    mode: Mode,
    train_set: &[Sample],
    val_set: &[Sample],
    table: &BeamEmbeddingTable,
    observed: usize,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if table.dim != cfg.embed_dim {
        return Err(Error::DimensionMismatch {
            expected: cfg.embed_dim,
            actual: table.dim,
        });
    }
    let data = encode_dataset(train_set, mode, table)?;
    let val = encode_dataset(val_set, mode, table)?;
    let mut net = GruNet::new(mode, cfg.embed_dim, cfg.hidden, observed, cfg.seed);
    let mut adam = AdamState::new(net.layout.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = crate::util::rng_for(&[cfg.seed, 0x5A0F]);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let proj = BeamProjection::new(&net, table);
            let scale = 1.0 / batch.len() as f64;
            let parts: Vec<Result<(f64, GradBuffer)>> = batch
                .par_chunks(CHUNK)
                .map(|ids| {
                    let mut acc = GradBuffer::new(&net, table);
                    let mut w = Workspace::default();
                    let mut loss = 0.0;
                    for &id in ids {
                        let (inputs, label) = &data[id];
                        let mut rng = crate::util::rng_for(&[cfg.seed, epoch as u64, id as u64]);
                        let logits = sample_forward(&net, inputs, &proj, Some((cfg.dropout, &mut rng)), &mut w)?;
                        loss += cross_entropy(logits, *label as usize);
                        sample_backward(&net, inputs, logits, *label, scale, &mut w, &mut acc);
                    }
                    Ok((loss, acc))
                })
                .collect();
            let mut total: Option<GradBuffer> = None;
            for part in parts {
                let (loss, acc) = part?;
                epoch_loss += loss;
                match &mut total {
                    None => total = Some(acc),
                    Some(t) => t.add(&acc),
                }
            }
            let grads = total.expect("non-empty batch").finish(&net, table);
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch });
            }
            adam_step(
                &mut net.params,
                &grads,
                &mut adam,
                cfg.learning_rate,
                cfg.beta1,
                cfg.beta2,
                cfg.eps,
            )?;
        }
        let train_loss = epoch_loss / data.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let (val_top1, val_loss) = if val.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let (preds, loss) = evaluate(&net, table, &val)?;
            let hits = preds.iter().zip(&val).filter(|(p, (_, l))| p.status() == *l).count();
            (hits as f64 / val.len() as f64, loss)
        };
        log::debug!(
            "{} epoch {epoch}: train loss {train_loss:.4}, val loss {val_loss:.4}, val top-1 {val_top1:.4}",
            mode.name()
        );
        history.push(EpochMetrics {
            epoch,
            train_loss,
            val_loss,
            val_top1,
        });
        let score = if val.is_empty() { -train_loss } else { val_top1 };
        if best.as_ref().is_none_or(|b| score > b.0) {
            best = Some((score, epoch, net.params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    net.params = params;
    Ok(TrainOutcome {
        best: net,
        best_epoch,
        history,
    })
}

/// Convenience for one-off inference.
pub fn predict_one(net: &GruNet, table: &BeamEmbeddingTable, sample: &Sample) -> Result<Prediction> {
    let inputs = super::encode(sample, net.mode, table)?;
    net.forward(&inputs, table, Pass::<ChaCha8Rng>::Eval)
}
