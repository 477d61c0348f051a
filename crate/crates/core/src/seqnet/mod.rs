//! Two-layer GRU link-status predictor with inter-layer dropout and a linear
//! two-class head, trained from scratch with cross-entropy, BPTT and Adam.

mod adam;
mod checkpoint;
mod gru;
mod train;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use gru::{gru_cell, LayerParams};
pub use train::{encode_dataset, predict_all, predict_one, train, EpochMetrics, TrainConfig, TrainOutcome};

use crate::dataset::Sample;
use crate::embedding::{embed_bboxes, BeamEmbeddingTable};
use crate::error::{Error, Result};
use gru::{axpy, dot, layer_backward, layer_forward, LayerTrace};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::ops::Range;

pub const CLASSES: usize = 2;
pub const LAYERS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// `d[t-r+1..t]` followed by `b[t-r+1..t]`.
    Bimodal,
    /// `b[t-r+1..t]` only.
    BeamOnly,
}

impl Mode {
    pub fn steps(self, observed: usize) -> usize {
        match self {
            Mode::Bimodal => 2 * observed,
            Mode::BeamOnly => observed,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Bimodal => "bimodal",
            Mode::BeamOnly => "beam-only",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bimodal" => Ok(Mode::Bimodal),
            "beam-only" => Ok(Mode::BeamOnly),
            other => Err(Error::InvalidParameter(format!("unknown mode `{other}`"))),
        }
    }
}

/// One element of the recurrent input sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum StepInput {
    Dense(Vec<f64>),
    /// Nonzero entries `(index, value)` of an otherwise zero vector.
    Sparse(Vec<(u32, f64)>),
    /// 1-based beam index, looked up in the embedding table.
    Beam(usize),
}

impl StepInput {
    pub fn sparse_from(dense: &[f64]) -> Self {
        StepInput::Sparse(
            dense
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| (i as u32, v))
                .collect(),
        )
    }
}

/// Embeds a sample into its recurrent input sequence.
pub fn encode(sample: &Sample, mode: Mode, table: &BeamEmbeddingTable) -> Result<Vec<StepInput>> {
    let o = &sample.observed;
    let mut steps = Vec::with_capacity(mode.steps(o.beams.len()));
    if mode == Mode::Bimodal {
        for dets in &o.detections {
            steps.push(StepInput::sparse_from(&embed_bboxes(dets, table.dim)));
        }
    }
    for &b in &o.beams {
        table.embed(b)?;
        steps.push(StepInput::Beam(b));
    }
    Ok(steps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerOffsets {
    w_in: usize,
    w_hh: usize,
    b_in: usize,
    b_hh: usize,
    in_dim: usize,
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub input: usize,
    pub hidden: usize,
    layers: [LayerOffsets; LAYERS],
    w_out: usize,
    b_out: usize,
    total: usize,
}

impl Layout {
    pub fn new(input: usize, hidden: usize) -> Self {
        let g = 3 * hidden;
        let mut at = 0;
        let mut layer = |in_dim: usize| {
            let o = LayerOffsets {
                w_in: at,
                w_hh: at + in_dim * g,
                b_in: at + in_dim * g + hidden * g,
                b_hh: at + in_dim * g + hidden * g + g,
                in_dim,
            };
            at = o.b_hh + g;
            o
        };
        let layers = [layer(input), layer(hidden)];
        let w_out = at;
        let b_out = w_out + hidden * CLASSES;
        Self {
            input,
            hidden,
            layers,
            w_out,
            b_out,
            total: b_out + CLASSES,
        }
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Named ranges of every tensor, for reporting.
    pub fn tensors(&self) -> Vec<(String, Range<usize>)> {
        let g = 3 * self.hidden;
        let mut out = Vec::new();
        for (l, o) in self.layers.iter().enumerate() {
            out.push((format!("gru{l}.w_in"), o.w_in..o.w_hh));
            out.push((format!("gru{l}.w_hh"), o.w_hh..o.b_in));
            out.push((format!("gru{l}.b_in"), o.b_in..o.b_in + g));
            out.push((format!("gru{l}.b_hh"), o.b_hh..o.b_hh + g));
        }
        out.push(("head.w".into(), self.w_out..self.b_out));
        out.push(("head.b".into(), self.b_out..self.total));
        out
    }

    fn layer<'a>(&self, params: &'a [f64], l: usize) -> LayerParams<'a> {
        let o = self.layers[l];
        let g = 3 * self.hidden;
        LayerParams {
            w_in: &params[o.w_in..o.w_hh],
            w_hh: &params[o.w_hh..o.b_in],
            b_in: &params[o.b_in..o.b_in + g],
            b_hh: &params[o.b_hh..o.b_hh + g],
            in_dim: o.in_dim,
            hidden: self.hidden,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub p_los: f64,
    pub p_nlos: f64,
}

impl Prediction {
    /// Predicted future link status; LOS on an exact tie.
    pub fn status(&self) -> u8 {
        u8::from(self.p_nlos > self.p_los)
    }
}

fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
    let s = e[0] + e[1];
    [e[0] / s, e[1] / s]
}

/// Mean two-class cross-entropy from logits.
pub(crate) fn cross_entropy(logits: [f64; 2], label: usize) -> f64 {
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    lse - logits[label]
}

/// Parameters plus the fixed architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct GruNet {
    pub mode: Mode,
    pub observed: usize,
    pub layout: Layout,
    pub params: Vec<f64>,
}

/// Dropout behaviour of a forward pass.
pub enum Pass<'a, R: Rng> {
    Eval,
    Train { dropout: f64, rng: &'a mut R },
}

impl GruNet {
    /// Weights uniform in `+-1/sqrt(fan_in)`; biases use the hidden size as fan-in.
    pub fn new(mode: Mode, input: usize, hidden: usize, observed: usize, seed: u64) -> Self {
        let layout = Layout::new(input, hidden);
        let mut params = vec![0.0; layout.len()];
        let mut rng = crate::util::rng_for(&[seed, 0x1417]);
        let bias_bound = 1.0 / (hidden as f64).sqrt();
        for (name, range) in layout.tensors() {
            let bound = match name.as_str() {
                "gru0.w_in" => 1.0 / (input as f64).sqrt(),
                _ => bias_bound,
            };
            for p in &mut params[range] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Self {
            mode,
            observed,
            layout,
            params,
        }
    }

    pub fn steps(&self) -> usize {
        self.mode.steps(self.observed)
    }

    fn check_len(&self, inputs: &[StepInput]) -> Result<()> {
        if inputs.len() != self.steps() {
            return Err(Error::InvalidParameter(format!(
                "{} model expects {} inputs, got {}",
                self.mode.name(),
                self.steps(),
                inputs.len()
            )));
        }
        Ok(())
    }

    /// Class probabilities for one encoded sequence.
    pub fn forward<R: Rng>(
        &self,
        inputs: &[StepInput],
        table: &BeamEmbeddingTable,
        pass: Pass<'_, R>,
    ) -> Result<Prediction> {
        self.check_len(inputs)?;
        if table.dim != self.layout.input {
            return Err(Error::DimensionMismatch {
                expected: self.layout.input,
                actual: table.dim,
            });
        }
        let proj = BeamProjection::new(self, table);
        let mut work = Workspace::default();
        let logits = match pass {
            Pass::Eval => sample_forward(self, inputs, &proj, None::<(f64, &mut R)>, &mut work)?,
            Pass::Train { dropout, rng } => sample_forward(self, inputs, &proj, Some((dropout, rng)), &mut work)?,
        };
        let p = softmax2(logits);
        Ok(Prediction {
            p_los: p[0],
            p_nlos: p[1],
        })
    }

    /// Mean cross-entropy over the batch and its gradient w.r.t. every parameter.
    /// Dropout is applied when `dropout` is given with a per-sample seed.
    pub fn loss_and_grads(
        &self,
        batch: &[(&[StepInput], u8)],
        table: &BeamEmbeddingTable,
        dropout: Option<(f64, u64)>,
    ) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("batch"));
        }
        let proj = BeamProjection::new(self, table);
        let mut acc = GradBuffer::new(self, table);
        let mut work = Workspace::default();
        let mut loss = 0.0;
        for (i, (inputs, label)) in batch.iter().enumerate() {
            self.check_len(inputs)?;
            let mut rng = crate::util::rng_for(&[dropout.map_or(0, |d| d.1), i as u64]);
            let mask = dropout.map(|d| (d.0, &mut rng));
            let logits = sample_forward(self, inputs, &proj, mask, &mut work)?;
            loss += cross_entropy(logits, *label as usize);
            sample_backward(self, inputs, logits, *label, 1.0, &mut work, &mut acc);
        }
        let mut grads = acc.finish(self, table);
        let scale = 1.0 / batch.len() as f64;
        grads.iter_mut().for_each(|g| *g *= scale);
        Ok((loss * scale, grads))
    }
}

/// Layer-1 input projections of every beam embedding: `b_in + W_in^T e_q`.
pub(crate) struct BeamProjection {
    data: Vec<f64>,
    width: usize,
}

impl BeamProjection {
    pub(crate) fn new(net: &GruNet, table: &BeamEmbeddingTable) -> Self {
        let p = net.layout.layer(&net.params, 0);
        let width = 3 * p.hidden;
        let mut data = vec![0.0; table.beams * width];
        for (q, row) in data.chunks_exact_mut(width).enumerate() {
            let e = &table.as_slice()[q * table.dim..(q + 1) * table.dim];
            p.project_input(e, row);
        }
        Self { data, width }
    }

    fn get(&self, beam: usize) -> &[f64] {
        &self.data[(beam - 1) * self.width..beam * self.width]
    }
}

/// Per-sample scratch buffers reused across a batch.
#[derive(Default)]
pub(crate) struct Workspace {
    gx1: Vec<f64>,
    t1: LayerTrace,
    mask: Vec<f64>,
    x2: Vec<f64>,
    gx2: Vec<f64>,
    t2: LayerTrace,
    dh1: Vec<f64>,
    dh2: Vec<f64>,
    dgx1: Vec<f64>,
    dgx2: Vec<f64>,
}

/// Gradient accumulator; beam-step input gradients are gathered per beam
/// index and expanded through the table once in [`GradBuffer::finish`].
pub(crate) struct GradBuffer {
    pub grads: Vec<f64>,
    pub beam_gx: Vec<f64>,
}

impl GradBuffer {
    pub(crate) fn new(net: &GruNet, table: &BeamEmbeddingTable) -> Self {
        Self {
            grads: vec![0.0; net.layout.len()],
            beam_gx: vec![0.0; table.beams * 3 * net.layout.hidden],
        }
    }

    pub(crate) fn add(&mut self, other: &GradBuffer) {
        axpy(1.0, &other.grads, &mut self.grads);
        axpy(1.0, &other.beam_gx, &mut self.beam_gx);
    }

    pub(crate) fn finish(mut self, net: &GruNet, table: &BeamEmbeddingTable) -> Vec<f64> {
        let o = net.layout.layers[0];
        let g = 3 * net.layout.hidden;
        for q in 0..table.beams {
            let gq = &self.beam_gx[q * g..(q + 1) * g];
            if gq.iter().all(|&v| v == 0.0) {
                continue;
            }
            let e = &table.as_slice()[q * table.dim..(q + 1) * table.dim];
            for (i, &ei) in e.iter().enumerate() {
                axpy(ei, gq, &mut self.grads[o.w_in + i * g..o.w_in + (i + 1) * g]);
            }
        }
        self.grads
    }
}

pub(crate) fn sample_forward<R: Rng>(
    net: &GruNet,
    inputs: &[StepInput],
    proj: &BeamProjection,
    dropout: Option<(f64, &mut R)>,
    w: &mut Workspace,
) -> Result<[f64; 2]> {
    let hdim = net.layout.hidden;
    let g = 3 * hdim;
    let steps = inputs.len();
    let l1 = net.layout.layer(&net.params, 0);
    let l2 = net.layout.layer(&net.params, 1);

    w.gx1.resize(steps * g, 0.0);
    for (t, inp) in inputs.iter().enumerate() {
        let out = &mut w.gx1[t * g..(t + 1) * g];
        match inp {
            StepInput::Dense(x) => {
                if x.len() != l1.in_dim {
                    return Err(Error::DimensionMismatch {
                        expected: l1.in_dim,
                        actual: x.len(),
                    });
                }
                l1.project_input(x, out);
            }
            StepInput::Sparse(nz) => {
                out.copy_from_slice(l1.b_in);
                for &(i, v) in nz {
                    let i = i as usize;
                    if i >= l1.in_dim {
                        return Err(Error::DimensionMismatch {
                            expected: l1.in_dim,
                            actual: i + 1,
                        });
                    }
                    axpy(v, &l1.w_in[i * g..(i + 1) * g], out);
                }
            }
            StepInput::Beam(b) => out.copy_from_slice(proj.get(*b)),
        }
    }
    layer_forward(&l1, &w.gx1, &mut w.t1);

    w.mask.clear();
    w.mask.resize(steps * hdim, 1.0);
    if let Some((p, rng)) = dropout {
        if p > 0.0 {
            let keep = 1.0 / (1.0 - p);
            for m in w.mask.iter_mut() {
                *m = if rng.random::<f64>() < p { 0.0 } else { keep };
            }
        }
    }
    w.x2.resize(steps * hdim, 0.0);
    for ((x, h), m) in w.x2.iter_mut().zip(&w.t1.h).zip(&w.mask) {
        *x = h * m;
    }
    w.gx2.resize(steps * g, 0.0);
    for t in 0..steps {
        l2.project_input(&w.x2[t * hdim..(t + 1) * hdim], &mut w.gx2[t * g..(t + 1) * g]);
    }
    layer_forward(&l2, &w.gx2, &mut w.t2);

    let top = w.t2.output(steps - 1, hdim);
    let lo = &net.layout;
    let wo = &net.params[lo.w_out..lo.b_out];
    let mut logits = [net.params[lo.b_out], net.params[lo.b_out + 1]];
    for (i, &hi) in top.iter().enumerate() {
        logits[0] += hi * wo[i * CLASSES];
        logits[1] += hi * wo[i * CLASSES + 1];
    }
    Ok(logits)
}

/// Accumulates `scale * d(loss)/d(params)` for one sample whose forward pass
/// is cached in `w`.
pub(crate) fn sample_backward(
    net: &GruNet,
    inputs: &[StepInput],
    logits: [f64; 2],
    label: u8,
    scale: f64,
    w: &mut Workspace,
    acc: &mut GradBuffer,
) {
    let lo = net.layout;
    let hdim = lo.hidden;
    let g = 3 * hdim;
    let steps = inputs.len();
    let l1 = lo.layer(&net.params, 0);
    let l2 = lo.layer(&net.params, 1);
    let grads = &mut acc.grads;

    let p = softmax2(logits);
    let mut dlogits = [p[0] * scale, p[1] * scale];
    dlogits[label as usize] -= scale;

    w.dh2.clear();
    w.dh2.resize(steps * hdim, 0.0);
    let top = w.t2.output(steps - 1, hdim);
    for i in 0..hdim {
        for c in 0..CLASSES {
            grads[lo.w_out + i * CLASSES + c] += top[i] * dlogits[c];
        }
        w.dh2[(steps - 1) * hdim + i] =
            net.params[lo.w_out + i * CLASSES] * dlogits[0] + net.params[lo.w_out + i * CLASSES + 1] * dlogits[1];
    }
    grads[lo.b_out] += dlogits[0];
    grads[lo.b_out + 1] += dlogits[1];

    // second layer
    let o2 = lo.layers[1];
    w.dgx2.resize(steps * g, 0.0);
    {
        let (head, tail) = grads.split_at_mut(o2.b_hh);
        layer_backward(&l2, &w.t2, &w.dh2, &mut w.dgx2, &mut head[o2.w_hh..o2.b_in], &mut tail[..g]);
    }
    w.dh1.clear();
    w.dh1.resize(steps * hdim, 0.0);
    for t in 0..steps {
        let gxt = &w.dgx2[t * g..(t + 1) * g];
        axpy(1.0, gxt, &mut grads[o2.b_in..o2.b_in + g]);
        for i in 0..hdim {
            let xi = w.x2[t * hdim + i];
            if xi != 0.0 {
                axpy(xi, gxt, &mut grads[o2.w_in + i * g..o2.w_in + (i + 1) * g]);
            }
            let m = w.mask[t * hdim + i];
            if m != 0.0 {
                w.dh1[t * hdim + i] = m * dot(&l2.w_in[i * g..(i + 1) * g], gxt);
            }
        }
    }

    // first layer
    let o1 = lo.layers[0];
    w.dgx1.resize(steps * g, 0.0);
    {
        let (head, tail) = grads.split_at_mut(o1.b_hh);
        layer_backward(&l1, &w.t1, &w.dh1, &mut w.dgx1, &mut head[o1.w_hh..o1.b_in], &mut tail[..g]);
    }
    for (t, inp) in inputs.iter().enumerate() {
        let gxt = &w.dgx1[t * g..(t + 1) * g];
        axpy(1.0, gxt, &mut grads[o1.b_in..o1.b_in + g]);
        match inp {
            StepInput::Dense(x) => {
                for (i, &xi) in x.iter().enumerate() {
                    if xi != 0.0 {
                        axpy(xi, gxt, &mut grads[o1.w_in + i * g..o1.w_in + (i + 1) * g]);
                    }
                }
            }
            StepInput::Sparse(nz) => {
                for &(i, v) in nz {
                    let i = i as usize;
                    axpy(v, gxt, &mut grads[o1.w_in + i * g..o1.w_in + (i + 1) * g]);
                }
            }
            StepInput::Beam(b) => axpy(1.0, gxt, &mut acc.beam_gx[(b - 1) * g..b * g]),
        }
    }
}
