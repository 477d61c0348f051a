//! Single GRU layer: recurrence forward and backward over a cached sequence.
//!
//! Gate layout inside every `3H` block is `[reset, update, candidate]`:
//!
//! ```text
//! r  = sigmoid(gx_r + W_hr h + b_hr)
//! z  = sigmoid(gx_z + W_hz h + b_hz)
//! n  = tanh(gx_n + r * (W_hn h + b_hn))
//! h' = (1 - z) * h + z * n
//! ```
//!
//! `gx` is the input projection `W_i x + b_i`, computed by the caller.

use crate::error::{Error, Result};

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Weights stored row-major by input index: row `i` holds the `3H` outgoing
/// weights of input `i`.
#[derive(Clone, Copy)]
pub struct LayerParams<'a> {
    pub w_in: &'a [f64],
    pub w_hh: &'a [f64],
    pub b_in: &'a [f64],
    pub b_hh: &'a [f64],
    pub in_dim: usize,
    pub hidden: usize,
}

impl LayerParams<'_> {
    /// `out = b_in + sum_i x_i * w_in[i]`, skipping zero inputs.
    pub(crate) fn project_input(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(self.b_in);
        let g = 3 * self.hidden;
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, &self.w_in[i * g..(i + 1) * g], out);
            }
        }
    }
}

#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Activations of one layer over `T` steps, each buffer `T x H`.
#[derive(Default, Clone)]
pub(crate) struct LayerTrace {
    pub h: Vec<f64>,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub n: Vec<f64>,
    pub hn: Vec<f64>,
    gh: Vec<f64>,
}

impl LayerTrace {
    fn resize(&mut self, steps: usize, hidden: usize) {
        for b in [&mut self.h, &mut self.r, &mut self.z, &mut self.n, &mut self.hn] {
            b.resize(steps * hidden, 0.0);
        }
        self.gh.resize(3 * hidden, 0.0);
    }

    pub fn output(&self, t: usize, hidden: usize) -> &[f64] {
        &self.h[t * hidden..(t + 1) * hidden]
    }
}

fn step(p: &LayerParams, gx: &[f64], h_prev: &[f64], gh: &mut [f64], out: [&mut [f64]; 5]) {
    let hdim = p.hidden;
    let g = 3 * hdim;
    gh.copy_from_slice(p.b_hh);
    for (i, &hi) in h_prev.iter().enumerate() {
        if hi != 0.0 {
            axpy(hi, &p.w_hh[i * g..(i + 1) * g], gh);
        }
    }
    let [r, z, n, hn, h] = out;
    for j in 0..hdim {
        r[j] = sigmoid(gx[j] + gh[j]);
        z[j] = sigmoid(gx[hdim + j] + gh[hdim + j]);
        hn[j] = gh[2 * hdim + j];
        n[j] = (gx[2 * hdim + j] + r[j] * hn[j]).tanh();
        h[j] = (1.0 - z[j]) * h_prev[j] + z[j] * n[j];
    }
}

/// One recurrence step from a raw input vector.
pub fn gru_cell(x: &[f64], h_prev: &[f64], p: &LayerParams) -> Result<Vec<f64>> {
    if x.len() != p.in_dim {
        return Err(Error::DimensionMismatch {
            expected: p.in_dim,
            actual: x.len(),
        });
    }
    if h_prev.len() != p.hidden {
        return Err(Error::DimensionMismatch {
            expected: p.hidden,
            actual: h_prev.len(),
        });
    }
    let hdim = p.hidden;
    let mut gx = vec![0.0; 3 * hdim];
    p.project_input(x, &mut gx);
    let mut gh = vec![0.0; 3 * hdim];
    let (mut r, mut z, mut n, mut hn, mut h) =
        (vec![0.0; hdim], vec![0.0; hdim], vec![0.0; hdim], vec![0.0; hdim], vec![0.0; hdim]);
    step(p, &gx, h_prev, &mut gh, [&mut r, &mut z, &mut n, &mut hn, &mut h]);
    Ok(h)
}

/// Runs the recurrence from a zero state over precomputed input projections
/// `gx` (`T x 3H`).
pub(crate) fn layer_forward(p: &LayerParams, gx: &[f64], trace: &mut LayerTrace) {
    let hdim = p.hidden;
    let g = 3 * hdim;
    let steps = gx.len() / g;
    trace.resize(steps, hdim);
    let zero = vec![0.0; hdim];
    let LayerTrace { h, r, z, n, hn, gh } = trace;
    for t in 0..steps {
        let (done, rest) = h.split_at_mut(t * hdim);
        let h_prev = if t == 0 { &zero[..] } else { &done[(t - 1) * hdim..] };
        let span = t * hdim..(t + 1) * hdim;
        step(
            p,
            &gx[t * g..(t + 1) * g],
            h_prev,
            gh,
            [
                &mut r[span.clone()],
                &mut z[span.clone()],
                &mut n[span.clone()],
                &mut hn[span],
                &mut rest[..hdim],
            ],
        );
    }
}

/// Backpropagation through time.
///
/// `dh_out` (`T x H`) holds loss gradients w.r.t. each step's output. Writes the
/// gradient w.r.t. each step's input projection into `dgx` (`T x 3H`) and
/// accumulates the recurrent weight and bias gradients.
pub(crate) fn layer_backward(
    p: &LayerParams,
    trace: &LayerTrace,
    dh_out: &[f64],
    dgx: &mut [f64],
    dw_hh: &mut [f64],
    db_hh: &mut [f64],
) {
    let hdim = p.hidden;
    let g = 3 * hdim;
    let steps = dh_out.len() / hdim;
    let mut dh_next = vec![0.0; hdim];
    let mut gh = vec![0.0; g];
    let zero = vec![0.0; hdim];
    for t in (0..steps).rev() {
        let span = t * hdim..(t + 1) * hdim;
        let (r, z, n, hn) = (&trace.r[span.clone()], &trace.z[span.clone()], &trace.n[span.clone()], &trace.hn[span.clone()]);
        let h_prev = if t == 0 { &zero[..] } else { &trace.h[(t - 1) * hdim..t * hdim] };
        let dgx_t = &mut dgx[t * g..(t + 1) * g];
        let mut dh_prev = vec![0.0; hdim];
        for j in 0..hdim {
            let dh = dh_out[t * hdim + j] + dh_next[j];
            let dn = dh * z[j];
            let dz = dh * (n[j] - h_prev[j]);
            dh_prev[j] = dh * (1.0 - z[j]);
            let dan = dn * (1.0 - n[j] * n[j]);
            let dhn = dan * r[j];
            let dr = dan * hn[j];
            let dar = dr * r[j] * (1.0 - r[j]);
            let daz = dz * z[j] * (1.0 - z[j]);
            dgx_t[j] = dar;
            dgx_t[hdim + j] = daz;
            dgx_t[2 * hdim + j] = dan;
            gh[j] = dar;
            gh[hdim + j] = daz;
            gh[2 * hdim + j] = dhn;
        }
        axpy(1.0, &gh, db_hh);
        for (i, &hi) in h_prev.iter().enumerate() {
            let row = &p.w_hh[i * g..(i + 1) * g];
            dh_prev[i] += dot(row, &gh);
            if hi != 0.0 {
                axpy(hi, &gh, &mut dw_hh[i * g..(i + 1) * g]);
            }
        }
        dh_next = dh_prev;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Owned {
        w_in: Vec<f64>,
        w_hh: Vec<f64>,
        b_in: Vec<f64>,
        b_hh: Vec<f64>,
        n: usize,
        h: usize,
    }

    impl Owned {
        fn view(&self) -> LayerParams<'_> {
            LayerParams {
                w_in: &self.w_in,
                w_hh: &self.w_hh,
                b_in: &self.b_in,
                b_hh: &self.b_hh,
                in_dim: self.n,
                hidden: self.h,
            }
        }
    }

    fn seeded(n: usize, h: usize, seed: u64) -> Owned {
        use rand::Rng;
        let mut rng = crate::util::rng_for(&[seed]);
        let mut v = |k: usize| (0..k).map(|_| rng.random_range(-0.8..0.8)).collect::<Vec<f64>>();
        Owned {
            w_in: v(n * 3 * h),
            w_hh: v(h * 3 * h),
            b_in: v(3 * h),
            b_hh: v(3 * h),
            n,
            h,
        }
    }

    /// Scalar re-derivation of the cell, indexing weights as (input, gate, unit).
    fn oracle(p: &Owned, x: &[f64], hp: &[f64]) -> Vec<f64> {
        let (n, h) = (p.n, p.h);
        let wi = |i: usize, gate: usize, j: usize| p.w_in[i * 3 * h + gate * h + j];
        let wh = |i: usize, gate: usize, j: usize| p.w_hh[i * 3 * h + gate * h + j];
        (0..h)
            .map(|j| {
                let mut a = [0.0; 3];
                let mut c = [0.0; 3];
                for gate in 0..3 {
                    a[gate] = p.b_in[gate * h + j] + (0..n).map(|i| x[i] * wi(i, gate, j)).sum::<f64>();
                    c[gate] = p.b_hh[gate * h + j] + (0..h).map(|i| hp[i] * wh(i, gate, j)).sum::<f64>();
                }
                let r = 1.0 / (1.0 + (-(a[0] + c[0])).exp());
                let z = 1.0 / (1.0 + (-(a[1] + c[1])).exp());
                let cand = (a[2] + r * c[2]).tanh();
                (1.0 - z) * hp[j] + z * cand
            })
            .collect()
    }

    #[test]
    fn zero_params_fixed_point() {
        let p = Owned {
            w_in: vec![0.0; 4 * 9],
            w_hh: vec![0.0; 9 * 3],
            b_in: vec![0.0; 9],
            b_hh: vec![0.0; 9],
            n: 4,
            h: 3,
        };
        let h = gru_cell(&[0.3, -1.0, 2.0, 0.5], &[0.0; 3], &p.view()).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn closed_update_gate_keeps_state() {
        let mut p = seeded(3, 4, 1);
        for j in 0..4 {
            p.b_in[4 + j] = -60.0;
        }
        let hp = [0.3, -0.2, 0.9, -0.7];
        let h = gru_cell(&[1.0, -1.0, 0.5], &hp, &p.view()).unwrap();
        for (a, b) in h.iter().zip(hp) {
            assert!((a - b).abs() < 1e-20_f64.max(1e-12));
        }
    }

    #[test]
    fn cell_matches_scalar_oracle() {
        for seed in 0..10 {
            let p = seeded(5, 3, seed);
            let x = [0.1, -0.4, 0.0, 0.9, -1.3];
            let hp = [0.2, -0.5, 0.05];
            let got = gru_cell(&x, &hp, &p.view()).unwrap();
            for (a, b) in got.iter().zip(oracle(&p, &x, &hp)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let p = seeded(3, 2, 0);
        assert!(gru_cell(&[1.0, 2.0], &[0.0, 0.0], &p.view()).is_err());
        assert!(gru_cell(&[1.0, 2.0, 3.0], &[0.0], &p.view()).is_err());
    }
}
