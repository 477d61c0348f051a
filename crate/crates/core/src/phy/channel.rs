use super::Codebook;
use crate::error::{Error, Result};
use crate::scene::Ula;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelPath {
    /// Complex gain including path loss.
    pub gain: Complex64,
    /// Propagation delay in seconds.
    pub delay: f64,
    pub azimuth: f64,
    pub elevation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfdmParams {
    pub subcarriers: usize,
    pub cyclic_prefix: usize,
    pub sampling_time: f64,
}

impl OfdmParams {
    pub fn max_delay(&self) -> f64 {
        self.cyclic_prefix as f64 * self.sampling_time
    }
}

/// Per-subcarrier channel vectors, `subcarriers[k][m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector {
    pub subcarriers: Vec<Vec<Complex64>>,
    pub elements: usize,
    pub sampling_time: f64,
    pub cyclic_prefix: usize,
}

impl ChannelVector {
    pub fn zeros(ofdm: &OfdmParams, elements: usize) -> Self {
        Self {
            subcarriers: vec![vec![Complex64::new(0.0, 0.0); elements]; ofdm.subcarriers],
            elements,
            sampling_time: ofdm.sampling_time,
            cyclic_prefix: ofdm.cyclic_prefix,
        }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        out.subcarriers.iter_mut().flatten().for_each(|h| *h *= c);
        out
    }
}

/// Band-limited pulse `sinc(t / Ts)`; exactly 1 at zero and exactly 0 at the
/// other integer sample instants (within 1e-9 samples, absorbing rounding in
/// `d * Ts - tau`).
pub fn pulse(t: f64, sampling_time: f64) -> f64 {
    let x = t / sampling_time;
    let nearest = x.round();
    if (x - nearest).abs() < 1e-9 {
        if nearest == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Unit-magnitude array response for a departure direction. Written in the
/// conjugate form `exp(-j m k d cos(psi))`, so the steering beam at the same
/// angle is its matched filter under `h^T f`.
pub fn array_response(ula: &Ula, azimuth: f64, elevation: f64) -> Vec<Complex64> {
    let step = -2.0 * PI / ula.wavelength * ula.spacing * ula.axis_cosine(azimuth, elevation);
    (0..ula.elements)
        .map(|m| Complex64::from_polar(1.0, m as f64 * step))
        .collect()
}

fn check_delays(paths: &[ChannelPath], ofdm: &OfdmParams) -> Result<()> {
    let limit = ofdm.max_delay();
    for p in paths {
        if !(p.delay >= 0.0) || p.delay >= limit {
            return Err(Error::DelayOutOfRange { delay: p.delay, limit });
        }
    }
    Ok(())
}

/// Frequency-domain tap weights `sum_d exp(-j 2 pi k d / K) p(d Ts - tau)` times the gain.
fn subcarrier_gains(path: &ChannelPath, ofdm: &OfdmParams) -> Vec<Complex64> {
    let k_total = ofdm.subcarriers;
    let roots: Vec<Complex64> = (0..k_total)
        .map(|i| Complex64::from_polar(1.0, -2.0 * PI * i as f64 / k_total as f64))
        .collect();
    let taps: Vec<(usize, f64)> = (0..ofdm.cyclic_prefix)
        .map(|d| (d, pulse(d as f64 * ofdm.sampling_time - path.delay, ofdm.sampling_time)))
        .filter(|&(_, p)| p != 0.0)
        .collect();
    (0..k_total)
        .map(|k| {
            let sum: Complex64 = taps.iter().map(|&(d, p)| roots[(k * d) % k_total] * p).sum();
            path.gain * sum
        })
        .collect()
}

/// Geometric wideband channel: `h_k = sum_d sum_l a_l exp(-j2pi k d/K) p(d Ts - tau_l) a(theta_l, phi_l)`.
pub fn channel_vector(paths: &[ChannelPath], ofdm: &OfdmParams, ula: &Ula) -> Result<ChannelVector> {
    check_delays(paths, ofdm)?;
    let mut h = ChannelVector::zeros(ofdm, ula.elements);
    for path in paths {
        let beta = subcarrier_gains(path, ofdm);
        let a = array_response(ula, path.azimuth, path.elevation);
        for (hk, bk) in h.subcarriers.iter_mut().zip(&beta) {
            for (hm, am) in hk.iter_mut().zip(&a) {
                *hm += bk * am;
            }
        }
    }
    Ok(h)
}

/// Noiseless received power `P * sum_k |h_k^T f|^2`.
pub fn received_power(h: &ChannelVector, f: &[Complex64], power: f64) -> Result<f64> {
    if f.len() != h.elements {
        return Err(Error::DimensionMismatch {
            expected: h.elements,
            actual: f.len(),
        });
    }
    let total: f64 = h
        .subcarriers
        .iter()
        .map(|hk| {
            hk.iter()
                .zip(f)
                .map(|(a, b)| a * b)
                .sum::<Complex64>()
                .norm_sqr()
        })
        .sum();
    Ok(power * total)
}

fn argmax_first(powers: impl Iterator<Item = f64>) -> usize {
    let mut best = (0usize, f64::NEG_INFINITY);
    for (q, p) in powers.enumerate() {
        if p > best.1 {
            best = (q, p);
        }
    }
    best.0 + 1
}

/// Exhaustive power scan; returns the 1-based index of the strongest beam,
/// lowest index on ties.
pub fn select_beam(h: &ChannelVector, cb: &Codebook) -> Result<usize> {
    if cb.is_empty() {
        return Err(Error::EmptyCodebook);
    }
    let powers = cb
        .vectors()
        .iter()
        .map(|f| received_power(h, f, 1.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(argmax_first(powers.into_iter()))
}

/// Same selection as [`select_beam`] on `channel_vector(paths, ..)`, evaluated
/// per path: `h_k^T f_q = sum_l beta_{l,k} (a_l^T f_q)`. Avoids forming the
/// K x M channel.
pub fn select_beam_from_paths(paths: &[ChannelPath], ofdm: &OfdmParams, ula: &Ula, cb: &Codebook) -> Result<usize> {
    if cb.is_empty() {
        return Err(Error::EmptyCodebook);
    }
    if cb.elements != ula.elements {
        return Err(Error::DimensionMismatch {
            expected: ula.elements,
            actual: cb.elements,
        });
    }
    check_delays(paths, ofdm)?;
    let betas: Vec<Vec<Complex64>> = paths.iter().map(|p| subcarrier_gains(p, ofdm)).collect();
    // sum_k |sum_l beta_lk g_lq|^2 = sum_{l,l'} g_lq conj(g_l'q) R_ll', R_ll' = sum_k beta_lk conj(beta_l'k)
    let l = paths.len();
    let mut gram = vec![Complex64::new(0.0, 0.0); l * l];
    for i in 0..l {
        for j in 0..l {
            gram[i * l + j] = betas[i].iter().zip(&betas[j]).map(|(x, y)| x * y.conj()).sum();
        }
    }
    let projections: Vec<Vec<Complex64>> = paths
        .iter()
        .map(|p| {
            let a = array_response(ula, p.azimuth, p.elevation);
            cb.vectors()
                .iter()
                .map(|f| a.iter().zip(f).map(|(x, y)| x * y).sum())
                .collect()
        })
        .collect();
    let powers = (0..cb.len()).map(|q| {
        let mut total = 0.0;
        for i in 0..l {
            for j in 0..l {
                total += (projections[i][q] * projections[j][q].conj() * gram[i * l + j]).re;
            }
        }
        total
    });
    Ok(argmax_first(powers))
}

/// Noisy received samples `y_k = h_k^T f x + n_k` for a pilot `x = sqrt(P)`
/// and circular Gaussian noise of variance `sigma2`.
pub fn sample_received_signal<R: Rng>(
    h: &ChannelVector,
    f: &[Complex64],
    power: f64,
    sigma2: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    if f.len() != h.elements {
        return Err(Error::DimensionMismatch {
            expected: h.elements,
            actual: f.len(),
        });
    }
    let x = power.sqrt();
    let s = (sigma2 / 2.0).sqrt();
    Ok(h.subcarriers
        .iter()
        .map(|hk| {
            let y: Complex64 = hk.iter().zip(f).map(|(a, b)| a * b).sum();
            let n_re: f64 = StandardNormal.sample(rng);
            let n_im: f64 = StandardNormal.sample(rng);
            y * x + Complex64::new(s * n_re, s * n_im)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn ula(m: usize) -> Ula {
        Ula {
            elements: m,
            spacing: 0.005,
            wavelength: 0.01,
            boresight: FRAC_PI_2,
        }
    }

    const OFDM: OfdmParams = OfdmParams {
        subcarriers: 8,
        cyclic_prefix: 4,
        sampling_time: 1e-8,
    };

    #[test]
    fn empty_paths_give_zero_channel() {
        let h = channel_vector(&[], &OFDM, &ula(4)).unwrap();
        assert!(h.subcarriers.iter().flatten().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn single_broadside_path_has_no_phase_ramp() {
        let u = ula(4);
        let path = ChannelPath {
            gain: Complex64::new(1.0, 0.0),
            delay: 0.0,
            azimuth: u.boresight,
            elevation: 0.0,
        };
        let h = channel_vector(&[path], &OFDM, &u).unwrap();
        let a = array_response(&u, u.boresight, 0.0);
        for hk in &h.subcarriers {
            for (x, y) in hk.iter().zip(&a) {
                assert!((x - y).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_delay_beyond_prefix() {
        let path = ChannelPath {
            gain: Complex64::new(1.0, 0.0),
            delay: 4e-8,
            azimuth: 0.0,
            elevation: 0.0,
        };
        assert!(matches!(
            channel_vector(&[path], &OFDM, &ula(2)),
            Err(Error::DelayOutOfRange { .. })
        ));
    }

    #[test]
    fn matched_beam_power() {
        let cb = Codebook::new(8, 16, 0.01, 0.005).unwrap();
        let f = cb.beam(3).unwrap();
        let conj: Vec<Complex64> = f.iter().map(|c| c.conj()).collect();
        let h = ChannelVector {
            subcarriers: vec![conj; 5],
            elements: 8,
            sampling_time: 1e-8,
            cyclic_prefix: 4,
        };
        assert!((received_power(&h, f, 2.0).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(select_beam(&h, &cb).unwrap(), 3);
        let zero = ChannelVector::zeros(&OFDM, 8);
        assert_eq!(received_power(&zero, f, 1.0).unwrap(), 0.0);
        assert!(received_power(&zero, &f[..4], 1.0).is_err());
    }

    #[test]
    fn singleton_codebook() {
        let cb = Codebook::new(4, 1, 0.01, 0.005).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = ChannelVector {
            subcarriers: (0..3)
                .map(|_| (0..4).map(|_| Complex64::new(rng.random(), rng.random())).collect())
                .collect(),
            elements: 4,
            sampling_time: 1e-8,
            cyclic_prefix: 4,
        };
        assert_eq!(select_beam(&h, &cb).unwrap(), 1);
    }

    #[test]
    fn pulse_is_kronecker_on_samples() {
        assert_eq!(pulse(0.0, 1e-8), 1.0);
        assert_eq!(pulse(3e-8, 1e-8), 0.0);
        assert!((pulse(0.5e-8, 1e-8) - 2.0 / PI).abs() < 1e-12);
    }

    #[test]
    fn noisy_samples_center_on_noiseless_output() {
        let u = ula(4);
        let path = ChannelPath {
            gain: Complex64::new(0.5, 0.2),
            delay: 1.3e-8,
            azimuth: 1.0,
            elevation: 0.1,
        };
        let h = channel_vector(&[path], &OFDM, &u).unwrap();
        let cb = Codebook::new(4, 8, 0.01, 0.005).unwrap();
        let f = cb.beam(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = sample_received_signal(&h, f, 4.0, 0.0, &mut rng).unwrap();
        let pw: f64 = y.iter().map(|c| c.norm_sqr()).sum();
        assert!((pw - received_power(&h, f, 4.0).unwrap()).abs() < 1e-12);
    }
}
