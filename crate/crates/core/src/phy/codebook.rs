use crate::error::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Steering vector whose element `m` is `exp(j m (2 pi / lambda) d cos(phi)) / sqrt(M)`,
/// with `phi` measured from the array axis.
pub fn steering_vector(elements: usize, wavelength: f64, spacing: f64, phi: f64) -> Result<Vec<Complex64>> {
    check(elements, wavelength)?;
    Ok(steering_from_cosine(elements, wavelength, spacing, phi.cos()))
}

fn check(elements: usize, wavelength: f64) -> Result<()> {
    if elements == 0 {
        return Err(Error::InvalidParameter("antenna count must be >= 1".into()));
    }
    if !(wavelength > 0.0) {
        return Err(Error::InvalidParameter("wavelength must be > 0".into()));
    }
    Ok(())
}

fn steering_from_cosine(elements: usize, wavelength: f64, spacing: f64, cosine: f64) -> Vec<Complex64> {
    let amp = 1.0 / (elements as f64).sqrt();
    let step = 2.0 * PI / wavelength * spacing * cosine;
    (0..elements)
        .map(|m| Complex64::from_polar(amp, m as f64 * step))
        .collect()
}

/// `Q` steering vectors at the uniformly quantized angles `2 pi q / Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub elements: usize,
    angles: Vec<f64>,
    vectors: Vec<Vec<Complex64>>,
}

impl Codebook {
    pub fn new(elements: usize, beams: usize, wavelength: f64, spacing: f64) -> Result<Self> {
        check(elements, wavelength)?;
        if beams == 0 {
            return Err(Error::EmptyCodebook);
        }
        let angles: Vec<f64> = (0..beams).map(|q| 2.0 * PI * q as f64 / beams as f64).collect();
        // cos(2 pi q / Q) == cos(2 pi (Q - q) / Q); evaluating at the folded
        // index makes the duplicate beams bit-identical so ties resolve to the
        // lower index. Grating lobes (e.g. endfire at half-wavelength spacing)
        // give further duplicates, which are replaced by the earlier copy.
        let mut vectors: Vec<Vec<Complex64>> = Vec::with_capacity(beams);
        for q in 0..beams {
            let folded = q.min(beams - q);
            let c = (2.0 * PI * folded as f64 / beams as f64).cos();
            let v = steering_from_cosine(elements, wavelength, spacing, c);
            let same = |w: &&Vec<Complex64>| w.iter().zip(&v).all(|(a, b)| (a - b).norm() < 1e-12);
            let v = vectors.iter().find(same).cloned().unwrap_or(v);
            vectors.push(v);
        }
        Ok(Self {
            elements,
            angles,
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Beam `b`, 1-based.
    pub fn beam(&self, b: usize) -> Result<&[Complex64]> {
        if b == 0 || b > self.len() {
            return Err(Error::BeamOutOfRange {
                index: b,
                count: self.len(),
            });
        }
        Ok(&self.vectors[b - 1])
    }

    /// Quantized angle of beam `b` (1-based), measured from the array axis.
    pub fn angle(&self, b: usize) -> f64 {
        self.angles[b - 1]
    }

    pub fn vectors(&self) -> &[Vec<Complex64>] {
        &self.vectors
    }
}
