//! Little-endian binary checkpoints: header, JSON config echo, parameters,
//! and a SHA-256 trailer over everything before it.

use super::{GruNet, Layout, Mode, TrainConfig};
use crate::embedding::BeamEmbeddingTable;
use crate::error::{Error, Result};
use sha2::{Digest, Sha256};
use std::path::Path;

const MAGIC: &[u8; 8] = b"BLKGRU\0\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: GruNet,
    pub table_beams: usize,
    pub table_seed: u64,
    pub config: TrainConfig,
    /// Basestation the model was trained for, if any.
    pub basestation: Option<u8>,
    /// Camera the model was trained for, if any.
    pub camera: Option<u32>,
}

impl Checkpoint {
    /// Whether the model was trained on sequences like `s`.
    pub fn covers(&self, s: &crate::dataset::Sample) -> bool {
        self.basestation.is_none_or(|b| b == s.observed.basestation) && self.camera.is_none_or(|c| c == s.observed.camera)
    }

    pub fn table(&self) -> BeamEmbeddingTable {
        BeamEmbeddingTable::new(self.table_beams, self.net.layout.input, self.table_seed)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut b = Vec::with_capacity(64 + 8 * self.net.params.len());
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.push(match self.net.mode {
            Mode::Bimodal => 0,
            Mode::BeamOnly => 1,
        });
        b.push(self.basestation.unwrap_or(0));
        b.extend_from_slice(&self.camera.unwrap_or(0).to_le_bytes());
        for v in [self.net.observed, self.net.layout.input, self.net.layout.hidden, self.table_beams] {
            b.extend_from_slice(&(v as u32).to_le_bytes());
        }
        b.extend_from_slice(&self.table_seed.to_le_bytes());
        let cfg = serde_json::to_vec(&self.config)?;
        b.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        b.extend_from_slice(&cfg);
        b.extend_from_slice(&(self.net.params.len() as u64).to_le_bytes());
        for p in &self.net.params {
            b.extend_from_slice(&p.to_le_bytes());
        }
        let digest = Sha256::digest(&b);
        b.extend_from_slice(&digest);
        Ok(b)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 32 + MAGIC.len() {
            return Err(bad("truncated"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("checksum mismatch"));
        }
        let mut r = Reader { buf: body, at: 0 };
        if r.take(8)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mode = match r.take(1)?[0] {
            0 => Mode::Bimodal,
            1 => Mode::BeamOnly,
            m => return Err(Error::Checkpoint(format!("unknown mode tag {m}"))),
        };
        let basestation = match r.take(1)?[0] {
            0 => None,
            b => Some(b),
        };
        let camera = match r.u32()? {
            0 => None,
            c => Some(c),
        };
        let observed = r.u32()? as usize;
        let input = r.u32()? as usize;
        let hidden = r.u32()? as usize;
        let table_beams = r.u32()? as usize;
        let table_seed = r.u64()?;
        let cfg_len = r.u32()? as usize;
        let config: TrainConfig = serde_json::from_slice(r.take(cfg_len)?)?;
        let count = r.u64()? as usize;
        let layout = Layout::new(input, hidden);
        if count != layout.len() {
            return Err(Error::Checkpoint(format!(
                "parameter count {count} does not match layout {}",
                layout.len()
            )));
        }
        let params = r
            .take(count * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if r.at != body.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self {
            net: GruNet {
                mode,
                observed,
                layout,
                params,
            },
            table_beams,
            table_seed,
            config,
            basestation,
            camera,
        })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            net: GruNet::new(Mode::BeamOnly, 8, 4, 8, 3),
            table_beams: 64,
            table_seed: 99,
            config: TrainConfig::default(),
            basestation: Some(2),
            camera: Some(5),
        }
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn corruption_detected() {
        let mut b = sample().to_bytes().unwrap();
        b[40] ^= 1;
        assert!(Checkpoint::from_bytes(&b).is_err());
        assert!(Checkpoint::from_bytes(&b[..10]).is_err());
    }
}
