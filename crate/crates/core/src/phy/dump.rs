//! Binary channel dumps for debugging.
//!
//! Record layout, little-endian: `u32 user`, `u64 frame`, `u32 K`, `u32 M`,
//! then `K * M` pairs of `f64` (re, im), subcarrier-major.

use super::{ChannelVector, Complex64};
use crate::error::{Error, Result};
use std::io::{Read, Write};

pub fn write_record<W: Write>(w: &mut W, user: u32, frame: u64, h: &ChannelVector) -> Result<()> {
    w.write_all(&user.to_le_bytes())?;
    w.write_all(&frame.to_le_bytes())?;
    w.write_all(&(h.subcarriers.len() as u32).to_le_bytes())?;
    w.write_all(&(h.elements as u32).to_le_bytes())?;
    for c in h.subcarriers.iter().flatten() {
        w.write_all(&c.re.to_le_bytes())?;
        w.write_all(&c.im.to_le_bytes())?;
    }
    Ok(())
}

/// User id, frame, and the per-subcarrier channel.
pub type Record = (u32, u64, Vec<Vec<Complex64>>);

/// Reads one record; `Ok(None)` at a clean end of stream.
pub fn read_record<R: Read>(r: &mut R) -> Result<Option<Record>> {
    let mut b4 = [0u8; 4];
    match r.read_exact(&mut b4) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let user = u32::from_le_bytes(b4);
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let frame = u64::from_le_bytes(b8);
    r.read_exact(&mut b4)?;
    let k = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let m = u32::from_le_bytes(b4) as usize;
    if k.saturating_mul(m) > 1 << 24 {
        return Err(Error::Checkpoint(format!("implausible channel dump size {k}x{m}")));
    }
    let mut rows = Vec::with_capacity(k);
    for _ in 0..k {
        let mut row = Vec::with_capacity(m);
        for _ in 0..m {
            r.read_exact(&mut b8)?;
            let re = f64::from_le_bytes(b8);
            r.read_exact(&mut b8)?;
            row.push(Complex64::new(re, f64::from_le_bytes(b8)));
        }
        rows.push(row);
    }
    Ok(Some((user, frame, rows)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_layout() {
        let h = ChannelVector {
            subcarriers: vec![
                vec![Complex64::new(1.0, -2.0), Complex64::new(0.5, 0.25)],
                vec![Complex64::new(-3.0, 4.0), Complex64::new(0.0, 1e-9)],
            ],
            elements: 2,
            sampling_time: 1e-8,
            cyclic_prefix: 4,
        };
        let mut buf = Vec::new();
        write_record(&mut buf, 7, 42, &h).unwrap();
        assert_eq!(buf.len(), 4 + 8 + 4 + 4 + 2 * 2 * 16);
        assert_eq!(&buf[..4], &7u32.to_le_bytes());
        assert_eq!(&buf[20..28], &1.0f64.to_le_bytes());
        let mut cur = std::io::Cursor::new(buf);
        let (u, f, rows) = read_record(&mut cur).unwrap().unwrap();
        assert_eq!((u, f), (7, 42));
        assert_eq!(rows, h.subcarriers);
        assert!(read_record(&mut cur).unwrap().is_none());
    }
}
