//! `DGFW` tensor container.
//!
//! Little-endian layout:
//!
//! ```text
//! magic   b"DGFW"
//! version u32 (= 1)
//! count   u32
//! count x {
//!     name_len u32, name [u8; name_len] (UTF-8)
//!     rank     u32, dims [u32; rank]
//!     data     [f32; product(dims)]
//! }
//! ```

use std::path::Path;

use crate::error::{AutogradError, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"DGFW";
pub const VERSION: u32 = 1;

pub type Entry = (String, Tensor<f32>);

pub fn encode(entries: &[Entry]) -> Vec<u8> {
    let payload: usize = entries.iter().map(|(n, t)| 12 + n.len() + 4 * t.rank() + 4 * t.len()).sum();
    let mut out = Vec::with_capacity(12 + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| AutogradError::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Entry>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(AutogradError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(AutogradError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| AutogradError::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| AutogradError::Checkpoint("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.push((name, Tensor::new(&dims, data)?));
    }
    if r.pos != bytes.len() {
        return Err(AutogradError::Checkpoint("trailing bytes".into()));
    }
    Ok(entries)
}

pub fn save(path: impl AsRef<Path>, entries: &[Entry]) -> Result<()> {
    std::fs::write(path, encode(entries))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Vec<Entry>> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new(&[2], vec![1.0f32, -2.5]).unwrap();
        let bytes = encode(&[("fgdm.w".into(), t)]);
        assert_eq!(&bytes[..4], b"DGFW");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 6);
        assert_eq!(&bytes[16..22], b"fgdm.w");
        assert_eq!(bytes.len(), 12 + 4 + 6 + 4 + 4 + 8);
        assert_eq!(&bytes[bytes.len() - 4..], &(-2.5f32).to_le_bytes());
    }

    #[test]
    fn rejects_corruption() {
        let t = Tensor::new(&[1], vec![1.0f32]).unwrap();
        let bytes = encode(&[("a".into(), t)]);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(decode(&long).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            tensors in proptest::collection::vec(
                (proptest::collection::vec(1usize..4, 1..4), any::<u32>()),
                0..5,
            )
        ) {
            let entries: Vec<Entry> = tensors
                .iter()
                .enumerate()
                .map(|(i, (dims, bits))| {
                    let n = dims.iter().product();
                    let data = (0..n).map(|j| f32::from_bits(bits.wrapping_add((j as u32).wrapping_mul(2654435761)))).collect();
                    (format!("t{i}.ω"), Tensor::new(dims, data).unwrap())
                })
                .collect();
            let back = decode(&encode(&entries)).unwrap();
            prop_assert_eq!(back.len(), entries.len());
            for ((n1, t1), (n2, t2)) in entries.iter().zip(&back) {
                prop_assert_eq!(n1, n2);
                prop_assert_eq!(t1.shape(), t2.shape());
                let b1: Vec<u32> = t1.data().iter().map(|v| v.to_bits()).collect();
                let b2: Vec<u32> = t2.data().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(b1, b2);
            }
        }
    }
}
