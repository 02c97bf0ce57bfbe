//! Binary key container.
//!
//! ```text
//! "SIFL" | version u16 | n u32 | ñ u32 | p u32          (little endian)
//! version 1 (dense):      Π1 | Π1ᴸ | N1 | Π2 | Π2ᴿ | N2
//! version 2 (structured): groups u32, (top u32, extra u32)*, perm u32 × ñ,
//!                         Householder vectors, blocks u32, (size u32, S)*,
//!                         Π2 | Π2ᴿ | N2
//! ```
//!
//! Matrices are row-major IEEE-754 f64 little endian with implicit shapes.
//! Loading revalidates every invariant.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, RowDVector};

use super::keys::{AggregatorKeys, ServerKeys};
use super::structured::{Group, StructuredMap};
use super::validate::validate_keys;
use crate::error::{Error, Result};

pub const KEY_FILE_MAGIC: &[u8; 4] = b"SIFL";
const DENSE_VERSION: u16 = 1;
const STRUCTURED_VERSION: u16 = 2;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::InvalidArgs(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_matrix(out: &mut Vec<u8>, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.extend_from_slice(&m[(r, c)].to_le_bytes());
        }
    }
}

fn put_aggregator(out: &mut Vec<u8>, agg: &AggregatorKeys) {
    for x in agg.pi2().iter().chain(agg.pi2_right().iter()) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    put_matrix(out, agg.n2());
}

pub fn encode_keys(server: &ServerKeys, agg: &AggregatorKeys) -> Result<Vec<u8>> {
    let imm = server.immersion();
    let mut out = Vec::new();
    out.extend_from_slice(KEY_FILE_MAGIC);
    let version = if imm.is_dense() { DENSE_VERSION } else { STRUCTURED_VERSION };
    out.extend_from_slice(&version.to_le_bytes());
    put_u32(&mut out, server.n())?;
    put_u32(&mut out, server.n_tilde())?;
    put_u32(&mut out, agg.p())?;

    if let (Some(pi1), Some(pi1_left), Some(n1)) = (imm.pi1(), imm.pi1_left(), server.n1()) {
        put_matrix(&mut out, pi1);
        put_matrix(&mut out, pi1_left);
        put_matrix(&mut out, n1);
    } else {
        let map = imm.structured().expect("non-dense keys are structured");
        put_u32(&mut out, map.groups.len())?;
        for g in &map.groups {
            put_u32(&mut out, g.top)?;
            put_u32(&mut out, g.extra)?;
        }
        for &p in &map.perm {
            put_u32(&mut out, p)?;
        }
        for g in &map.groups {
            for x in g.v.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        put_u32(&mut out, map.blocks.len())?;
        for b in &map.blocks {
            put_u32(&mut out, b.size())?;
            put_matrix(&mut out, &b.s);
        }
    }
    put_aggregator(&mut out, agg);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Wire(format!("key file truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64s(&mut self, len: usize) -> Result<Vec<f64>> {
        let bytes = self.take(len.checked_mul(8).ok_or_else(|| Error::Wire("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_row_slice(rows, cols, &self.f64s(rows * cols)?))
    }
}

pub fn decode_keys(buf: &[u8]) -> Result<(ServerKeys, AggregatorKeys)> {
    let (server, agg) = decode_keys_unchecked(buf)?;
    let report = validate_keys(&server, &agg);
    if !report.passed() {
        let failed: Vec<String> = report
            .failures()
            .map(|c| format!("{} ({})", c.name, c.detail))
            .collect();
        return Err(Error::InvalidKeys(failed.join(", ")));
    }
    Ok((server, agg))
}

/// Parses the container without checking the key invariants.
pub fn decode_keys_unchecked(buf: &[u8]) -> Result<(ServerKeys, AggregatorKeys)> {
    let mut rd = Reader { buf, pos: 0 };
    if rd.take(4)? != KEY_FILE_MAGIC {
        return Err(Error::Wire("bad magic, not a key file".into()));
    }
    let version = rd.u16()?;
    let n = rd.u32()?;
    let n_tilde = rd.u32()?;
    let p = rd.u32()?;
    if n == 0 || n_tilde <= n || p < 2 {
        return Err(Error::Wire(format!("invalid dimensions n={n} ñ={n_tilde} p={p}")));
    }

    let server = match version {
        DENSE_VERSION => {
            let pi1 = rd.matrix(n_tilde, n)?;
            let pi1_left = rd.matrix(n, n_tilde)?;
            let n1 = rd.matrix(n_tilde, n_tilde - n)?;
            ServerKeys::from_dense_unchecked(pi1, pi1_left, n1)?
        }
        STRUCTURED_VERSION => {
            let count = rd.u32()?;
            let mut sizes = Vec::with_capacity(count.min(n));
            for _ in 0..count {
                sizes.push((rd.u32()?, rd.u32()?));
            }
            let mut perm = Vec::with_capacity(n_tilde);
            for _ in 0..n_tilde {
                perm.push(rd.u32()?);
            }
            let (mut top_start, mut extra_start, mut offset) = (0, 0, 0);
            let mut groups = Vec::with_capacity(sizes.len());
            for (top, extra) in sizes {
                let v = DVector::from_vec(rd.f64s(top + extra)?);
                groups.push(Group {
                    top_start,
                    top,
                    extra_start,
                    extra,
                    offset,
                    v,
                });
                top_start += top;
                extra_start += extra;
                offset += top + extra;
            }
            let block_count = rd.u32()?;
            let mut blocks = Vec::with_capacity(block_count.min(n));
            let mut start = 0;
            for _ in 0..block_count {
                let size = rd.u32()?;
                blocks.push((start, rd.matrix(size, size)?));
                start += size;
            }
            ServerKeys::from_structured(StructuredMap::from_parts(n, n_tilde, perm, groups, blocks)?)
        }
        other => return Err(Error::Wire(format!("unsupported key file version {other}"))),
    };

    let pi2 = RowDVector::from_vec(rd.f64s(p)?);
    let pi2_right = DVector::from_vec(rd.f64s(p)?);
    let n2 = rd.matrix(p - 1, p)?;
    let agg = AggregatorKeys::from_parts_unchecked(pi2, pi2_right, n2)?;
    if rd.pos != buf.len() {
        return Err(Error::Wire(format!("{} trailing bytes", buf.len() - rd.pos)));
    }
    Ok((server, agg))
}

pub fn write_key_file(path: impl AsRef<Path>, server: &ServerKeys, agg: &AggregatorKeys) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_keys(server, agg)?).map_err(|e| Error::io(path, e))
}

pub fn read_key_file(path: impl AsRef<Path>) -> Result<(ServerKeys, AggregatorKeys)> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_keys(&buf)
}

pub fn read_key_file_unchecked(path: impl AsRef<Path>) -> Result<(ServerKeys, AggregatorKeys)> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_keys_unchecked(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::{gen_aggregator_keys, gen_server_keys, KeyGenConfig, KeyLayout};

    #[test]
    fn header_layout() {
        let cfg = KeyGenConfig::new(2, 3, 2, 1);
        let s = gen_server_keys(&cfg).unwrap();
        let a = gen_aggregator_keys(&cfg).unwrap();
        let bytes = encode_keys(&s, &a).unwrap();
        assert_eq!(&bytes[..4], b"SIFL");
        assert_eq!(&bytes[4..6], &1u16.to_le_bytes());
        assert_eq!(&bytes[6..18], &[2, 0, 0, 0, 3, 0, 0, 0, 2, 0, 0, 0]);
        // 6 + 6 + 3 + 2 + 2 + 2 doubles.
        assert_eq!(bytes.len(), 18 + 8 * 21);
        let pi1_00 = f64::from_le_bytes(bytes[18..26].try_into().unwrap());
        assert_eq!(pi1_00, s.immersion().pi1().unwrap()[(0, 0)]);
        let pi1_01 = f64::from_le_bytes(bytes[26..34].try_into().unwrap());
        assert_eq!(pi1_01, s.immersion().pi1().unwrap()[(0, 1)]);
    }

    #[test]
    fn dense_and_structured_round_trip() {
        for layout in [KeyLayout::Dense, KeyLayout::Structured] {
            let mut cfg = KeyGenConfig::new(20, 24, 3, 8);
            cfg.layout = layout;
            let s = gen_server_keys(&cfg).unwrap();
            let a = gen_aggregator_keys(&cfg).unwrap();
            let bytes = encode_keys(&s, &a).unwrap();
            let (s2, a2) = decode_keys(&bytes).unwrap();
            assert_eq!(encode_keys(&s2, &a2).unwrap(), bytes);
        }
    }

    #[test]
    fn corrupted_keys_are_rejected() {
        let cfg = KeyGenConfig::new(3, 5, 2, 4);
        let s = gen_server_keys(&cfg).unwrap();
        let a = gen_aggregator_keys(&cfg).unwrap();
        let mut bytes = encode_keys(&s, &a).unwrap();
        // First entry of Π1ᴸ.
        let off = 18 + 8 * 15;
        bytes[off..off + 8].copy_from_slice(&7.0f64.to_le_bytes());
        assert!(matches!(decode_keys(&bytes), Err(Error::InvalidKeys(_))));
        assert!(decode_keys(&bytes[..40]).is_err());
        assert!(decode_keys(b"NOPE").is_err());
    }
}
