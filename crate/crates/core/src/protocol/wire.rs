//! Byte-level message encoding shared by every transport.
//!
//! ```text
//! frame   := len:u32le  body            (len = byte length of body)
//! body    := tag:u8  round:u32le  client:u32le  payload
//! payload := [size:u64le]  rows:u32le  cols:u32le  f64le{rows·cols, row-major}
//! ```
//!
//! `size` (the client's dataset size) is present only in `LocalUpdate`.
//! Vectors travel as `rows×1` matrices. Tags: 1 `BroadcastPlain`,
//! 2 `BroadcastEncoded`, 3 `BroadcastDoublyEncoded`, 4 `LocalUpdate`,
//! 5 `AggregateToServer`, 6 `Done`.

use std::io::Read;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Upper bound on a frame body, to reject garbage length prefixes.
pub const MAX_FRAME: usize = 1 << 31;

const HEADER: usize = 1 + 4 + 4;

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    BroadcastPlain {
        round: u32,
        model: DVector<f64>,
    },
    BroadcastEncoded {
        round: u32,
        model: DVector<f64>,
    },
    BroadcastDoublyEncoded {
        round: u32,
        model: DMatrix<f64>,
    },
    LocalUpdate {
        round: u32,
        client_id: u32,
        dataset_size: u64,
        payload: DVector<f64>,
    },
    /// `ñ×p` when widened by the aggregator, `len×1` otherwise.
    AggregateToServer {
        round: u32,
        payload: DMatrix<f64>,
    },
    Done {
        round: u32,
        model: DVector<f64>,
    },
}

impl Message {
    pub fn tag(&self) -> u8 {
        match self {
            Message::BroadcastPlain { .. } => 1,
            Message::BroadcastEncoded { .. } => 2,
            Message::BroadcastDoublyEncoded { .. } => 3,
            Message::LocalUpdate { .. } => 4,
            Message::AggregateToServer { .. } => 5,
            Message::Done { .. } => 6,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Message::BroadcastPlain { .. } => "BroadcastPlain",
            Message::BroadcastEncoded { .. } => "BroadcastEncoded",
            Message::BroadcastDoublyEncoded { .. } => "BroadcastDoublyEncoded",
            Message::LocalUpdate { .. } => "LocalUpdate",
            Message::AggregateToServer { .. } => "AggregateToServer",
            Message::Done { .. } => "Done",
        }
    }

    pub fn round(&self) -> u32 {
        match self {
            Message::BroadcastPlain { round, .. }
            | Message::BroadcastEncoded { round, .. }
            | Message::BroadcastDoublyEncoded { round, .. }
            | Message::LocalUpdate { round, .. }
            | Message::AggregateToServer { round, .. }
            | Message::Done { round, .. } => *round,
        }
    }

    pub fn client_id(&self) -> u32 {
        match self {
            Message::LocalUpdate { client_id, .. } => *client_id,
            _ => 0,
        }
    }

    /// `(rows, cols)` of the numeric payload.
    pub fn payload_shape(&self) -> (usize, usize) {
        match self {
            Message::BroadcastPlain { model, .. }
            | Message::BroadcastEncoded { model, .. }
            | Message::Done { model, .. } => (model.len(), 1),
            Message::LocalUpdate { payload, .. } => (payload.len(), 1),
            Message::BroadcastDoublyEncoded { model, .. } => model.shape(),
            Message::AggregateToServer { payload, .. } => payload.shape(),
        }
    }

    /// Full frame including the length prefix.
    pub fn encode(&self) -> Vec<u8> {
        let (rows, cols) = self.payload_shape();
        let extra = if matches!(self, Message::LocalUpdate { .. }) { 8 } else { 0 };
        let body = HEADER + extra + 8 + 8 * rows * cols;
        let mut out = Vec::with_capacity(4 + body);
        out.extend_from_slice(&(body as u32).to_le_bytes());
        out.push(self.tag());
        out.extend_from_slice(&self.round().to_le_bytes());
        out.extend_from_slice(&self.client_id().to_le_bytes());
        if let Message::LocalUpdate { dataset_size, .. } = self {
            out.extend_from_slice(&dataset_size.to_le_bytes());
        }
        out.extend_from_slice(&(rows as u32).to_le_bytes());
        out.extend_from_slice(&(cols as u32).to_le_bytes());
        match self {
            Message::BroadcastPlain { model: v, .. }
            | Message::BroadcastEncoded { model: v, .. }
            | Message::Done { model: v, .. }
            | Message::LocalUpdate { payload: v, .. } => {
                for x in v.iter() {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            Message::BroadcastDoublyEncoded { model: m, .. } | Message::AggregateToServer { payload: m, .. } => {
                for r in 0..rows {
                    for c in 0..cols {
                        out.extend_from_slice(&m[(r, c)].to_le_bytes());
                    }
                }
            }
        }
        out
    }

    /// Decodes exactly one frame; trailing bytes are an error.
    pub fn decode(frame: &[u8]) -> Result<Message> {
        let mut cur = Cursor { buf: frame, pos: 0 };
        let len = cur.u32()? as usize;
        if len != frame.len() - 4 {
            return Err(Error::Wire(format!(
                "length prefix {len} disagrees with frame body of {} bytes",
                frame.len() - 4
            )));
        }
        Self::decode_body(&frame[4..])
    }

    pub fn decode_body(body: &[u8]) -> Result<Message> {
        let mut cur = Cursor { buf: body, pos: 0 };
        let tag = cur.u8()?;
        let round = cur.u32()?;
        let client_id = cur.u32()?;
        let dataset_size = if tag == 4 { Some(cur.u64()?) } else { None };
        let rows = cur.u32()? as usize;
        let cols = cur.u32()? as usize;
        let count = rows
            .checked_mul(cols)
            .filter(|c| c.checked_mul(8) == Some(body.len() - cur.pos))
            .ok_or_else(|| {
                Error::Wire(format!(
                    "{rows}x{cols} payload does not fit the remaining {} bytes",
                    body.len() - cur.pos
                ))
            })?;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(cur.f64()?);
        }
        let vector = |values: Vec<f64>| -> Result<DVector<f64>> {
            if cols != 1 {
                return Err(Error::Wire(format!("tag {tag} carries a vector, got {rows}x{cols}")));
            }
            Ok(DVector::from_vec(values))
        };
        if tag != 4 && client_id != 0 {
            return Err(Error::Wire(format!("tag {tag} must carry client id 0, got {client_id}")));
        }
        Ok(match tag {
            1 => Message::BroadcastPlain { round, model: vector(values)? },
            2 => Message::BroadcastEncoded { round, model: vector(values)? },
            3 => Message::BroadcastDoublyEncoded {
                round,
                model: DMatrix::from_row_slice(rows, cols, &values),
            },
            4 => Message::LocalUpdate {
                round,
                client_id,
                dataset_size: dataset_size.expect("read above"),
                payload: vector(values)?,
            },
            5 => Message::AggregateToServer {
                round,
                payload: DMatrix::from_row_slice(rows, cols, &values),
            },
            6 => Message::Done { round, model: vector(values)? },
            other => return Err(Error::Wire(format!("unknown tag {other}"))),
        })
    }
}

/// Reads one length-prefixed frame (prefix included in the result).
pub fn read_frame(reader: &mut impl Read) -> std::io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    reader.read_exact(&mut len)?;
    let body = u32::from_le_bytes(len) as usize;
    if body > MAX_FRAME {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("frame of {body} bytes exceeds limit"),
        ));
    }
    let mut frame = vec![0u8; 4 + body];
    frame[..4].copy_from_slice(&len);
    reader.read_exact(&mut frame[4..])?;
    Ok(frame)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let bytes = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| Error::Wire(format!("truncated frame at byte {}", self.pos)))?;
        self.pos = end;
        Ok(bytes.try_into().expect("slice of length N"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        self.take().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64> {
        self.take().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64> {
        self.take().map(f64::from_le_bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn every_tag_round_trips() {
        let msgs = [
            Message::BroadcastPlain { round: 0, model: dvector![1.0, -2.5] },
            Message::BroadcastEncoded { round: 3, model: dvector![0.25] },
            Message::BroadcastDoublyEncoded {
                round: 7,
                model: DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            },
            Message::LocalUpdate {
                round: 1,
                client_id: 9,
                dataset_size: 6000,
                payload: dvector![f64::MIN_POSITIVE, -0.0, 1e300],
            },
            Message::AggregateToServer { round: 2, payload: DMatrix::from_row_slice(1, 2, &[5.0, -1.0]) },
            Message::Done { round: 20, model: dvector![] },
        ];
        for m in msgs {
            let bytes = m.encode();
            assert_eq!(bytes[4], m.tag());
            let back = Message::decode(&bytes).unwrap();
            assert_eq!(back.encode(), bytes);
            assert_eq!(back, m);
        }
    }

    #[test]
    fn malformed_frames_are_rejected() {
        let good = Message::BroadcastPlain { round: 0, model: dvector![1.0] }.encode();
        assert!(Message::decode(&good[..good.len() - 1]).is_err());
        let mut bad_tag = good.clone();
        bad_tag[4] = 42;
        assert!(matches!(Message::decode(&bad_tag), Err(Error::Wire(_))));
        let mut wide = Message::AggregateToServer { round: 0, payload: DMatrix::zeros(1, 2) }.encode();
        wide[4] = 1;
        assert!(Message::decode(&wide).is_err());
    }
}
