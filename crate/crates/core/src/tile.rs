//! Binary tile format for risk maps.
//!
//! All fields are little-endian.
//!
//! | offset | size | field                          |
//! |-------:|-----:|--------------------------------|
//! |      0 |    8 | magic `PRVYMAP\0`              |
//! |      8 |    2 | version (u16, currently 1)     |
//! |     10 |    8 | origin_x (f64)                 |
//! |     18 |    8 | origin_y (f64)                 |
//! |     26 |    8 | origin_t (i64)                 |
//! |     34 |    8 | cell_size_xy (f64)             |
//! |     42 |    8 | cell_size_t (f64)              |
//! |     50 |    8 | p0 (f64)                       |
//! |     58 |    8 | sigma_x (f64)                  |
//! |     66 |    8 | sigma_y (f64)                  |
//! |     74 |    8 | sigma_t (f64)                  |
//! |     82 |    8 | truncation_eps (f64)           |
//! |     90 |    8 | entry_count (u64)              |
//! |     98 | 24·n | entries                        |
//!
//! Each entry is `i: i32, j: i32, k: i64, log_q: f64`, and entries are
//! strictly increasing in `(k, i, j)`.

use thiserror::Error;

use crate::grid::{CellIndex, GridSpec, RiskMap};
use crate::risk::RiskParams;

pub const MAGIC: [u8; 8] = *b"PRVYMAP\0";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 98;
pub const ENTRY_LEN: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported tile version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated payload: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("{0} trailing bytes after the last entry")]
    TrailingBytes(usize),
    #[error("entries out of order at position {0}")]
    Unsorted(u64),
    #[error("duplicate entry at position {0}")]
    Duplicate(u64),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("invalid entry: {0}")]
    InvalidEntry(String),
}

/// Serializes a map. The output depends only on the map contents.
pub fn encode(map: &RiskMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + ENTRY_LEN * map.len());
    let spec = map.spec();
    let params = map.params();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&spec.origin_x.to_le_bytes());
    out.extend_from_slice(&spec.origin_y.to_le_bytes());
    out.extend_from_slice(&spec.origin_t.to_le_bytes());
    out.extend_from_slice(&spec.cell_size_xy.to_le_bytes());
    out.extend_from_slice(&spec.cell_size_t.to_le_bytes());
    for v in [params.p0(), params.sigma_x(), params.sigma_y(), params.sigma_t(), map.truncation_eps()] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(map.len() as u64).to_le_bytes());
    for (idx, log_q) in map.entries() {
        out.extend_from_slice(&idx.i.to_le_bytes());
        out.extend_from_slice(&idx.j.to_le_bytes());
        out.extend_from_slice(&idx.k.to_le_bytes());
        out.extend_from_slice(&log_q.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let end = self.pos + N;
        let bytes =
            self.buf.get(self.pos..end).ok_or(DecodeError::Truncated { needed: end, available: self.buf.len() })?;
        self.pos = end;
        Ok(bytes.try_into().expect("slice length checked"))
    }

    fn f64(&mut self) -> Result<f64, DecodeError> {
        self.take().map(f64::from_le_bytes)
    }

    fn i64(&mut self) -> Result<i64, DecodeError> {
        self.take().map(i64::from_le_bytes)
    }

    fn i32(&mut self) -> Result<i32, DecodeError> {
        self.take().map(i32::from_le_bytes)
    }
}

pub fn decode(bytes: &[u8]) -> Result<RiskMap, DecodeError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let n = bytes.len().min(MAGIC.len());
    if bytes[..n] != MAGIC[..n] {
        return Err(DecodeError::BadMagic);
    }
    if r.take::<8>()? != MAGIC {
        return Err(DecodeError::BadMagic);
    }
    let version = u16::from_le_bytes(r.take()?);
    if version != VERSION {
        return Err(DecodeError::UnsupportedVersion(version));
    }
    let spec = GridSpec {
        origin_x: r.f64()?,
        origin_y: r.f64()?,
        origin_t: r.i64()?,
        cell_size_xy: r.f64()?,
        cell_size_t: r.f64()?,
    };
    let (p0, sx, sy, st) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let eps = r.f64()?;
    let count = u64::from_le_bytes(r.take()?);

    let body = bytes.len() - HEADER_LEN;
    let needed = usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(ENTRY_LEN))
        .ok_or(DecodeError::Truncated { needed: usize::MAX, available: bytes.len() })?;
    if body < needed {
        return Err(DecodeError::Truncated { needed: HEADER_LEN + needed, available: bytes.len() });
    }
    if body > needed {
        return Err(DecodeError::TrailingBytes(body - needed));
    }

    let params = RiskParams::new(p0, sx, sy, st).map_err(|e| DecodeError::InvalidHeader(e.to_string()))?;
    let empty = RiskMap::empty(spec, params, eps).map_err(|e| DecodeError::InvalidHeader(e.to_string()))?;

    let mut entries = Vec::with_capacity(count as usize);
    let mut prev: Option<CellIndex> = None;
    for n in 0..count {
        let idx = CellIndex { i: r.i32()?, j: r.i32()?, k: r.i64()? };
        let log_q = r.f64()?;
        if let Some(p) = prev {
            match p.cmp(&idx) {
                std::cmp::Ordering::Less => {}
                std::cmp::Ordering::Equal => return Err(DecodeError::Duplicate(n)),
                std::cmp::Ordering::Greater => return Err(DecodeError::Unsorted(n)),
            }
        }
        prev = Some(idx);
        entries.push((idx, log_q));
    }
    RiskMap::from_parts(*empty.spec(), *empty.params(), eps, entries)
        .map_err(|e| DecodeError::InvalidEntry(e.to_string()))
}
