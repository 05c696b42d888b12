//! SGRD binary grids and CSV grids.
//!
//! SGRD layout (all little-endian):
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `SGRD`                  |
//! | 4      | 4    | version, u32 = 1              |
//! | 8      | 4    | n_channels, u32               |
//! | 12     | 4    | n_time, u32                   |
//! | 16     | 4·n  | samples, f32, channel-major   |
//!
//! Samples are stored as f32, so writing a section quantizes it; a
//! read-write cycle of a file is bitwise exact.

use std::path::Path;

use super::SeismicSection;
use crate::atomic::write_atomic;
use crate::error::{Error, Result};

pub const SGRD_MAGIC: &[u8; 4] = b"SGRD";
pub const SGRD_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn encode_sgrd(section: &SeismicSection) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * section.len());
    out.extend_from_slice(SGRD_MAGIC);
    out.extend_from_slice(&SGRD_VERSION.to_le_bytes());
    out.extend_from_slice(&(section.n_channels() as u32).to_le_bytes());
    out.extend_from_slice(&(section.n_time() as u32).to_le_bytes());
    for &v in section.samples() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::format(offset as u64, "unexpected end of file"))
}

pub fn decode_sgrd(bytes: &[u8]) -> Result<SeismicSection> {
    match bytes.get(0..4) {
        Some(m) if m == SGRD_MAGIC => {}
        Some(_) => return Err(Error::format(0, "bad magic, expected \"SGRD\"")),
        None => return Err(Error::format(0, "unexpected end of file")),
    }
    let version = read_u32(bytes, 4)?;
    if version != SGRD_VERSION {
        return Err(Error::format(4, format!("unsupported SGRD version {version}")));
    }
    let nc = read_u32(bytes, 8)? as usize;
    let nt = read_u32(bytes, 12)? as usize;
    if nc == 0 || nt == 0 {
        return Err(Error::format(8, format!("empty grid {nc}x{nt}")));
    }
    let n = nc
        .checked_mul(nt)
        .ok_or_else(|| Error::format(8, "grid size overflows"))?;
    let expected = HEADER_LEN + 4 * n;
    if bytes.len() < expected {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated: expected {expected} bytes"),
        ));
    }
    if bytes.len() > expected {
        return Err(Error::format(expected as u64, "trailing bytes after samples"));
    }
    let mut samples = Vec::with_capacity(n);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format(
                (HEADER_LEN + 4 * i) as u64,
                "non-finite sample",
            ));
        }
        samples.push(v as f64);
    }
    SeismicSection::new(nc, nt, samples)
}

pub fn write_sgrd(path: impl AsRef<Path>, section: &SeismicSection) -> Result<()> {
    write_atomic(path.as_ref(), &encode_sgrd(section))
}

pub fn read_sgrd(path: impl AsRef<Path>) -> Result<SeismicSection> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_sgrd(&bytes)
}

/// CSV grid: one channel per row, `n_time` comma-separated samples per row.
pub fn write_csv(path: impl AsRef<Path>, section: &SeismicSection) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for c in 0..section.n_channels() {
        let row = &section.samples()[c * section.n_time()..(c + 1) * section.n_time()];
        w.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io(path.as_ref(), e.into_error()))?;
    write_atomic(path.as_ref(), &bytes)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<SeismicSection> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut samples = Vec::new();
    let mut n_time = None;
    let mut n_channels = 0;
    for rec in rdr.records() {
        let rec = rec?;
        let offset = rec.position().map(|p| p.byte()).unwrap_or(0);
        if *n_time.get_or_insert(rec.len()) != rec.len() {
            return Err(Error::format(offset, "ragged CSV row"));
        }
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::format(offset, format!("not a number: {field:?}")))?;
            samples.push(v);
        }
        n_channels += 1;
    }
    let n_time = n_time.ok_or_else(|| Error::format(0, "empty CSV grid"))?;
    SeismicSection::new(n_channels, n_time, samples)
        .map_err(|e| Error::format(0, e.to_string()))
}
