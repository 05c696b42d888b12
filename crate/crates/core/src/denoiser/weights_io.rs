//! DNCW weight files.
//!
//! ```text
//! "DNCW" | version u32 = 1 | depth u32 | band_low f32 | band_high f32
//! per layer:
//!   kind u8 (0 ConvReLU, 1 ConvBNReLU, 2 Conv) | in_ch u32 | out_ch u32
//!   kernel  out*in*9 f32   [out][in][row][col]
//!   bias    out f32
//!   kind 1 only: gamma, beta, running_mean, running_var (out f32 each), bn_epsilon f32
//! ```
//!
//! Everything is little-endian. Parameters are held as f64 in memory and
//! rounded to f32 on save.

use std::path::Path;

use super::dncnn::{BatchNorm, LayerKind, LayerSpec, WeightsBundle};
use crate::atomic::write_atomic;
use crate::error::{Error, Result};

pub const DNCW_MAGIC: &[u8; 4] = b"DNCW";
pub const DNCW_VERSION: u32 = 1;

pub fn encode_weights(bundle: &WeightsBundle) -> Result<Vec<u8>> {
    bundle.validate()?;
    let mut out = Vec::new();
    let put_f32s = |out: &mut Vec<u8>, v: &[f64]| {
        for &x in v {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    };
    out.extend_from_slice(DNCW_MAGIC);
    out.extend_from_slice(&DNCW_VERSION.to_le_bytes());
    out.extend_from_slice(&(bundle.depth() as u32).to_le_bytes());
    put_f32s(&mut out, &[bundle.noise_band.0, bundle.noise_band.1]);
    for l in &bundle.layers {
        out.push(l.kind.code());
        out.extend_from_slice(&(l.in_ch as u32).to_le_bytes());
        out.extend_from_slice(&(l.out_ch as u32).to_le_bytes());
        put_f32s(&mut out, &l.kernel);
        put_f32s(&mut out, &l.bias);
        if let Some(bn) = &l.bn {
            put_f32s(&mut out, &bn.gamma);
            put_f32s(&mut out, &bn.beta);
            put_f32s(&mut out, &bn.running_mean);
            put_f32s(&mut out, &bn.running_var);
            put_f32s(&mut out, &[bn.epsilon]);
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::format(
                    self.bytes.len() as u64,
                    format!("truncated: needed {n} bytes at offset {}", self.pos),
                )
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let start = self.pos;
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::format(start as u64, "size overflow"))?)?;
        raw.chunks_exact(4)
            .enumerate()
            .map(|(i, c)| {
                let v = f32::from_le_bytes(c.try_into().unwrap());
                if v.is_finite() {
                    Ok(v as f64)
                } else {
                    Err(Error::format((start + 4 * i) as u64, "non-finite parameter"))
                }
            })
            .collect()
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<WeightsBundle> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != DNCW_MAGIC {
        return Err(Error::format(0, "bad magic, expected \"DNCW\""));
    }
    let version = c.u32()?;
    if version != DNCW_VERSION {
        return Err(Error::format(4, format!("unsupported DNCW version {version}")));
    }
    let depth = c.u32()? as usize;
    let band = c.f32s(2)?;
    let mut layers = Vec::with_capacity(depth.min(1024));
    for _ in 0..depth {
        let at = c.pos;
        let kind = LayerKind::from_code(c.u8()?)
            .ok_or_else(|| Error::format(at as u64, "unknown layer kind"))?;
        let in_ch = c.u32()? as usize;
        let out_ch = c.u32()? as usize;
        let kernel = c.f32s(out_ch * in_ch * 9)?;
        let bias = c.f32s(out_ch)?;
        let bn = if kind == LayerKind::ConvBnRelu {
            Some(BatchNorm {
                gamma: c.f32s(out_ch)?,
                beta: c.f32s(out_ch)?,
                running_mean: c.f32s(out_ch)?,
                running_var: c.f32s(out_ch)?,
                epsilon: c.f32s(1)?[0],
            })
        } else {
            None
        };
        layers.push(LayerSpec {
            kind,
            in_ch,
            out_ch,
            kernel,
            bias,
            bn,
        });
    }
    if c.pos != bytes.len() {
        return Err(Error::format(c.pos as u64, "trailing bytes after last layer"));
    }
    let bundle = WeightsBundle {
        layers,
        noise_band: (band[0], band[1]),
        format_version: version,
    };
    bundle
        .validate()
        .map_err(|e| Error::format(0, format!("malformed network: {e}")))?;
    Ok(bundle)
}

pub fn save_weights(bundle: &WeightsBundle, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_weights(bundle)?)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightsBundle> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_depth_five_is_bitwise() {
        let b = WeightsBundle::init(5, 6, (0.125, 1.0), 17).unwrap();
        let bytes = encode_weights(&b).unwrap();
        let loaded = decode_weights(&bytes).unwrap();
        assert_eq!(encode_weights(&loaded).unwrap(), bytes);
        // A second load of the re-encoded bytes gives the same bundle.
        assert_eq!(decode_weights(&encode_weights(&loaded).unwrap()).unwrap(), loaded);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("net.dncw");
        save_weights(&loaded, &p).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), bytes);
        assert_eq!(load_weights(&p).unwrap(), loaded);
    }

    #[test]
    fn truncation_is_a_format_error() {
        let bytes = encode_weights(&WeightsBundle::init(3, 2, (0.0, 1.0), 1).unwrap()).unwrap();
        for cut in [0, 3, 7, 20, bytes.len() / 2, bytes.len() - 1] {
            let err = decode_weights(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::Format { .. }), "cut {cut}: {err}");
        }
    }

    #[test]
    fn wrong_magic_names_expected() {
        let mut bytes =
            encode_weights(&WeightsBundle::init(3, 2, (0.0, 1.0), 1).unwrap()).unwrap();
        bytes[..4].copy_from_slice(b"SGRD");
        let err = decode_weights(&bytes).unwrap_err().to_string();
        assert!(err.contains("DNCW") && err.contains("byte 0"), "{err}");
    }

    #[test]
    fn header_layout() {
        let b = WeightsBundle::init(3, 2, (0.25, 0.5), 1).unwrap();
        let bytes = encode_weights(&b).unwrap();
        assert_eq!(&bytes[..4], b"DNCW");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(f32::from_le_bytes(bytes[12..16].try_into().unwrap()), 0.25);
        assert_eq!(f32::from_le_bytes(bytes[16..20].try_into().unwrap()), 0.5);
        assert_eq!(bytes[20], 0);
        // layer sizes: 1->2 conv, 2->2 conv+bn, 2->1 conv
        let l0 = 1 + 8 + 4 * (18 + 2);
        let l1 = 1 + 8 + 4 * (36 + 2 + 4 * 2 + 1);
        let l2 = 1 + 8 + 4 * (18 + 1);
        assert_eq!(bytes.len(), 20 + l0 + l1 + l2);
        assert_eq!(bytes[20 + l0], 1);
    }
}
