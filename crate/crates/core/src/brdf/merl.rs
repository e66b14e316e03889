//! MERL binary BRDF files: three little-endian `i32` dimensions `(90, 90, 180)`
//! followed by `3 × TABLE_LEN` little-endian `f64` samples, channel-major, each
//! divided by the channel's scale constant.

use std::fs;
use std::path::Path;

use super::coords::{PHI_D_BINS, TABLE_LEN, THETA_D_BINS, THETA_H_BINS};
use super::table::Brdf;
use crate::{Error, Result};

/// Stored value × scale = physical reflectance, for R, G, B.
pub const MERL_SCALES: [f64; 3] = [1.0 / 1500.0, 1.15 / 1500.0, 1.66 / 1500.0];

const HEADER_LEN: usize = 12;

#[derive(Debug, Clone)]
pub struct MerlLoad {
    pub brdf: Brdf,
    /// Negative (unmeasured) entries clamped to zero.
    pub clamped: usize,
}

pub fn read_merl(path: impl AsRef<Path>) -> Result<MerlLoad> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_merl(&bytes, name).map_err(|e| match e {
        Error::Format { message, .. } => Error::format(path, message),
        other => Error::format(path, other.to_string()),
    })
}

/// Decodes an in-memory MERL file.
pub fn parse_merl(bytes: &[u8], name: impl Into<String>) -> Result<MerlLoad> {
    let here = "<memory>";
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(here, "truncated MERL header"));
    }
    let dim = |k: usize| i32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap());
    let dims = [dim(0), dim(1), dim(2)];
    let expected = [THETA_H_BINS as i32, THETA_D_BINS as i32, PHI_D_BINS as i32];
    if dims != expected {
        return Err(Error::format(here, format!("MERL dimensions {dims:?}, expected {expected:?}")));
    }
    let need = HEADER_LEN + 3 * TABLE_LEN * 8;
    if bytes.len() < need {
        return Err(Error::format(here, format!("truncated MERL data: {} bytes, expected {need}", bytes.len())));
    }
    let body = &bytes[HEADER_LEN..need];
    let channels: Vec<Vec<f64>> = (0..3)
        .map(|c| {
            body[c * TABLE_LEN * 8..(c + 1) * TABLE_LEN * 8]
                .chunks_exact(8)
                .map(|b| decode_sample(f64::from_le_bytes(b.try_into().unwrap()), c))
                .collect()
        })
        .collect();
    let (brdf, clamped) = Brdf::from_channels_clamped(name, channels)?;
    Ok(MerlLoad { brdf, clamped })
}

/// Physical reflectance of a stored sample of channel `c`.
#[inline]
pub fn decode_sample(stored: f64, channel: usize) -> f64 {
    stored * MERL_SCALES[channel]
}

/// Stored sample for physical value `x` of channel `c`; exact inverse of
/// [`decode_sample`] whenever `x` is a decoded value.
pub fn encode_sample(x: f64, channel: usize) -> f64 {
    encode(x, MERL_SCALES[channel])
}

/// Stored value whose decoded product with `scale` reproduces `x` exactly when
/// such a value exists; the nearest quotient otherwise.
fn encode(x: f64, scale: f64) -> f64 {
    let y = x / scale;
    if y * scale == x {
        return y;
    }
    let (mut up, mut down) = (y, y);
    for _ in 0..4 {
        up = up.next_up();
        down = down.next_down();
        if up * scale == x {
            return up;
        }
        if down * scale == x {
            return down;
        }
    }
    y
}

pub fn write_merl(brdf: &Brdf, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = merl_bytes(brdf)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Encodes a three-channel table as a MERL file image.
pub fn merl_bytes(brdf: &Brdf) -> Result<Vec<u8>> {
    if brdf.channel_count() != 3 {
        return Err(Error::InvalidParameter(format!("MERL files hold 3 channels, table has {}", brdf.channel_count())));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 3 * TABLE_LEN * 8);
    for d in [THETA_H_BINS, THETA_D_BINS, PHI_D_BINS] {
        out.extend_from_slice(&(d as i32).to_le_bytes());
    }
    for (c, ch) in brdf.channels().iter().enumerate() {
        for &x in ch {
            out.extend_from_slice(&encode_sample(x, c).to_le_bytes());
        }
    }
    Ok(out)
}
