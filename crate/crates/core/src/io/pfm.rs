use std::fs;
use std::path::Path;

use crate::{Error, Result};

/// A portable float map. Rows are stored top to bottom in memory, pixels
/// interleaved by channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Pfm {
    pub width: usize,
    pub height: usize,
    /// 1 (`Pf`) or 3 (`PF`).
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Pfm {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidParameter(format!("PFM holds 1 or 3 channels, not {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "PFM data has {} values, expected {}",
                data.len(),
                width * height * channels
            )));
        }
        Ok(Pfm { width, height, channels, data })
    }

    /// Little-endian encoding with rows written bottom to top.
    pub fn to_bytes(&self) -> Vec<u8> {
        let tag = if self.channels == 3 { "PF" } else { "Pf" };
        let mut out = format!("{tag}\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        let row = self.width * self.channels;
        out.reserve(self.data.len() * 4);
        for y in (0..self.height).rev() {
            for v in &self.data[y * row..(y + 1) * row] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut pos = 0;
        let mut token = || -> std::result::Result<String, String> {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err("truncated header".into());
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        let channels = match token()?.as_str() {
            "PF" => 3,
            "Pf" => 1,
            other => return Err(format!("bad magic {other:?}")),
        };
        let width: usize = token()?.parse().map_err(|_| "bad width")?;
        let height: usize = token()?.parse().map_err(|_| "bad height")?;
        let scale: f32 = token()?.parse().map_err(|_| "bad scale")?;
        if scale == 0.0 || !scale.is_finite() {
            return Err("scale must be non-zero".into());
        }
        // Exactly one whitespace byte separates the header from the raster.
        let start = pos + 1;
        let count = width.checked_mul(height).and_then(|n| n.checked_mul(channels)).ok_or("image too large")?;
        if bytes.len() < start + count * 4 {
            return Err(format!("raster truncated: {} of {} bytes", bytes.len().saturating_sub(start), count * 4));
        }
        let little = scale < 0.0;
        let row = width * channels;
        let mut data = vec![0f32; count];
        for (i, chunk) in bytes[start..start + count * 4].chunks_exact(4).enumerate() {
            let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
            let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
            let (file_row, col) = (i / row, i % row);
            data[(height - 1 - file_row) * row + col] = v;
        }
        Ok(Pfm { width, height, channels, data })
    }
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Pfm> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Pfm::from_bytes(&bytes).map_err(|m| Error::format(path, m))
}

pub fn write_pfm(path: impl AsRef<Path>, image: &Pfm) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, image.to_bytes()).map_err(|e| Error::io(path, e))
}
