use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sha256_hex;
use crate::maps::AbundanceMap;
use crate::{Error, Result};

/// Sidecar describing an abundance blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbundanceMetadata {
    pub version: u32,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Atom names in coefficient order.
    pub atoms: Vec<String>,
    pub lambda: f64,
    /// Hex SHA-256 of the dictionary the coefficients refer to.
    pub dictionary_hash: String,
    /// Alternating run lengths of outside / inside pixels, starting outside.
    pub mask_runs: Vec<usize>,
    /// Hex SHA-256 of the blob file.
    pub blob_sha256: String,
}

const HEADER: usize = 16;

/// Blob layout: `width, height, M, channels` as little-endian `u32`, then
/// `f64` little-endian coefficients ordered `[y][x][channel][atom]`.
pub fn encode_abundances(map: &AbundanceMap) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(HEADER + map.coefficients.len() * 8);
    for v in [map.width, map.height, map.atoms, map.channels] {
        let v = u32::try_from(v).map_err(|_| Error::InvalidParameter("abundance map too large".into()))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    for c in &map.coefficients {
        out.extend_from_slice(&c.to_le_bytes());
    }
    Ok(out)
}

pub fn write_abundances(
    blob_path: impl AsRef<Path>,
    metadata_path: impl AsRef<Path>,
    map: &AbundanceMap,
    atom_names: &[String],
    dictionary_hash: &str,
) -> Result<AbundanceMetadata> {
    let (blob_path, metadata_path) = (blob_path.as_ref(), metadata_path.as_ref());
    if atom_names.len() != map.atoms {
        return Err(Error::DimensionMismatch(format!("{} names for {} atoms", atom_names.len(), map.atoms)));
    }
    let blob = encode_abundances(map)?;
    let meta = AbundanceMetadata {
        version: 1,
        width: map.width,
        height: map.height,
        channels: map.channels,
        atoms: atom_names.to_vec(),
        lambda: map.lambda,
        dictionary_hash: dictionary_hash.to_string(),
        mask_runs: runs(&map.mask),
        blob_sha256: sha256_hex(&blob),
    };
    fs::write(blob_path, &blob).map_err(|e| Error::io(blob_path, e))?;
    let text =
        serde_json::to_string_pretty(&meta).map_err(|e| Error::Json { path: metadata_path.into(), source: e })?;
    fs::write(metadata_path, text).map_err(|e| Error::io(metadata_path, e))?;
    Ok(meta)
}

pub fn read_abundances(
    blob_path: impl AsRef<Path>,
    metadata_path: impl AsRef<Path>,
) -> Result<(AbundanceMap, AbundanceMetadata)> {
    let (blob_path, metadata_path) = (blob_path.as_ref(), metadata_path.as_ref());
    let text = fs::read_to_string(metadata_path).map_err(|e| Error::io(metadata_path, e))?;
    let meta: AbundanceMetadata =
        serde_json::from_str(&text).map_err(|e| Error::Json { path: metadata_path.into(), source: e })?;
    let blob = fs::read(blob_path).map_err(|e| Error::io(blob_path, e))?;
    if sha256_hex(&blob) != meta.blob_sha256 {
        return Err(Error::format(blob_path, "content hash does not match its metadata"));
    }
    if blob.len() < HEADER {
        return Err(Error::format(blob_path, "truncated header"));
    }
    let field = |i: usize| u32::from_le_bytes(blob[4 * i..4 * i + 4].try_into().unwrap()) as usize;
    let (w, h, m, ch) = (field(0), field(1), field(2), field(3));
    if (w, h, ch) != (meta.width, meta.height, meta.channels) || m != meta.atoms.len() {
        return Err(Error::format(blob_path, "header disagrees with metadata"));
    }
    let n = w * h * ch * m;
    if blob.len() != HEADER + 8 * n {
        return Err(Error::format(blob_path, format!("expected {} bytes, found {}", HEADER + 8 * n, blob.len())));
    }
    let mut map = AbundanceMap::zeros(w, h, m, ch);
    for (c, chunk) in map.coefficients.iter_mut().zip(blob[HEADER..].chunks_exact(8)) {
        *c = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    map.mask = unruns(&meta.mask_runs, w * h)
        .ok_or_else(|| Error::format(metadata_path, "mask runs do not cover the image"))?;
    map.lambda = meta.lambda;
    Ok((map, meta))
}

fn runs(mask: &[bool]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut current = false;
    let mut len = 0;
    for &b in mask {
        if b != current {
            out.push(len);
            current = b;
            len = 0;
        }
        len += 1;
    }
    out.push(len);
    out
}

fn unruns(runs: &[usize], len: usize) -> Option<Vec<bool>> {
    let mut out = Vec::with_capacity(len);
    for (i, &r) in runs.iter().enumerate() {
        out.extend(std::iter::repeat_n(i % 2 == 1, r));
    }
    (out.len() == len).then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let mut map = AbundanceMap::zeros(3, 2, 2, 3);
        map.set(1, 0, 2, &[0.1, 1.0 / 3.0]);
        map.set(2, 1, 0, &[7.5e-12, 0.0]);
        map.lambda = 0.01;
        let dir = tempfile::tempdir().unwrap();
        let (b, m) = (dir.path().join("a.bin"), dir.path().join("a.json"));
        let names = vec!["x".to_string(), "y".to_string()];
        write_abundances(&b, &m, &map, &names, "h").unwrap();
        let (back, meta) = read_abundances(&b, &m).unwrap();
        assert_eq!(meta.atoms, names);
        assert_eq!(back.coefficients, map.coefficients);
        assert_eq!(back.mask, map.mask);
        let bytes = fs::read(&b).unwrap();
        assert_eq!(&bytes[..16], &[3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0]);

        let mut tampered = bytes.clone();
        tampered[20] ^= 1;
        fs::write(&b, tampered).unwrap();
        assert!(read_abundances(&b, &m).is_err());
    }

    #[test]
    fn runs_invert() {
        for mask in [vec![], vec![true], vec![false, false], vec![true, false, true, true, false]] {
            assert_eq!(unruns(&runs(&mask), mask.len()).unwrap(), mask);
        }
    }
}
