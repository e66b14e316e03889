//! On-disk cache of rendered candidate matrices.
//!
//! Layout: magic `DSRC`, a version byte, the 32-byte key, then `channels, Q,
//! M, levels` as little-endian `u32`; per level the resolution (`f64`), the
//! candidate count (`u64`) and every candidate's per-channel column-major
//! matrix as `f64`. A SHA-256 of all preceding bytes closes the file.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::brdf::Dictionary;
use crate::geometry::Vec3;
use crate::render::{CandidateSystem, LightingRig, RenderedDictionary, RenderedPyramid};
use crate::sampling::equiangular_hemisphere;
use crate::{Error, Result};

pub const CACHE_VERSION: u8 = 1;
const MAGIC: &[u8; 4] = b"DSRC";
const CONSTRUCTION: &[u8] = b"equiangular-rings/1";

/// Identifies the rendered content: dictionary, lights, view and candidate
/// construction at each resolution.
pub fn cache_key(dict: &Dictionary, rig: &LightingRig, view: &Vec3, resolutions: &[f64]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(MAGIC);
    h.update([CACHE_VERSION]);
    h.update(dict.content_hash());
    h.update((rig.len() as u64).to_le_bytes());
    for (d, i) in rig.directions.iter().zip(&rig.intensities) {
        for v in d.iter().chain(std::iter::once(i)) {
            h.update(v.to_le_bytes());
        }
    }
    for v in view.iter() {
        h.update(v.to_le_bytes());
    }
    h.update(CONSTRUCTION);
    h.update((resolutions.len() as u64).to_le_bytes());
    for r in resolutions {
        h.update(r.to_le_bytes());
    }
    h.finalize().into()
}

struct Hashing<W> {
    inner: W,
    hash: Sha256,
}

impl<W: Write> Hashing<W> {
    fn put(&mut self, bytes: &[u8]) -> std::io::Result<()> {
        self.hash.update(bytes);
        self.inner.write_all(bytes)
    }
}

/// Renders any missing candidates and writes every level of `pyramid`.
pub fn write_render_cache(path: impl AsRef<Path>, pyramid: &RenderedPyramid) -> Result<()> {
    let path = path.as_ref();
    let finest = pyramid.finest();
    let (dict, rig, view) = (finest.dictionary(), finest.rig(), finest.view());
    let resolutions: Vec<f64> = pyramid.levels().iter().map(|l| l.candidates().resolution()).collect();
    let key = cache_key(dict, rig, &view, &resolutions);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = Hashing { inner: BufWriter::new(file), hash: Sha256::new() };
    let io = |e| Error::io(path, e);
    w.put(MAGIC).map_err(io)?;
    w.put(&[CACHE_VERSION]).map_err(io)?;
    w.put(&key).map_err(io)?;
    for v in [dict.channels(), rig.len(), dict.len(), resolutions.len()] {
        w.put(&(v as u32).to_le_bytes()).map_err(io)?;
    }
    for level in pyramid.levels() {
        level.materialize();
        w.put(&level.candidates().resolution().to_le_bytes()).map_err(io)?;
        w.put(&(level.len() as u64).to_le_bytes()).map_err(io)?;
        for i in 0..level.len() {
            for m in &level.system(i).matrices {
                for v in m {
                    w.put(&v.to_le_bytes()).map_err(io)?;
                }
            }
        }
    }
    let digest: [u8; 32] = w.hash.clone().finalize().into();
    w.inner.write_all(&digest).map_err(io)?;
    w.inner.flush().map_err(io)
}

/// Loads a cache written for exactly this dictionary, rig, view and schedule.
pub fn read_render_cache(
    path: impl AsRef<Path>,
    dict: &Dictionary,
    rig: &LightingRig,
    view: &Vec3,
    resolutions: &[f64],
) -> Result<RenderedPyramid> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut hash = Sha256::new();
    let mut take = |n: usize| -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        r.read_exact(&mut buf).map_err(|_| Error::format(path, "truncated render cache"))?;
        hash.update(&buf);
        Ok(buf)
    };
    if take(4)? != MAGIC {
        return Err(Error::format(path, "not a render cache"));
    }
    let version = take(1)?[0];
    if version != CACHE_VERSION {
        return Err(Error::format(path, format!("cache version {version}, expected {CACHE_VERSION}")));
    }
    if take(32)? != cache_key(dict, rig, view, resolutions) {
        return Err(Error::format(path, "cache was rendered for different inputs"));
    }
    let u32_at = |b: &[u8], i: usize| u32::from_le_bytes(b[4 * i..4 * i + 4].try_into().unwrap()) as usize;
    let dims = take(16)?;
    let (channels, q, m, levels) = (u32_at(&dims, 0), u32_at(&dims, 1), u32_at(&dims, 2), u32_at(&dims, 3));
    if channels != dict.channels() || q != rig.len() || m != dict.len() || levels != resolutions.len() {
        return Err(Error::format(path, "cache dimensions disagree with its key"));
    }
    let mut out = Vec::with_capacity(levels);
    for &res in resolutions {
        let head = take(16)?;
        let stored = f64::from_le_bytes(head[..8].try_into().unwrap());
        let count = u64::from_le_bytes(head[8..].try_into().unwrap()) as usize;
        let candidates = equiangular_hemisphere(res)?;
        if stored != res || count != candidates.len() {
            return Err(Error::format(path, "level layout disagrees with its key"));
        }
        let mut systems = Vec::with_capacity(count);
        for _ in 0..count {
            let mut matrices = Vec::with_capacity(channels);
            for _ in 0..channels {
                let bytes = take(8 * q * m)?;
                matrices.push(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect());
            }
            systems.push(CandidateSystem::from_matrices(matrices, q, m));
        }
        out.push(RenderedDictionary::from_systems(candidates, dict.clone(), rig.clone(), *view, systems)?);
    }
    let expected: [u8; 32] = hash.finalize().into();
    let mut digest = [0u8; 32];
    r.read_exact(&mut digest).map_err(|_| Error::format(path, "truncated render cache"))?;
    if digest != expected {
        return Err(Error::format(path, "render cache content hash mismatch"));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::format(path, "trailing bytes after render cache"));
    }
    RenderedPyramid::from_levels(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brdf::{generate_parametric, ParametricModel};

    fn inputs() -> (Dictionary, LightingRig) {
        let atoms = vec![
            generate_parametric(&ParametricModel::Lambertian { albedo: 0.8 }, 1).unwrap(),
            generate_parametric(&ParametricModel::Ward { diffuse: 0.1, specular: 0.3, roughness: 0.2 }, 1).unwrap(),
        ];
        (Dictionary::new(atoms).unwrap(), LightingRig::random(6, 70.0, 11).unwrap())
    }

    #[test]
    fn cached_matrices_match_fresh_rendering() {
        let (dict, rig) = inputs();
        let res = [30.0, 15.0];
        let pyramid = RenderedPyramid::lazy(&dict, &rig, &Vec3::z(), &res).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        write_render_cache(&path, &pyramid).unwrap();
        let loaded = read_render_cache(&path, &dict, &rig, &Vec3::z(), &res).unwrap();
        let fresh = RenderedPyramid::lazy(&dict, &rig, &Vec3::z(), &res).unwrap();
        for (a, b) in loaded.levels().iter().zip(fresh.levels()) {
            assert_eq!(a.candidates(), b.candidates());
            for i in 0..a.len() {
                assert_eq!(a.system(i), b.system(i));
            }
        }
    }

    #[test]
    fn mismatched_or_corrupt_caches_are_rejected() {
        let (dict, rig) = inputs();
        let res = [30.0];
        let pyramid = RenderedPyramid::lazy(&dict, &rig, &Vec3::z(), &res).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        write_render_cache(&path, &pyramid).unwrap();
        let other_rig = LightingRig::random(6, 70.0, 12).unwrap();
        assert!(read_render_cache(&path, &dict, &other_rig, &Vec3::z(), &res).is_err());
        assert!(read_render_cache(&path, &dict, &rig, &Vec3::z(), &[15.0]).is_err());
        assert!(read_render_cache(&path, &dict.without(0).unwrap(), &rig, &Vec3::z(), &res).is_err());

        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_render_cache(&path, &dict, &rig, &Vec3::z(), &res).is_err());
        bytes[4] = 9;
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_render_cache(&path, &dict, &rig, &Vec3::z(), &res).is_err());
    }
}
