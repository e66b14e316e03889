use std::path::Path;

use image::{ImageBuffer, Rgb};

use super::pfm::{read_pfm, write_pfm, Pfm};
use crate::geometry::Vec3;
use crate::integrate::DepthMap;
use crate::maps::NormalMap;
use crate::{Error, Result};

/// Three-channel PFM of `(x, y, z)`; pixels without a normal are `(0, 0, 0)`.
pub fn write_normal_pfm(path: impl AsRef<Path>, normals: &NormalMap) -> Result<()> {
    let data = normals
        .normals
        .iter()
        .flat_map(|n| match n {
            Some(n) => [n.x as f32, n.y as f32, n.z as f32],
            None => [0.0; 3],
        })
        .collect();
    write_pfm(path, &Pfm::new(normals.width, normals.height, 3, data)?)
}

pub fn read_normal_pfm(path: impl AsRef<Path>) -> Result<NormalMap> {
    let path = path.as_ref();
    let img = read_pfm(path)?;
    if img.channels != 3 {
        return Err(Error::format(path, "normal maps have three channels"));
    }
    let normals = img
        .data
        .chunks_exact(3)
        .map(|p| {
            let v = Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64);
            (v.norm_squared() > 0.0).then(|| v.normalize())
        })
        .collect();
    Ok(NormalMap { width: img.width, height: img.height, normals })
}

/// 8-bit preview with `rgb = (n + 1) / 2`; background black.
pub fn write_normal_png(path: impl AsRef<Path>, normals: &NormalMap) -> Result<()> {
    let path = path.as_ref();
    let code = |v: f64| ((v + 1.0) * 0.5 * 255.0).round().clamp(0.0, 255.0) as u8;
    let raw: Vec<u8> = normals
        .normals
        .iter()
        .flat_map(|n| match n {
            Some(n) => [code(n.x), code(n.y), code(n.z)],
            None => [0; 3],
        })
        .collect();
    let buf = ImageBuffer::<Rgb<u8>, _>::from_raw(normals.width as u32, normals.height as u32, raw)
        .ok_or_else(|| Error::DimensionMismatch("normal map size".into()))?;
    buf.save(path).map_err(|e| Error::Image { path: path.into(), source: e })
}

/// Single-channel PFM; pixels outside the mask are NaN.
pub fn write_depth_pfm(path: impl AsRef<Path>, depth: &DepthMap) -> Result<()> {
    let data = depth.depth.iter().zip(&depth.mask).map(|(&z, &m)| if m { z as f32 } else { f32::NAN }).collect();
    write_pfm(path, &Pfm::new(depth.width, depth.height, 1, data)?)
}

pub fn read_depth_pfm(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let img = read_pfm(path)?;
    if img.channels != 1 {
        return Err(Error::format(path, "depth maps have one channel"));
    }
    let mask: Vec<bool> = img.data.iter().map(|v| !v.is_nan()).collect();
    let depth = img.data.iter().map(|&v| if v.is_nan() { 0.0 } else { v as f64 }).collect();
    Ok(DepthMap { width: img.width, height: img.height, depth, mask })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_and_depth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut nm = NormalMap::empty(3, 2);
        nm.set(0, 0, Some(Vec3::z()));
        nm.set(2, 1, Some(Vec3::new(0.6, 0.0, 0.8)));
        let p = dir.path().join("n.pfm");
        write_normal_pfm(&p, &nm).unwrap();
        let back = read_normal_pfm(&p).unwrap();
        assert_eq!(back.mask(), nm.mask());
        assert!((back.get(2, 1).unwrap() - Vec3::new(0.6, 0.0, 0.8)).norm() < 1e-6);
        write_normal_png(dir.path().join("n.png"), &nm).unwrap();

        let d =
            DepthMap { width: 2, height: 2, depth: vec![0.5, 0.0, -1.25, 2.0], mask: vec![true, false, true, true] };
        let p = dir.path().join("d.pfm");
        write_depth_pfm(&p, &d).unwrap();
        assert_eq!(read_depth_pfm(&p).unwrap(), d);
    }
}
