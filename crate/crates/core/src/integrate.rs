//! Least-squares integration of a normal field into depth.
//!
//! Image axes: x along columns, y up (towards decreasing rows), z towards the
//! camera. Each pair of 4-neighbours inside the mask contributes one equation
//! `z_b − z_a = ` mean of the two pixels' gradients along that step, with
//! `∂z/∂x = −nx/nz` and `∂z/∂y = −ny/nz`. The normal equations (a graph
//! Laplacian) are solved with Jacobi-preconditioned conjugate gradients; each
//! connected component is shifted to zero mean.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::maps::{Mask, NormalMap};
use crate::{Error, Result};

/// Smallest `nz` accepted inside the mask.
pub const NZ_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub mask: Vec<bool>,
}

impl DepthMap {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let p = y * self.width + x;
        self.mask[p].then(|| self.depth[p])
    }

    /// `mask` shrunk by `band` pixels (4-neighbour erosion).
    pub fn eroded_mask(&self, band: usize) -> Mask {
        let mut m = Mask { width: self.width, height: self.height, data: self.mask.clone() };
        for _ in 0..band {
            let prev = m.data.clone();
            for y in 0..self.height {
                for x in 0..self.width {
                    let p = y * self.width + x;
                    if !prev[p] {
                        continue;
                    }
                    let keep = x > 0
                        && y > 0
                        && x + 1 < self.width
                        && y + 1 < self.height
                        && prev[p - 1]
                        && prev[p + 1]
                        && prev[p - self.width]
                        && prev[p + self.width];
                    m.data[p] = keep;
                }
            }
        }
        m
    }
}

pub fn integrate_normals(normals: &NormalMap) -> Result<DepthMap> {
    let (w, h) = (normals.width, normals.height);
    let mask: Vec<bool> = normals.normals.iter().map(Option::is_some).collect();
    if !mask.iter().any(|&b| b) {
        return Err(Error::InvalidParameter("degenerate mask: no pixels to integrate".into()));
    }
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for (p, n) in normals.normals.iter().enumerate() {
        if let Some(n) = n {
            if !(n.z > NZ_FLOOR) {
                return Err(
                    Error::InvalidParameter(format!("normal z {} below {NZ_FLOOR}", n.z)).at_pixel(p % w, p / w)
                );
            }
            gx[p] = -n.x / n.z;
            gy[p] = -n.y / n.z;
        }
    }

    // Divergence of the gradient field over the edge graph: Lz = b.
    let mut b = vec![0.0; w * h];
    let mut degree = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if !mask[p] {
                continue;
            }
            if x + 1 < w && mask[p + 1] {
                let d = 0.5 * (gx[p] + gx[p + 1]);
                b[p + 1] += d;
                b[p] -= d;
                degree[p] += 1.0;
                degree[p + 1] += 1.0;
            }
            // One row down is one unit along -y.
            if y + 1 < h && mask[p + w] {
                let d = -0.5 * (gy[p] + gy[p + w]);
                b[p + w] += d;
                b[p] -= d;
                degree[p] += 1.0;
                degree[p + w] += 1.0;
            }
        }
    }

    let apply = |z: &[f64], out: &mut [f64]| {
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                if !mask[p] {
                    out[p] = 0.0;
                    continue;
                }
                let mut acc = degree[p] * z[p];
                if x > 0 && mask[p - 1] {
                    acc -= z[p - 1];
                }
                if x + 1 < w && mask[p + 1] {
                    acc -= z[p + 1];
                }
                if y > 0 && mask[p - w] {
                    acc -= z[p - w];
                }
                if y + 1 < h && mask[p + w] {
                    acc -= z[p + w];
                }
                out[p] = acc;
            }
        }
    };
    let precond = |r: &[f64], out: &mut [f64]| {
        for p in 0..r.len() {
            out[p] = if degree[p] > 0.0 { r[p] / degree[p] } else { 0.0 };
        }
    };

    let n = w * h;
    let mut z = vec![0.0; n];
    let mut r = b.clone();
    let mut s = vec![0.0; n];
    precond(&r, &mut s);
    let mut d = s.clone();
    let mut rs = dot(&r, &s);
    let b_norm = dot(&b, &b).sqrt();
    let mut ad = vec![0.0; n];
    let max_iter = 20 * n + 100;
    for _ in 0..max_iter {
        if dot(&r, &r).sqrt() <= 1e-13 * b_norm.max(1e-300) {
            break;
        }
        apply(&d, &mut ad);
        let dad = dot(&d, &ad);
        if dad <= 0.0 {
            break;
        }
        let alpha = rs / dad;
        for p in 0..n {
            z[p] += alpha * d[p];
            r[p] -= alpha * ad[p];
        }
        precond(&r, &mut s);
        let rs_new = dot(&r, &s);
        let beta = rs_new / rs;
        rs = rs_new;
        for p in 0..n {
            d[p] = s[p] + beta * d[p];
        }
    }

    zero_mean_components(&mut z, &mask, w, h);
    Ok(DepthMap { width: w, height: h, depth: z, mask })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn zero_mean_components(z: &mut [f64], mask: &[bool], w: usize, h: usize) {
    let mut label = vec![usize::MAX; w * h];
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask[start] || label[start] != usize::MAX {
            continue;
        }
        let mut members = Vec::new();
        label[start] = start;
        stack.push(start);
        while let Some(p) = stack.pop() {
            members.push(p);
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if mask[q] && label[q] == usize::MAX {
                    label[q] = start;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        members.sort_unstable();
        let mean = members.iter().map(|&p| z[p]).sum::<f64>() / members.len() as f64;
        for &p in &members {
            z[p] -= mean;
        }
    }
    for p in 0..w * h {
        if !mask[p] {
            z[p] = 0.0;
        }
    }
}

/// RMS of `estimate − truth` after removing the best constant offset, divided
/// by the truth's depth range, over `region` (defaults to the shared mask).
pub fn relative_depth_error(estimate: &DepthMap, truth: &DepthMap, region: Option<&Mask>) -> Result<f64> {
    if estimate.width != truth.width || estimate.height != truth.height {
        return Err(Error::DimensionMismatch("depth maps differ in size".into()));
    }
    if estimate.mask != truth.mask {
        return Err(Error::DimensionMismatch("depth maps have different masks".into()));
    }
    let inside: Vec<usize> =
        (0..truth.mask.len()).filter(|&p| truth.mask[p] && region.is_none_or(|r| r.data[p])).collect();
    if inside.is_empty() {
        return Err(Error::InvalidParameter("no pixels to compare".into()));
    }
    let n = inside.len() as f64;
    let offset = inside.iter().map(|&p| estimate.depth[p] - truth.depth[p]).sum::<f64>() / n;
    let rms = (inside
        .iter()
        .map(|&p| {
            let d = estimate.depth[p] - truth.depth[p] - offset;
            d * d
        })
        .sum::<f64>()
        / n)
        .sqrt();
    let (lo, hi) = inside
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(truth.depth[p]), hi.max(truth.depth[p])));
    if !(hi > lo) {
        return Err(Error::InvalidParameter("reference depth has zero range".into()));
    }
    Ok(rms / (hi - lo))
}

/// Grid-triangulated mesh; vertex `(x, −y, depth)` per masked pixel.
pub fn write_obj(depth: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (depth.width, depth.height);
    let mut index = vec![0usize; w * h];
    let mut s = String::new();
    let mut next = 1;
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if depth.mask[p] {
                let _ = writeln!(s, "v {} {} {}", x, -(y as f64), depth.depth[p]);
                index[p] = next;
                next += 1;
            }
        }
    }
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            let (a, b, c, d) = (y * w + x, y * w + x + 1, (y + 1) * w + x, (y + 1) * w + x + 1);
            if depth.mask[a] && depth.mask[b] && depth.mask[c] && depth.mask[d] {
                let _ = writeln!(s, "f {} {} {}", index[a], index[c], index[b]);
                let _ = writeln!(s, "f {} {} {}", index[b], index[c], index[d]);
            }
        }
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn map_from(w: usize, h: usize, f: impl Fn(usize, usize) -> Option<Vec3>) -> NormalMap {
        let mut m = NormalMap::empty(w, h);
        for y in 0..h {
            for x in 0..w {
                m.set(x, y, f(x, y));
            }
        }
        m
    }

    #[test]
    fn flat_normals_give_flat_depth() {
        let d = integrate_normals(&map_from(12, 9, |_, _| Some(Vec3::z()))).unwrap();
        assert!(d.depth.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn tilted_plane_is_a_linear_ramp() {
        let (a, b) = (0.3, -0.2);
        let n = Vec3::new(-a, -b, 1.0).normalize();
        let d = integrate_normals(&map_from(20, 15, |x, y| (x + y > 2).then_some(n))).unwrap();
        for y in 0..15 {
            for x in 0..19 {
                if let (Some(z0), Some(z1)) = (d.get(x, y), d.get(x + 1, y)) {
                    assert!((z1 - z0 - a).abs() < 1e-6);
                }
            }
        }
        for y in 0..14 {
            for x in 0..20 {
                if let (Some(z0), Some(z1)) = (d.get(x, y), d.get(x, y + 1)) {
                    assert!((z0 - z1 - b).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn empty_mask_and_grazing_normals_are_rejected() {
        assert!(integrate_normals(&NormalMap::empty(4, 4)).is_err());
        let graze = Vec3::new(1.0, 0.0, 0.01).normalize();
        assert!(integrate_normals(&map_from(4, 4, |_, _| Some(graze))).is_err());
    }

    #[test]
    fn depth_error_is_offset_invariant() {
        let truth = DepthMap { width: 3, height: 1, depth: vec![0.0, 1.0, 2.0], mask: vec![true; 3] };
        let shifted = DepthMap { depth: vec![5.0, 6.0, 7.0], ..truth.clone() };
        assert_eq!(relative_depth_error(&truth, &truth, None).unwrap(), 0.0);
        assert!(relative_depth_error(&shifted, &truth, None).unwrap() < 1e-15);
        // Residual after offset removal: (-1/3, 2/3, -1/3) → rms √(2/9), range 2.
        let bumped = DepthMap { depth: vec![0.0, 2.0, 2.0], ..truth.clone() };
        let e = relative_depth_error(&bumped, &truth, None).unwrap();
        assert!((e - (2.0f64 / 9.0).sqrt() / 2.0).abs() < 1e-15);
    }
}
