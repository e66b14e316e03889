//! Equi-angular candidate normals on the camera-facing hemisphere.
//!
//! Candidates are laid out on elevation rings `resolution` degrees apart; the
//! ring at elevation θ carries `⌈360 sin θ / resolution⌉` equally spaced
//! azimuths and the pole a single candidate. Ring bookkeeping is kept so cone
//! queries only touch rings that can intersect the cone.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::geometry::{check_unit, from_spherical, Vec3};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ring {
    /// Polar angle from +z, degrees.
    elevation: f64,
    start: usize,
    len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    normals: Vec<Vec3>,
    resolution: f64,
    rings: Vec<Ring>,
}

pub fn equiangular_hemisphere(resolution_deg: f64) -> Result<CandidateSet> {
    if !(resolution_deg > 0.0 && resolution_deg <= 90.0) {
        return Err(Error::InvalidParameter(format!("resolution must lie in (0, 90] degrees, got {resolution_deg}")));
    }
    let ring_count = (90.0 / resolution_deg + 1e-9).floor() as usize;
    let mut normals = vec![Vec3::z()];
    let mut rings = vec![Ring { elevation: 0.0, start: 0, len: 1 }];
    for k in 1..=ring_count {
        let elevation = k as f64 * resolution_deg;
        let theta = elevation.to_radians();
        let count = (360.0 * theta.sin() / resolution_deg - 1e-9).ceil().max(1.0) as usize;
        let start = normals.len();
        for j in 0..count {
            let phi = (j as f64 * 360.0 / count as f64).to_radians();
            let mut n = from_spherical(theta, phi);
            if elevation == 90.0 {
                n.z = 0.0;
            }
            normals.push(n);
        }
        rings.push(Ring { elevation, start, len: count });
    }
    Ok(CandidateSet { normals, resolution: resolution_deg, rings })
}

impl CandidateSet {
    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn get(&self, i: usize) -> Vec3 {
        self.normals[i]
    }

    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }

    /// Nominal angular spacing in degrees.
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// Indices (ascending) of candidates `n` with `n·center >= cos(half_angle)`.
    pub fn indices_within(&self, center: &Vec3, half_angle_deg: f64) -> Vec<usize> {
        let cos_limit = half_angle_deg.to_radians().cos();
        let center_elevation = center.z.clamp(-1.0, 1.0).acos().to_degrees();
        let mut out = Vec::new();
        for ring in &self.rings {
            // Angular distance is at least the difference in polar angle.
            if (ring.elevation - center_elevation).abs() > half_angle_deg + 1e-9 {
                continue;
            }
            for i in ring.start..ring.start + ring.len {
                if self.normals[i].dot(center) >= cos_limit {
                    out.push(i);
                }
            }
        }
        out
    }

    /// Index of the candidate closest in angle to `v`.
    pub fn nearest(&self, v: &Vec3) -> usize {
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (i, n) in self.normals.iter().enumerate() {
            let d = n.dot(v);
            if d > best_dot {
                best_dot = d;
                best = i;
            }
        }
        best
    }

    fn subset(&self, indices: &[usize]) -> CandidateSet {
        let mut normals = Vec::with_capacity(indices.len());
        let mut rings: Vec<Ring> = Vec::new();
        let mut ring_iter = self.rings.iter().peekable();
        for &i in indices {
            while let Some(r) = ring_iter.peek() {
                if i >= r.start + r.len {
                    ring_iter.next();
                } else {
                    break;
                }
            }
            let ring = ring_iter.peek().expect("index inside a ring");
            match rings.last_mut() {
                Some(last) if last.elevation == ring.elevation => last.len += 1,
                _ => rings.push(Ring { elevation: ring.elevation, start: normals.len(), len: 1 }),
            }
            normals.push(self.normals[i]);
        }
        CandidateSet { normals, resolution: self.resolution, rings }
    }

    /// Writes `x,y,z` rows preceded by a `# resolution=` comment line.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = format!("# resolution={}\n", self.resolution);
        for ring in &self.rings {
            let _ = writeln!(s, "# ring elevation={} start={} len={}", ring.elevation, ring.start, ring.len);
        }
        s.push_str("x,y,z\n");
        for n in &self.normals {
            let _ = writeln!(s, "{},{},{}", n.x, n.y, n.z);
        }
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<CandidateSet> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |m: &str| Error::format(path, m.to_string());
        let mut resolution = None;
        let mut rings = Vec::new();
        let mut normals = Vec::new();
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("# resolution=") {
                resolution = Some(rest.trim().parse::<f64>().map_err(|_| bad("bad resolution"))?);
            } else if let Some(rest) = line.strip_prefix("# ring ") {
                let mut fields = rest.split_whitespace().map(|kv| kv.split_once('=').map(|(_, v)| v));
                let mut next = || fields.next().flatten().ok_or_else(|| bad("bad ring line"));
                let elevation = next()?.parse().map_err(|_| bad("bad ring elevation"))?;
                let start = next()?.parse().map_err(|_| bad("bad ring start"))?;
                let len = next()?.parse().map_err(|_| bad("bad ring length"))?;
                rings.push(Ring { elevation, start, len });
            } else if line == "x,y,z" || line.is_empty() {
                continue;
            } else {
                let v: Vec<f64> = line
                    .split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("bad candidate row"))?;
                if v.len() != 3 {
                    return Err(bad("candidate rows need three columns"));
                }
                let n = Vec3::new(v[0], v[1], v[2]);
                check_unit("candidate normal", &n).map_err(|e| bad(&e.to_string()))?;
                normals.push(n);
            }
        }
        let resolution = resolution.ok_or_else(|| bad("missing resolution line"))?;
        if rings.iter().map(|r| r.len).sum::<usize>() != normals.len() {
            return Err(bad("ring table does not cover the candidates"));
        }
        Ok(CandidateSet { normals, resolution, rings })
    }
}

/// Parent candidates within `half_angle_deg` of `center`.
pub fn cone_subset(parent: &CandidateSet, center: &Vec3, half_angle_deg: f64) -> Result<CandidateSet> {
    check_unit("cone center", center)?;
    if !(half_angle_deg > 0.0 && half_angle_deg <= 180.0) {
        return Err(Error::InvalidParameter(format!(
            "cone half-angle must lie in (0, 180] degrees, got {half_angle_deg}"
        )));
    }
    Ok(parent.subset(&parent.indices_within(center, half_angle_deg)))
}
