use std::fmt;

use super::coords::{
    cell_index, grid_position, half_angle_unchecked, to_half_angle, HalfAngleCoords, PHI_D_BINS, TABLE_LEN,
    THETA_D_BINS, THETA_H_BINS,
};
use crate::geometry::Vec3;
use crate::{Error, Result};

/// Fractional grid offsets this close to a node snap onto it.
const NODE_SNAP: f64 = 1e-9;

/// Trilinear interpolation weights over the table grid for one configuration.
///
/// At most eight entries; zero-weight corners are dropped so a configuration
/// sitting exactly on a node yields a single index with weight one.
#[derive(Clone, Copy, PartialEq)]
pub struct SamplingFunctional {
    len: u8,
    indices: [u32; 8],
    weights: [f64; 8],
}

impl SamplingFunctional {
    pub fn from_coords(coords: &HalfAngleCoords) -> Self {
        let [th, td, pd] = grid_position(coords);
        let (h0, h1, fh) = clamped_axis(th, THETA_H_BINS);
        let (d0, d1, fd) = clamped_axis(td, THETA_D_BINS);
        let (p0, p1, fp) = wrapped_axis(pd, PHI_D_BINS);

        let mut out = SamplingFunctional { len: 0, indices: [0; 8], weights: [0.0; 8] };
        for (ih, wh) in [(h0, 1.0 - fh), (h1, fh)] {
            if wh == 0.0 {
                continue;
            }
            for (id, wd) in [(d0, 1.0 - fd), (d1, fd)] {
                if wd == 0.0 {
                    continue;
                }
                for (ip, wp) in [(p0, 1.0 - fp), (p1, fp)] {
                    if wp == 0.0 {
                        continue;
                    }
                    let n = out.len as usize;
                    out.indices[n] = cell_index(ih, id, ip) as u32;
                    out.weights[n] = wh * wd * wp;
                    out.len += 1;
                }
            }
        }
        out
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices[..self.len as usize].iter().map(|&i| i as usize)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights[..self.len as usize]
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights().iter().sum()
    }

    /// Inner product with one channel of a table.
    #[inline]
    pub fn apply(&self, samples: &[f64]) -> f64 {
        let n = self.len as usize;
        let mut acc = 0.0;
        for k in 0..n {
            acc += self.weights[k] * samples[self.indices[k] as usize];
        }
        acc
    }
}

impl fmt::Debug for SamplingFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.indices().zip(self.weights().iter())).finish()
    }
}

fn snap(u: f64) -> (f64, f64) {
    let base = u.floor();
    let frac = u - base;
    if frac < NODE_SNAP {
        (base, 0.0)
    } else if frac > 1.0 - NODE_SNAP {
        (base + 1.0, 0.0)
    } else {
        (base, frac)
    }
}

fn clamped_axis(u: f64, bins: usize) -> (usize, usize, f64) {
    let (base, frac) = snap(u.max(0.0));
    let i0 = base as usize;
    if i0 >= bins - 1 {
        (bins - 1, bins - 1, 0.0)
    } else {
        (i0, i0 + 1, frac)
    }
}

fn wrapped_axis(u: f64, bins: usize) -> (usize, usize, f64) {
    let (base, frac) = snap(u.max(0.0));
    let i0 = base as usize % bins;
    (i0, (i0 + 1) % bins, frac)
}

/// Interpolation weights for a front-facing configuration.
pub fn sampling_functional(light: &Vec3, view: &Vec3, normal: &Vec3) -> Result<SamplingFunctional> {
    let coords = to_half_angle(light, view, normal)?;
    Ok(SamplingFunctional::from_coords(&coords))
}

/// An isotropic reflectance table, one `TABLE_LEN` sample vector per channel.
#[derive(Clone, PartialEq)]
pub struct Brdf {
    name: String,
    channels: Vec<Vec<f64>>,
}

impl fmt::Debug for Brdf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Brdf").field("name", &self.name).field("channels", &self.channels.len()).finish()
    }
}

impl Brdf {
    /// Builds a table from per-channel sample vectors. Entries must be finite
    /// and non-negative.
    pub fn from_channels(name: impl Into<String>, channels: Vec<Vec<f64>>) -> Result<Self> {
        validate_shape(&channels)?;
        for ch in &channels {
            if ch.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("BRDF table entry"));
            }
            if ch.iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidParameter("negative BRDF table entry".into()));
            }
        }
        Ok(Brdf { name: name.into(), channels })
    }

    /// Like [`Brdf::from_channels`] but clamps negative entries to zero,
    /// returning how many were clamped.
    pub fn from_channels_clamped(name: impl Into<String>, mut channels: Vec<Vec<f64>>) -> Result<(Self, usize)> {
        validate_shape(&channels)?;
        let mut clamped = 0;
        for ch in &mut channels {
            for v in ch.iter_mut() {
                if !v.is_finite() {
                    return Err(Error::NonFinite("BRDF table entry"));
                }
                if *v < 0.0 {
                    *v = 0.0;
                    clamped += 1;
                }
            }
        }
        Ok((Brdf { name: name.into(), channels }, clamped))
    }

    pub fn constant(name: impl Into<String>, channels: usize, value: f64) -> Result<Self> {
        Self::from_channels(name, vec![vec![value; TABLE_LEN]; channels])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, channel: usize) -> Result<&[f64]> {
        self.channels
            .get(channel)
            .map(Vec::as_slice)
            .ok_or(Error::ChannelOutOfRange { channel, channels: self.channels.len() })
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Stored sample at a grid node.
    pub fn at(&self, channel: usize, theta_h: usize, theta_d: usize, phi_d: usize) -> f64 {
        self.channels[channel][cell_index(theta_h, theta_d, phi_d)]
    }

    /// Interpolated reflectance for a front-facing configuration.
    pub fn evaluate(&self, light: &Vec3, view: &Vec3, normal: &Vec3, channel: usize) -> Result<f64> {
        let samples = self.channel(channel)?;
        Ok(sampling_functional(light, view, normal)?.apply(samples))
    }

    /// [`Brdf::evaluate`] without input validation; the caller guarantees a
    /// front-facing unit configuration.
    pub fn evaluate_unchecked(&self, light: &Vec3, view: &Vec3, normal: &Vec3, channel: usize) -> f64 {
        let coords = half_angle_unchecked(light, view, normal);
        SamplingFunctional::from_coords(&coords).apply(&self.channels[channel])
    }
}

fn validate_shape(channels: &[Vec<f64>]) -> Result<()> {
    if channels.is_empty() {
        return Err(Error::InvalidParameter("a BRDF needs at least one channel".into()));
    }
    if let Some(bad) = channels.iter().find(|c| c.len() != TABLE_LEN) {
        return Err(Error::DimensionMismatch(format!("channel has {} samples, expected {TABLE_LEN}", bad.len())));
    }
    Ok(())
}
