//! Per-pixel containers: image stacks, masks, normal maps and abundance maps.

use crate::geometry::Vec3;
use crate::{Error, Result};

/// `Q` images of `width × height × channels` linear intensities. Pixel
/// `(x, y)` of image `i`, channel `c` sits at `images[i][(y·w + x)·C + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub images: Vec<Vec<f64>>,
}

impl ImageStack {
    pub fn zeros(width: usize, height: usize, channels: usize, count: usize) -> Self {
        ImageStack { width, height, channels, images: vec![vec![0.0; width * height * channels]; count] }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.width * self.height * self.channels;
        if self.channels == 0 {
            return Err(Error::DimensionMismatch("image stack with zero channels".into()));
        }
        if let Some(bad) = self.images.iter().find(|im| im.len() != n) {
            return Err(Error::DimensionMismatch(format!("image has {} samples, expected {n}", bad.len())));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    #[inline]
    pub fn sample(&self, image: usize, x: usize, y: usize, channel: usize) -> f64 {
        self.images[image][(y * self.width + x) * self.channels + channel]
    }

    /// Intensity profile of one pixel, one `Q`-vector per channel.
    pub fn profile(&self, x: usize, y: usize) -> Vec<Vec<f64>> {
        (0..self.channels).map(|c| (0..self.images.len()).map(|i| self.sample(i, x, y, c)).collect()).collect()
    }

    /// Largest intensity of a pixel across images and channels.
    pub fn pixel_max(&self, x: usize, y: usize) -> f64 {
        let base = (y * self.width + x) * self.channels;
        self.images.iter().flat_map(|im| im[base..base + self.channels].iter().copied()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn full(width: usize, height: usize) -> Self {
        Mask { width, height, data: vec![true; width * height] }
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Mask { width, height, data: vec![false; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Unit normals per pixel; `None` outside the reconstructed region.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    pub width: usize,
    pub height: usize,
    pub normals: Vec<Option<Vec3>>,
}

impl NormalMap {
    pub fn empty(width: usize, height: usize) -> Self {
        NormalMap { width, height, normals: vec![None; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<Vec3> {
        self.normals[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, n: Option<Vec3>) {
        self.normals[y * self.width + x] = n;
    }

    pub fn mask(&self) -> Mask {
        Mask { width: self.width, height: self.height, data: self.normals.iter().map(Option::is_some).collect() }
    }

    pub fn count(&self) -> usize {
        self.normals.iter().filter(|n| n.is_some()).count()
    }
}

/// Non-negative dictionary abundances per pixel and channel.
///
/// Coefficients are stored row-major as `[y][x][channel][atom]`; pixels outside
/// the mask hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceMap {
    pub width: usize,
    pub height: usize,
    pub atoms: usize,
    pub channels: usize,
    pub coefficients: Vec<f64>,
    pub mask: Vec<bool>,
    /// `‖I − Bc‖₂` per pixel and channel.
    pub residuals: Vec<f64>,
    pub lambda: f64,
}

impl AbundanceMap {
    pub fn zeros(width: usize, height: usize, atoms: usize, channels: usize) -> Self {
        AbundanceMap {
            width,
            height,
            atoms,
            channels,
            coefficients: vec![0.0; width * height * channels * atoms],
            mask: vec![false; width * height],
            residuals: vec![0.0; width * height * channels],
            lambda: 0.0,
        }
    }

    fn offset(&self, x: usize, y: usize, channel: usize) -> usize {
        ((y * self.width + x) * self.channels + channel) * self.atoms
    }

    pub fn get(&self, x: usize, y: usize, channel: usize) -> &[f64] {
        let o = self.offset(x, y, channel);
        &self.coefficients[o..o + self.atoms]
    }

    pub fn set(&mut self, x: usize, y: usize, channel: usize, c: &[f64]) {
        let o = self.offset(x, y, channel);
        self.coefficients[o..o + self.atoms].copy_from_slice(c);
        self.mask[y * self.width + x] = true;
    }

    pub fn is_set(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn residual(&self, x: usize, y: usize, channel: usize) -> f64 {
        self.residuals[(y * self.width + x) * self.channels + channel]
    }

    pub fn set_residual(&mut self, x: usize, y: usize, channel: usize, r: f64) {
        self.residuals[(y * self.width + x) * self.channels + channel] = r;
    }
}
