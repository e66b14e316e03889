use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use super::pfm::{read_pfm, write_pfm, Pfm};
use crate::geometry::{check_unit, Vec3};
use crate::maps::{ImageStack, Mask};
use crate::render::LightingRig;
use crate::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

/// Mapping from stored 16-bit PNG codes to linear intensity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Linearization {
    /// `code / 65535`.
    #[default]
    Linear,
    /// `(code / 65535)^gamma`.
    Gamma { gamma: f64 },
    /// Inverse sRGB transfer curve.
    Srgb,
}

impl Linearization {
    pub fn decode(&self, code: u16) -> f64 {
        let v = code as f64 / 65535.0;
        match *self {
            Linearization::Linear => v,
            Linearization::Gamma { gamma } => v.powf(gamma),
            Linearization::Srgb => {
                if v <= 0.04045 {
                    v / 12.92
                } else {
                    ((v + 0.055) / 1.055).powf(2.4)
                }
            }
        }
    }

    pub fn encode(&self, linear: f64) -> u16 {
        let v = linear.clamp(0.0, 1.0);
        let e = match *self {
            Linearization::Linear => v,
            Linearization::Gamma { gamma } => v.powf(1.0 / gamma),
            Linearization::Srgb => {
                if v <= 0.0031308 {
                    v * 12.92
                } else {
                    1.055 * v.powf(1.0 / 2.4) - 0.055
                }
            }
        };
        (e * 65535.0).round() as u16
    }

    fn validate(&self) -> std::result::Result<(), String> {
        match *self {
            Linearization::Gamma { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(format!("gamma must be positive, got {gamma}"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageEntry {
    /// Path relative to the manifest.
    pub file: String,
    pub light: [f64; 3],
    #[serde(default = "one")]
    pub intensity: f64,
}

fn one() -> f64 {
    1.0
}

fn plus_z() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    #[serde(default = "plus_z")]
    pub view: [f64; 3],
    pub images: Vec<ImageEntry>,
    /// Applies to PNG images only; PFM data is taken as linear.
    #[serde(default)]
    pub linearization: Linearization,
    /// Linear intensity at or above which a sample is treated as clipped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<f64>,
    /// Foreground mask image relative to the manifest; non-zero is inside.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

impl Manifest {
    pub fn rig(&self) -> Result<LightingRig> {
        LightingRig::new(
            self.images.iter().map(|e| Vec3::from(e.light)).collect(),
            self.images.iter().map(|e| e.intensity).collect(),
        )
    }

    pub fn view(&self) -> Result<Vec3> {
        let v = Vec3::from(self.view);
        check_unit("view", &v)?;
        Ok(v)
    }
}

/// A loaded image stack with its lighting and optional mask.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub stack: ImageStack,
    pub rig: LightingRig,
    pub view: Vec3,
    pub mask: Option<Mask>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pfm,
    Png16,
}

pub fn load_stack(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Json { path: manifest_path.into(), source: e })?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::format(
            manifest_path,
            format!("unsupported manifest version {} (expected {MANIFEST_VERSION})", manifest.version),
        ));
    }
    if manifest.images.is_empty() {
        return Err(Error::format(manifest_path, "manifest lists no images"));
    }
    if manifest.channels != 1 && manifest.channels != 3 {
        return Err(Error::format(manifest_path, format!("{} channels; 1 or 3 supported", manifest.channels)));
    }
    manifest.linearization.validate().map_err(|m| Error::format(manifest_path, m))?;
    let rig = manifest.rig().map_err(|e| Error::format(manifest_path, e.to_string()))?;
    let view = manifest.view().map_err(|e| Error::format(manifest_path, e.to_string()))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));

    let images = manifest
        .images
        .iter()
        .map(|entry| load_image(&dir.join(&entry.file), &manifest))
        .collect::<Result<Vec<_>>>()?;
    let stack = ImageStack { width: manifest.width, height: manifest.height, channels: manifest.channels, images };
    let mask = manifest.mask.as_ref().map(|m| read_mask(dir.join(m), manifest.width, manifest.height)).transpose()?;
    Ok(Dataset { manifest, stack, rig, view, mask })
}

fn load_image(path: &Path, manifest: &Manifest) -> Result<Vec<f64>> {
    let (w, h, c) = (manifest.width, manifest.height, manifest.channels);
    let data = if is_pfm(path) {
        let img = read_pfm(path)?;
        if img.width != w || img.height != h || img.channels != c {
            return Err(Error::format(
                path,
                format!("{}×{}×{} image in a {w}×{h}×{c} stack", img.width, img.height, img.channels),
            ));
        }
        img.data.iter().map(|&v| v as f64).collect::<Vec<_>>()
    } else {
        let img = image::open(path).map_err(|e| Error::Image { path: path.into(), source: e })?;
        if img.width() as usize != w || img.height() as usize != h {
            return Err(Error::format(path, format!("{}×{} image in a {w}×{h} stack", img.width(), img.height())));
        }
        let lin = manifest.linearization;
        if c == 1 {
            img.to_luma16().into_raw().into_iter().map(|v| lin.decode(v)).collect()
        } else {
            img.to_rgb16().into_raw().into_iter().map(|v| lin.decode(v)).collect()
        }
    };
    if let Some(i) = data.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::format(path, format!("sample {i} is negative or non-finite")));
    }
    Ok(data)
}

/// Reads a PNG or PFM mask of the given size; non-zero (PFM: > 0.5) is inside.
pub fn read_mask(path: impl AsRef<Path>, w: usize, h: usize) -> Result<Mask> {
    let path = path.as_ref();
    let data: Vec<bool> = if is_pfm(path) {
        let img = read_pfm(path)?;
        if img.width != w || img.height != h {
            return Err(Error::format(path, "mask size differs from the stack"));
        }
        img.data.chunks(img.channels).map(|p| p[0] > 0.5).collect()
    } else {
        let img = image::open(path).map_err(|e| Error::Image { path: path.into(), source: e })?;
        if img.width() as usize != w || img.height() as usize != h {
            return Err(Error::format(path, "mask size differs from the stack"));
        }
        img.to_luma16().into_raw().into_iter().map(|v| v > 0).collect()
    };
    Ok(Mask { width: w, height: h, data })
}

fn is_pfm(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pfm"))
}

/// Writes `image_NNN.{pfm,png}` files plus `manifest.json` into `dir` and
/// returns the manifest path. A mask, if given, is stored as `mask.png`.
pub fn save_stack(
    dir: impl AsRef<Path>,
    stack: &ImageStack,
    rig: &LightingRig,
    view: &Vec3,
    format: ImageFormat,
    mask: Option<&Mask>,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    stack.validate()?;
    if stack.len() != rig.len() {
        return Err(Error::DimensionMismatch(format!("{} images for {} lights", stack.len(), rig.len())));
    }
    if stack.channels != 1 && stack.channels != 3 {
        return Err(Error::InvalidParameter(format!("{} channels; 1 or 3 supported", stack.channels)));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let lin = Linearization::Linear;
    let mut entries = Vec::with_capacity(stack.len());
    for (i, im) in stack.images.iter().enumerate() {
        let file = match format {
            ImageFormat::Pfm => format!("image_{i:03}.pfm"),
            ImageFormat::Png16 => format!("image_{i:03}.png"),
        };
        let path = dir.join(&file);
        match format {
            ImageFormat::Pfm => {
                let data = im.iter().map(|&v| v as f32).collect();
                write_pfm(&path, &Pfm::new(stack.width, stack.height, stack.channels, data)?)?;
            }
            ImageFormat::Png16 => {
                let codes: Vec<u16> = im.iter().map(|&v| lin.encode(v)).collect();
                write_png16(&path, stack.width, stack.height, stack.channels, codes)?;
            }
        }
        let l = rig.directions[i];
        entries.push(ImageEntry { file, light: [l.x, l.y, l.z], intensity: rig.intensities[i] });
    }
    let mask_file = match mask {
        Some(m) => {
            let codes = m.data.iter().map(|&b| if b { u16::MAX } else { 0 }).collect();
            write_png16(&dir.join("mask.png"), m.width, m.height, 1, codes)?;
            Some("mask.png".to_string())
        }
        None => None,
    };
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        width: stack.width,
        height: stack.height,
        channels: stack.channels,
        view: [view.x, view.y, view.z],
        images: entries,
        linearization: lin,
        saturation: None,
        mask: mask_file,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json { path: path.clone(), source: e })?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub(crate) fn write_png16(path: &Path, w: usize, h: usize, channels: usize, codes: Vec<u16>) -> Result<()> {
    let (w, h) = (w as u32, h as u32);
    let res = if channels == 1 {
        ImageBuffer::<Luma<u16>, _>::from_raw(w, h, codes).map(|b| b.save(path))
    } else {
        ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, codes).map(|b| b.save(path))
    };
    match res {
        Some(r) => r.map_err(|e| Error::Image { path: path.into(), source: e }),
        None => Err(Error::DimensionMismatch("PNG buffer size".into())),
    }
}
