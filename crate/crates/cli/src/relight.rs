use std::path::Path;

use dictstereo::io::{read_abundances, read_normal_pfm, save_stack, sha256_hex, ImageFormat};
use dictstereo::maps::ImageStack;
use dictstereo::render::relight as render_relit;
use dictstereo::Vec3;

use crate::config::{json_error, read_text, LightingSpec, PipelineConfig};
use crate::outputs::{prepare_dir, OutputLog};
use crate::reconstruct::Report;
use crate::{CliError, CliResult};

/// Renders the normals and abundances of a `reconstruct` output directory
/// under new lights and writes them as a PFM image stack.
pub fn relight(reconstruction: &Path, lights: &LightingSpec, out: &Path, force: bool) -> CliResult<ImageStack> {
    let config = PipelineConfig::load(&reconstruction.join("config.json"))?;
    let report_path = reconstruction.join("report.json");
    let report: Report = serde_json::from_str(&read_text(&report_path)?).map_err(|e| json_error(&report_path, e))?;
    let dict = config.dictionary.build()?;
    let (abundances, meta) =
        read_abundances(reconstruction.join("abundances.bin"), reconstruction.join("abundances.json"))?;
    if meta.dictionary_hash != sha256_hex(&dict.content_hash()) {
        return Err(CliError::input("abundances were estimated with a different dictionary"));
    }
    let mut normals = read_normal_pfm(reconstruction.join("normals.pfm"))?;
    for n in normals.normals.iter_mut().flatten() {
        *n = n.normalize();
    }
    let rig = lights.rig()?;
    let view = Vec3::from(report.view);
    let stack = render_relit(&normals, &abundances, &dict, &rig, &view)?;

    prepare_dir(out, force)?;
    save_stack(out, &stack, &rig, &view, ImageFormat::Pfm, Some(&normals.mask()))?;
    let mut log = OutputLog::new(out, "relight");
    log.record("manifest.json")?;
    log.record("mask.png")?;
    for i in 0..rig.len() {
        log.record(&format!("image_{i:03}.pfm"))?;
    }
    log.finish()?;
    Ok(stack)
}
