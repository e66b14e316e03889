use std::path::Path;

use dictstereo::io::{write_render_cache, Manifest};
use dictstereo::render::RenderedPyramid;

use crate::config::{json_error, read_text, PipelineConfig};
use crate::CliResult;

/// Renders every level of the schedule for the manifest's lights and view and
/// writes the render cache read by `reconstruct`.
pub fn render_dict(manifest: &Path, config: &PipelineConfig, cache: &Path) -> CliResult<()> {
    let m: Manifest = serde_json::from_str(&read_text(manifest)?).map_err(|e| json_error(manifest, e))?;
    let (rig, view) = (m.rig()?, m.view()?);
    let dict = config.dictionary.build()?;
    let schedule = config.schedule()?;
    let pyramid = RenderedPyramid::render(&dict, &rig, &view, schedule.resolutions())?;
    write_render_cache(cache, &pyramid)?;
    Ok(())
}
