use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use dictstereo::brdf::Dictionary;
use dictstereo::integrate::DepthMap;
use dictstereo::io::{save_stack, sha256_hex, write_abundances, write_depth_pfm, write_normal_pfm, ImageFormat};
use dictstereo::maps::{AbundanceMap, ImageStack, NormalMap};
use dictstereo::render::{render_scene, LightingRig, NoiseModel};
use dictstereo::Vec3;

use crate::config::{PipelineConfig, SceneSpec, Shape};
use crate::outputs::{prepare_dir, OutputLog};
use crate::{CliError, CliResult};

/// Largest surface slope of the checkerboard height field.
const CHECKER_MAX_SLOPE: f64 = 0.45;

/// Ground-truth geometry in pixel units: normals and depth.
pub fn scene_geometry(spec: &SceneSpec) -> (NormalMap, DepthMap) {
    let n = spec.size;
    let mut normals = NormalMap::empty(n, n);
    let mut depth = DepthMap { width: n, height: n, depth: vec![0.0; n * n], mask: vec![false; n * n] };
    let c = (n as f64 - 1.0) / 2.0;
    match spec.shape {
        Shape::Sphere => {
            let r = 0.48 * n as f64;
            let max_r = spec.max_normal_polar_deg.to_radians().sin();
            for y in 0..n {
                for x in 0..n {
                    let (u, v) = ((x as f64 - c) / r, (c - y as f64) / r);
                    let rr = u * u + v * v;
                    if rr.sqrt() > max_r {
                        continue;
                    }
                    let w = (1.0 - rr).sqrt();
                    normals.set(x, y, Some(Vec3::new(u, v, w)));
                    depth.depth[y * n + x] = r * w;
                    depth.mask[y * n + x] = true;
                }
            }
        }
        Shape::Checkerboard => {
            let k = 2.0 * PI / n as f64;
            let a = CHECKER_MAX_SLOPE / k;
            for y in 0..n {
                for x in 0..n {
                    let (gx, gy) = (x as f64 - c, c - y as f64);
                    let zx = a * k * (k * gx).cos() * (k * gy).sin();
                    let zy = a * k * (k * gx).sin() * (k * gy).cos();
                    normals.set(x, y, Some(Vec3::new(-zx, -zy, 1.0).normalize()));
                    depth.depth[y * n + x] = a * (k * gx).sin() * (k * gy).sin();
                    depth.mask[y * n + x] = true;
                }
            }
        }
    }
    (normals, depth)
}

/// Material per pixel: spheres use the first material, checkerboards
/// alternate between the first two. Defaults to atom 0, then atom 1.
pub fn scene_abundances(spec: &SceneSpec, normals: &NormalMap, dict: &Dictionary) -> CliResult<AbundanceMap> {
    let m = dict.len();
    let mut materials: Vec<Vec<f64>> = Vec::new();
    for sparse in &spec.materials {
        let mut c = vec![0.0; m];
        for &(atom, w) in sparse {
            if atom >= m {
                return Err(CliError::input(format!("material uses atom {atom} of a {m}-atom dictionary")));
            }
            c[atom] += w;
        }
        materials.push(c);
    }
    let needed = if spec.shape == Shape::Checkerboard { 2 } else { 1 };
    while materials.len() < needed {
        let mut c = vec![0.0; m];
        c[materials.len() % m] = 1.0;
        materials.push(c);
    }
    let channels = dict.channels();
    let mut map = AbundanceMap::zeros(normals.width, normals.height, m, channels);
    for y in 0..normals.height {
        for x in 0..normals.width {
            if normals.get(x, y).is_none() {
                continue;
            }
            let which = match spec.shape {
                Shape::Sphere => 0,
                Shape::Checkerboard => (x / spec.cell + y / spec.cell) % 2,
            };
            for ch in 0..channels {
                map.set(x, y, ch, &materials[which]);
            }
        }
    }
    Ok(map)
}

pub struct SyntheticScene {
    pub dictionary: Dictionary,
    pub rig: LightingRig,
    pub normals: NormalMap,
    pub depth: DepthMap,
    pub abundances: AbundanceMap,
    pub stack: ImageStack,
}

pub fn render_synthetic(config: &PipelineConfig) -> CliResult<SyntheticScene> {
    let dictionary = config.dictionary.build()?;
    let rig = config.scene.lighting.rig()?;
    let (normals, depth) = scene_geometry(&config.scene);
    let abundances = scene_abundances(&config.scene, &normals, &dictionary)?;
    let noise =
        (config.noise_sigma > 0.0).then_some(NoiseModel { relative_sigma: config.noise_sigma, seed: config.seed });
    let stack = render_scene(&normals, &abundances, &dictionary, &rig, &Vec3::z(), noise)?;
    Ok(SyntheticScene { dictionary, rig, normals, depth, abundances, stack })
}

/// Writes the image stack and manifest to `out`, ground truth to
/// `out/truth`, and the effective config.
pub fn synthesize(config: &PipelineConfig, out: &Path, png: bool) -> CliResult<SyntheticScene> {
    prepare_dir(out, false)?;
    let scene = render_synthetic(config)?;
    let format = if png { ImageFormat::Png16 } else { ImageFormat::Pfm };
    save_stack(out, &scene.stack, &scene.rig, &Vec3::z(), format, Some(&scene.normals.mask()))?;

    let mut log = OutputLog::new(out, "synthesize");
    let mut files: Vec<String> = vec!["manifest.json".into(), "mask.png".into()];
    let ext = if png { "png" } else { "pfm" };
    files.extend((0..scene.rig.len()).map(|i| format!("image_{i:03}.{ext}")));
    let truth = out.join("truth");
    fs::create_dir_all(&truth).map_err(|e| CliError::input(format!("{}: {e}", truth.display())))?;
    write_normal_pfm(truth.join("normals.pfm"), &scene.normals)?;
    write_depth_pfm(truth.join("depth.pfm"), &scene.depth)?;
    let hash = sha256_hex(&scene.dictionary.content_hash());
    write_abundances(
        truth.join("abundances.bin"),
        truth.join("abundances.json"),
        &scene.abundances,
        &scene.dictionary.names(),
        &hash,
    )?;
    files.extend(
        ["truth/normals.pfm", "truth/depth.pfm", "truth/abundances.bin", "truth/abundances.json"].map(String::from),
    );
    for f in &files {
        log.record(f)?;
    }
    let mut effective = config.clone();
    effective.output = None;
    log.write_json("config.json", &effective)?;
    log.finish()?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dictstereo::brdf::ParametricModel;

    fn small_config(shape: Shape) -> PipelineConfig {
        let mut c = PipelineConfig::default();
        c.dictionary.atoms = vec![
            ParametricModel::Lambertian { albedo: 0.8 },
            ParametricModel::Ward { diffuse: 0.2, specular: 0.4, roughness: 0.2 },
        ];
        c.scene = SceneSpec { shape, size: 16, cell: 4, ..SceneSpec::default() };
        c.scene.lighting = crate::config::LightingSpec::Spiral { count: 8, max_polar_deg: 60.0 };
        c
    }

    #[test]
    fn sphere_normals_are_unit_and_inside_the_cap() {
        let (normals, depth) = scene_geometry(&SceneSpec { size: 32, ..SceneSpec::default() });
        let limit = 70f64.to_radians().cos();
        let mut count = 0;
        for y in 0..32 {
            for x in 0..32 {
                if let Some(n) = normals.get(x, y) {
                    assert!((n.norm() - 1.0).abs() < 1e-12);
                    assert!(n.z >= limit - 1e-12);
                    assert!(depth.get(x, y).is_some());
                    count += 1;
                }
            }
        }
        assert!(count > 300);
        // The right half tilts towards +x and the top half towards +y.
        assert!(normals.get(28, 16).unwrap().x > 0.0);
        assert!(normals.get(16, 3).unwrap().y > 0.0);
    }

    #[test]
    fn checkerboard_matches_a_direct_render() {
        let c = small_config(Shape::Checkerboard);
        let scene = render_synthetic(&c).unwrap();
        assert_ne!(scene.abundances.get(0, 0, 0), scene.abundances.get(4, 0, 0));
        assert_eq!(scene.abundances.get(0, 0, 0), scene.abundances.get(4, 4, 0));
        for (x, y) in [(0, 0), (5, 1), (9, 13)] {
            let n = scene.normals.get(x, y).unwrap();
            let c = scene.abundances.get(x, y, 0).to_vec();
            let obs =
                dictstereo::render::render_pixel(&scene.dictionary, &n, &[c], &scene.rig, &Vec3::z(), None).unwrap();
            for i in 0..scene.rig.len() {
                assert_eq!(scene.stack.sample(i, x, y, 0), obs.intensities[0][i]);
            }
        }
    }

    #[test]
    fn bad_material_and_zero_lights_are_input_errors() {
        let mut c = small_config(Shape::Sphere);
        c.scene.materials = vec![vec![(5, 1.0)]];
        assert_eq!(render_synthetic(&c).err().unwrap().exit_code(), 1);
        let mut c = small_config(Shape::Sphere);
        c.scene.lighting = crate::config::LightingSpec::Random { count: 0, max_polar_deg: 60.0, seed: 0 };
        assert_eq!(render_synthetic(&c).err().unwrap().exit_code(), 1);
    }

    #[test]
    fn synthesize_writes_a_loadable_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("data");
        let c = small_config(Shape::Sphere);
        let scene = synthesize(&c, &out, false).unwrap();
        let ds = dictstereo::io::load_stack(out.join("manifest.json")).unwrap();
        assert_eq!(ds.rig.len(), 8);
        assert_eq!(ds.mask.unwrap(), scene.normals.mask());
        crate::outputs::verify(&out).unwrap();
        assert!(synthesize(&c, &out, false).is_err());
    }
}
