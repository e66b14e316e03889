use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use dictstereo::brdf::{
    cell_index, generate_parametric, read_merl, relative_brdf_error, to_half_angle, Brdf, ParametricModel, MERL_SCALES,
    PHI_D_BINS, TABLE_LEN, THETA_D_BINS, THETA_H_BINS,
};
use dictstereo::Vec3;
use nalgebra::{Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation3<f64> {
    let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    Rotation3::from_axis_angle(&Unit::new_normalize(axis), rng.random_range(0.0..2.0 * PI))
}

#[test]
fn half_angle_coordinates_match_rotation_construction() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (rz, ry) = (
        |a: f64| Rotation3::from_axis_angle(&Vec3::z_axis(), a),
        |a: f64| Rotation3::from_axis_angle(&Vec3::y_axis(), a),
    );
    let mut checked = 0;
    while checked < 2000 {
        let (th, td, pd, ph): (f64, f64, f64, f64) = (
            rng.random_range(0.01..1.3),
            rng.random_range(0.0..1.3),
            rng.random_range(0.0..PI),
            rng.random_range(0.0..2.0 * PI),
        );
        let frame = random_rotation(&mut rng);
        let to_h = rz(ph) * ry(th);
        let light = frame * (to_h * rz(pd) * ry(td) * Vec3::z());
        let view = frame * (to_h * rz(pd + PI) * ry(td) * Vec3::z());
        let normal = frame * Vec3::z();
        if normal.dot(&light) < 1e-3 || normal.dot(&view) < 1e-3 {
            continue;
        }
        let c = to_half_angle(&light, &view, &normal).unwrap();
        assert!((c.theta_h - th).abs() < 1e-9);
        assert!((c.theta_d - td).abs() < 1e-9);
        let dp = (c.phi_d - pd).rem_euclid(PI);
        assert!(dp.min(PI - dp) < 1e-8, "phi_d {} vs {pd} (θd {td})", c.phi_d);
        checked += 1;
    }
}

/// Table holding a function that trilinear interpolation reproduces exactly
/// away from the φd seam.
fn bilinear_table() -> Brdf {
    let mut t = vec![0.0; TABLE_LEN];
    for ih in 0..THETA_H_BINS {
        for id in 0..THETA_D_BINS {
            for ip in 0..PHI_D_BINS {
                let (h, d, p) = (ih as f64, id as f64, ip as f64);
                t[cell_index(ih, id, ip)] = 1.0 + h + 2.0 * d + 0.5 * h * d + 0.25 * p;
            }
        }
    }
    Brdf::from_channels("bilinear", vec![t]).unwrap()
}

#[test]
fn interpolation_matches_eight_corner_oracle() {
    let table = bilinear_table();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    while checked < 5000 {
        let (th, td, pd) =
            (rng.random_range(0.0..FRAC_PI_2), rng.random_range(0.0..1.45f64), rng.random_range(0.0..PI));
        let (sh, ch) = th.sin_cos();
        let d = Vec3::new(td.sin() * pd.cos(), td.sin() * pd.sin(), td.cos());
        let light = Vec3::new(d.x * ch + d.z * sh, d.y, -d.x * sh + d.z * ch);
        let half = Vec3::new(sh, 0.0, ch);
        let view = half * (2.0 * half.dot(&light)) - light;
        if light.z < 1e-3 || view.z < 1e-3 {
            continue;
        }
        // Continuous grid positions, clamped on θ axes and wrapped on φd.
        let u = ((th / FRAC_PI_2).sqrt() * 90.0).min(89.0);
        let w = (td / FRAC_PI_2 * 90.0).min(89.0);
        let p = pd / PI * 180.0;
        let phi_term = if p <= 179.0 { p } else { 179.0 * (180.0 - p) };
        let expect = 1.0 + u + 2.0 * w + 0.5 * u * w + 0.25 * phi_term;
        let got = table.evaluate(&light, &view, &Vec3::z(), 0).unwrap();
        assert!((got - expect).abs() < 1e-7 * expect, "{got} vs {expect} at ({th}, {td}, {pd})");
        checked += 1;
    }
}

#[test]
fn ward_table_tracks_closed_form() {
    let model = ParametricModel::Ward { diffuse: 0.3, specular: 0.6, roughness: 0.3 };
    let table = generate_parametric(&model, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..5000 {
        let n = Vec3::z();
        let sample = |rng: &mut ChaCha8Rng| {
            let (t, p): (f64, f64) = (rng.random_range(0.0..1.2), rng.random_range(0.0..2.0 * PI));
            Vec3::new(t.sin() * p.cos(), t.sin() * p.sin(), t.cos())
        };
        let (l, v) = (sample(&mut rng), sample(&mut rng));
        let exact = model.evaluate(&l, &v, &n);
        let got = table.evaluate(&l, &v, &n, 0).unwrap();
        worst = worst.max((got - exact).abs() / exact);
    }
    assert!(worst < 0.02, "worst relative deviation {worst}");
}

#[test]
fn ward_peak_value() {
    let table = generate_parametric(&ParametricModel::Ward { diffuse: 0.0, specular: 1.0, roughness: 0.2 }, 1).unwrap();
    let expect = 1.0 / (4.0 * PI * 0.04 * FRAC_PI_4.cos());
    for ip in 0..PHI_D_BINS {
        let v = table.at(0, 0, 45, ip);
        assert!((v - expect).abs() < 1e-9 * expect, "{v} vs {expect}");
    }
}

#[test]
fn error_metric_closed_form_for_constant_tables() {
    let (a, b) = (0.7, 0.2);
    let ta = Brdf::constant("a", 3, a).unwrap();
    let tb = Brdf::constant("b", 3, b).unwrap();
    let mut sum = 0.0;
    for ih in 0..THETA_H_BINS {
        let th = (ih as f64 / 90.0).powi(2) * FRAC_PI_2;
        for id in 0..THETA_D_BINS {
            let td = (id as f64).to_radians();
            for ip in 0..PHI_D_BINS {
                let pd = (ip as f64).to_radians();
                let cos_i = -td.sin() * pd.cos() * th.sin() + td.cos() * th.cos();
                sum += cos_i.max(0.0).powi(2);
            }
        }
    }
    let expect = (a - b) * (sum / TABLE_LEN as f64).sqrt();
    let got = relative_brdf_error(&ta, &tb).unwrap();
    assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    assert_eq!(relative_brdf_error(&ta, &ta).unwrap(), 0.0);
}

#[test]
fn hand_built_merl_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.binary");
    let mut bytes = Vec::new();
    for d in [90i32, 90, 180] {
        bytes.extend_from_slice(&d.to_le_bytes());
    }
    let stored = [300.0f64, 450.0, -1.0];
    for s in stored {
        for _ in 0..TABLE_LEN {
            bytes.extend_from_slice(&s.to_le_bytes());
        }
    }
    std::fs::write(&path, &bytes).unwrap();
    let load = read_merl(&path).unwrap();
    assert_eq!(load.brdf.name(), "flat");
    assert_eq!(load.clamped, TABLE_LEN);
    assert_eq!(load.brdf.at(0, 10, 20, 30), 300.0 * MERL_SCALES[0]);
    assert_eq!(load.brdf.at(1, 89, 89, 179), 450.0 * MERL_SCALES[1]);
    assert_eq!(load.brdf.at(2, 0, 0, 0), 0.0);

    bytes.truncate(bytes.len() - 8);
    std::fs::write(&path, &bytes).unwrap();
    assert!(read_merl(&path).is_err());
}
