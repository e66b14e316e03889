use std::sync::OnceLock;

use dictstereo::brdf::{
    decode_sample, encode_sample, generate_parametric, merl_bytes, parse_merl, sampling_functional, Brdf, Dictionary,
    ParametricModel, TABLE_LEN,
};
use dictstereo::geometry::from_spherical;
use dictstereo::render::{render_matrix, render_pixel, shade, LightingRig};
use dictstereo::sampling::{cone_subset, equiangular_hemisphere, CandidateSet};
use dictstereo::Vec3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise_table() -> &'static Brdf {
    static T: OnceLock<Brdf> = OnceLock::new();
    T.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ch = (0..TABLE_LEN).map(|_| rng.random::<f64>()).collect();
        Brdf::from_channels("noise", vec![ch]).unwrap()
    })
}

fn atoms() -> &'static [Brdf; 2] {
    static A: OnceLock<[Brdf; 2]> = OnceLock::new();
    A.get_or_init(|| {
        [
            generate_parametric(&ParametricModel::Ward { diffuse: 0.2, specular: 0.4, roughness: 0.15 }, 1).unwrap(),
            generate_parametric(
                &ParametricModel::CookTorrance { diffuse: 0.5, specular: 0.3, roughness: 0.3, f0: 0.05 },
                1,
            )
            .unwrap(),
        ]
    })
}

fn cones() -> &'static CandidateSet {
    static S: OnceLock<CandidateSet> = OnceLock::new();
    S.get_or_init(|| equiangular_hemisphere(5.0).unwrap())
}

/// A direction within `max_deg` of +z.
fn cap(max_deg: f64) -> impl Strategy<Value = Vec3> {
    (0.0..max_deg, 0.0..360.0f64).prop_map(|(t, p)| from_spherical(t.to_radians(), p.to_radians()))
}

/// Normal, light and view with both directions strictly in front of the normal.
fn configuration() -> impl Strategy<Value = (Vec3, Vec3, Vec3)> {
    (cap(60.0), cap(89.0), cap(89.0)).prop_filter("front-facing", |(n, l, v)| n.dot(l) > 1e-3 && n.dot(v) > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn reciprocity((n, l, v) in configuration()) {
        let t = noise_table();
        let a = t.evaluate(&l, &v, &n, 0).unwrap();
        let b = t.evaluate(&v, &l, &n, 0).unwrap();
        prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        for model in [
            ParametricModel::Ward { diffuse: 0.1, specular: 0.5, roughness: 0.1 },
            ParametricModel::CookTorrance { diffuse: 0.1, specular: 0.5, roughness: 0.2, f0: 0.1 },
        ] {
            let a = model.evaluate(&l, &v, &n);
            let b = model.evaluate(&v, &l, &n);
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn partition_of_unity((n, l, v) in configuration()) {
        let f = sampling_functional(&l, &v, &n).unwrap();
        prop_assert!(!f.is_empty() && f.len() <= 8);
        prop_assert!(f.weights().iter().all(|&w| w > 0.0));
        prop_assert!((f.weight_sum() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn merl_samples_round_trip(stored in prop::collection::vec(0.0..1e6f64, 64), channel in 0usize..3) {
        for s in stored {
            let x = decode_sample(s, channel);
            prop_assert_eq!(decode_sample(encode_sample(x, channel), channel).to_bits(), x.to_bits());
        }
    }

    #[test]
    fn superposition_and_homogeneity(
        (n, l, v) in configuration(),
        a in 0.0..5.0f64,
        b in 0.0..5.0f64,
        k in 0.0..10.0f64,
    ) {
        let [f1, f2] = atoms();
        let s1 = shade(f1, &n, &l, &v, 0).unwrap();
        let s2 = shade(f2, &n, &l, &v, 0).unwrap();
        let dict = Dictionary::new(vec![f1.clone(), f2.clone()]).unwrap();
        let rig = LightingRig::new(vec![l], vec![k]).unwrap();
        let px = render_pixel(&dict, &n, &[vec![a, b]], &rig, &v, None).unwrap();
        let expect = k * (a * s1 + b * s2);
        prop_assert!((px.intensities[0][0] - expect).abs() <= 1e-12 * expect.max(1.0));

        let doubled = render_pixel(&dict, &n, &[vec![2.0 * a, 2.0 * b]], &rig, &v, None).unwrap();
        prop_assert!((doubled.intensities[0][0] - 2.0 * px.intensities[0][0]).abs() <= 1e-12 * expect.max(1.0));
    }

    #[test]
    fn back_lit_rows_are_zero(n in cap(60.0), t in 90.0..180.0f64, p in 0.0..360.0f64) {
        // A light at polar angle t from the normal.
        let (u, w) = {
            let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            let u = n.cross(&helper).normalize();
            (u, n.cross(&u))
        };
        let (st, ct) = t.to_radians().sin_cos();
        let (sp, cp) = p.to_radians().sin_cos();
        let l = (n * ct + u * (st * cp) + w * (st * sp)).normalize();
        prop_assume!(n.dot(&l) <= 0.0);
        let dict = Dictionary::new(atoms().to_vec()).unwrap();
        let rig = LightingRig::unit(vec![l]).unwrap();
        let b = render_matrix(&dict, &n, &rig, &Vec3::z());
        prop_assert!(b[0].iter().all(|&x| x == 0.0));
        prop_assert_eq!(shade(&atoms()[0], &n, &l, &Vec3::z(), 0).unwrap(), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn cone_idempotence_and_monotonicity(c in cap(85.0), a1 in 1.0..60.0f64, grow in 0.0..60.0f64) {
        let set = cones();
        let inner = cone_subset(set, &c, a1).unwrap();
        let again = cone_subset(&inner, &c, a1).unwrap();
        prop_assert_eq!(inner.normals(), again.normals());
        let outer = set.indices_within(&c, a1 + grow);
        let inner_idx = set.indices_within(&c, a1);
        prop_assert!(inner_idx.iter().all(|i| outer.binary_search(i).is_ok()));
    }
}

#[test]
fn merl_file_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let channels: Vec<Vec<f64>> =
        (0..3).map(|c| (0..TABLE_LEN).map(|_| decode_sample(rng.random_range(0.0..5000.0), c)).collect()).collect();
    let brdf = Brdf::from_channels("t", channels).unwrap();
    let bytes = merl_bytes(&brdf).unwrap();
    let back = parse_merl(&bytes, "t").unwrap();
    assert_eq!(back.clamped, 0);
    for (a, b) in back.brdf.channels().iter().flatten().zip(brdf.channels().iter().flatten()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    // Re-encoding a decoded file reproduces the same decoded values.
    let again = parse_merl(&merl_bytes(&back.brdf).unwrap(), "t").unwrap();
    assert!(again.brdf == back.brdf);
}
