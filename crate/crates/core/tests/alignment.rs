use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sigkit_core::dataset::{self, Distortion, SyntheticSpec};
use sigkit_core::eval::REFERENCE_PAIRS;
use sigkit_core::features::extract_features;
use sigkit_core::image::{self, GrayImage, DEFAULT_INK_THRESHOLD};
use sigkit_core::rst::{self, Alignment};

fn signature(seed: u64) -> GrayImage {
    dataset::render_clean(&SyntheticSpec::new(seed))
}

fn tight(img: &GrayImage) -> GrayImage {
    image::crop(img, image::ink_bbox(img, DEFAULT_INK_THRESHOLD).unwrap()).unwrap()
}

/// Distorts onto a canvas with a 16 px border and aligns back.
fn align(reference: &GrayImage, rotation: f64, scale: f64) -> Alignment {
    let t = dataset::transformed(reference, rotation, scale).unwrap();
    let d = Distortion {
        rotation_deg: rotation,
        scale,
        translation: (9, 13),
        ..Distortion::identity()
    };
    let probe = dataset::distort(reference, &d, (t.width() + 32, t.height() + 32)).unwrap();
    rst::correct_rst(reference, &probe).unwrap()
}

#[test]
fn probe_equal_to_reference() {
    let reference = signature(4);
    let a = rst::correct_rst(&reference, &reference).unwrap();
    let margins = rst::remove_translation(&reference).unwrap();
    assert_eq!(a.params.rotation_deg, 0.0);
    assert_eq!(a.params.translation_x, margins.tx);
    assert_eq!(a.params.translation_y, margins.ty);
    assert_eq!(a.params.scale_ratio, 1.0);
    assert!(a.aligned.max_abs_diff(&margins.cropped).unwrap() <= 2);
}

#[test]
fn steep_small_probe() {
    let a = align(&signature(10), -50.0, 0.54);
    assert!(
        (a.params.rotation_deg + 50.0).abs() <= 2.0,
        "{:?}",
        a.params
    );
    assert!(
        (a.params.scale_ratio - 1.0 / 0.54).abs() <= 0.1,
        "{:?}",
        a.params
    );
}

#[test]
fn mild_shrink() {
    let a = align(&signature(11), 0.0, 0.9);
    assert!(
        (a.params.scale_ratio - 1.0 / 0.9).abs() <= 0.1,
        "{:?}",
        a.params
    );
}

#[test]
fn thirty_degrees() {
    let a = align(&signature(12), 30.0, 1.0);
    assert!(
        (a.params.rotation_deg - 30.0).abs() <= 2.0,
        "{:?}",
        a.params
    );
}

#[test]
fn tiny_tilted_probe() {
    let a = align(&signature(13), 42.0, 0.26);
    assert!(
        (a.params.rotation_deg - 42.0).abs() <= 2.0,
        "{:?}",
        a.params
    );
    assert!(
        (1.0 / a.params.scale_ratio - 0.26).abs() <= 0.1,
        "{:?}",
        a.params
    );
}

#[test]
fn reference_pairs_within_bounds() {
    for (i, &(rotation, scale)) in REFERENCE_PAIRS.iter().enumerate() {
        let a = align(&signature(20 + i as u64), rotation, scale);
        assert!(
            (a.params.rotation_deg - rotation).abs() <= 3.0,
            "{rotation}/{scale}: {:?}",
            a.params
        );
        let expected = 1.0 / scale;
        let rel = (a.params.scale_ratio - expected).abs() / expected;
        assert!(
            rel <= 0.15,
            "{rotation}/{scale}: ratio {} vs {expected}",
            a.params.scale_ratio
        );
    }
}

#[test]
fn coarse_grid_rotations_recovered_to_a_degree() {
    for seed in [1, 2] {
        let reference = signature(seed);
        for k in -11..=11 {
            let theta = 5.0 * k as f64;
            let probe = image::rotate(&reference, theta);
            let est = rst::estimate_rotation(&reference, &probe).unwrap();
            assert!(
                (est.angle_deg - theta).abs() <= 1.0,
                "seed {seed}: {theta} -> {}",
                est.angle_deg
            );
        }
    }
}

#[test]
fn whole_degree_rotations_mostly_within_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let trials = 40;
    let mut good = 0;
    for i in 0..trials {
        let theta = rng.random_range(-60..=60) as f64;
        let scale = (rng.random_range(0.5..1.5f64) * 100.0).round() / 100.0;
        let a = align(&signature(300 + i), theta, scale);
        if (a.params.rotation_deg - theta).abs() <= 2.0 {
            good += 1;
        }
    }
    assert!(good * 10 >= trials * 9, "{good}/{trials} within 2 degrees");
}

#[test]
fn detection_stays_in_range() {
    let reference = signature(5);
    let probe = image::rotate(&reference, 75.0);
    let est = rst::estimate_rotation(&reference, &probe).unwrap();
    assert!(est.angle_deg.abs() <= 60.0);
}

#[test]
fn features_survive_distortion_and_correction() {
    for seed in [3, 8, 15] {
        let reference = signature(seed);
        let before = extract_features(&tight(&reference)).unwrap();
        let a = align(&reference, 10.0, 0.8);
        let after = extract_features(&a.aligned).unwrap();
        let worst = before
            .values()
            .iter()
            .zip(after.values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 0.15, "seed {seed}: max feature change {worst}");
    }
}

#[test]
fn distinct_signatures_have_distinct_features() {
    let a = extract_features(&tight(&signature(1))).unwrap();
    let b = extract_features(&tight(&signature(2))).unwrap();
    assert!(a.distance(&b) > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn aligned_probe_matches_reference_crop(
        seed in 0u64..1000,
        rotation in -40i32..=40,
        scale in 0.6f64..1.4,
    ) {
        let reference = signature(seed);
        let a = align(&reference, rotation as f64, scale);
        let crop = tight(&reference);
        prop_assert_eq!((a.aligned.width(), a.aligned.height()), (crop.width(), crop.height()));
    }
}
