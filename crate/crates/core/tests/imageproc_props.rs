use nested_brdf::imageproc::{
    channel_statistics, fit_whitening, homography_from_corners, lab_to_srgb, linear_rgb_to_lab, rectify, srgb_to_lab, whiten, Point,
};
use nested_brdf::render::{square_corners, RadianceImage};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A convex quadrilateral: a jittered square in a 200-pixel frame.
fn quad() -> impl Strategy<Value = [Point; 4]> {
    prop::array::uniform8(-30.0f64..30.0).prop_map(|j| {
        [
            [20.0 + j[0], 20.0 + j[1]],
            [180.0 + j[2], 20.0 + j[3]],
            [180.0 + j[4], 180.0 + j[5]],
            [20.0 + j[6], 180.0 + j[7]],
        ]
    })
}

/// Correlated random colors: a shared gray level plus per-channel noise.
fn correlated_image(seed: u64, size: usize) -> RadianceImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RadianceImage::from_fn(size, size, |_, _| {
        let g: f32 = rng.random();
        [0.7 * g + 0.3 * rng.random::<f32>(), 0.5 * g + 0.5 * rng.random::<f32>(), 0.2 * g + 0.8 * rng.random::<f32>()]
    })
}

proptest! {
    #[test]
    fn homography_maps_corners_exactly(src in quad()) {
        let dst = square_corners(64);
        let h = homography_from_corners(&src, &dst).unwrap();
        for (s, d) in src.iter().zip(&dst) {
            let m = h.apply(*s);
            prop_assert!((m[0] - d[0]).abs() < 1e-9 && (m[1] - d[1]).abs() < 1e-9, "{m:?} vs {d:?}");
        }
        let back = h.inverse();
        for s in &src {
            let r = back.apply(h.apply(*s));
            prop_assert!((r[0] - s[0]).abs() < 1e-7 && (r[1] - s[1]).abs() < 1e-7);
        }
    }

    #[test]
    fn whitened_covariance_is_identity(seed in any::<u64>()) {
        let w = whiten(&correlated_image(seed, 48)).unwrap();
        let (mean, cov) = channel_statistics(&w);
        prop_assert!(mean.norm() < 1e-6, "mean {mean}");
        for r in 0..3 {
            for c in 0..3 {
                let want = if r == c { 1.0 } else { 0.0 };
                prop_assert!((cov[(r, c)] - want).abs() < 1e-6, "cov[{r},{c}] = {}", cov[(r, c)]);
            }
        }
    }

    #[test]
    fn whitening_a_whitened_image_is_near_identity(seed in any::<u64>()) {
        let w = whiten(&correlated_image(seed, 32)).unwrap();
        let t = fit_whitening(&w).unwrap();
        prop_assert!((t.matrix - nalgebra::Matrix3::identity()).abs().max() < 1e-3);
    }

    #[test]
    fn rectifying_the_full_frame_is_identity(seed in any::<u64>()) {
        let img = correlated_image(seed, 24);
        let out = rectify(&img, &square_corners(24), 24).unwrap();
        prop_assert!(img.mean_squared_error(&out) < 1e-12);
    }
}

#[test]
fn srgb_lab_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let rgb: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        let (back, clamped) = lab_to_srgb(srgb_to_lab(rgb));
        assert!(!clamped);
        for c in 0..3 {
            worst = worst.max((back[c] - rgb[c]).abs());
        }
    }
    assert!(worst < 1e-6, "worst round-trip error {worst:e}");
}

#[test]
fn white_and_black_lab() {
    let w = srgb_to_lab([1.0, 1.0, 1.0]);
    assert!((w[0] - 100.0).abs() < 1e-3 && w[1].abs() < 1e-3 && w[2].abs() < 1e-3, "{w:?}");
    let w = linear_rgb_to_lab([1.0, 1.0, 1.0]);
    assert!((w[0] - 100.0).abs() < 1e-3);
    let k = srgb_to_lab([0.0, 0.0, 0.0]);
    assert!(k.iter().all(|v| v.abs() < 1e-9));
}

#[test]
fn mid_gray_lab_reference() {
    // sRGB 119/255 is the textbook L* = 50 gray.
    let g = srgb_to_lab([119.0 / 255.0; 3]);
    assert!((g[0] - 50.0).abs() < 0.1, "{g:?}");
}
