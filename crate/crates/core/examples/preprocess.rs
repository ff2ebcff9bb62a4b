//! Rectifies a rendered input view onto a fronto-parallel square, whitens
//! it, and shows the color conversions used for labels.
//!
//! ```text
//! cargo run --example preprocess
//! ```

use nested_brdf::dataset::sample_params;
use nested_brdf::imageproc::{channel_statistics, homography_from_corners, linear_rgb_to_lab, rectify, whiten};
use nested_brdf::render::{corner_projection, render_view, square_corners, training_views, SceneConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scene = SceneConfig::default();
    let params = sample_params(5);
    for view in training_views() {
        let raw = render_view(&params, &view, &scene)?;
        let corners = corner_projection(&view, &scene);
        let target = square_corners(scene.image_size);
        let h = homography_from_corners(&corners, &target)?;
        let worst = corners.iter().zip(&target).map(|(c, t)| {
            let m = h.apply(*c);
            (m[0] - t[0]).hypot(m[1] - t[1])
        });
        println!("{}: corners {:?}", view.name(), corners.map(|c| [c[0].round(), c[1].round()]));
        println!("  corner mapping error {:.2e}", worst.fold(0.0, f64::max));

        let rect = rectify(&raw.normalized(scene.exposure), &corners, scene.image_size)?;
        let (mean, _) = channel_statistics(&rect);
        println!("  rectified mean rgb [{:.4}, {:.4}, {:.4}]", mean[0], mean[1], mean[2]);
        let (wmean, wcov) = channel_statistics(&whiten(&rect)?);
        println!("  whitened mean {:.1e}, covariance diag [{:.6}, {:.6}, {:.6}]", wmean.norm(), wcov[(0, 0)], wcov[(1, 1)], wcov[(2, 2)]);
    }
    let lab = linear_rgb_to_lab(params.rgb0());
    println!("rgb0 {:?} -> LAB ({:.2}, {:.2}, {:.2})", params.rgb0(), lab[0], lab[1], lab[2]);
    Ok(())
}
