//! Renders one random material under all 14 protocol views and writes
//! PFM + PNG files.
//!
//! ```text
//! cargo run --release --example render_views -- [seed] [out-dir]
//! ```

use std::path::PathBuf;

use nested_brdf::dataset::sample_params;
use nested_brdf::io::{write_pfm, write_png};
use nested_brdf::render::{canonical_views, render_view, SceneConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let out = PathBuf::from(std::env::args().nth(2).unwrap_or_else(|| "render_views_out".into()));
    std::fs::create_dir_all(&out)?;
    let params = sample_params(seed);
    let scene = SceneConfig::default().with_image_size(128);
    println!("material {}", serde_json::to_string(&params)?);
    for view in canonical_views() {
        let img = render_view(&params, &view, &scene)?;
        let lit = img.normalized(scene.exposure).pixels().filter(|p| p.iter().any(|&c| c > 0.0)).count();
        let peak = img.pixels().flatten().fold(0.0f32, f32::max);
        println!("{:>22}: peak radiance {peak:>9.4}  lit pixels {:>5.1}%", view.name(), 100.0 * lit as f64 / img.pixel_count() as f64);
        let stem = out.join(view.name());
        write_pfm(&stem.with_extension("pfm"), &img)?;
        write_png(&stem.with_extension("png"), &img, scene.exposure)?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
