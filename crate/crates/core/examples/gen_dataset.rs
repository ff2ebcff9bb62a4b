//! Generates a small labeled dataset and summarizes its manifest.
//!
//! ```text
//! cargo run --release --example gen_dataset -- [count] [seed] [out-dir]
//! ```

use std::path::PathBuf;

use nested_brdf::brdf::{BrdfParams, PARAM_NAMES};
use nested_brdf::dataset::{bin_center, generate_dataset, NUM_BINS, smooth_label, Dataset, GenerateOptions, Split, ViewSelection};
use nested_brdf::render::SceneConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let count: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(12);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "gen_dataset_out".into()));
    let opts = GenerateOptions { count, master_seed: seed, views: ViewSelection::All, scene: SceneConfig::default() };
    generate_dataset(&opts, &out)?;

    let ds = Dataset::open(&out)?;
    for split in [Split::Train, Split::Val, Split::Test] {
        println!("{split:?}: {} samples", ds.split(split).len());
    }
    let e = &ds.entries[0];
    println!("\nsample {} ({} images)", e.id, e.images.len());
    for (name, (&bin, value)) in PARAM_NAMES.iter().zip(e.bins.0.iter().zip(e.params.to_array())) {
        println!("  {name:>16} = {value:>8.3}  bin {bin:>2}");
    }
    let bin = e.bins.0[0];
    let label = smooth_label(bin);
    let mass: f64 = label.0[bin.saturating_sub(3)..(bin + 4).min(NUM_BINS)].iter().sum();
    println!("\nroughness label: {mass:.3} of the mass within ±3 bins; bin center {:.2}", bin_center(bin, BrdfParams::range(0)));
    Ok(())
}
