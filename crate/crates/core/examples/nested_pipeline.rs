//! The full pipeline at toy scale: generate a dataset, train every
//! variant briefly, predict a held-out sample and evaluate all variants
//! under the 14 protocol views.
//!
//! ```text
//! cargo run --release --example nested_pipeline -- [count] [epochs]
//! ```

use std::collections::BTreeMap;

use nested_brdf::brdf::PARAM_NAMES;
use nested_brdf::dataset::{generate_dataset, Dataset, GenerateOptions, Split, ViewSelection};
use nested_brdf::estimator::{evaluate_dataset, train_all, TrainConfig, Variant};
use nested_brdf::render::SceneConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let count: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(48);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);

    let dir = tempfile::tempdir()?;
    let data = dir.path().join("data");
    let opts = GenerateOptions { count, master_seed: 3, views: ViewSelection::All, scene: SceneConfig::default() };
    generate_dataset(&opts, &data)?;
    let ds = Dataset::open(&data)?;

    let config = TrainConfig { epochs, nested_epochs: 2 * epochs, batch: 8, noise_replicas: 2, ..TrainConfig::default() };
    let (mut est, summary) = train_all(&ds, &config, &dir.path().join("weights"), None)?;
    for r in &summary.reports {
        println!("{:>18}: loss {:.3} -> {:.3}, exact bins {:.2}", r.name, r.initial.loss, r.final_train.loss, r.final_train.exact_bins);
    }

    let test = ds.split(Split::Test);
    let pair = ds.load_pair(test[0])?;
    let pred = est.predict(Variant::NestedLab, &pair)?;
    println!("\nsample {}: truth vs nested_lab", test[0].id);
    for (i, name) in PARAM_NAMES.iter().enumerate() {
        println!("  {name:>16}: {:>8.3} {:>8.3}", test[0].params.to_array()[i], pred.values[i]);
    }

    let variants = est.available();
    let report = evaluate_dataset(&mut est, &ds, Split::Test, &variants, None, 0)?;
    let medians: BTreeMap<_, _> = report.summary.iter().map(|s| (s.variant.name(), s.median)).collect();
    println!("\nmedian 14-view MSE per variant:");
    for (v, m) in medians {
        println!("  {v:>14}: {m:.5}");
    }
    Ok(())
}
