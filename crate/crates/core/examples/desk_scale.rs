//! Desk-scale generalization run: 1536 materials (1024 train), training of
//! every variant, and a 14-view MSE comparison on 128 held-out materials.
//! Several hours on one CPU core with the defaults.
//!
//! ```text
//! cargo run --release --example desk_scale -- [work-dir] [epochs] [nested-epochs] [count] [eval]
//! ```
//!
//! An existing dataset or weights directory under `work-dir` is reused.

use std::path::PathBuf;
use std::time::Instant;

use nested_brdf::dataset::{generate_dataset, Dataset, GenerateOptions, Split, ViewSelection};
use nested_brdf::estimator::{evaluate_dataset, train_all, EpochStats, Estimator, SetScore, TrainConfig, Variant};
use nested_brdf::render::SceneConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut args = std::env::args().skip(1);
    let work = PathBuf::from(args.next().unwrap_or_else(|| "desk_scale_run".into()));
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(60);
    let nested_epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(60);
    let count: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(1536);
    let eval_n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(128);
    let start = Instant::now();

    let data = work.join("data");
    if !data.join("manifest.jsonl").exists() {
        let opts = GenerateOptions { count, master_seed: 2024, views: ViewSelection::All, scene: SceneConfig::default() };
        generate_dataset(&opts, &data)?;
        println!("dataset generated ({:.0}s)", start.elapsed().as_secs_f64());
    }
    let ds = Dataset::open(&data)?;

    let weights = work.join("weights");
    let mut est = if weights.join("training_log.json").exists() {
        Estimator::load(&weights)?
    } else {
        let variants = vec![Variant::Cnn0, Variant::NestedRgb, Variant::NestedLab];
        let config = TrainConfig { epochs, nested_epochs, variants, ..TrainConfig::default() };
        let mut hook = |name: &str, s: &EpochStats, train: SetScore| {
            let val = s.val.map(|v| format!("val {:.4} exact {:.3}", v.loss, v.exact_bins)).unwrap_or_default();
            println!("{name:>16} {:>4}: train {:.4} exact {:.3}  {val}  [{:.0}s]", s.epoch, train.loss, train.exact_bins, start.elapsed().as_secs_f64());
            false
        };
        train_all(&ds, &config, &weights, Some(&mut hook))?.0
    };

    let variants = [Variant::Cnn0, Variant::NestedRgb, Variant::NestedLab, Variant::Random];
    let report = evaluate_dataset(&mut est, &ds, Split::Test, &variants, Some(eval_n), 0)?;
    std::fs::write(work.join("eval_report.json"), serde_json::to_string_pretty(&report)?)?;
    let median = |v| report.summary_of(v).map(|s| s.median).unwrap_or(f64::NAN);
    for v in variants {
        let s = report.summary_of(v).expect("evaluated");
        println!("{:>12}: median {:.5}  IQR [{:.5}, {:.5}]  mean {:.5}", v.name(), s.median, s.q1, s.q3, s.mean);
    }
    let (lab, rgb, cnn0, random) = (median(Variant::NestedLab), median(Variant::NestedRgb), median(Variant::Cnn0), median(Variant::Random));
    println!("nested_lab <= nested_rgb <= cnn0: {}", lab <= rgb && rgb <= cnn0);
    println!("nested_lab below random / 2: {} ({:.2}x)", 2.0 * lab < random, random / lab);
    println!("total {:.1} h", start.elapsed().as_secs_f64() / 3600.0);
    Ok(())
}
