//! Overfits both feature CNNs and the nested cascade on a handful of
//! synthetic materials — a capacity sanity check of the whole training
//! stack.
//!
//! ```text
//! cargo run --release --example overfit -- [samples] [epochs] [batch] [lr] [nested-lr]
//! ```

use std::time::Instant;

use nested_brdf::dataset::{self, ColorEncoding, Dataset, GenerateOptions, ViewSelection};
use nested_brdf::estimator::{self, FeatureBank, FitOptions, InputKind, NestedTopology, Samples, SetScore, EpochStats};
use nested_brdf::render::SceneConfig;

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (n, epochs, batch, lr, nested_lr): (usize, usize, usize, f64, f64) = (arg(1, 16), arg(2, 500), arg(3, 4), arg(4, 0.03), arg(5, 0.03));
    let dir = tempfile::tempdir()?;
    let opts = GenerateOptions { count: n, master_seed: 7, views: ViewSelection::Training, scene: SceneConfig::default() };
    dataset::generate_dataset(&opts, dir.path())?;
    let samples = Samples::load_all(&Dataset::open(dir.path())?)?;

    let mut hook = |name: &str, s: &EpochStats, train: SetScore| {
        if s.epoch % 25 == 0 {
            println!("{name:>12} epoch {:>4}: batch loss {:.4}  train loss {:.4}  exact bins {:.3}", s.epoch, s.train_loss, train.loss, train.exact_bins);
        }
        false
    };
    let fit = FitOptions { epochs, batch, lr, seed: 1 };
    let mut nets = Vec::new();
    for kind in [InputKind::Original, InputKind::Whitened] {
        let t = Instant::now();
        let (net, report) = estimator::train_feature_cnn(&samples, None, kind, None, fit, Some(&mut hook))?;
        println!(
            "{:?}: loss {:.4} -> {:.4}, exact bins {:.3} ({:.0}s)",
            kind,
            report.initial.loss,
            report.final_train.loss,
            report.final_train.exact_bins,
            t.elapsed().as_secs_f64()
        );
        nets.push(net);
    }
    let (mut cnn0, mut cnnw) = (nets.remove(0), nets.remove(0));
    let bank = FeatureBank::extract(&mut cnn0, &mut cnnw, &[&samples])?;
    let t = Instant::now();
    let nopts = FitOptions { lr: nested_lr, ..fit };
    let (_, reports) = estimator::train_nested(
        NestedTopology::default(),
        ColorEncoding::Lab,
        &bank,
        samples.bins(ColorEncoding::Lab),
        None,
        nopts,
        Some(&mut hook),
    )?;
    for r in &reports {
        println!("{}: loss {:.4} -> {:.4}, exact bins {:.3}", r.name, r.initial.loss, r.final_train.loss, r.final_train.exact_bins);
    }
    println!("nested blocks: {:.0}s", t.elapsed().as_secs_f64());
    Ok(())
}
