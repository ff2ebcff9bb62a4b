use nested_brdf::dataset::{generate_dataset, ColorEncoding, Dataset, GenerateOptions, Split, ViewSelection, NUM_BINS, NUM_PARAMS};
use nested_brdf::estimator::{
    feature_len, pair_batch, train_feature_cnn, train_nested, Estimator, FeatureBank, FeatureCnn, FitOptions, InputKind, NestedNet,
    NestedTopology, Samples, TrainConfig, Variant,
};
use nested_brdf::render::SceneConfig;

fn tiny_dataset(count: usize, seed: u64, views: ViewSelection) -> (tempfile::TempDir, Dataset) {
    let dir = tempfile::tempdir().unwrap();
    let opts = GenerateOptions { count, master_seed: seed, views, scene: SceneConfig::default().with_image_size(32) };
    generate_dataset(&opts, dir.path()).unwrap();
    let ds = Dataset::open(dir.path()).unwrap();
    (dir, ds)
}

fn quick(epochs: usize, seed: u64) -> FitOptions {
    FitOptions { epochs, batch: 4, lr: 0.003, seed }
}

#[test]
fn forward_gives_ten_distributions_per_sample() {
    let (_dir, ds) = tiny_dataset(4, 1, ViewSelection::Training);
    let samples = Samples::load_all(&ds).unwrap();
    let mut net = FeatureCnn::new(32, 5).unwrap();
    let probs = net.probabilities(samples.inputs(InputKind::Original)).unwrap();
    assert_eq!(probs.len(), NUM_PARAMS);
    for p in &probs {
        assert_eq!(p.shape(), &[4, NUM_BINS]);
        for i in 0..4 {
            let s: f64 = p.item(i).iter().map(|&v| v as f64).sum();
            assert!((s - 1.0).abs() < 1e-5);
        }
    }

    let pairs: Vec<_> = ds.entries.iter().map(|e| ds.load_pair(e).unwrap()).collect();
    let mut est = Estimator { cnn0: Some(net), ..Estimator::default() };
    for pred in est.predict_batch(Variant::Cnn0, &pairs, 0).unwrap() {
        assert_eq!(pred.probs.len(), NUM_PARAMS);
        for p in &pred.probs {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn pair_batch_stacks_views_channel_major() {
    let (_dir, ds) = tiny_dataset(2, 2, ViewSelection::Training);
    let pair = ds.load_pair(&ds.entries[0]).unwrap();
    let x = pair_batch([&pair.homographied]).unwrap();
    assert_eq!(x.shape(), &[1, 6, 32, 32]);
    let px = pair.homographied[1].get(5, 7);
    assert_eq!(x.item(0)[(3 * 32 * 32) + 7 * 32 + 5], px[0]);
    assert_eq!(x.item(0)[(5 * 32 * 32) + 7 * 32 + 5], px[2]);
}

#[test]
fn nested_block_widths_follow_topology() {
    let (f0, fw) = (feature_len(64), feature_len(64));
    assert_eq!(f0, 128 * 13 * 13);
    let net = NestedNet::new(NestedTopology::default(), ColorEncoding::Lab, f0, fw, 0).unwrap();
    let widths: Vec<usize> = (0..5).map(|b| net.block_input_width(b)).collect();
    assert_eq!(widths, vec![fw, fw + 100, f0 + 300, f0 + 200, f0 + 500]);
}

#[test]
fn nested_training_leaves_trunks_frozen() {
    let (_dir, ds) = tiny_dataset(6, 3, ViewSelection::Training);
    let samples = Samples::load_all(&ds).unwrap();
    let (mut cnn0, _) = train_feature_cnn(&samples, None, InputKind::Original, None, quick(1, 1), None).unwrap();
    let (mut cnnw, _) = train_feature_cnn(&samples, None, InputKind::Whitened, None, quick(1, 2), None).unwrap();
    let before = (cnn0.trunk_digest().unwrap(), cnnw.trunk_digest().unwrap());
    let bank = FeatureBank::extract(&mut cnn0, &mut cnnw, &[&samples]).unwrap();
    let opts = FitOptions { lr: 0.03, ..quick(2, 4) };
    let (_, reports) =
        train_nested(NestedTopology::default(), ColorEncoding::Lab, &bank, samples.bins(ColorEncoding::Lab), None, opts, None).unwrap();
    assert_eq!(reports.len(), 5);
    assert_eq!(before, (cnn0.trunk_digest().unwrap(), cnnw.trunk_digest().unwrap()));
}

#[test]
fn training_is_deterministic() {
    let (_dir, ds) = tiny_dataset(5, 4, ViewSelection::Training);
    let samples = Samples::load_all(&ds).unwrap();
    let run = || train_feature_cnn(&samples, None, InputKind::Original, None, quick(2, 9), None).unwrap();
    let (a, ra) = run();
    let (b, rb) = run();
    assert_eq!(a.to_weights().unwrap().digest(), b.to_weights().unwrap().digest());
    assert_eq!(ra, rb);
    let (c, _) = train_feature_cnn(&samples, None, InputKind::Original, None, quick(2, 10), None).unwrap();
    assert_ne!(a.to_weights().unwrap().digest(), c.to_weights().unwrap().digest());
}

#[test]
fn training_reduces_loss() {
    let (_dir, ds) = tiny_dataset(8, 5, ViewSelection::Training);
    let samples = Samples::load_all(&ds).unwrap();
    let opts = FitOptions { epochs: 15, batch: 4, lr: 0.03, seed: 3 };
    let (_, r) = train_feature_cnn(&samples, None, InputKind::Original, None, opts, None).unwrap();
    assert!(r.final_train.loss < r.initial.loss, "{} -> {}", r.initial.loss, r.final_train.loss);
}

#[test]
fn saved_estimator_predicts_identically() {
    let (dir, ds) = tiny_dataset(12, 6, ViewSelection::Training);
    let config = TrainConfig {
        epochs: 1,
        nested_epochs: 1,
        batch: 4,
        variants: vec![Variant::Cnn0, Variant::NestedLab, Variant::NestedNoise],
        noise_replicas: 1,
        ..TrainConfig::default()
    };
    let out = dir.path().join("weights");
    let (mut trained, summary) = nested_brdf::estimator::train_all(&ds, &config, &out, None).unwrap();
    assert!(summary.digests.contains_key("cnn0.mxbw"));
    assert!(summary.digests.contains_key("nested_lab/fc5.mxbw"));
    let mut loaded = Estimator::load(&out).unwrap();
    assert_eq!(loaded.available(), trained.available());

    let pairs: Vec<_> = ds.split(Split::Test).iter().map(|e| ds.load_pair(e).unwrap()).collect();
    for v in [Variant::Cnn0, Variant::NestedLab, Variant::NestedNoise] {
        assert_eq!(trained.predict_batch(v, &pairs, 0).unwrap(), loaded.predict_batch(v, &pairs, 0).unwrap());
    }
    // Nothing was trained for cnnw-only or custom-weight prediction.
    assert!(loaded.predict_batch(Variant::CustomWeights, &pairs, 0).is_err());
}

#[test]
fn random_baseline_is_seeded() {
    let (_dir, ds) = tiny_dataset(3, 7, ViewSelection::Training);
    let pairs: Vec<_> = ds.entries.iter().map(|e| ds.load_pair(e).unwrap()).collect();
    let mut est = Estimator::default();
    let a = est.predict_batch(Variant::Random, &pairs, 1).unwrap();
    let b = est.predict_batch(Variant::Random, &pairs, 1).unwrap();
    let c = est.predict_batch(Variant::Random, &pairs, 2).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
