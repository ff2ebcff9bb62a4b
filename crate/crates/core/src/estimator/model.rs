use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::brdf::BrdfParams;
use crate::dataset::{self, argmax, bin_center, derive_seed, label_range, ColorEncoding, Dataset, InputPair, ParamBins, Split, NUM_PARAMS};
use crate::imageproc::lab_to_linear_rgb;
use crate::nn::{load_weights, save_weights, Tensor};

use super::data::{InputKind, Samples, TrainConfig, Variant};
use super::fit::{train_feature_cnn, EpochHook, FitOptions, TrainReport};
use super::nested::{train_nested, FeatureBank, NestedNet};
use super::network::{FeatureCnn, NestedTopology};
use super::{pair_batch, EstimatorError};

/// Decoded output of one estimator variant for one input pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub variant: Variant,
    pub encoding: ColorEncoding,
    /// One 100-way distribution per parameter.
    pub probs: Vec<Vec<f64>>,
    pub bins: ParamBins,
    /// Bin centers in label space (LAB for LAB-encoded color heads).
    pub values: [f64; NUM_PARAMS],
    pub params: BrdfParams,
    /// Whether a decoded LAB color fell outside the RGB gamut and was
    /// clamped.
    pub gamut_clamped: bool,
}

impl Prediction {
    pub fn from_probs(variant: Variant, encoding: ColorEncoding, probs: Vec<Vec<f64>>) -> Self {
        let bins = ParamBins(std::array::from_fn(|i| argmax(&probs[i])));
        let values: [f64; NUM_PARAMS] = std::array::from_fn(|i| bin_center(bins.0[i], label_range(i, encoding)));
        let gamut_clamped = encoding == ColorEncoding::Lab
            && (lab_to_linear_rgb([values[4], values[5], values[6]]).1 || lab_to_linear_rgb([values[7], values[8], values[9]]).1);
        let params = dataset::decode_params(&values, encoding);
        Self { variant, encoding, probs, bins, values, params, gamut_clamped }
    }

    fn from_tensors(variant: Variant, encoding: ColorEncoding, probs: &[Tensor<f32>], item: usize) -> Self {
        // Renormalized in f64 so each distribution sums to 1 beyond f32 rounding.
        let p = probs
            .iter()
            .map(|t| {
                let row: Vec<f64> = t.item(item).iter().map(|&v| v as f64).collect();
                let sum: f64 = row.iter().sum();
                row.into_iter().map(|v| v / sum).collect()
            })
            .collect();
        Self::from_probs(variant, encoding, p)
    }

    /// The random baseline: uniformly sampled parameters.
    pub fn random(seed: u64) -> Self {
        let params = dataset::sample_params(seed);
        let bins = dataset::discretize(&params);
        let probs = (0..NUM_PARAMS).map(|i| dataset::SmoothedLabel::one_hot(bins.0[i]).0).collect();
        let values = dataset::encode_params(&params, ColorEncoding::Lab);
        Self { variant: Variant::Random, encoding: ColorEncoding::Lab, probs, bins, values, params, gamut_clamped: false }
    }
}

/// Every trained network of the pipeline.
#[derive(Debug, Default)]
pub struct Estimator {
    pub cnn0: Option<FeatureCnn>,
    pub cnnw: Option<FeatureCnn>,
    pub custom: Option<FeatureCnn>,
    pub nested: BTreeMap<Variant, NestedNet>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TopologyFile {
    encoding: ColorEncoding,
    topology: NestedTopology,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EstimatorError + '_ {
    move |source| EstimatorError::Io { path: path.display().to_string(), source }
}

impl Estimator {
    /// Variants this estimator can predict (the random baseline always).
    pub fn available(&self) -> Vec<Variant> {
        Variant::ALL
            .into_iter()
            .filter(|v| match v {
                Variant::Cnn0 => self.cnn0.is_some(),
                Variant::Cnnw => self.cnnw.is_some(),
                Variant::CustomWeights => self.custom.is_some(),
                Variant::Random => true,
                nested => self.nested.contains_key(nested) && self.cnn0.is_some() && self.cnnw.is_some(),
            })
            .collect()
    }

    /// Writes `cnn0.mxbw`, `cnnw.mxbw`, `custom_weights.mxbw` and, per
    /// nested variant, `<variant>/topology.json` plus one file per block.
    pub fn save(&self, dir: &Path) -> Result<(), EstimatorError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        for (net, v) in [(&self.cnn0, Variant::Cnn0), (&self.cnnw, Variant::Cnnw), (&self.custom, Variant::CustomWeights)] {
            if let Some(net) = net {
                let mut w = net.to_weights()?;
                w.meta["variant"] = v.name().into();
                save_weights(&dir.join(format!("{}.mxbw", v.name())), &w)?;
            }
        }
        for (v, net) in &self.nested {
            let sub = dir.join(v.name());
            fs::create_dir_all(&sub).map_err(io_err(&sub))?;
            let topo = TopologyFile { encoding: net.encoding, topology: net.topology.clone() };
            let path = sub.join("topology.json");
            fs::write(&path, serde_json::to_string_pretty(&topo).expect("serializable")).map_err(io_err(&path))?;
            for (spec, w) in net.topology.blocks.iter().zip(net.to_weights()?) {
                save_weights(&sub.join(format!("{}.mxbw", spec.name)), &w)?;
            }
        }
        Ok(())
    }

    /// Loads whatever networks exist under `dir`.
    pub fn load(dir: &Path) -> Result<Self, EstimatorError> {
        if !dir.is_dir() {
            return Err(EstimatorError::MissingWeights(format!("{} is not a directory", dir.display())));
        }
        let cnn = |v: Variant| -> Result<Option<FeatureCnn>, EstimatorError> {
            let path = dir.join(format!("{}.mxbw", v.name()));
            if !path.exists() {
                return Ok(None);
            }
            Ok(Some(FeatureCnn::from_weights(&load_weights(&path)?)?))
        };
        let mut est = Estimator { cnn0: cnn(Variant::Cnn0)?, cnnw: cnn(Variant::Cnnw)?, custom: cnn(Variant::CustomWeights)?, nested: BTreeMap::new() };
        for v in Variant::ALL.into_iter().filter(|v| v.is_nested()) {
            let sub = dir.join(v.name());
            let path = sub.join("topology.json");
            if !path.exists() {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            let topo: TopologyFile = serde_json::from_str(&text).map_err(|e| EstimatorError::Config(format!("{}: {e}", path.display())))?;
            let files = topo
                .topology
                .blocks
                .iter()
                .map(|b| load_weights(&sub.join(format!("{}.mxbw", b.name))))
                .collect::<Result<Vec<_>, _>>()?;
            let net = NestedNet::from_weights(&files)?;
            if net.topology != topo.topology || net.encoding != topo.encoding {
                return Err(EstimatorError::Config(format!("{}: block weights disagree with topology.json", sub.display())));
            }
            est.nested.insert(v, net);
        }
        if est.cnn0.is_none() && est.cnnw.is_none() && est.custom.is_none() && est.nested.is_empty() {
            return Err(EstimatorError::MissingWeights(format!("no weight files under {}", dir.display())));
        }
        Ok(est)
    }

    fn require<'a>(net: &'a mut Option<FeatureCnn>, name: &str) -> Result<&'a mut FeatureCnn, EstimatorError> {
        net.as_mut().ok_or_else(|| EstimatorError::MissingWeights(format!("{name}.mxbw")))
    }

    /// Predictions of `variant` for each pair. `random_seed` seeds the
    /// random baseline (pair `i` uses `derive_seed(random_seed, i)`).
    pub fn predict_batch(&mut self, variant: Variant, pairs: &[InputPair], random_seed: u64) -> Result<Vec<Prediction>, EstimatorError> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let mut out = Vec::with_capacity(pairs.len());
        for (start, chunk) in (0..).step_by(32).zip(pairs.chunks(32)) {
            let probs = match variant {
                Variant::Random => {
                    out.extend((0..chunk.len()).map(|i| Prediction::random(derive_seed(random_seed, (start + i) as u64))));
                    continue;
                }
                Variant::Cnn0 | Variant::CustomWeights | Variant::Cnnw => {
                    let (net, kind) = match variant {
                        Variant::Cnn0 => (Self::require(&mut self.cnn0, "cnn0")?, InputKind::Original),
                        Variant::Cnnw => (Self::require(&mut self.cnnw, "cnnw")?, InputKind::Whitened),
                        _ => (Self::require(&mut self.custom, "custom_weights")?, InputKind::Original),
                    };
                    let x = match kind {
                        InputKind::Original => pair_batch(chunk.iter().map(|p| &p.homographied))?,
                        InputKind::Whitened => pair_batch(chunk.iter().map(|p| &p.whitened))?,
                    };
                    net.probabilities(&x)?
                }
                nested => {
                    let original = pair_batch(chunk.iter().map(|p| &p.homographied))?;
                    let whitened = pair_batch(chunk.iter().map(|p| &p.whitened))?;
                    let cnn0 = self.cnn0.as_mut().ok_or_else(|| EstimatorError::MissingWeights("cnn0.mxbw".into()))?;
                    let cnnw = self.cnnw.as_mut().ok_or_else(|| EstimatorError::MissingWeights("cnnw.mxbw".into()))?;
                    let bank = FeatureBank::from_inputs(cnn0, cnnw, &original, &whitened)?;
                    let net = self.nested.get_mut(&nested).ok_or_else(|| EstimatorError::MissingWeights(format!("{}/", nested.name())))?;
                    net.probabilities(&bank)?
                }
            };
            out.extend((0..chunk.len()).map(|i| Prediction::from_tensors(variant, variant.encoding(), &probs, i)));
        }
        Ok(out)
    }

    pub fn predict(&mut self, variant: Variant, pair: &InputPair) -> Result<Prediction, EstimatorError> {
        Ok(self.predict_batch(variant, std::slice::from_ref(pair), 0)?.remove(0))
    }
}

/// Outcome of [`train_all`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub config: TrainConfig,
    pub reports: Vec<TrainReport>,
    /// Hex digest of each written weights file, keyed by relative path.
    pub digests: BTreeMap<String, String>,
}

/// Trains every requested variant on `dataset`'s train split (validating on
/// its val split), writes the weights under `out` and a
/// `training_log.json` with all curves.
pub fn train_all(
    dataset: &Dataset,
    config: &TrainConfig,
    out: &Path,
    mut hook: Option<&mut EpochHook<'_>>,
) -> Result<(Estimator, TrainingSummary), EstimatorError> {
    config.validate()?;
    let train = Samples::load(dataset, Split::Train, config.max_train)?;
    let val = match Samples::load(dataset, Split::Val, config.max_val) {
        Ok(v) => Some(v),
        Err(EstimatorError::EmptySplit(_)) => None,
        Err(e) => return Err(e),
    };
    log::info!("training on {} samples, validating on {}", train.len(), val.as_ref().map_or(0, |v| v.len()));
    let opts = |seed: u64| FitOptions { epochs: config.epochs, batch: config.batch, lr: config.lr, seed: derive_seed(config.seed, seed) };
    let wants_nested = config.variants.iter().any(|v| v.is_nested());
    let mut est = Estimator::default();
    let mut reports = Vec::new();
    if config.wants(Variant::Cnn0) || wants_nested {
        let (net, r) = train_feature_cnn(&train, val.as_ref(), InputKind::Original, None, opts(1), hook.as_deref_mut())?;
        est.cnn0 = Some(net);
        reports.push(r);
    }
    if config.wants(Variant::Cnnw) || wants_nested {
        let (net, r) = train_feature_cnn(&train, val.as_ref(), InputKind::Whitened, None, opts(2), hook.as_deref_mut())?;
        est.cnnw = Some(net);
        reports.push(r);
    }
    if config.wants(Variant::CustomWeights) {
        let (net, r) = train_feature_cnn(&train, val.as_ref(), InputKind::Original, Some(config.custom_weights), opts(3), hook.as_deref_mut())?;
        est.custom = Some(net);
        reports.push(r);
    }
    if wants_nested {
        let (cnn0, cnnw) = (est.cnn0.as_mut().expect("trained"), est.cnnw.as_mut().expect("trained"));
        let clean = FeatureBank::extract(cnn0, cnnw, &[&train])?;
        let val_bank = val.as_ref().map(|v| FeatureBank::extract(cnn0, cnnw, &[v])).transpose()?;
        let noisy = if config.wants(Variant::NestedNoise) {
            let copies = (0..config.noise_replicas)
                .map(|r| train.noisy_copy(derive_seed(config.seed, 100 + r as u64)))
                .collect::<Result<Vec<_>, _>>()?;
            let mut sets = vec![&train];
            sets.extend(copies.iter());
            Some(FeatureBank::extract(cnn0, cnnw, &sets)?)
        } else {
            None
        };
        for (v, seed) in [(Variant::NestedLab, 4), (Variant::NestedRgb, 5), (Variant::NestedNoise, 6)] {
            if !config.wants(v) {
                continue;
            }
            let bank = if v == Variant::NestedNoise { noisy.as_ref().expect("built above") } else { &clean };
            let enc = v.encoding();
            let nopts = FitOptions { epochs: config.nested_epochs, lr: config.nested_lr, ..opts(seed) };
            let val_arg = val.as_ref().zip(val_bank.as_ref()).map(|(vs, vb)| (vb, vs.bins(enc)));
            let (net, mut rs) = train_nested(NestedTopology::default(), enc, bank, train.bins(enc), val_arg, nopts, hook.as_deref_mut())?;
            for r in &mut rs {
                r.name = format!("{}/{}", v.name(), r.name);
            }
            est.nested.insert(v, net);
            reports.extend(rs);
        }
    }
    est.save(out)?;
    let mut digests = BTreeMap::new();
    collect_digests(out, out, &mut digests)?;
    let summary = TrainingSummary { config: config.clone(), reports, digests };
    let path = out.join("training_log.json");
    fs::write(&path, serde_json::to_string_pretty(&summary).expect("serializable")).map_err(io_err(&path))?;
    Ok((est, summary))
}

fn collect_digests(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<(), EstimatorError> {
    let mut entries: Vec<_> = fs::read_dir(dir).map_err(io_err(dir))?.collect::<Result<_, _>>().map_err(io_err(dir))?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            collect_digests(root, &p, out)?;
        } else if p.extension().is_some_and(|x| x == "mxbw") {
            let rel = p.strip_prefix(root).expect("under root").display().to_string();
            out.insert(rel, load_weights(&p)?.digest());
        }
    }
    Ok(())
}
