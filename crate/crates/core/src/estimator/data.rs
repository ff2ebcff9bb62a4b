use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brdf::BrdfParams;
use crate::dataset::{self, ColorEncoding, Dataset, InputPair, ParamBins, Split, NUM_BINS, NUM_PARAMS};
use crate::imageproc;
use crate::nn::Tensor;
use crate::render::RadianceImage;

use super::{pair_item, EstimatorError, INPUT_CHANNELS};

/// Method variants compared by the evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// End-to-end CNN on homographied pairs.
    Cnn0,
    /// End-to-end CNN on whitened pairs.
    Cnnw,
    /// `Cnn0` trained with a non-uniform per-parameter loss weighting.
    CustomWeights,
    NestedRgb,
    NestedLab,
    /// `NestedLab` trained with additive-noise augmentation.
    NestedNoise,
    /// Uniformly random parameters; a sanity floor.
    Random,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Cnn0,
        Variant::Cnnw,
        Variant::CustomWeights,
        Variant::NestedRgb,
        Variant::NestedLab,
        Variant::NestedNoise,
        Variant::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Cnn0 => "cnn0",
            Variant::Cnnw => "cnnw",
            Variant::CustomWeights => "custom_weights",
            Variant::NestedRgb => "nested_rgb",
            Variant::NestedLab => "nested_lab",
            Variant::NestedNoise => "nested_noise",
            Variant::Random => "random",
        }
    }

    pub fn is_nested(self) -> bool {
        matches!(self, Variant::NestedRgb | Variant::NestedLab | Variant::NestedNoise)
    }

    /// Label encoding of the color heads.
    pub fn encoding(self) -> ColorEncoding {
        match self {
            Variant::NestedRgb => ColorEncoding::Rgb,
            _ => ColorEncoding::Lab,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = EstimatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| EstimatorError::Config(format!("unknown variant `{s}` (expected one of cnn0, cnnw, custom_weights, nested_rgb, nested_lab, nested_noise, random)")))
    }
}

/// Training hyperparameters, read from a TOML key-value file. Every key is
/// optional.
///
/// ```toml
/// lr = 0.003            # feature CNNs
/// nested_lr = 0.03      # nested blocks (conv trunks frozen)
/// batch = 32
/// epochs = 200
/// nested_epochs = 200
/// seed = 0
/// variants = ["cnn0", "cnnw", "custom_weights", "nested_rgb", "nested_lab", "nested_noise"]
/// custom_weights = [3.0, 1.5, 1.5, 1.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]
/// noise_replicas = 4
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub nested_lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub nested_epochs: usize,
    pub seed: u64,
    pub variants: Vec<Variant>,
    pub custom_weights: [f64; NUM_PARAMS],
    /// Noisy copies of every training sample for the `nested_noise` variant.
    pub noise_replicas: usize,
    /// Caps on the number of samples read per split (all when absent).
    pub max_train: Option<usize>,
    pub max_val: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.003,
            nested_lr: 0.03,
            batch: 32,
            epochs: 200,
            nested_epochs: 200,
            seed: 0,
            variants: Variant::ALL.into_iter().filter(|v| *v != Variant::Random).collect(),
            custom_weights: [3.0, 1.5, 1.5, 1.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5],
            noise_replicas: 4,
            max_train: None,
            max_val: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        let bad = |m: String| Err(EstimatorError::Config(m));
        if !(self.lr > 0.0) || !(self.nested_lr > 0.0) {
            return bad(format!("learning rates must be positive (lr {}, nested_lr {})", self.lr, self.nested_lr));
        }
        if self.batch == 0 || self.epochs == 0 || self.nested_epochs == 0 {
            return bad("batch, epochs and nested_epochs must be positive".into());
        }
        if let Some(i) = self.custom_weights.iter().position(|w| !(*w >= 0.0)) {
            return bad(format!("custom_weights[{i}] must be non-negative"));
        }
        if self.custom_weights.iter().sum::<f64>() <= 0.0 {
            return bad("custom_weights must not all be zero".into());
        }
        if self.noise_replicas == 0 {
            return bad("noise_replicas must be at least 1".into());
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, EstimatorError> {
        let c: Self = toml::from_str(text).map_err(|e| EstimatorError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, EstimatorError> {
        let text = std::fs::read_to_string(path).map_err(|source| EstimatorError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text).map_err(|e| EstimatorError::Config(format!("{}: {e}", path.display())))
    }

    /// Whether the feature CNNs (needed by every learned variant) and the
    /// given variant are requested.
    pub fn wants(&self, v: Variant) -> bool {
        self.variants.contains(&v)
    }
}

/// Gaussian-smoothed label distribution of every bin, computed once.
#[derive(Debug, Clone)]
pub struct LabelTable(Vec<Vec<f64>>);

impl Default for LabelTable {
    fn default() -> Self {
        Self((0..NUM_BINS).map(|b| dataset::smooth_label(b).0).collect())
    }
}

impl LabelTable {
    pub fn get(&self, bin: usize) -> &[f64] {
        &self.0[bin]
    }

    /// `out[h][k]` = label of output parameter `outputs[h]` for item `idx[k]`.
    pub fn batch<'a>(&'a self, bins: &[ParamBins], idx: &[usize], outputs: &[usize]) -> Vec<Vec<&'a [f64]>> {
        outputs.iter().map(|&p| idx.iter().map(|&i| self.get(bins[i].0[p])).collect()).collect()
    }
}

/// In-memory training samples: stacked input pairs plus bin labels in both
/// color encodings.
#[derive(Debug, Clone)]
pub struct Samples {
    pub ids: Vec<String>,
    pub params: Vec<BrdfParams>,
    /// `[N, 6, S, S]` homographied pairs.
    pub original: Tensor<f32>,
    /// `[N, 6, S, S]` whitened pairs.
    pub whitened: Tensor<f32>,
    pub bins_lab: Vec<ParamBins>,
    pub bins_rgb: Vec<ParamBins>,
}

impl Samples {
    pub fn from_pairs(ids: Vec<String>, params: Vec<BrdfParams>, pairs: &[InputPair]) -> Result<Self, EstimatorError> {
        if pairs.is_empty() || pairs.len() != ids.len() || pairs.len() != params.len() {
            return Err(EstimatorError::Config(format!("{} ids, {} params, {} pairs", ids.len(), params.len(), pairs.len())));
        }
        let size = pairs[0].homographied[0].width;
        let shape = [pairs.len(), INPUT_CHANNELS, size, size];
        let mut original = Vec::with_capacity(shape.iter().product());
        let mut whitened = Vec::with_capacity(original.capacity());
        for p in pairs {
            if p.homographied[0].width != size {
                return Err(EstimatorError::Config("input pairs differ in size".into()));
            }
            original.extend(pair_item(&p.homographied)?);
            whitened.extend(pair_item(&p.whitened)?);
        }
        Ok(Self {
            bins_lab: params.iter().map(|p| dataset::discretize_with(p, ColorEncoding::Lab)).collect(),
            bins_rgb: params.iter().map(|p| dataset::discretize_with(p, ColorEncoding::Rgb)).collect(),
            ids,
            params,
            original: Tensor::new(shape.to_vec(), original)?,
            whitened: Tensor::new(shape.to_vec(), whitened)?,
        })
    }

    /// Reads up to `limit` usable samples of `split`, in manifest order.
    pub fn load(dataset: &Dataset, split: Split, limit: Option<usize>) -> Result<Self, EstimatorError> {
        let mut entries = dataset.split(split);
        if let Some(n) = limit {
            entries.truncate(n);
        }
        if entries.is_empty() {
            return Err(EstimatorError::EmptySplit(split_name(split)));
        }
        Self::load_entries(dataset, &entries)
    }

    /// Every usable sample of the dataset regardless of split.
    pub fn load_all(dataset: &Dataset) -> Result<Self, EstimatorError> {
        let entries: Vec<_> = dataset.entries.iter().filter(|e| e.error.is_none()).collect();
        if entries.is_empty() {
            return Err(EstimatorError::EmptySplit("dataset"));
        }
        Self::load_entries(dataset, &entries)
    }

    fn load_entries(dataset: &Dataset, entries: &[&dataset::ManifestEntry]) -> Result<Self, EstimatorError> {
        let pairs: Vec<InputPair> = entries.par_iter().map(|e| dataset.load_pair(e)).collect::<Result<_, _>>()?;
        Self::from_pairs(
            entries.iter().map(|e| e.id.clone()).collect(),
            entries.iter().map(|e| e.params).collect(),
            &pairs,
        )
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn image_size(&self) -> usize {
        self.original.shape()[2]
    }

    pub fn bins(&self, encoding: ColorEncoding) -> &[ParamBins] {
        match encoding {
            ColorEncoding::Lab => &self.bins_lab,
            ColorEncoding::Rgb => &self.bins_rgb,
        }
    }

    pub fn inputs(&self, kind: InputKind) -> &Tensor<f32> {
        match kind {
            InputKind::Original => &self.original,
            InputKind::Whitened => &self.whitened,
        }
    }

    /// A copy with additive Gaussian noise on the homographied views (the
    /// whitened views are recomputed from the noisy ones). View `v` of
    /// sample `i` draws its noise from `derive_seed(seed, 2i + v)`.
    pub fn noisy_copy(&self, seed: u64) -> Result<Self, EstimatorError> {
        let size = self.image_size();
        let results: Vec<InputPair> = (0..self.len())
            .into_par_iter()
            .map(|i| {
                let views = item_views(self.original.item(i), size);
                let noisy = [0, 1].map(|v| dataset::augment_noise(&views[v], dataset::derive_seed(seed, (i * 2 + v) as u64)));
                Ok(InputPair { whitened: [imageproc::whiten(&noisy[0])?, imageproc::whiten(&noisy[1])?], homographied: noisy })
            })
            .collect::<Result<_, EstimatorError>>()?;
        Self::from_pairs(self.ids.clone(), self.params.clone(), &results)
    }
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    }
}

/// Inverse of [`pair_item`].
pub fn item_views(item: &[f32], size: usize) -> [RadianceImage; 2] {
    let plane = size * size;
    [0, 1].map(|v| {
        let mut img = RadianceImage::zeros(size, size);
        for p in 0..plane {
            for c in 0..3 {
                img.data[p * 3 + c] = item[(v * 3 + c) * plane + p];
            }
        }
        img
    })
}

/// Which preprocessed copy of an input pair a feature CNN consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    Original,
    Whitened,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses_partial_toml() {
        let c = TrainConfig::from_toml("lr = 0.01\nepochs = 3\nvariants = [\"cnn0\", \"nested_lab\"]\n").unwrap();
        assert_eq!(c.lr, 0.01);
        assert_eq!(c.epochs, 3);
        assert_eq!(c.batch, 32);
        assert_eq!(c.variants, vec![Variant::Cnn0, Variant::NestedLab]);
        assert!(TrainConfig::from_toml("lr = -1.0").is_err());
        assert!(TrainConfig::from_toml("learning_rate = 0.1").is_err());
        assert!(TrainConfig::from_toml("custom_weights = [1,1,1,1,1,1,1,1,1,-1]").is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.name()));
        }
        assert!("cnn1".parse::<Variant>().is_err());
    }

    #[test]
    fn pair_item_round_trip() {
        let views = [0, 1].map(|v| RadianceImage::from_fn(4, 4, |x, y| [x as f32, y as f32, v as f32]));
        let item = pair_item(&views).unwrap();
        assert_eq!(item_views(&item, 4), views);
    }
}
