//! Two-stage parameter estimator: multitask feature CNNs followed by a
//! nested cascade of fully connected blocks.

mod data;
mod eval;
mod fit;
mod model;
mod nested;
mod network;

use thiserror::Error;

use crate::dataset::DatasetError;
use crate::nn::{NnError, Tensor};
use crate::render::{RadianceImage, RenderError};

pub use data::{item_views, InputKind, LabelTable, Samples, TrainConfig, Variant};
pub use eval::{evaluate, evaluate_dataset, quantile, EvalRecord, EvalReport, GroundTruth, VariantSummary};
pub use fit::{fit, train_feature_cnn, CnnTrainer, EpochHook, EpochStats, FitOptions, SetScore, TrainReport, Trainable};
pub use model::{train_all, Estimator, Prediction, TrainingSummary};
pub use nested::{train_nested, FeatureBank, NestedNet};
pub use network::{
    feature_len, feature_map_shape, BlockSpec, FcBlock, FeatureCnn, FeatureSource, NestedTopology, DROPOUT_KEEP,
    INPUT_CHANNELS,
};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Image(#[from] crate::imageproc::ImageError),
    #[error("nested topology: {0}")]
    Topology(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("missing weights: {0}")]
    MissingWeights(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Stacks two RGB views into one `[6, H, W]` item: channels 0–2 hold the
/// first view, 3–5 the second.
pub fn pair_item(views: &[RadianceImage; 2]) -> Result<Vec<f32>, EstimatorError> {
    let (w, h) = (views[0].width, views[0].height);
    if views[1].width != w || views[1].height != h || w != h {
        return Err(EstimatorError::Config(format!(
            "input views must be square and equal-sized, got {}x{} and {}x{}",
            w, h, views[1].width, views[1].height
        )));
    }
    let plane = w * h;
    let mut out = vec![0.0f32; INPUT_CHANNELS * plane];
    for (v, img) in views.iter().enumerate() {
        for (p, px) in img.pixels().enumerate() {
            for c in 0..3 {
                out[(v * 3 + c) * plane + p] = px[c];
            }
        }
    }
    Ok(out)
}

/// Batch of stacked pairs, `[B, 6, H, W]`.
pub fn pair_batch<'a>(pairs: impl IntoIterator<Item = &'a [RadianceImage; 2]>) -> Result<Tensor<f32>, EstimatorError> {
    let mut data = Vec::new();
    let mut size = None;
    let mut n = 0;
    for p in pairs {
        let s = *size.get_or_insert(p[0].width);
        if p[0].width != s {
            return Err(EstimatorError::Config("pairs in a batch differ in size".into()));
        }
        data.extend(pair_item(p)?);
        n += 1;
    }
    let s = size.ok_or_else(|| EstimatorError::Config("empty batch".into()))?;
    Ok(Tensor::new(vec![n, INPUT_CHANNELS, s, s], data)?)
}
