use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, InputPair, Split};
use crate::render::{canonical_views, render_view, RadianceImage, SceneConfig};

use super::data::Variant;
use super::model::{Estimator, Prediction};
use super::EstimatorError;

/// Reference renders of one held-out sample, keyed by view name.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub id: String,
    pub views: BTreeMap<String, RadianceImage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample: String,
    pub view: String,
    pub variant: Variant,
    /// Pixel-wise mean squared error between exposure-normalized renders.
    pub mse: f64,
}

/// Distribution of per-sample MSE (averaged over the views) of a variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub samples: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub views: Vec<String>,
    pub records: Vec<EvalRecord>,
    pub summary: Vec<VariantSummary>,
}

impl EvalReport {
    pub fn summary_of(&self, v: Variant) -> Option<&VariantSummary> {
        self.summary.iter().find(|s| s.variant == v)
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Renders every prediction under all canonical views and compares it with
/// the ground truth. `predictions[v][k]` belongs to `truth[k]`.
pub fn evaluate(
    predictions: &BTreeMap<Variant, Vec<Prediction>>,
    truth: &[GroundTruth],
    scene: &SceneConfig,
) -> Result<EvalReport, EstimatorError> {
    let views = canonical_views();
    let names: Vec<String> = views.iter().map(|v| v.name()).collect();
    for t in truth {
        if let Some(missing) = names.iter().find(|n| !t.views.contains_key(*n)) {
            return Err(EstimatorError::Config(format!("sample {} lacks ground-truth view {missing}", t.id)));
        }
    }
    let mut records = Vec::new();
    let mut summary = Vec::new();
    for (&variant, preds) in predictions {
        if preds.len() != truth.len() {
            return Err(EstimatorError::Config(format!("{variant}: {} predictions for {} samples", preds.len(), truth.len())));
        }
        let per_sample: Vec<Vec<f64>> = preds
            .par_iter()
            .zip(truth)
            .map(|(p, t)| {
                views
                    .iter()
                    .map(|view| {
                        let img = render_view(&p.params, view, scene)?;
                        let reference = &t.views[&view.name()];
                        Ok(img.normalized(scene.exposure).mean_squared_error(&reference.normalized(scene.exposure)))
                    })
                    .collect::<Result<Vec<f64>, EstimatorError>>()
            })
            .collect::<Result<_, _>>()?;
        let mut means = Vec::with_capacity(truth.len());
        for (t, mses) in truth.iter().zip(&per_sample) {
            for (name, &mse) in names.iter().zip(mses) {
                records.push(EvalRecord { sample: t.id.clone(), view: name.clone(), variant, mse });
            }
            means.push(mses.iter().sum::<f64>() / mses.len() as f64);
        }
        if means.is_empty() {
            continue;
        }
        let mean = means.iter().sum::<f64>() / means.len() as f64;
        means.sort_by(f64::total_cmp);
        summary.push(VariantSummary {
            variant,
            samples: means.len(),
            median: quantile(&means, 0.5),
            q1: quantile(&means, 0.25),
            q3: quantile(&means, 0.75),
            mean,
        });
    }
    Ok(EvalReport { views: names, records, summary })
}

/// Predicts every requested variant on up to `limit` samples of `split`
/// and evaluates against the stored 14-view renders.
pub fn evaluate_dataset(
    est: &mut Estimator,
    dataset: &Dataset,
    split: Split,
    variants: &[Variant],
    limit: Option<usize>,
    seed: u64,
) -> Result<EvalReport, EstimatorError> {
    let mut entries = dataset.split(split);
    if let Some(n) = limit {
        entries.truncate(n);
    }
    if entries.is_empty() {
        return Err(EstimatorError::EmptySplit("evaluation"));
    }
    let names: Vec<String> = canonical_views().iter().map(|v| v.name()).collect();
    let truth: Vec<GroundTruth> = entries
        .par_iter()
        .map(|e| {
            let views = names.iter().map(|n| Ok((n.clone(), dataset.load_view(e, n)?))).collect::<Result<_, EstimatorError>>()?;
            Ok(GroundTruth { id: e.id.clone(), views })
        })
        .collect::<Result<_, EstimatorError>>()?;
    let pairs: Vec<InputPair> = entries.par_iter().map(|e| dataset.load_pair(e)).collect::<Result<_, _>>()?;
    let mut predictions = BTreeMap::new();
    for &v in variants {
        predictions.insert(v, est.predict_batch(v, &pairs, seed)?);
    }
    evaluate(&predictions, &truth, &dataset.info.scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let d = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&d, 0.5), 2.5);
        assert_eq!(quantile(&d, 0.0), 1.0);
        assert_eq!(quantile(&d, 1.0), 4.0);
        assert_eq!(quantile(&[7.0], 0.25), 7.0);
    }
}
