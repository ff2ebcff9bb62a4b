use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{argmax, derive_seed, ColorEncoding, ParamBins, NUM_PARAMS};
use crate::nn::{Tensor, WeightsFile};

use super::data::{InputKind, LabelTable, Samples};
use super::network::FeatureCnn;
use super::EstimatorError;

/// Loss and exact-bin accuracy of a model on a sample set, eval mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetScore {
    pub loss: f64,
    /// Fraction of (sample, output parameter) pairs whose argmax bin equals
    /// the label bin.
    pub exact_bins: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean train-mode minibatch loss over the epoch.
    pub train_loss: f64,
    pub val: Option<SetScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub name: String,
    /// Eval-mode training-set score before the first update.
    pub initial: SetScore,
    /// Eval-mode training-set score of the returned weights.
    pub final_train: SetScore,
    pub curve: Vec<EpochStats>,
    /// Epoch whose weights were kept (0 = initial weights).
    pub best_epoch: usize,
}

/// Schedule shared by every trainer.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

/// What [`fit`] needs from a model.
pub trait Trainable {
    fn train_len(&self) -> usize;
    /// One SGD step on training items `idx`.
    fn step(&mut self, idx: &[usize], lr: f64, rng: &mut ChaCha8Rng) -> Result<f64, EstimatorError>;
    fn score_train(&mut self) -> Result<SetScore, EstimatorError>;
    /// `None` when there is no validation data.
    fn score_val(&mut self) -> Result<Option<SetScore>, EstimatorError>;
    fn snapshot(&self) -> Result<WeightsFile, EstimatorError>;
    fn restore(&mut self, w: &WeightsFile) -> Result<(), EstimatorError>;
}

/// Per-epoch observer: `(model name, epoch stats, eval-mode training-set
/// score)`; returning `true` ends training early.
pub type EpochHook<'a> = dyn FnMut(&str, &EpochStats, SetScore) -> bool + 'a;

/// Minibatch SGD with per-epoch shuffling and best-validation
/// checkpointing (best training loss when there is no validation data).
pub fn fit<M: Trainable>(
    name: &str,
    model: &mut M,
    opts: FitOptions,
    mut hook: Option<&mut EpochHook<'_>>,
) -> Result<TrainReport, EstimatorError> {
    let n = model.train_len();
    if n == 0 {
        return Err(EstimatorError::EmptySplit("train"));
    }
    let initial = model.score_train()?;
    let mut best = (model.score_val()?.map(|s| s.loss).unwrap_or(initial.loss), 0, model.snapshot()?);
    let mut curve = Vec::with_capacity(opts.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=opts.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, epoch as u64));
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(opts.batch) {
            sum += model.step(chunk, opts.lr, &mut rng)? * chunk.len() as f64;
        }
        let val = model.score_val()?;
        let stats = EpochStats { epoch, train_loss: sum / n as f64, val };
        let train_score = if val.is_none() || hook.is_some() { Some(model.score_train()?) } else { None };
        let monitored = match (val, train_score) {
            (Some(v), _) => v.loss,
            (None, t) => t.expect("computed without validation").loss,
        };
        log::info!(
            "{name} epoch {epoch}/{}: train {:.4}{}",
            opts.epochs,
            stats.train_loss,
            val.map(|v| format!(", val {:.4} (exact {:.3})", v.loss, v.exact_bins)).unwrap_or_default()
        );
        if monitored < best.0 {
            best = (monitored, epoch, model.snapshot()?);
        }
        let halt = match (hook.as_deref_mut(), train_score) {
            (Some(h), Some(t)) => h(name, &stats, t),
            _ => false,
        };
        curve.push(stats);
        if halt {
            break;
        }
    }
    model.restore(&best.2)?;
    let final_train = model.score_train()?;
    Ok(TrainReport { name: name.to_owned(), initial, final_train, curve, best_epoch: best.1 })
}

pub(crate) fn eval_batches(n: usize, batch: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..n).step_by(batch.max(1)).map(move |s| (s..(s + batch).min(n)).collect())
}

/// Eval-mode score of per-parameter probabilities against bin labels.
pub(crate) fn score_probs(
    probs: &[Tensor<f32>],
    outputs: &[usize],
    bins: &[ParamBins],
    idx: &[usize],
    labels: &LabelTable,
    weights: &[f64],
) -> (f64, usize) {
    let wsum: f64 = weights.iter().sum();
    let mut loss = 0.0;
    let mut exact = 0;
    for ((p, &o), &w) in probs.iter().zip(outputs).zip(weights) {
        for (k, &i) in idx.iter().enumerate() {
            let bin = bins[i].0[o];
            loss += w / wsum * crate::nn::smoothed_cross_entropy(p.item(k), labels.get(bin));
            exact += usize::from(argmax(p.item(k)) == bin);
        }
    }
    (loss, exact)
}

/// A feature CNN bound to its training (and optional validation) data.
pub struct CnnTrainer<'a> {
    pub net: FeatureCnn,
    pub kind: InputKind,
    pub train: &'a Samples,
    pub val: Option<&'a Samples>,
    pub encoding: ColorEncoding,
    pub weights: [f64; NUM_PARAMS],
    pub eval_batch: usize,
    labels: LabelTable,
}

impl<'a> CnnTrainer<'a> {
    pub fn new(net: FeatureCnn, kind: InputKind, train: &'a Samples, val: Option<&'a Samples>, weights: Option<[f64; NUM_PARAMS]>) -> Self {
        Self {
            net,
            kind,
            train,
            val: val.filter(|v| !v.is_empty()),
            encoding: ColorEncoding::Lab,
            weights: weights.unwrap_or([1.0; NUM_PARAMS]),
            eval_batch: 32,
            labels: LabelTable::default(),
        }
    }

    pub fn score(&mut self, set: &Samples) -> Result<SetScore, EstimatorError> {
        let outputs: Vec<usize> = (0..NUM_PARAMS).collect();
        let bins = set.bins(self.encoding);
        let (mut loss, mut exact) = (0.0, 0);
        for idx in eval_batches(set.len(), self.eval_batch) {
            let probs = self.net.probabilities(&set.inputs(self.kind).gather(&idx))?;
            let (l, e) = score_probs(&probs, &outputs, bins, &idx, &self.labels, &self.weights);
            loss += l;
            exact += e;
        }
        Ok(SetScore { loss: loss / set.len() as f64, exact_bins: exact as f64 / (set.len() * NUM_PARAMS) as f64 })
    }
}

impl Trainable for CnnTrainer<'_> {
    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn step(&mut self, idx: &[usize], lr: f64, _rng: &mut ChaCha8Rng) -> Result<f64, EstimatorError> {
        let outputs: Vec<usize> = (0..NUM_PARAMS).collect();
        let labels = self.labels.batch(self.train.bins(self.encoding), idx, &outputs);
        let x = self.train.inputs(self.kind).gather(idx);
        Ok(self.net.train_step(&x, &labels, &self.weights, lr)?)
    }

    fn score_train(&mut self) -> Result<SetScore, EstimatorError> {
        let train = self.train;
        self.score(train)
    }

    fn score_val(&mut self) -> Result<Option<SetScore>, EstimatorError> {
        match self.val {
            Some(v) => self.score(v).map(Some),
            None => Ok(None),
        }
    }

    fn snapshot(&self) -> Result<WeightsFile, EstimatorError> {
        Ok(self.net.to_weights()?)
    }

    fn restore(&mut self, w: &WeightsFile) -> Result<(), EstimatorError> {
        self.net = FeatureCnn::from_weights(w)?;
        Ok(())
    }
}

/// Trains a feature CNN end to end on the mean (or `weights`-weighted mean)
/// of the ten head losses and returns the best-validation weights.
pub fn train_feature_cnn(
    train: &Samples,
    val: Option<&Samples>,
    kind: InputKind,
    weights: Option<[f64; NUM_PARAMS]>,
    opts: FitOptions,
    hook: Option<&mut EpochHook<'_>>,
) -> Result<(FeatureCnn, TrainReport), EstimatorError> {
    let net = FeatureCnn::new(train.image_size(), opts.seed)?;
    let mut t = CnnTrainer::new(net, kind, train, val, weights);
    let name = match (kind, weights.is_some()) {
        (InputKind::Whitened, _) => "cnnw",
        (InputKind::Original, false) => "cnn0",
        (InputKind::Original, true) => "custom_weights",
    };
    let report = fit(name, &mut t, opts, hook)?;
    Ok((t.net, report))
}
