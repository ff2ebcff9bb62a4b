use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{NUM_BINS, NUM_PARAMS};
use crate::nn::{softmax_cross_entropy, softmax_rows, LayerSpec, LrnParams, Mode, NnError, Sequential, Tensor, WeightsFile};

use super::EstimatorError;

pub const DROPOUT_KEEP: f64 = 0.75;
pub const CONV1_FILTERS: usize = 64;
pub const CONV2_FILTERS: usize = 128;
pub const CONV_KERNEL: usize = 5;
pub const FC1_UNITS: usize = 1024;
pub const FC2_UNITS: usize = 512;
/// Two RGB views stacked along the channel axis.
pub const INPUT_CHANNELS: usize = 6;

/// Per-item shape of the feature map after the second pooling stage.
pub fn feature_map_shape(image_size: usize) -> [usize; 3] {
    let stage = |s: usize| (s - CONV_KERNEL + 1) / 2;
    let s = stage(stage(image_size));
    [CONV2_FILTERS, s, s]
}

pub fn feature_len(image_size: usize) -> usize {
    feature_map_shape(image_size).iter().product()
}

fn trunk_specs() -> Vec<(&'static str, LayerSpec)> {
    let conv = |filters| LayerSpec::Conv2d { filters, kernel: CONV_KERNEL, stride: 1 };
    let pool = LayerSpec::MaxPool { kernel: 2, stride: 2 };
    let lrn = LayerSpec::Lrn(LrnParams::default());
    vec![
        ("conv1", conv(CONV1_FILTERS)),
        ("relu1", LayerSpec::Relu),
        ("bn1", LayerSpec::batch_norm()),
        ("lrn1", lrn.clone()),
        ("pool1", pool.clone()),
        ("drop1", LayerSpec::Dropout { keep: DROPOUT_KEEP }),
        ("conv2", conv(CONV2_FILTERS)),
        ("relu2", LayerSpec::Relu),
        ("bn2", LayerSpec::batch_norm()),
        ("lrn2", lrn),
        ("pool2", pool),
    ]
}

/// Dense 1024 → dense 512 followed by one 100-way softmax head per output
/// parameter. Heads share everything up to the 512-unit layer.
#[derive(Debug)]
pub struct FcBlock {
    body: Sequential<f32>,
    heads: Vec<Sequential<f32>>,
    outputs: Vec<usize>,
}

impl FcBlock {
    pub fn new(input_width: usize, outputs: &[usize], input_dropout: bool, rng: &mut ChaCha8Rng) -> Result<Self, NnError> {
        let mut specs = Vec::new();
        if input_dropout {
            specs.push(("drop0", LayerSpec::Dropout { keep: DROPOUT_KEEP }));
        }
        specs.extend([
            ("fc1", LayerSpec::Dense { units: FC1_UNITS }),
            ("relu1", LayerSpec::Relu),
            ("drop1", LayerSpec::Dropout { keep: DROPOUT_KEEP }),
            ("fc2", LayerSpec::Dense { units: FC2_UNITS }),
            ("relu2", LayerSpec::Relu),
            ("drop2", LayerSpec::Dropout { keep: DROPOUT_KEEP }),
        ]);
        let body = Sequential::build(&[input_width], &specs, rng)?;
        let heads = outputs
            .iter()
            .map(|_| Sequential::build(&[FC2_UNITS], &[("dense", LayerSpec::Dense { units: NUM_BINS })], rng))
            .collect::<Result<_, _>>()?;
        Ok(Self { body, heads, outputs: outputs.to_vec() })
    }

    pub fn input_width(&self) -> usize {
        self.body.input_shape()[0]
    }

    /// Parameter indices predicted by the heads, in head order.
    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    /// Logits of every head, `[B, 100]` each.
    pub fn forward(&mut self, x: &Tensor<f32>, mode: Mode) -> Result<Vec<Tensor<f32>>, NnError> {
        let h = self.body.forward(x, mode)?;
        self.heads.iter_mut().map(|head| head.forward(&h, mode)).collect()
    }

    /// Softmax probabilities of every head in eval mode.
    pub fn probabilities(&mut self, x: &Tensor<f32>) -> Result<Vec<Tensor<f32>>, NnError> {
        Ok(self.forward(x, Mode::Eval)?.iter().map(softmax_rows).collect())
    }

    /// One train-mode forward/backward pass. `labels[h][b]` is the target
    /// distribution of head `h` for batch item `b`; `weights` (one per head)
    /// turn the mean of head losses into a weighted mean. Returns the
    /// combined loss and, if requested, the gradient w.r.t. the input.
    pub fn train_pass(
        &mut self,
        x: &Tensor<f32>,
        labels: &[Vec<&[f64]>],
        weights: &[f64],
        need_input_grad: bool,
    ) -> Result<(f64, Option<Tensor<f32>>), NnError> {
        let logits = self.forward(x, Mode::Train)?;
        let wsum: f64 = weights.iter().sum();
        let mut total = 0.0;
        let mut dh: Option<Tensor<f32>> = None;
        for ((head, l), (lab, &w)) in self.heads.iter_mut().zip(&logits).zip(labels.iter().zip(weights)) {
            let hl = softmax_cross_entropy(l, lab)?;
            total += w * hl.loss / wsum;
            let mut g = hl.grad;
            let s = (w / wsum) as f32;
            g.data_mut().iter_mut().for_each(|v| *v *= s);
            let d = head.backward(&g)?;
            match dh.as_mut() {
                Some(acc) => acc.add_assign(&d),
                None => dh = Some(d),
            }
        }
        let dh = dh.expect("at least one head");
        if need_input_grad {
            Ok((total, Some(self.body.backward(&dh)?)))
        } else {
            self.body.backward_params(&dh)?;
            Ok((total, None))
        }
    }

    pub fn zero_grad(&mut self) {
        self.body.zero_grad();
        self.heads.iter_mut().for_each(|h| h.zero_grad());
    }

    pub fn sgd_step(&mut self, lr: f64) {
        crate::nn::sgd_step(&mut self.body, lr);
        self.heads.iter_mut().for_each(|h| crate::nn::sgd_step(h, lr));
    }

    pub fn reseed(&mut self, seed: u64) {
        self.body.reseed(seed);
    }

    pub fn capture(&self, w: &mut WeightsFile, prefix: &str) -> Result<(), NnError> {
        w.capture(&format!("{prefix}fc"), &self.body)?;
        for (h, head) in self.outputs.iter().zip(&self.heads) {
            w.capture(&format!("{prefix}head{h}"), head)?;
        }
        Ok(())
    }

    pub fn restore(&mut self, w: &WeightsFile, prefix: &str) -> Result<(), NnError> {
        w.restore(&format!("{prefix}fc"), &mut self.body)?;
        for (h, head) in self.outputs.iter().zip(self.heads.iter_mut()) {
            w.restore(&format!("{prefix}head{h}"), head)?;
        }
        Ok(())
    }
}

/// Multitask feature-extraction CNN: a two-stage convolutional trunk
/// followed by an [`FcBlock`] predicting all ten parameters.
#[derive(Debug)]
pub struct FeatureCnn {
    image_size: usize,
    trunk: Sequential<f32>,
    block: FcBlock,
}

impl FeatureCnn {
    pub fn new(image_size: usize, seed: u64) -> Result<Self, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trunk = Sequential::build(&[INPUT_CHANNELS, image_size, image_size], &trunk_specs(), &mut rng)?;
        let outputs: Vec<usize> = (0..NUM_PARAMS).collect();
        let block = FcBlock::new(feature_len(image_size), &outputs, true, &mut rng)?;
        Ok(Self { image_size, trunk, block })
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    pub fn feature_len(&self) -> usize {
        feature_len(self.image_size)
    }

    pub fn trunk(&self) -> &Sequential<f32> {
        &self.trunk
    }

    /// Flattened eval-mode activations after the second pooling stage.
    pub fn features(&mut self, x: &Tensor<f32>) -> Result<Tensor<f32>, NnError> {
        let f = self.trunk.forward(x, Mode::Eval)?;
        let b = f.batch();
        f.reshape(&[b, self.feature_len()])
    }

    /// Per-parameter eval-mode probabilities, `[B, 100]` each.
    pub fn probabilities(&mut self, x: &Tensor<f32>) -> Result<Vec<Tensor<f32>>, NnError> {
        let f = self.features(x)?;
        self.block.probabilities(&f)
    }

    /// One SGD step on a batch; returns the (weighted) mean head loss.
    pub fn train_step(&mut self, x: &Tensor<f32>, labels: &[Vec<&[f64]>], weights: &[f64], lr: f64) -> Result<f64, NnError> {
        self.trunk.zero_grad();
        self.block.zero_grad();
        let f = self.trunk.forward(x, Mode::Train)?;
        let b = f.batch();
        let f = f.reshape(&[b, self.feature_len()])?;
        let (loss, df) = self.block.train_pass(&f, labels, weights, true)?;
        let df = df.expect("input gradient requested").reshape(&with_batch(b, &feature_map_shape(self.image_size)))?;
        self.trunk.backward_params(&df)?;
        crate::nn::sgd_step(&mut self.trunk, lr);
        self.block.sgd_step(lr);
        Ok(loss)
    }

    pub fn reseed(&mut self, seed: u64) {
        self.trunk.reseed(seed);
        self.block.reseed(seed.wrapping_add(1 << 32));
    }

    pub fn to_weights(&self) -> Result<WeightsFile, NnError> {
        let mut w = WeightsFile::new();
        w.capture("trunk", &self.trunk)?;
        self.block.capture(&mut w, "")?;
        w.meta = serde_json::json!({ "kind": "feature_cnn", "image_size": self.image_size });
        Ok(w)
    }

    /// Hex digest of the convolutional trunk parameters only.
    pub fn trunk_digest(&self) -> Result<String, NnError> {
        let mut w = WeightsFile::new();
        w.capture("trunk", &self.trunk)?;
        Ok(w.digest())
    }

    pub fn from_weights(w: &WeightsFile) -> Result<Self, EstimatorError> {
        let size = w
            .meta
            .get("image_size")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| EstimatorError::Config("feature CNN weights lack meta.image_size".into()))?;
        let mut net = Self::new(size as usize, 0)?;
        w.restore("trunk", &mut net.trunk)?;
        net.block.restore(w, "")?;
        Ok(net)
    }
}

fn with_batch(b: usize, item: &[usize]) -> Vec<usize> {
    std::iter::once(b).chain(item.iter().copied()).collect()
}

/// Which feature vector a nested block reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    /// Features of the CNN trained on homographied pairs.
    F0,
    /// Features of the CNN trained on whitened pairs.
    Fw,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub name: String,
    pub features: FeatureSource,
    /// Parameters whose predicted distributions are appended to the input,
    /// in this order.
    pub upstream: Vec<usize>,
    pub outputs: Vec<usize>,
}

/// Wiring of the nested fully connected cascade.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestedTopology {
    pub blocks: Vec<BlockSpec>,
}

impl Default for NestedTopology {
    /// FC1: Fw → θ0; FC2: Fw ⊕ θ0 → θ1, θ2; FC3: F0 ⊕ θ0..θ2 → θ3;
    /// FC4: F0 ⊕ θ0 ⊕ θ3 → θ4..θ6; FC5: F0 ⊕ θ0 ⊕ θ3 ⊕ θ4..θ6 → θ7..θ9.
    fn default() -> Self {
        let block = |name: &str, features, upstream: &[usize], outputs: &[usize]| BlockSpec {
            name: name.into(),
            features,
            upstream: upstream.to_vec(),
            outputs: outputs.to_vec(),
        };
        Self {
            blocks: vec![
                block("fc1", FeatureSource::Fw, &[], &[0]),
                block("fc2", FeatureSource::Fw, &[0], &[1, 2]),
                block("fc3", FeatureSource::F0, &[0, 1, 2], &[3]),
                block("fc4", FeatureSource::F0, &[0, 3], &[4, 5, 6]),
                block("fc5", FeatureSource::F0, &[0, 3, 4, 5, 6], &[7, 8, 9]),
            ],
        }
    }
}

impl NestedTopology {
    /// Checks that every parameter is produced by exactly one block and
    /// returns a topological order of the blocks.
    pub fn validate(&self) -> Result<Vec<usize>, EstimatorError> {
        let bad = |m: String| Err(EstimatorError::Topology(m));
        let mut producer = [None; NUM_PARAMS];
        let mut names = BTreeSet::new();
        for (b, spec) in self.blocks.iter().enumerate() {
            if !names.insert(spec.name.as_str()) {
                return bad(format!("duplicate block name {}", spec.name));
            }
            if spec.outputs.is_empty() {
                return bad(format!("block {} has no outputs", spec.name));
            }
            for &o in spec.outputs.iter().chain(&spec.upstream) {
                if o >= NUM_PARAMS {
                    return bad(format!("block {} references parameter {o}", spec.name));
                }
            }
            for &o in &spec.outputs {
                if let Some(prev) = producer[o].replace(b) {
                    return bad(format!("parameter {o} produced by both {} and {}", self.blocks[prev].name, spec.name));
                }
            }
        }
        if let Some(p) = producer.iter().position(|p| p.is_none()) {
            return bad(format!("parameter {p} is not produced by any block"));
        }
        let deps: Vec<BTreeSet<usize>> =
            self.blocks.iter().map(|s| s.upstream.iter().map(|&u| producer[u].expect("checked")).collect()).collect();
        let mut order = Vec::with_capacity(self.blocks.len());
        let mut done = vec![false; self.blocks.len()];
        while order.len() < self.blocks.len() {
            let ready = (0..self.blocks.len()).find(|&b| !done[b] && deps[b].iter().all(|&d| done[d]));
            match ready {
                Some(b) => {
                    done[b] = true;
                    order.push(b);
                }
                None => return bad("block dependencies contain a cycle".into()),
            }
        }
        Ok(order)
    }

    pub fn input_width(&self, block: usize, f0_len: usize, fw_len: usize) -> usize {
        let spec = &self.blocks[block];
        let f = match spec.features {
            FeatureSource::F0 => f0_len,
            FeatureSource::Fw => fw_len,
        };
        f + spec.upstream.len() * NUM_BINS
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_arithmetic() {
        assert_eq!(feature_map_shape(64), [128, 13, 13]);
        assert_eq!(feature_len(64), 21632);
    }

    #[test]
    fn default_topology_is_valid() {
        let t = NestedTopology::default();
        assert_eq!(t.validate().unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(t.input_width(1, 7, 11), 111);
        assert_eq!(t.input_width(2, 7, 11), 307);
        assert!(t.blocks[0].upstream.is_empty());
    }

    #[test]
    fn topology_errors() {
        let mut t = NestedTopology::default();
        t.blocks[0].upstream = vec![3];
        t.blocks[2].upstream = vec![0];
        assert!(matches!(t.validate(), Err(EstimatorError::Topology(m)) if m.contains("cycle")));
        let mut t = NestedTopology::default();
        t.blocks[4].outputs = vec![7, 8];
        assert!(t.validate().is_err());
        let mut t = NestedTopology::default();
        t.blocks[4].outputs.push(0);
        assert!(t.validate().is_err());
    }
}
