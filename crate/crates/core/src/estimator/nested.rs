use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{derive_seed, ColorEncoding, ParamBins, NUM_BINS, NUM_PARAMS};
use crate::nn::{Tensor, WeightsFile};

use super::data::{InputKind, LabelTable, Samples};
use super::fit::{eval_batches, fit, score_probs, EpochHook, FitOptions, SetScore, TrainReport, Trainable};
use super::network::{FcBlock, FeatureCnn, FeatureSource, NestedTopology};
use super::EstimatorError;

/// Frozen-trunk features of a sample set. Replica 0 holds the clean inputs;
/// further replicas (if any) hold noise-augmented copies.
#[derive(Debug, Clone)]
pub struct FeatureBank {
    pub f0: Vec<Tensor<f32>>,
    pub fw: Vec<Tensor<f32>>,
}

impl FeatureBank {
    fn extract_one(net: &mut FeatureCnn, x: &Tensor<f32>) -> Result<Tensor<f32>, EstimatorError> {
        let n = x.batch();
        let mut data = Vec::with_capacity(n * net.feature_len());
        for idx in eval_batches(n, 32) {
            data.extend(net.features(&x.gather(&idx))?.into_data());
        }
        Ok(Tensor::new(vec![n, net.feature_len()], data)?)
    }

    /// Features of `sets[r]` become replica `r`.
    pub fn extract(cnn0: &mut FeatureCnn, cnnw: &mut FeatureCnn, sets: &[&Samples]) -> Result<Self, EstimatorError> {
        let mut bank = FeatureBank { f0: Vec::new(), fw: Vec::new() };
        for s in sets {
            bank.f0.push(Self::extract_one(cnn0, s.inputs(InputKind::Original))?);
            bank.fw.push(Self::extract_one(cnnw, s.inputs(InputKind::Whitened))?);
        }
        Ok(bank)
    }

    /// Single-replica bank from stacked `[N, 6, S, S]` original and
    /// whitened inputs.
    pub fn from_inputs(cnn0: &mut FeatureCnn, cnnw: &mut FeatureCnn, original: &Tensor<f32>, whitened: &Tensor<f32>) -> Result<Self, EstimatorError> {
        Ok(FeatureBank { f0: vec![Self::extract_one(cnn0, original)?], fw: vec![Self::extract_one(cnnw, whitened)?] })
    }

    pub fn len(&self) -> usize {
        self.f0.first().map(|t| t.batch()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn replicas(&self) -> usize {
        self.f0.len()
    }

    fn source(&self, s: FeatureSource, replica: usize) -> &Tensor<f32> {
        match s {
            FeatureSource::F0 => &self.f0[replica],
            FeatureSource::Fw => &self.fw[replica],
        }
    }
}

/// Per-parameter probability tensors `[N, 100]` of one replica.
type ProbTable = Vec<Option<Tensor<f32>>>;

/// Concatenates, for each `(replica, row)`, the block's feature vector and
/// the upstream distributions.
fn assemble(
    topo: &NestedTopology,
    block: usize,
    bank: &FeatureBank,
    probs: &[ProbTable],
    rows: &[(usize, usize)],
) -> Result<Tensor<f32>, EstimatorError> {
    let spec = &topo.blocks[block];
    let width = bank.source(spec.features, 0).item_len() + spec.upstream.len() * NUM_BINS;
    let mut data = Vec::with_capacity(rows.len() * width);
    for &(r, i) in rows {
        data.extend_from_slice(bank.source(spec.features, r).item(i));
        for &u in &spec.upstream {
            let p = probs[r][u].as_ref().ok_or_else(|| EstimatorError::Topology(format!("{} needs θ{u} before it is predicted", spec.name)))?;
            data.extend_from_slice(p.item(i));
        }
    }
    Ok(Tensor::new(vec![rows.len(), width], data)?)
}

/// The nested cascade of fully connected blocks.
#[derive(Debug)]
pub struct NestedNet {
    pub topology: NestedTopology,
    pub encoding: ColorEncoding,
    order: Vec<usize>,
    blocks: Vec<FcBlock>,
    f0_len: usize,
    fw_len: usize,
}

impl NestedNet {
    pub fn new(topology: NestedTopology, encoding: ColorEncoding, f0_len: usize, fw_len: usize, seed: u64) -> Result<Self, EstimatorError> {
        let order = topology.validate()?;
        let blocks = (0..topology.blocks.len())
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, b as u64));
                FcBlock::new(topology.input_width(b, f0_len, fw_len), &topology.blocks[b].outputs, false, &mut rng)
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { topology, encoding, order, blocks, f0_len, fw_len })
    }

    pub fn block_input_width(&self, b: usize) -> usize {
        self.blocks[b].input_width()
    }

    /// Eval-mode probabilities of every parameter for replica 0 of `bank`,
    /// in parameter order.
    pub fn probabilities(&mut self, bank: &FeatureBank) -> Result<Vec<Tensor<f32>>, EstimatorError> {
        let n = bank.len();
        let mut table: Vec<ProbTable> = vec![vec![None; NUM_PARAMS]];
        let rows: Vec<(usize, usize)> = (0..n).map(|i| (0, i)).collect();
        for &b in &self.order.clone() {
            let mut out: Vec<Vec<f32>> = vec![Vec::with_capacity(n * NUM_BINS); self.blocks[b].outputs().len()];
            for chunk in rows.chunks(32) {
                let x = assemble(&self.topology, b, bank, &table, chunk)?;
                for (h, p) in self.blocks[b].probabilities(&x)?.into_iter().enumerate() {
                    out[h].extend(p.into_data());
                }
            }
            for (&o, data) in self.blocks[b].outputs().to_vec().iter().zip(out) {
                table[0][o] = Some(Tensor::new(vec![n, NUM_BINS], data)?);
            }
        }
        Ok(table.remove(0).into_iter().map(|t| t.expect("every parameter produced")).collect())
    }

    fn block_meta(&self, b: usize) -> serde_json::Value {
        serde_json::json!({
            "kind": "nested_block",
            "block": self.topology.blocks[b],
            "encoding": self.encoding,
            "f0_len": self.f0_len,
            "fw_len": self.fw_len,
        })
    }

    /// One weights file per block, in topology order.
    pub fn to_weights(&self) -> Result<Vec<WeightsFile>, EstimatorError> {
        (0..self.blocks.len())
            .map(|b| {
                let mut w = WeightsFile::new();
                self.blocks[b].capture(&mut w, "")?;
                w.meta = self.block_meta(b);
                Ok(w)
            })
            .collect()
    }

    pub fn from_weights(files: &[WeightsFile]) -> Result<Self, EstimatorError> {
        let meta = |w: &WeightsFile, key: &str| {
            w.meta.get(key).cloned().ok_or_else(|| EstimatorError::Config(format!("nested block weights lack meta.{key}")))
        };
        let first = files.first().ok_or_else(|| EstimatorError::MissingWeights("nested blocks".into()))?;
        fn parse<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> Result<T, EstimatorError> {
            serde_json::from_value(v).map_err(|e| EstimatorError::Config(e.to_string()))
        }
        let encoding: ColorEncoding = parse(meta(first, "encoding")?)?;
        let f0_len: usize = parse(meta(first, "f0_len")?)?;
        let fw_len: usize = parse(meta(first, "fw_len")?)?;
        let blocks = files.iter().map(|w| parse(meta(w, "block")?)).collect::<Result<Vec<_>, _>>()?;
        let mut net = Self::new(NestedTopology { blocks }, encoding, f0_len, fw_len, 0)?;
        for (block, w) in net.blocks.iter_mut().zip(files) {
            block.restore(w, "")?;
        }
        Ok(net)
    }
}

struct BlockTrainer<'a> {
    topo: &'a NestedTopology,
    index: usize,
    block: &'a mut FcBlock,
    train: &'a FeatureBank,
    train_probs: &'a [ProbTable],
    train_bins: &'a [ParamBins],
    val: Option<(&'a FeatureBank, &'a [ProbTable], &'a [ParamBins])>,
    labels: LabelTable,
}

impl BlockTrainer<'_> {
    fn score(&mut self, bank: &FeatureBank, probs: &[ProbTable], bins: &[ParamBins]) -> Result<SetScore, EstimatorError> {
        let outputs = self.block.outputs().to_vec();
        let uniform = vec![1.0; outputs.len()];
        let (mut loss, mut exact) = (0.0, 0);
        for idx in eval_batches(bank.len(), 64) {
            let rows: Vec<(usize, usize)> = idx.iter().map(|&i| (0, i)).collect();
            let x = assemble(self.topo, self.index, bank, probs, &rows)?;
            let p = self.block.probabilities(&x)?;
            let (l, e) = score_probs(&p, &outputs, bins, &idx, &self.labels, &uniform);
            loss += l;
            exact += e;
        }
        Ok(SetScore { loss: loss / bank.len() as f64, exact_bins: exact as f64 / (bank.len() * outputs.len()) as f64 })
    }
}

impl Trainable for BlockTrainer<'_> {
    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn step(&mut self, idx: &[usize], lr: f64, rng: &mut ChaCha8Rng) -> Result<f64, EstimatorError> {
        // augmented banks train on their noisy replicas only
        let reps = self.train.replicas();
        let rows: Vec<(usize, usize)> = idx.iter().map(|&i| (if reps > 1 { rng.random_range(1..reps) } else { 0 }, i)).collect();
        let x = assemble(self.topo, self.index, self.train, self.train_probs, &rows)?;
        let labels = self.labels.batch(self.train_bins, idx, self.block.outputs());
        let uniform = vec![1.0; labels.len()];
        self.block.zero_grad();
        let (loss, _) = self.block.train_pass(&x, &labels, &uniform, false)?;
        self.block.sgd_step(lr);
        Ok(loss)
    }

    fn score_train(&mut self) -> Result<SetScore, EstimatorError> {
        let (bank, probs, bins) = (self.train, self.train_probs, self.train_bins);
        self.score(bank, probs, bins)
    }

    fn score_val(&mut self) -> Result<Option<SetScore>, EstimatorError> {
        match self.val {
            Some((bank, probs, bins)) => self.score(bank, probs, bins).map(Some),
            None => Ok(None),
        }
    }

    fn snapshot(&self) -> Result<WeightsFile, EstimatorError> {
        let mut w = WeightsFile::new();
        self.block.capture(&mut w, "")?;
        Ok(w)
    }

    fn restore(&mut self, w: &WeightsFile) -> Result<(), EstimatorError> {
        Ok(self.block.restore(w, "")?)
    }
}

/// Fills `table[r][o]` for the outputs of block `b` on every replica.
fn predict_block(net: &mut NestedNet, b: usize, bank: &FeatureBank, table: &mut [ProbTable]) -> Result<(), EstimatorError> {
    let outputs = net.blocks[b].outputs().to_vec();
    for r in 0..bank.replicas() {
        let mut out: Vec<Vec<f32>> = vec![Vec::with_capacity(bank.len() * NUM_BINS); outputs.len()];
        for idx in eval_batches(bank.len(), 64) {
            let rows: Vec<(usize, usize)> = idx.iter().map(|&i| (r, i)).collect();
            let x = assemble(&net.topology, b, bank, table, &rows)?;
            for (h, p) in net.blocks[b].probabilities(&x)?.into_iter().enumerate() {
                out[h].extend(p.into_data());
            }
        }
        for (&o, data) in outputs.iter().zip(out) {
            table[r][o] = Some(Tensor::new(vec![bank.len(), NUM_BINS], data)?);
        }
    }
    Ok(())
}

/// Trains the blocks one at a time in topological order on frozen
/// features. Each block sees the eval-mode distributions of its (already
/// trained) upstream blocks and is optimized on its own heads' loss only.
#[allow(clippy::too_many_arguments)]
pub fn train_nested(
    topology: NestedTopology,
    encoding: ColorEncoding,
    train: &FeatureBank,
    train_bins: &[ParamBins],
    val: Option<(&FeatureBank, &[ParamBins])>,
    opts: FitOptions,
    mut hook: Option<&mut EpochHook<'_>>,
) -> Result<(NestedNet, Vec<TrainReport>), EstimatorError> {
    if train.is_empty() {
        return Err(EstimatorError::EmptySplit("train"));
    }
    let f0_len = train.f0[0].item_len();
    let fw_len = train.fw[0].item_len();
    let mut net = NestedNet::new(topology, encoding, f0_len, fw_len, opts.seed)?;
    let mut train_probs: Vec<ProbTable> = vec![vec![None; NUM_PARAMS]; train.replicas()];
    let mut val_probs: Vec<ProbTable> = val.map(|(v, _)| vec![vec![None; NUM_PARAMS]; v.replicas()]).unwrap_or_default();
    let mut reports = Vec::new();
    for b in net.order.clone() {
        let name = net.topology.blocks[b].name.clone();
        let block_opts = FitOptions { seed: derive_seed(opts.seed, 1000 + b as u64), ..opts };
        let topo = net.topology.clone();
        let mut trainer = BlockTrainer {
            topo: &topo,
            index: b,
            block: &mut net.blocks[b],
            train,
            train_probs: &train_probs,
            train_bins,
            val: val.filter(|(v, _)| !v.is_empty()).map(|(v, bins)| (v, val_probs.as_slice(), bins)),
            labels: LabelTable::default(),
        };
        let report = fit(&name, &mut trainer, block_opts, hook.as_deref_mut())?;
        reports.push(report);
        predict_block(&mut net, b, train, &mut train_probs)?;
        if let Some((v, _)) = val.filter(|(v, _)| !v.is_empty()) {
            predict_block(&mut net, b, v, &mut val_probs)?;
        }
    }
    Ok((net, reports))
}
