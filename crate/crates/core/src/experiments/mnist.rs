//! Small convolutional MNIST classifiers with linear or Tversky heads.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::init::InitMethod;
use crate::engine::{Graph, OptimizerConfig, OptimizerState, ParamId, ParamStore, Real, Tensor, Var};
use crate::error::{Error, Result};
use crate::io::idx::Dataset;
use crate::io::seed::rng_for;
use crate::io::{checkpoint, fmt_g9, write_csv};
use crate::layers::{Backbone, ContrastParams, Linear, TverskyProjection, VisualLinear, VisualTverskyProjection};
use crate::tversky::{ContrastWeights, FeatureBank, ReductionConfig};

pub const EMBED_DIM: usize = 36;
pub const NUM_CLASSES: usize = 10;
pub const NUM_FEATURES: usize = 20;
pub const IMAGE_SIDE: usize = 28;

/// `(c_in, c_out, kernel, stride, pad)` of each convolution.
pub const CONV_SPECS: [(usize, usize, usize, usize, usize); 5] = [
    (1, 4, 5, 1, 0),
    (4, 8, 5, 2, 0),
    (8, 12, 5, 1, 2),
    (12, 12, 3, 1, 1),
    (12, 12, 3, 2, 1),
];

fn uniform_tensor<T: Real, R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor<T> {
    let u = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| u.sample(rng)).collect();
    Tensor::from_f64(shape.to_vec(), &data).expect("shape matches")
}

/// Fan-in scaled uniform init, as for a default dense or conv layer.
fn fan_in_linear<T: Real, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    prefix: &str,
    d_in: usize,
    d_out: usize,
    rng: &mut R,
) -> Linear {
    let bound = 1.0 / (d_in as f64).sqrt();
    let w = uniform_tensor(&[d_out, d_in], bound, rng);
    let b = uniform_tensor(&[d_out], bound, rng);
    Linear::new(store, prefix, w, Some(b)).expect("consistent shapes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayer {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: usize,
}

/// Five ReLU convolutions; the last three are globally averaged and
/// concatenated into a 36-d embedding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvStack {
    pub layers: Vec<ConvLayer>,
}

impl ConvStack {
    pub fn new<T: Real, R: Rng + ?Sized>(store: &mut ParamStore<T>, rng: &mut R) -> Self {
        let layers = CONV_SPECS
            .iter()
            .enumerate()
            .map(|(i, &(c_in, c_out, k, stride, pad))| {
                let bound = 1.0 / ((c_in * k * k) as f64).sqrt();
                ConvLayer {
                    kernel: store.add(
                        format!("conv{}.kernel", i + 1),
                        uniform_tensor(&[c_out, c_in, k, k], bound, rng),
                    ),
                    bias: store.add(format!("conv{}.bias", i + 1), uniform_tensor(&[c_out], bound, rng)),
                    stride,
                    pad,
                }
            })
            .collect();
        Self { layers }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| [l.kernel, l.bias]).collect()
    }
}

impl<T: Real> Backbone<T> for ConvStack {
    fn embed<'g>(&self, g: &'g Graph<T>, store: &ParamStore<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let mut h = x;
        let mut pooled = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            h = h
                .conv2d(g.param(store, l.kernel), l.stride, l.pad)?
                .add_channel_bias(g.param(store, l.bias))?
                .relu()?;
            if i >= 2 {
                pooled.push(h.global_avg_pool()?);
            }
        }
        Var::concat_cols(&pooled)
    }
}

/// Conv stack followed by the two hidden dense layers of the baseline.
struct BaselineTrunk<'a> {
    conv: &'a ConvStack,
    fc1: Linear,
    fc2: Linear,
}

impl<T: Real> Backbone<T> for BaselineTrunk<'_> {
    fn embed<'g>(&self, g: &'g Graph<T>, store: &ParamStore<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let h = self.conv.embed(g, store, x)?;
        hidden(g, store, self.fc1, self.fc2, h)
    }
}

fn hidden<'g, T: Real>(
    g: &'g Graph<T>,
    store: &ParamStore<T>,
    fc1: Linear,
    fc2: Linear,
    h: Var<'g, T>,
) -> Result<Var<'g, T>> {
    let h = fc1.forward(g, store, h)?.relu()?;
    fc2.forward(g, store, h)?.relu()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MnistArch {
    Baseline,
    Tversky,
    VisualBaseline,
    VisualTversky,
}

impl MnistArch {
    pub const ALL: [MnistArch; 4] = [
        MnistArch::Baseline,
        MnistArch::Tversky,
        MnistArch::VisualBaseline,
        MnistArch::VisualTversky,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MnistArch::Baseline => "baseline",
            MnistArch::Tversky => "tversky",
            MnistArch::VisualBaseline => "visual-baseline",
            MnistArch::VisualTversky => "visual-tversky",
        }
    }

    pub fn is_visual(self) -> bool {
        matches!(self, MnistArch::VisualBaseline | MnistArch::VisualTversky)
    }
}

impl fmt::Display for MnistArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MnistArch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown MNIST architecture '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MnistHead {
    Baseline {
        fc1: Linear,
        fc2: Linear,
        out: Linear,
    },
    Tversky(TverskyProjection),
    VisualBaseline {
        fc1: Linear,
        fc2: Linear,
        out: VisualLinear,
    },
    VisualTversky(VisualTverskyProjection),
}

/// A complete classifier together with the store that owns its weights.
#[derive(Debug, Clone)]
pub struct MnistNet<T: Real> {
    pub arch: MnistArch,
    pub store: ParamStore<T>,
    pub conv: ConvStack,
    pub head: MnistHead,
}

impl<T: Real> MnistNet<T> {
    pub fn new<R: Rng + ?Sized>(arch: MnistArch, cfg: ReductionConfig, rng: &mut R) -> Result<Self> {
        let mut store = ParamStore::new();
        let conv = ConvStack::new(&mut store, rng);
        let image = [1, IMAGE_SIDE, IMAGE_SIDE];
        let images = |n: usize| [n, image[0], image[1], image[2]];
        let head = match arch {
            MnistArch::Baseline => MnistHead::Baseline {
                fc1: fan_in_linear(&mut store, "fc1", EMBED_DIM, 120, rng),
                fc2: fan_in_linear(&mut store, "fc2", 120, 84, rng),
                out: fan_in_linear(&mut store, "out", 84, NUM_CLASSES, rng),
            },
            MnistArch::Tversky => MnistHead::Tversky(TverskyProjection::new(
                &mut store,
                "head",
                InitMethod::Uniform.sample(NUM_CLASSES, EMBED_DIM, rng),
                InitMethod::Uniform.sample(NUM_FEATURES, EMBED_DIM, rng),
                ContrastWeights::default(),
                cfg,
            )?),
            MnistArch::VisualBaseline => {
                let fc1 = fan_in_linear(&mut store, "fc1", EMBED_DIM, 120, rng);
                let fc2 = fan_in_linear(&mut store, "fc2", 120, 84, rng);
                let bound = 1.0 / 84f64.sqrt();
                let out = VisualLinear::new(
                    &mut store,
                    "out",
                    uniform_tensor(&images(NUM_CLASSES), 1.0, rng),
                    Some(uniform_tensor(&[NUM_CLASSES], bound, rng)),
                );
                MnistHead::VisualBaseline { fc1, fc2, out }
            }
            MnistArch::VisualTversky => MnistHead::VisualTversky(VisualTverskyProjection::new(
                &mut store,
                "head",
                uniform_tensor(&images(NUM_CLASSES), 1.0, rng),
                uniform_tensor(&images(NUM_FEATURES), 1.0, rng),
                ContrastWeights::default(),
                cfg,
            )),
        };
        Ok(Self {
            arch,
            store,
            conv,
            head,
        })
    }

    pub fn num_params(&self) -> usize {
        self.store.iter().map(|(_, p)| p.value.len()).sum()
    }

    pub fn contrast_params(&self) -> Option<ContrastParams> {
        match &self.head {
            MnistHead::Tversky(l) => Some(l.weights()),
            MnistHead::VisualTversky(l) => Some(l.weights),
            _ => None,
        }
    }

    pub fn contrast_weights(&self) -> Option<ContrastWeights<T>> {
        self.contrast_params().map(|c| c.read(&self.store))
    }

    /// The 36-d embedding, with dropout on it when training.
    pub fn embed<'g, R: Rng + ?Sized>(
        &self,
        g: &'g Graph<T>,
        x: Var<'g, T>,
        dropout: Option<(f64, &mut R)>,
    ) -> Result<Var<'g, T>> {
        let h = self.conv.embed(g, &self.store, x)?;
        match dropout {
            Some((p, rng)) if p > 0.0 => h.dropout(p, rng),
            _ => Ok(h),
        }
    }

    /// Class scores `[n, 10]` for images `[n, 1, 28, 28]`.
    pub fn forward<'g, R: Rng + ?Sized>(
        &self,
        g: &'g Graph<T>,
        x: Var<'g, T>,
        dropout: Option<(f64, &mut R)>,
    ) -> Result<Var<'g, T>> {
        let h = self.embed(g, x, dropout)?;
        let store = &self.store;
        match &self.head {
            MnistHead::Baseline { fc1, fc2, out } => out.forward(g, store, hidden(g, store, *fc1, *fc2, h)?),
            MnistHead::Tversky(layer) => layer.forward(g, store, h),
            MnistHead::VisualBaseline { fc1, fc2, out } => {
                let trunk = BaselineTrunk {
                    conv: &self.conv,
                    fc1: *fc1,
                    fc2: *fc2,
                };
                out.forward_embedded(g, store, &trunk, hidden(g, store, *fc1, *fc2, h)?)
            }
            MnistHead::VisualTversky(layer) => layer.forward_embedded(g, store, &self.conv, h),
        }
    }

    pub fn predict(&self, images: &Tensor<T>) -> Result<Vec<usize>> {
        let g = Graph::new();
        let x = g.constant(images.clone());
        let scores = self.forward::<rand_chacha::ChaCha8Rng>(&g, x, None)?.to_tensor();
        Ok(scores.argmax_rows())
    }

    /// Fraction of `data` classified correctly, evaluated in chunks.
    pub fn accuracy(&self, data: &Dataset, chunk: usize) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("empty evaluation set".into()));
        }
        let mut hits = 0;
        let idx: Vec<usize> = (0..data.len()).collect();
        for part in idx.chunks(chunk.max(1)) {
            let (x, y) = data.batch(part);
            let pred = self.predict(&x.cast())?;
            hits += pred.iter().zip(&y).filter(|(p, t)| p == t).count();
        }
        Ok(hits as f64 / data.len() as f64)
    }

    /// Embeddings `[N, 36]` of a whole dataset, evaluated in chunks.
    pub fn embed_dataset(&self, data: &Dataset, chunk: usize) -> Result<Tensor<T>> {
        let idx: Vec<usize> = (0..data.len()).collect();
        let mut out = Vec::with_capacity(data.len() * EMBED_DIM);
        for part in idx.chunks(chunk.max(1)) {
            let (x, _) = data.batch(part);
            out.extend_from_slice(self.embed_images(&x.cast())?.data());
        }
        Tensor::new(vec![data.len(), EMBED_DIM], out)
    }

    fn embed_images(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        let g = Graph::new();
        let x = g.constant(images.clone());
        Ok(self.embed::<rand_chacha::ChaCha8Rng>(&g, x, None)?.to_tensor())
    }

    /// Feature bank and prototypes of a Tversky head, in embedding space.
    /// Visual heads are passed through the conv stack first.
    pub fn tversky_space(&self) -> Result<(FeatureBank<T>, Tensor<T>)> {
        match &self.head {
            MnistHead::Tversky(l) => Ok((
                l.similarity.feature_bank(&self.store)?,
                self.store.value(l.prototypes.id).clone(),
            )),
            MnistHead::VisualTversky(l) => Ok((
                FeatureBank::new(self.embed_images(self.store.value(l.images.feature_images))?)?,
                self.embed_images(self.store.value(l.images.prototype_images))?,
            )),
            _ => Err(Error::InvalidArgument(format!(
                "architecture '{}' has no Tversky head",
                self.arch
            ))),
        }
    }

    /// Named input-shaped parameter images: `(name, [n, 1, 28, 28])`.
    pub fn image_params(&self) -> Vec<(String, ParamId)> {
        match &self.head {
            MnistHead::VisualTversky(l) => vec![
                ("prototype".into(), l.images.prototype_images),
                ("feature".into(), l.images.feature_images),
            ],
            MnistHead::VisualBaseline { out, .. } => vec![("weight".into(), out.images)],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MnistProtocol {
    pub arch: MnistArch,
    pub reduction: ReductionConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub dropout: f64,
    /// Stop once test accuracy reaches this value.
    pub target_accuracy: Option<f64>,
    /// Use only the first `n` training examples.
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    /// Checkpoint and image snapshot period in epochs; 0 disables.
    pub snapshot_every: usize,
    /// Taken from the run config's master seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for MnistProtocol {
    fn default() -> Self {
        Self {
            arch: MnistArch::Tversky,
            reduction: ReductionConfig::default(),
            epochs: 100,
            batch_size: 500,
            optimizer: OptimizerConfig::adam(0.002).with_weight_decay(1e-5),
            dropout: 0.05,
            target_accuracy: None,
            train_limit: None,
            test_limit: None,
            snapshot_every: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_acc: f64,
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub wall_s: f64,
}

pub const EPOCH_HEADER: [&str; 7] = ["epoch", "train_loss", "test_acc", "theta", "alpha", "beta", "wall_s"];

impl EpochRecord {
    pub fn record(&self) -> [String; 7] {
        [
            self.epoch.to_string(),
            fmt_g9(self.train_loss),
            fmt_g9(self.test_acc),
            fmt_g9(self.theta),
            fmt_g9(self.alpha),
            fmt_g9(self.beta),
            fmt_g9(self.wall_s),
        ]
    }
}

/// Per-epoch history. Row 0 is the untrained model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn best_acc(&self) -> f64 {
        self.epochs.iter().map(|e| e.test_acc).fold(0.0, f64::max)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv(path, &EPOCH_HEADER, self.epochs.iter().map(EpochRecord::record))
    }
}

/// Where training writes its log, checkpoints and images.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub dir: PathBuf,
}

fn epoch_record<T: Real>(net: &MnistNet<T>, epoch: usize, loss: f64, acc: f64, wall_s: f64) -> EpochRecord {
    let w = net
        .contrast_weights()
        .map(|w| (w.theta.as_f64(), w.alpha.as_f64(), w.beta.as_f64()))
        .unwrap_or((f64::NAN, f64::NAN, f64::NAN));
    EpochRecord {
        epoch,
        train_loss: loss,
        test_acc: acc,
        theta: w.0,
        alpha: w.1,
        beta: w.2,
        wall_s,
    }
}

fn snapshot<T: Real>(net: &MnistNet<T>, out: &TrainOutput, epoch: usize) -> Result<()> {
    checkpoint::save_store(&out.dir.join(format!("checkpoint-epoch{epoch:04}.bin")), &net.store)?;
    if net.arch.is_visual() {
        crate::interp::export_prototype_images(net, &out.dir.join("images"), &format!("epoch{epoch:04}"))?;
    }
    Ok(())
}

/// Mini-batch training with test-set evaluation after every epoch.
pub fn train_mnist<T: Real>(
    net: &mut MnistNet<T>,
    train: &Dataset,
    test: &Dataset,
    protocol: &MnistProtocol,
    out: Option<&TrainOutput>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainLog> {
    if train.is_empty() || protocol.batch_size == 0 {
        return Err(Error::InvalidArgument(
            "training needs data and a positive batch size".into(),
        ));
    }
    let train = protocol.train_limit.map_or_else(|| train.clone(), |n| train.take(n));
    let test = protocol.test_limit.map_or_else(|| test.clone(), |n| test.take(n));
    let start = Instant::now();
    let mut opt = OptimizerState::new(protocol.optimizer);
    let mut log = TrainLog::default();

    let first = epoch_record(net, 0, f64::NAN, net.accuracy(&test, 1000)?, 0.0);
    on_epoch(&first);
    log.epochs.push(first);
    if let Some(out) = out {
        if protocol.snapshot_every > 0 {
            snapshot(net, out, 0)?;
        }
    }

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=protocol.epochs {
        order.shuffle(&mut rng_for(protocol.seed, "mnist.shuffle", epoch as u64));
        let mut dropout_rng = rng_for(protocol.seed, "mnist.dropout", epoch as u64);
        let (mut loss_sum, mut batches) = (0.0, 0usize);
        for idx in order.chunks(protocol.batch_size) {
            let (x, y) = train.batch(idx);
            let g = Graph::new();
            let xv = g.constant(x.cast());
            let logits = net.forward(&g, xv, Some((protocol.dropout, &mut dropout_rng)))?;
            let loss = logits.softmax_cross_entropy(&y)?;
            loss_sum += loss.item()?.as_f64();
            batches += 1;
            let grads = g.backward(loss)?;
            opt.step(&mut net.store, &grads)?;
        }
        let acc = net.accuracy(&test, 1000)?;
        let rec = epoch_record(
            net,
            epoch,
            loss_sum / batches as f64,
            acc,
            start.elapsed().as_secs_f64(),
        );
        on_epoch(&rec);
        log.epochs.push(rec);
        let done = protocol.target_accuracy.is_some_and(|t| acc >= t) || epoch == protocol.epochs;
        if let Some(out) = out {
            log.write_csv(&out.dir.join("train_log.csv"))?;
            if done || (protocol.snapshot_every > 0 && epoch % protocol.snapshot_every == 0) {
                snapshot(net, out, epoch)?;
            }
        }
        if done {
            break;
        }
    }
    Ok(log)
}
