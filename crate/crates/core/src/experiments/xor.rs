//! Gradient-descent training of a 2-prototype projection layer on XOR.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::init::InitMethod;
use crate::engine::{Graph, OptimizerConfig, OptimizerState, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::io::seed::{derive_seed, rng_for, short_hash};
use crate::layers::TverskyProjection;
use crate::tversky::{ContrastWeights, DifferenceReduction, IntersectionReduction, ReductionConfig};

pub const XOR_INPUTS: [[f32; 2]; 4] = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
pub const XOR_LABELS: [usize; 4] = [0, 1, 1, 0];

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrialSpec {
    pub intersection: IntersectionReduction,
    pub difference: DifferenceReduction,
    pub normalize: bool,
    pub num_features: usize,
    pub prototype_init: InitMethod,
    pub feature_init: InitMethod,
    pub seed_index: u64,
}

impl TrialSpec {
    pub fn reduction(&self) -> ReductionConfig {
        ReductionConfig::new(self.intersection, self.difference).normalized(self.normalize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialProtocol {
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for TrialProtocol {
    fn default() -> Self {
        Self {
            epochs: 1000,
            optimizer: OptimizerConfig::adam(0.01),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub config_hash: String,
    pub intersection: IntersectionReduction,
    pub difference: DifferenceReduction,
    pub normalize: bool,
    pub num_features: usize,
    pub prototype_init: InitMethod,
    pub feature_init: InitMethod,
    pub seed_index: u64,
    pub seed: u64,
    pub epochs: usize,
    /// An `f32` loss widened; read back through `f32` so nine digits restore it exactly.
    #[serde(deserialize_with = "widened_f32")]
    pub final_loss: f64,
    pub final_acc: f64,
    pub best_acc: f64,
    pub converged: bool,
    pub wall_ms: f64,
}

fn widened_f32<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    f32::deserialize(d).map(f64::from)
}

impl TrialResult {
    pub fn spec(&self) -> TrialSpec {
        TrialSpec {
            intersection: self.intersection,
            difference: self.difference,
            normalize: self.normalize,
            num_features: self.num_features,
            prototype_init: self.prototype_init,
            feature_init: self.feature_init,
            seed_index: self.seed_index,
        }
    }

    /// Equality ignoring wall time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let strip = |r: &Self| TrialResult {
            wall_ms: 0.0,
            ..r.clone()
        };
        let (a, b) = (strip(self), strip(other));
        a.config_hash == b.config_hash
            && a.final_loss.to_bits() == b.final_loss.to_bits()
            && a.final_acc == b.final_acc
            && a.best_acc == b.best_acc
            && a.converged == b.converged
    }
}

/// Canonical text identifying a trial; its hash keys resumable sweeps.
pub fn canonical_trial(spec: &TrialSpec, protocol: &TrialProtocol, master_seed: u64) -> String {
    format!(
        "xor;intersection={};difference={};normalize={};features={};prototype_init={};feature_init={};seed={};master={};epochs={};optimizer={}",
        spec.intersection,
        spec.difference,
        spec.normalize,
        spec.num_features,
        spec.prototype_init,
        spec.feature_init,
        spec.seed_index,
        master_seed,
        protocol.epochs,
        serde_json::to_string(&protocol.optimizer).expect("plain struct"),
    )
}

/// Builds the untrained layer for a trial.
///
/// Initial parameters depend only on `(master_seed, seed_index)` and the
/// init methods, so trials that differ only in reductions start from the
/// same point.
pub fn init_xor_layer(spec: &TrialSpec, master_seed: u64) -> Result<(ParamStore<f32>, TverskyProjection)> {
    if spec.num_features == 0 {
        return Err(Error::InvalidArgument("a trial needs at least one feature".into()));
    }
    let mut proto_rng = rng_for(master_seed, "xor.prototypes", spec.seed_index);
    let mut feat_rng = rng_for(master_seed, "xor.features", spec.seed_index);
    let mut store = ParamStore::new();
    let layer = TverskyProjection::new(
        &mut store,
        "xor",
        spec.prototype_init.sample(2, 2, &mut proto_rng),
        spec.feature_init.sample(spec.num_features, 2, &mut feat_rng),
        ContrastWeights::default(),
        spec.reduction(),
    )?;
    Ok((store, layer))
}

fn accuracy(scores: &Tensor<f32>) -> f64 {
    let hits = scores
        .argmax_rows()
        .iter()
        .zip(XOR_LABELS)
        .filter(|(p, t)| **p == *t)
        .count();
    hits as f64 / XOR_LABELS.len() as f64
}

/// Trains on the four XOR rows, full batch, softmax cross-entropy.
///
/// A non-finite value stops training; the trial then reports a NaN loss and
/// keeps the best accuracy reached before that point.
pub fn run_trial(spec: &TrialSpec, protocol: &TrialProtocol, master_seed: u64) -> Result<TrialResult> {
    let start = Instant::now();
    let (mut store, layer) = init_xor_layer(spec, master_seed)?;
    let mut opt = OptimizerState::new(protocol.optimizer);
    let inputs = Tensor::from_rows(&XOR_INPUTS)?;

    let mut final_loss = f64::NAN;
    let mut final_acc = 0.0;
    let mut best_acc = 0.0_f64;
    for _ in 0..protocol.epochs {
        let g = Graph::new();
        let x = g.constant(inputs.clone());
        let step = layer.forward(&g, &store, x).and_then(|s| {
            let acc = accuracy(&s.to_tensor());
            Ok((acc, s.softmax_cross_entropy(&XOR_LABELS)?))
        });
        let (acc, loss) = match step {
            Ok(v) => v,
            Err(Error::NonFinite(_)) => {
                final_loss = f64::NAN;
                break;
            }
            Err(e) => return Err(e),
        };
        final_acc = acc;
        best_acc = best_acc.max(acc);
        final_loss = f64::from(loss.item()?);
        let grads = g.backward(loss)?;
        if grads.params().iter().any(|(_, t)| !t.all_finite()) {
            final_loss = f64::NAN;
            break;
        }
        opt.step(&mut store, &grads)?;
    }

    Ok(TrialResult {
        config_hash: short_hash(&canonical_trial(spec, protocol, master_seed)),
        intersection: spec.intersection,
        difference: spec.difference,
        normalize: spec.normalize,
        num_features: spec.num_features,
        prototype_init: spec.prototype_init,
        feature_init: spec.feature_init,
        seed_index: spec.seed_index,
        seed: derive_seed(master_seed, "xor.prototypes", spec.seed_index),
        epochs: protocol.epochs,
        final_loss,
        final_acc,
        best_acc,
        converged: best_acc == 1.0,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(num_features: usize, seed_index: u64) -> TrialSpec {
        TrialSpec {
            intersection: IntersectionReduction::Product,
            difference: DifferenceReduction::SubstractMatch,
            normalize: false,
            num_features,
            prototype_init: InitMethod::Uniform,
            feature_init: InitMethod::Uniform,
            seed_index,
        }
    }

    #[test]
    fn deterministic() {
        let p = TrialProtocol {
            epochs: 50,
            ..Default::default()
        };
        let a = run_trial(&spec(4, 3), &p, 11).unwrap();
        let b = run_trial(&spec(4, 3), &p, 11).unwrap();
        assert!(a.same_outcome(&b));
        assert_eq!(a.converged, a.best_acc == 1.0);
    }

    #[test]
    fn init_shared_across_reductions() {
        let s1 = spec(3, 5);
        let s2 = TrialSpec {
            intersection: IntersectionReduction::Min,
            ..s1
        };
        let (a, _) = init_xor_layer(&s1, 9).unwrap();
        let (b, _) = init_xor_layer(&s2, 9).unwrap();
        for ((_, pa), (_, pb)) in a.iter().zip(b.iter()) {
            assert_eq!(pa.value, pb.value);
        }
    }

    #[test]
    fn hash_depends_on_every_field() {
        let p = TrialProtocol::default();
        let base = canonical_trial(&spec(4, 0), &p, 0);
        assert_ne!(base, canonical_trial(&spec(4, 1), &p, 0));
        assert_ne!(base, canonical_trial(&spec(8, 0), &p, 0));
        assert_ne!(base, canonical_trial(&spec(4, 0), &p, 1));
    }
}
