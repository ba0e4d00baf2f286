//! Hand-built projection layers that compute XOR and 2-bit addition.

use crate::engine::{ParamStore, Tensor};
use crate::error::Result;
use crate::layers::TverskyProjection;
use crate::tversky::{
    feature_membership, ContrastWeights, DifferenceReduction, FeatureSet, IntersectionReduction, ReductionConfig,
};

/// A projection layer with fixed parameters and the table it should compute.
#[derive(Debug, Clone)]
pub struct ConstructedModel {
    pub name: &'static str,
    pub store: ParamStore<f64>,
    pub layer: TverskyProjection,
    pub inputs: Vec<Vec<f64>>,
    pub truth: Vec<usize>,
}

impl ConstructedModel {
    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn num_classes(&self) -> usize {
        self.layer
            .num_prototypes(&self.store)
            .expect("prototype bank is a matrix")
    }

    /// Similarities `[rows, p]` for a batch of inputs.
    pub fn scores(&self, inputs: &[Vec<f64>]) -> Result<Tensor<f64>> {
        self.layer.eval(&self.store, &Tensor::from_rows(inputs)?)
    }

    pub fn predict(&self, inputs: &[Vec<f64>]) -> Result<Vec<usize>> {
        Ok(self.scores(inputs)?.argmax_rows())
    }

    /// Number of truth-table rows reproduced.
    pub fn correct(&self) -> Result<usize> {
        let pred = self.predict(&self.inputs)?;
        Ok(pred.iter().zip(&self.truth).filter(|(p, t)| p == t).count())
    }

    /// Same parameters under a different reduction configuration.
    pub fn with_config(&self, cfg: ReductionConfig) -> Self {
        let mut m = self.clone();
        m.layer.similarity.cfg = cfg;
        m
    }

    pub fn prototypes(&self) -> &Tensor<f64> {
        self.store.value(self.layer.prototypes.id)
    }

    pub fn membership(&self, x: &[f64]) -> Result<FeatureSet<f64>> {
        feature_membership(x, &self.layer.similarity.feature_bank(&self.store)?)
    }
}

fn constructed(
    name: &'static str,
    prototypes: Tensor<f64>,
    features: Tensor<f64>,
    inputs: Vec<Vec<f64>>,
    truth: Vec<usize>,
) -> ConstructedModel {
    let mut store = ParamStore::new();
    let cfg = ReductionConfig::new(IntersectionReduction::Min, DifferenceReduction::IgnoreMatch);
    let layer = TverskyProjection::new(&mut store, name, prototypes, features, ContrastWeights::default(), cfg)
        .expect("constructed shapes agree");
    ConstructedModel {
        name,
        store,
        layer,
        inputs,
        truth,
    }
}

/// Two features and two prototypes in the plane; 11 parameters in total.
pub fn build_constructed_xor() -> ConstructedModel {
    constructed(
        "xor",
        Tensor::from_rows(&[[0.5, 0.5], [-0.5, -0.5]]).expect("rectangular"),
        Tensor::from_rows(&[[0.5, -1.0], [-1.0, 0.5]]).expect("rectangular"),
        vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]],
        vec![0, 1, 1, 0],
    )
}

/// XOR lifted to three dimensions with a carry feature and prototype.
pub fn build_constructed_add() -> ConstructedModel {
    constructed(
        "add",
        Tensor::from_rows(&[[0.5, 0.5, 0.0], [-0.5, -0.5, 0.0], [1.0, 1.0, 0.5]]).expect("rectangular"),
        Tensor::from_rows(&[[0.5, -1.0, 0.0], [-1.0, 0.5, 0.0], [0.0, 0.0, 1.0]]).expect("rectangular"),
        vec![
            vec![0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![1.0, 1.0, 1.0],
        ],
        vec![0, 1, 1, 2],
    )
}
