use crate::engine::{Graph, ParamId, ParamStore, Real, Tensor, Var};
use crate::error::{Error, Result};
use crate::tversky::{
    similarity_matrix, tversky_contrast, ContrastVars, ContrastWeights, FeatureBank, ReductionConfig,
};

/// `θ`, `α`, `β` stored as three single-element parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContrastParams {
    pub theta: ParamId,
    pub alpha: ParamId,
    pub beta: ParamId,
}

impl ContrastParams {
    pub fn new<T: Real>(store: &mut ParamStore<T>, prefix: &str, init: ContrastWeights<T>) -> Self {
        Self {
            theta: store.add(format!("{prefix}.theta"), Tensor::vector(vec![init.theta])),
            alpha: store.add(format!("{prefix}.alpha"), Tensor::vector(vec![init.alpha])),
            beta: store.add(format!("{prefix}.beta"), Tensor::vector(vec![init.beta])),
        }
    }

    pub fn vars<'g, T: Real>(&self, g: &'g Graph<T>, store: &ParamStore<T>) -> ContrastVars<'g, T> {
        ContrastVars {
            theta: g.param(store, self.theta),
            alpha: g.param(store, self.alpha),
            beta: g.param(store, self.beta),
        }
    }

    pub fn read<T: Real>(&self, store: &ParamStore<T>) -> ContrastWeights<T> {
        ContrastWeights {
            theta: store.value(self.theta).data()[0],
            alpha: store.value(self.alpha).data()[0],
            beta: store.value(self.beta).data()[0],
        }
    }

    pub fn ids(&self) -> [ParamId; 3] {
        [self.theta, self.alpha, self.beta]
    }
}

/// Where a layer's feature bank lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BankRef {
    Owned(ParamId),
    /// Resolved from a [`SharedBankRegistry`](super::SharedBankRegistry).
    Shared {
        name: String,
        id: ParamId,
    },
}

impl BankRef {
    pub fn id(&self) -> ParamId {
        match self {
            BankRef::Owned(id) | BankRef::Shared { id, .. } => *id,
        }
    }
}

/// Ordered prototypes `Π`, one row per output unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrototypeBank {
    pub id: ParamId,
    /// Name of the parameter this bank is tied to, if any. A tied bank reads
    /// and trains the source parameter directly.
    pub tied_source: Option<String>,
}

impl PrototypeBank {
    pub fn owned(id: ParamId) -> Self {
        Self { id, tied_source: None }
    }

    pub fn tied<T: Real>(store: &ParamStore<T>, id: ParamId) -> Self {
        Self {
            id,
            tied_source: Some(store.get(id).name.clone()),
        }
    }
}

fn rows_and_dim<T: Real>(store: &ParamStore<T>, id: ParamId) -> Result<(usize, usize)> {
    store.value(id).dims2()
}

/// Similarity `S(a, b)` of two objects against a feature bank.
#[derive(Debug, Clone, PartialEq)]
pub struct TverskySimilarityLayer {
    pub features: BankRef,
    pub weights: ContrastParams,
    pub cfg: ReductionConfig,
}

impl TverskySimilarityLayer {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        features: Tensor<T>,
        weights: ContrastWeights<T>,
        cfg: ReductionConfig,
    ) -> Result<Self> {
        FeatureBank::new(features.clone())?;
        let features = BankRef::Owned(store.add(format!("{prefix}.features"), features));
        Ok(Self {
            features,
            weights: ContrastParams::new(store, prefix, weights),
            cfg,
        })
    }

    pub fn dim<T: Real>(&self, store: &ParamStore<T>) -> Result<usize> {
        Ok(rows_and_dim(store, self.features.id())?.1)
    }

    pub fn num_features<T: Real>(&self, store: &ParamStore<T>) -> Result<usize> {
        Ok(rows_and_dim(store, self.features.id())?.0)
    }

    pub fn feature_bank<T: Real>(&self, store: &ParamStore<T>) -> Result<FeatureBank<T>> {
        FeatureBank::new(store.value(self.features.id()).clone())
    }

    /// Scalar similarity of two plain vectors.
    pub fn similarity<T: Real>(&self, store: &ParamStore<T>, a: &[T], b: &[T]) -> Result<T> {
        tversky_contrast(a, b, &self.feature_bank(store)?, &self.weights.read(store), &self.cfg)
    }

    /// `[n, m]` similarities between rows of `a` and rows of `b`.
    pub fn forward<'g, T: Real>(
        &self,
        g: &'g Graph<T>,
        store: &ParamStore<T>,
        a: Var<'g, T>,
        b: Var<'g, T>,
    ) -> Result<Var<'g, T>> {
        let features = g.param(store, self.features.id());
        similarity_matrix(a, b, features, self.weights.vars(g, store), self.cfg)
    }
}

/// Maps each input row to its similarities with every prototype.
#[derive(Debug, Clone, PartialEq)]
pub struct TverskyProjection {
    pub prototypes: PrototypeBank,
    pub similarity: TverskySimilarityLayer,
}

impl TverskyProjection {
    /// Layer owning fresh prototype and feature parameters.
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        prototypes: Tensor<T>,
        features: Tensor<T>,
        weights: ContrastWeights<T>,
        cfg: ReductionConfig,
    ) -> Result<Self> {
        let similarity = TverskySimilarityLayer::new(store, prefix, features, weights, cfg)?;
        let prototypes = PrototypeBank::owned(store.add(format!("{prefix}.prototypes"), prototypes));
        Self::from_parts(store, prototypes, similarity)
    }

    /// Layer over existing banks, for sharing and tying.
    pub fn with_banks<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        prototypes: PrototypeBank,
        features: BankRef,
        weights: ContrastWeights<T>,
        cfg: ReductionConfig,
    ) -> Result<Self> {
        let similarity = TverskySimilarityLayer {
            features,
            weights: ContrastParams::new(store, prefix, weights),
            cfg,
        };
        Self::from_parts(store, prototypes, similarity)
    }

    fn from_parts<T: Real>(
        store: &ParamStore<T>,
        prototypes: PrototypeBank,
        similarity: TverskySimilarityLayer,
    ) -> Result<Self> {
        let (_, pd) = rows_and_dim(store, prototypes.id)?;
        let fd = similarity.dim(store)?;
        if pd != fd {
            return Err(Error::DimensionMismatch { expected: fd, got: pd });
        }
        Ok(Self { prototypes, similarity })
    }

    pub fn num_prototypes<T: Real>(&self, store: &ParamStore<T>) -> Result<usize> {
        Ok(rows_and_dim(store, self.prototypes.id)?.0)
    }

    pub fn cfg(&self) -> ReductionConfig {
        self.similarity.cfg
    }

    pub fn weights(&self) -> ContrastParams {
        self.similarity.weights
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.prototypes.id, self.similarity.features.id()];
        ids.extend(self.similarity.weights.ids());
        ids
    }

    /// `[n, p]` similarities of each input row to each prototype.
    pub fn forward<'g, T: Real>(
        &self,
        g: &'g Graph<T>,
        store: &ParamStore<T>,
        input: Var<'g, T>,
    ) -> Result<Var<'g, T>> {
        let prototypes = g.param(store, self.prototypes.id);
        self.similarity.forward(g, store, input, prototypes)
    }

    /// Forward pass on plain data without recording gradients.
    pub fn eval<T: Real>(&self, store: &ParamStore<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
        let g = Graph::new();
        let x = g.constant(input.clone());
        Ok(self.forward(&g, store, x)?.to_tensor())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tversky::{DifferenceReduction, IntersectionReduction};

    fn xor_layer(store: &mut ParamStore<f64>) -> TverskyProjection {
        TverskyProjection::new(
            store,
            "xor",
            Tensor::from_rows(&[[0.5, 0.5], [-0.5, -0.5]]).unwrap(),
            Tensor::from_rows(&[[0.5, -1.0], [-1.0, 0.5]]).unwrap(),
            ContrastWeights::default(),
            ReductionConfig::new(IntersectionReduction::Min, DifferenceReduction::IgnoreMatch),
        )
        .unwrap()
    }

    #[test]
    fn projection_of_x2() {
        let mut store = ParamStore::new();
        let layer = xor_layer(&mut store);
        let out = layer.eval(&store, &Tensor::from_rows(&[[1.0, 0.0]]).unwrap()).unwrap();
        assert_eq!(out.data(), &[-0.25, 0.125]);
    }

    #[test]
    fn zero_input_keeps_only_beta_term() {
        let mut store = ParamStore::new();
        let layer = xor_layer(&mut store);
        let out = layer.eval(&store, &Tensor::from_rows(&[[0.0, 0.0]]).unwrap()).unwrap();
        // f(P0) = 0, f(P1) = 0.25 + 0.25
        assert_eq!(out.data(), &[0.0, -0.25]);
    }

    #[test]
    fn asymmetric_weights_give_asymmetric_similarity() {
        let mut store = ParamStore::new();
        let layer = xor_layer(&mut store);
        store.value_mut(layer.weights().alpha).data_mut()[0] = 1.0;
        store.value_mut(layer.weights().beta).data_mut()[0] = 0.0;
        let (x2, p1) = ([1.0, 0.0], [-0.5, -0.5]);
        let ab = layer.similarity.similarity(&store, &x2, &p1).unwrap();
        let ba = layer.similarity.similarity(&store, &p1, &x2).unwrap();
        assert_eq!(ab, 0.25);
        assert_eq!(ba, 0.0);
    }

    #[test]
    fn prototype_dim_must_match_features() {
        let mut store = ParamStore::new();
        let err = TverskyProjection::new(
            &mut store,
            "bad",
            Tensor::<f64>::zeros(&[2, 3]),
            Tensor::full(&[4, 2], 1.0),
            ContrastWeights::default(),
            ReductionConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, got: 3 }));
    }

    #[test]
    fn input_dim_checked_at_forward() {
        let mut store = ParamStore::new();
        let layer = xor_layer(&mut store);
        assert!(layer.eval(&store, &Tensor::zeros(&[1, 3])).is_err());
    }
}
