//! Feature-based contrast similarity.
//!
//! An object `x` is represented by the features it "has": `{k : x·f_k > 0}`.
//! Feature measures, salience and the contrast score are computed from the
//! dot products of objects with a shared [`FeatureBank`].

mod differentiable;
pub mod reduction;

pub use differentiable::{contrast_measures, salience_var, similarity_matrix, ContrastVars};
pub use reduction::{
    pair_measures, psi, psi_grad, DifferenceReduction, IntersectionReduction, PairMeasures, ReductionConfig, GMEAN_EPS,
    SOFTMIN_TAU,
};

use serde::{Deserialize, Serialize};

use crate::engine::{clamped_norm, row_dots, Real, Tensor};
use crate::error::{Error, Result};

/// `K` feature vectors of dimension `d`, stored as a `[K, d]` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBank<T> {
    vectors: Tensor<T>,
}

impl<T: Real> FeatureBank<T> {
    pub fn new(vectors: Tensor<T>) -> Result<Self> {
        let (k, d) = vectors.dims2()?;
        if k == 0 || d == 0 {
            return Err(Error::InvalidArgument(format!(
                "feature bank needs at least one feature of positive dimension, got [{k}, {d}]"
            )));
        }
        if !vectors.all_finite() {
            return Err(Error::NonFinite("feature bank"));
        }
        Ok(Self { vectors })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        Self::new(Tensor::from_rows(rows)?)
    }

    pub fn num_features(&self) -> usize {
        self.vectors.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.vectors.shape()[1]
    }

    pub fn feature(&self, k: usize) -> &[T] {
        self.vectors.row(k)
    }

    pub fn vectors(&self) -> &Tensor<T> {
        &self.vectors
    }

    /// `x·f_k` for every feature.
    pub fn dots(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(row_dots(x, 1, self.vectors.data(), self.num_features(), self.dim()))
    }
}

/// `θ`, `α`, `β` of the contrast model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastWeights<T> {
    pub theta: T,
    pub alpha: T,
    pub beta: T,
}

impl<T: Real> Default for ContrastWeights<T> {
    fn default() -> Self {
        Self {
            theta: T::one(),
            alpha: T::lit(0.5),
            beta: T::lit(0.5),
        }
    }
}

impl<T: Real> ContrastWeights<T> {
    pub fn new(theta: T, alpha: T, beta: T) -> Self {
        Self { theta, alpha, beta }
    }
}

/// Features an object has, with their measures `x·f_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet<T> {
    pub members: Vec<usize>,
    pub measures: Vec<T>,
}

impl<T> FeatureSet<T> {
    pub fn contains(&self, k: usize) -> bool {
        self.members.binary_search(&k).is_ok()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

pub fn feature_membership<T: Real>(x: &[T], bank: &FeatureBank<T>) -> Result<FeatureSet<T>> {
    let dots = bank.dots(x)?;
    let (members, measures) = dots.into_iter().enumerate().filter(|&(_, v)| v > T::zero()).unzip();
    Ok(FeatureSet { members, measures })
}

/// `Σ_k ReLU(x·f_k)`
pub fn salience<T: Real>(x: &[T], bank: &FeatureBank<T>) -> Result<T> {
    Ok(bank.dots(x)?.into_iter().map(|v| v.max(T::zero())).sum())
}

/// Unit-normalizes `x` when `cfg.normalize` is set. A zero vector has no
/// direction and is rejected.
fn prepare<T: Real>(x: &[T], cfg: &ReductionConfig, which: &'static str) -> Result<Vec<T>> {
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(which));
    }
    if !cfg.normalize {
        return Ok(x.to_vec());
    }
    if x.iter().all(|&v| v == T::zero()) {
        return Err(Error::ZeroNorm(which));
    }
    let n = clamped_norm(x);
    Ok(x.iter().map(|&v| v / n).collect())
}

fn measures<T: Real>(a: &[T], b: &[T], bank: &FeatureBank<T>, cfg: &ReductionConfig) -> Result<PairMeasures<T>> {
    let a = prepare(a, cfg, "a")?;
    let b = prepare(b, cfg, "b")?;
    Ok(pair_measures(&bank.dots(&a)?, &bank.dots(&b)?, cfg, None))
}

/// `f(A∩B)`
pub fn intersection_measure<T: Real>(a: &[T], b: &[T], bank: &FeatureBank<T>, cfg: &ReductionConfig) -> Result<T> {
    Ok(measures(a, b, bank, cfg)?.common)
}

/// `f(A-B)`. Swap the arguments for `f(B-A)`.
pub fn difference_measure<T: Real>(a: &[T], b: &[T], bank: &FeatureBank<T>, cfg: &ReductionConfig) -> Result<T> {
    Ok(measures(a, b, bank, cfg)?.a_only)
}

/// `θ·f(A∩B) - α·f(A-B) - β·f(B-A)`
pub fn tversky_contrast<T: Real>(
    a: &[T],
    b: &[T],
    bank: &FeatureBank<T>,
    weights: &ContrastWeights<T>,
    cfg: &ReductionConfig,
) -> Result<T> {
    let m = measures(a, b, bank, cfg)?;
    Ok(weights.theta * m.common - weights.alpha * m.a_only - weights.beta * m.b_only)
}
