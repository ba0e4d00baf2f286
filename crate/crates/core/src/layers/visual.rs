//! Head parameters stored in the input domain.
//!
//! Prototype, feature or weight "images" are shaped like the raw inputs and
//! pass through the same backbone as the data before every use.

use super::ContrastParams;
use crate::engine::{Graph, ParamId, ParamStore, Real, Tensor, Var};
use crate::error::{Error, Result};
use crate::tversky::{similarity_matrix, ContrastWeights, ReductionConfig};

/// A sub-network mapping a batch of raw inputs `[n, ...]` to vectors `[n, d]`.
pub trait Backbone<T: Real> {
    fn embed<'g>(&self, g: &'g Graph<T>, store: &ParamStore<T>, x: Var<'g, T>) -> Result<Var<'g, T>>;
}

/// Identity backbone: flattens each input to a row vector.
#[derive(Debug, Clone, Copy, Default)]
pub struct Flatten;

impl<T: Real> Backbone<T> for Flatten {
    fn embed<'g>(&self, _: &'g Graph<T>, _: &ParamStore<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let shape = x.shape();
        let n = *shape.first().unwrap_or(&1);
        let rest = shape.iter().skip(1).product();
        x.reshape(&[n, rest])
    }
}

fn embed_rows<'g, T: Real>(
    backbone: &dyn Backbone<T>,
    g: &'g Graph<T>,
    store: &ParamStore<T>,
    images: ParamId,
) -> Result<Var<'g, T>> {
    backbone.embed(g, store, g.param(store, images))
}

fn check_dims<T: Real>(input: &Var<'_, T>, params: &Var<'_, T>) -> Result<()> {
    let (a, b) = (input.shape(), params.shape());
    if a.len() != 2 || b.len() != 2 || a[1] != b[1] {
        return Err(Error::ShapeMismatch {
            op: "visual_forward",
            lhs: a,
            rhs: b,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VisualParameterization {
    pub prototype_images: ParamId,
    pub feature_images: ParamId,
}

/// Projection layer whose prototypes and features are input-shaped.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualTverskyProjection {
    pub images: VisualParameterization,
    pub weights: ContrastParams,
    pub cfg: ReductionConfig,
}

impl VisualTverskyProjection {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        prototype_images: Tensor<T>,
        feature_images: Tensor<T>,
        weights: ContrastWeights<T>,
        cfg: ReductionConfig,
    ) -> Self {
        let images = VisualParameterization {
            prototype_images: store.add(format!("{prefix}.prototype_images"), prototype_images),
            feature_images: store.add(format!("{prefix}.feature_images"), feature_images),
        };
        Self {
            images,
            weights: ContrastParams::new(store, prefix, weights),
            cfg,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.images.prototype_images, self.images.feature_images];
        ids.extend(self.weights.ids());
        ids
    }

    /// Prototype and feature vectors as seen by the projection.
    pub fn banks<'g, T: Real>(
        &self,
        g: &'g Graph<T>,
        store: &ParamStore<T>,
        backbone: &dyn Backbone<T>,
    ) -> Result<(Var<'g, T>, Var<'g, T>)> {
        Ok((
            embed_rows(backbone, g, store, self.images.prototype_images)?,
            embed_rows(backbone, g, store, self.images.feature_images)?,
        ))
    }

    /// Projection of already-embedded inputs `[n, d]`.
    pub fn forward_embedded<'g, T: Real>(
        &self,
        g: &'g Graph<T>,
        store: &ParamStore<T>,
        backbone: &dyn Backbone<T>,
        embedded: Var<'g, T>,
    ) -> Result<Var<'g, T>> {
        let (prototypes, features) = self.banks(g, store, backbone)?;
        check_dims(&embedded, &prototypes)?;
        similarity_matrix(embedded, prototypes, features, self.weights.vars(g, store), self.cfg)
    }

    /// Embeds raw inputs with `backbone`, then projects them.
    pub fn forward<'g, T: Real>(
        &self,
        g: &'g Graph<T>,
        store: &ParamStore<T>,
        backbone: &dyn Backbone<T>,
        input: Var<'g, T>,
    ) -> Result<Var<'g, T>> {
        let embedded = backbone.embed(g, store, input)?;
        self.forward_embedded(g, store, backbone, embedded)
    }
}

/// Linear layer whose weight rows are input-shaped images.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VisualLinear {
    pub images: ParamId,
    pub bias: Option<ParamId>,
}

impl VisualLinear {
    pub fn new<T: Real>(store: &mut ParamStore<T>, prefix: &str, images: Tensor<T>, bias: Option<Tensor<T>>) -> Self {
        Self {
            images: store.add(format!("{prefix}.weight_images"), images),
            bias: bias.map(|b| store.add(format!("{prefix}.bias"), b)),
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        std::iter::once(self.images).chain(self.bias).collect()
    }

    pub fn forward_embedded<'g, T: Real>(
        &self,
        g: &'g Graph<T>,
        store: &ParamStore<T>,
        backbone: &dyn Backbone<T>,
        embedded: Var<'g, T>,
    ) -> Result<Var<'g, T>> {
        let weight = embed_rows(backbone, g, store, self.images)?;
        check_dims(&embedded, &weight)?;
        let y = embedded.matmul_t(weight)?;
        match self.bias {
            Some(b) => y.add_bias(g.param(store, b)),
            None => Ok(y),
        }
    }
}
