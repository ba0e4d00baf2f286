use crate::engine::{Graph, ParamId, ParamStore, Real, Tensor, Var};
use crate::error::{Error, Result};

/// `y = x·Wᵀ + b` with `W` of shape `[p, d]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        weight: Tensor<T>,
        bias: Option<Tensor<T>>,
    ) -> Result<Self> {
        let (p, _) = weight.dims2()?;
        if let Some(b) = &bias {
            if b.shape() != [p] {
                return Err(Error::ShapeMismatch {
                    op: "linear",
                    lhs: weight.shape().to_vec(),
                    rhs: b.shape().to_vec(),
                });
            }
        }
        Ok(Self {
            weight: store.add(format!("{prefix}.weight"), weight),
            bias: bias.map(|b| store.add(format!("{prefix}.bias"), b)),
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        std::iter::once(self.weight).chain(self.bias).collect()
    }

    pub fn forward<'g, T: Real>(&self, g: &'g Graph<T>, store: &ParamStore<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let y = x.matmul_t(g.param(store, self.weight))?;
        match self.bias {
            Some(b) => y.add_bias(g.param(store, b)),
            None => Ok(y),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::finite_diff_check_many;

    #[test]
    fn identity_weight() {
        let mut store = ParamStore::new();
        let w = Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let layer = Linear::new(&mut store, "l", w, Some(Tensor::zeros(&[2]))).unwrap();
        let g = Graph::new();
        let x = g.constant(Tensor::from_rows(&[[0.3, -2.0]]).unwrap());
        assert_eq!(layer.forward(&g, &store, x).unwrap().to_tensor().data(), &[0.3, -2.0]);
    }

    #[test]
    fn prototype_weights() {
        let mut store = ParamStore::new();
        let w = Tensor::from_rows(&[[0.5, 0.5], [-0.5, -0.5]]).unwrap();
        let layer = Linear::new(&mut store, "l", w, None).unwrap();
        let g = Graph::new();
        let x = g.constant(Tensor::from_rows(&[[1.0, 0.0]]).unwrap());
        assert_eq!(layer.forward(&g, &store, x).unwrap().to_tensor().data(), &[0.5, -0.5]);
    }

    #[test]
    fn gradients() {
        let x = Tensor::from_rows(&[[0.3, -1.2, 0.5], [1.0, 0.2, -0.7]]).unwrap();
        let w = Tensor::from_rows(&[[0.1, 0.4, -0.3], [-0.9, 0.6, 0.2]]).unwrap();
        let b = Tensor::vector(vec![0.05, -0.15]);
        let r = finite_diff_check_many(
            |_, v| {
                let y = v[0].matmul_t(v[1])?.add_bias(v[2])?;
                y.mul(y)?.sum()
            },
            &[x, w, b],
            1e-6,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn bias_shape_checked() {
        let mut store = ParamStore::<f64>::new();
        let err = Linear::new(&mut store, "l", Tensor::zeros(&[2, 3]), Some(Tensor::zeros(&[3]))).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }
}
