use super::ReductionConfig;
use crate::engine::{Real, Var};
use crate::error::Result;

/// `θ`, `α`, `β` as single-element graph nodes.
#[derive(Debug, Clone, Copy)]
pub struct ContrastVars<'g, T: Real> {
    pub theta: Var<'g, T>,
    pub alpha: Var<'g, T>,
    pub beta: Var<'g, T>,
}

/// Row-wise salience `[n]` of objects `[n, d]` against features `[K, d]`.
pub fn salience_var<'g, T: Real>(x: Var<'g, T>, features: Var<'g, T>) -> Result<Var<'g, T>> {
    x.dots(features)?.relu()?.sum_rows()
}

/// `[3, n, m]` intersection and difference measures for rows of `a` and `b`.
///
/// Under `cfg.normalize` both sides are unit-normalized first with a clamped
/// norm, so a zero row stays zero.
pub fn contrast_measures<'g, T: Real>(
    a: Var<'g, T>,
    b: Var<'g, T>,
    features: Var<'g, T>,
    cfg: ReductionConfig,
) -> Result<Var<'g, T>> {
    let (a, b) = if cfg.normalize {
        (a.normalize_rows()?, b.normalize_rows()?)
    } else {
        (a, b)
    };
    a.dots(features)?.tversky_measures(b.dots(features)?, cfg)
}

/// `S[i, j] = θ·f(A_i∩B_j) - α·f(A_i-B_j) - β·f(B_j-A_i)`
pub fn similarity_matrix<'g, T: Real>(
    a: Var<'g, T>,
    b: Var<'g, T>,
    features: Var<'g, T>,
    weights: ContrastVars<'g, T>,
    cfg: ReductionConfig,
) -> Result<Var<'g, T>> {
    let m = contrast_measures(a, b, features, cfg)?;
    let common = m.select(0)?.scale(weights.theta)?;
    let a_only = m.select(1)?.scale(weights.alpha)?;
    let b_only = m.select(2)?.scale(weights.beta)?;
    common.sub(a_only)?.sub(b_only)
}
