//! Finite-difference audit of the contrast score and the projection layer
//! over every reduction combination.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::engine::{finite_diff_check_many, GradCheckReport, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::io::seed::rng_for;
use crate::tversky::{similarity_matrix, ContrastVars, DifferenceReduction, IntersectionReduction, ReductionConfig};

/// Object dimension used by the suite.
const DIM: usize = 4;
const FEATURES: usize = 5;
const ROWS: usize = 3;
const PROTOTYPES: usize = 4;
/// Rejection-sampling budget per point.
const MAX_DRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteTarget {
    Contrast,
    Projection,
}

impl SuiteTarget {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Contrast => "contrast",
            Self::Projection => "projection",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteRow {
    pub reduction: ReductionConfig,
    pub target: SuiteTarget,
    pub points: usize,
    pub report: GradCheckReport,
}

/// Every `(Ψ, difference, normalize)` combination.
pub fn all_reductions() -> Vec<ReductionConfig> {
    let mut out = Vec::new();
    for i in IntersectionReduction::ALL {
        for d in DifferenceReduction::ALL {
            for n in [false, true] {
                out.push(ReductionConfig::new(i, d).normalized(n));
            }
        }
    }
    out
}

fn gaussian<R: Rng>(rng: &mut R, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

fn scalar<R: Rng>(rng: &mut R) -> Tensor<f64> {
    Tensor::vector(vec![rng.random_range(0.2..1.5)])
}

/// `inputs = [a, b, features, θ, α, β, w]`; `w` weights the score matrix.
fn weighted_score<'g>(cfg: ReductionConfig, v: &[Var<'g, f64>]) -> Result<Var<'g, f64>> {
    let weights = ContrastVars {
        theta: v[3],
        alpha: v[4],
        beta: v[5],
    };
    similarity_matrix(v[0], v[1], v[2], weights, cfg)?.mul(v[6])?.sum()
}

fn margin(cfg: ReductionConfig, inputs: &[Tensor<f64>]) -> Result<f64> {
    let g = Graph::new().with_mask_trace();
    let vars: Vec<_> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    weighted_score(cfg, &vars)?;
    Ok(g.mask_trace().unwrap_or_default().min_margin)
}

/// Draws inputs until every indicator argument is at least `10·h` from zero.
fn mask_safe_point<R: Rng>(rng: &mut R, cfg: ReductionConfig, target: SuiteTarget, h: f64) -> Result<Vec<Tensor<f64>>> {
    let (n, m) = match target {
        SuiteTarget::Contrast => (1, 1),
        SuiteTarget::Projection => (ROWS, PROTOTYPES),
    };
    for _ in 0..MAX_DRAWS {
        let w = match target {
            SuiteTarget::Contrast => Tensor::from_rows(&[[1.0]])?,
            SuiteTarget::Projection => gaussian(rng, &[n, m]),
        };
        let inputs = vec![
            gaussian(rng, &[n, DIM]),
            gaussian(rng, &[m, DIM]),
            gaussian(rng, &[FEATURES, DIM]),
            scalar(rng),
            scalar(rng),
            scalar(rng),
            w,
        ];
        if margin(cfg, &inputs)? > 10.0 * h {
            return Ok(inputs);
        }
    }
    Err(Error::InvalidArgument(format!(
        "no mask-safe point found for {cfg:?} after {MAX_DRAWS} draws"
    )))
}

/// Checks `points` random mask-safe points for one combination. Gradients
/// are taken with respect to objects, prototypes, features, `θ`, `α` and `β`.
pub fn check_combination(
    cfg: ReductionConfig,
    target: SuiteTarget,
    points: usize,
    h: f64,
    seed: u64,
) -> Result<SuiteRow> {
    let stream = format!("gradcheck.{}.{}", target.as_str(), cfg_key(cfg));
    let mut rng = rng_for(seed, &stream, 0);
    let mut report = GradCheckReport::default();
    for _ in 0..points {
        let inputs = mask_safe_point(&mut rng, cfg, target, h)?;
        let (params, w) = inputs.split_at(6);
        let w = w[0].clone();
        let r = finite_diff_check_many(
            |g, v| {
                let mut all = v.to_vec();
                all.push(g.constant(w.clone()));
                weighted_score(cfg, &all)
            },
            params,
            h,
        )?;
        report = report.merge(r);
    }
    Ok(SuiteRow {
        reduction: cfg,
        target,
        points,
        report,
    })
}

fn cfg_key(cfg: ReductionConfig) -> String {
    format!("{}.{}.{}", cfg.intersection, cfg.difference, cfg.normalize)
}

/// Runs [`check_combination`] for both targets over [`all_reductions`].
pub fn run_gradient_suite(points: usize, h: f64, seed: u64) -> Result<Vec<SuiteRow>> {
    let mut rows = Vec::new();
    for cfg in all_reductions() {
        for target in [SuiteTarget::Contrast, SuiteTarget::Projection] {
            rows.push(check_combination(cfg, target, points, h, seed)?);
        }
    }
    Ok(rows)
}
