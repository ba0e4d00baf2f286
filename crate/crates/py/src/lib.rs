//! Python bindings: similarity functions, projection layers, the
//! constructed models and semantic fields.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use tversky_core::engine::{ParamStore, Tensor};
use tversky_core::experiments::gradsuite::run_gradient_suite;
use tversky_core::experiments::mnist::{MnistArch, MnistNet};
use tversky_core::experiments::{build_constructed_add, build_constructed_xor, ConstructedModel};
use tversky_core::interp::{parse_field, rank_in_field, ObjectTable};
use tversky_core::layers::TverskyProjection;
use tversky_core::tversky::{self as tv, ContrastWeights, FeatureBank, ReductionConfig};

create_exception!(tversky, TverskyError, PyException);

fn err(e: tversky_core::Error) -> PyErr {
    TverskyError::new_err(format!("{}: {e}", e.kind()))
}

fn reduction(intersection: &str, difference: &str, normalize: bool) -> PyResult<ReductionConfig> {
    let i = intersection.parse().map_err(err)?;
    let d = difference.parse().map_err(err)?;
    Ok(ReductionConfig::new(i, d).normalized(normalize))
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<Tensor<f64>> {
    Tensor::from_rows(rows).map_err(err)
}

fn bank(rows: &[Vec<f64>]) -> PyResult<FeatureBank<f64>> {
    FeatureBank::from_rows(rows).map_err(err)
}

/// `θ·f(A∩B) - α·f(A-B) - β·f(B-A)` for two vectors.
#[pyfunction]
#[pyo3(signature = (a, b, features, theta=1.0, alpha=0.5, beta=0.5, intersection="product", difference="ignorematch", normalize=false))]
#[allow(clippy::too_many_arguments)]
fn contrast(
    a: Vec<f64>,
    b: Vec<f64>,
    features: Vec<Vec<f64>>,
    theta: f64,
    alpha: f64,
    beta: f64,
    intersection: &str,
    difference: &str,
    normalize: bool,
) -> PyResult<f64> {
    let cfg = reduction(intersection, difference, normalize)?;
    tv::tversky_contrast(
        &a,
        &b,
        &bank(&features)?,
        &ContrastWeights::new(theta, alpha, beta),
        &cfg,
    )
    .map_err(err)
}

#[pyfunction]
fn salience(x: Vec<f64>, features: Vec<Vec<f64>>) -> PyResult<f64> {
    tv::salience(&x, &bank(&features)?).map_err(err)
}

/// Indices of the features with a positive dot product with `x`.
#[pyfunction]
fn membership(x: Vec<f64>, features: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
    Ok(tv::feature_membership(&x, &bank(&features)?).map_err(err)?.members)
}

/// A projection layer holding its own parameters.
#[pyclass(module = "tversky")]
struct Projection {
    store: ParamStore<f64>,
    layer: TverskyProjection,
}

#[pymethods]
impl Projection {
    #[new]
    #[pyo3(signature = (prototypes, features, theta=1.0, alpha=0.5, beta=0.5, intersection="product", difference="ignorematch", normalize=false))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        prototypes: Vec<Vec<f64>>,
        features: Vec<Vec<f64>>,
        theta: f64,
        alpha: f64,
        beta: f64,
        intersection: &str,
        difference: &str,
        normalize: bool,
    ) -> PyResult<Self> {
        let cfg = reduction(intersection, difference, normalize)?;
        let mut store = ParamStore::new();
        let layer = TverskyProjection::new(
            &mut store,
            "projection",
            matrix(&prototypes)?,
            matrix(&features)?,
            ContrastWeights::new(theta, alpha, beta),
            cfg,
        )
        .map_err(err)?;
        Ok(Self { store, layer })
    }

    /// Similarities `[rows, prototypes]`.
    fn forward(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.layer.eval(&self.store, &matrix(&x)?).map_err(err)?.to_rows())
    }

    #[getter]
    fn prototypes(&self) -> Vec<Vec<f64>> {
        self.store.value(self.layer.prototypes.id).to_rows()
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        self.store.value(self.layer.similarity.features.id()).to_rows()
    }

    /// `(θ, α, β)`
    #[getter]
    fn weights(&self) -> (f64, f64, f64) {
        let w = self.layer.weights().read(&self.store);
        (w.theta, w.alpha, w.beta)
    }
}

/// One of the hand-built truth-table models.
#[pyclass(module = "tversky")]
struct Constructed {
    model: ConstructedModel,
}

#[pymethods]
impl Constructed {
    #[getter]
    fn name(&self) -> &'static str {
        self.model.name
    }

    #[getter]
    fn inputs(&self) -> Vec<Vec<f64>> {
        self.model.inputs.clone()
    }

    #[getter]
    fn truth(&self) -> Vec<usize> {
        self.model.truth.clone()
    }

    #[getter]
    fn prototypes(&self) -> Vec<Vec<f64>> {
        self.model.prototypes().to_rows()
    }

    fn scores(&self, inputs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.model.scores(&inputs).map_err(err)?.to_rows())
    }

    fn predict(&self, inputs: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        self.model.predict(&inputs).map_err(err)
    }

    fn membership(&self, x: Vec<f64>) -> PyResult<Vec<usize>> {
        Ok(self.model.membership(&x).map_err(err)?.members)
    }
}

#[pyfunction]
fn xor_model() -> Constructed {
    Constructed {
        model: build_constructed_xor(),
    }
}

#[pyfunction]
fn add_model() -> Constructed {
    Constructed {
        model: build_constructed_add(),
    }
}

/// Canonical form of a field expression.
#[pyfunction]
fn parse(expr: &str) -> PyResult<String> {
    Ok(parse_field(expr).map_err(err)?.to_string())
}

/// Selected features and `(object, score)` pairs.
type FieldResult = (Vec<usize>, Vec<(String, f64)>);

/// Evaluates `expr` over named objects and returns the selected features
/// with the objects ranked by their summed feature dot products.
#[pyfunction]
#[pyo3(signature = (expr, names, objects, features, top_k=10))]
fn field(
    expr: &str,
    names: Vec<String>,
    objects: Vec<Vec<f64>>,
    features: Vec<Vec<f64>>,
    top_k: usize,
) -> PyResult<FieldResult> {
    let table = ObjectTable::new(names, matrix(&objects)?).map_err(err)?;
    let bank = bank(&features)?;
    let set = parse_field(expr).and_then(|e| e.evaluate(&bank, &table)).map_err(err)?;
    let ranked = rank_in_field(&set, &table, &bank, top_k).map_err(err)?;
    Ok((
        set.into_iter().collect(),
        ranked.into_iter().map(|s| (s.object, s.score)).collect(),
    ))
}

/// Largest finite-difference error over every reduction configuration.
#[pyfunction]
#[pyo3(signature = (points=10, step=1e-6, seed=0))]
fn gradcheck(points: usize, step: f64, seed: u64) -> PyResult<f64> {
    let rows = run_gradient_suite(points, step, seed).map_err(err)?;
    Ok(rows.iter().map(|r| r.report.max_rel_error).fold(0.0, f64::max))
}

#[pyfunction]
fn mnist_parameters(arch: &str) -> PyResult<usize> {
    use rand::SeedableRng;
    let arch: MnistArch = arch.parse().map_err(err)?;
    let net: MnistNet<f32> = MnistNet::new(
        arch,
        ReductionConfig::default(),
        &mut rand_chacha::ChaCha8Rng::seed_from_u64(0),
    )
    .map_err(err)?;
    Ok(net.num_params())
}

#[pymodule]
#[pyo3(name = "tversky")]
fn tversky_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TverskyError", m.py().get_type::<TverskyError>())?;
    m.add("__version__", tversky_core::VERSION)?;
    m.add_class::<Projection>()?;
    m.add_class::<Constructed>()?;
    m.add_function(wrap_pyfunction!(contrast, m)?)?;
    m.add_function(wrap_pyfunction!(salience, m)?)?;
    m.add_function(wrap_pyfunction!(membership, m)?)?;
    m.add_function(wrap_pyfunction!(xor_model, m)?)?;
    m.add_function(wrap_pyfunction!(add_model, m)?)?;
    m.add_function(wrap_pyfunction!(parse, m)?)?;
    m.add_function(wrap_pyfunction!(field, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(mnist_parameters, m)?)?;
    Ok(())
}
