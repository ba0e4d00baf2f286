//! Salience rankings, semantic fields, decision boundaries, parameter
//! images and contrast-weight traces.

mod boundary;
mod field;

pub use boundary::{decision_boundary_grid, BoundaryGrid, GridRange};
pub use field::{parse_field, FieldExpr};

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{row_dots, Real, Tensor};
use crate::error::{Error, Result};
use crate::experiments::mnist::{MnistNet, TrainLog};
use crate::io::{fmt_g9, pgm, write_csv};
use crate::tversky::{salience, FeatureBank};

/// Named object vectors `[n, d]`. Object ids are row indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTable<T> {
    pub names: Vec<String>,
    pub vectors: Tensor<T>,
}

impl<T: Real> ObjectTable<T> {
    pub fn new(names: Vec<String>, vectors: Tensor<T>) -> Result<Self> {
        let (n, _) = vectors.dims2()?;
        if names.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: names.len(),
            });
        }
        Ok(Self { names, vectors })
    }

    /// Objects named `0`, `1`, ...
    pub fn numbered(vectors: Tensor<T>) -> Result<Self> {
        let n = vectors.dims2()?.0;
        Self::new((0..n).map(|i| i.to_string()).collect(), vectors)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownObject(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<&[T]> {
        Ok(self.vectors.row(self.index(name)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectScore {
    pub id: usize,
    pub object: String,
    pub score: f64,
}

/// Objects in ascending salience; equal saliences keep table order.
pub fn salience_rank<T: Real>(table: &ObjectTable<T>, bank: &FeatureBank<T>) -> Result<Vec<ObjectScore>> {
    let mut out = table
        .names
        .iter()
        .enumerate()
        .map(|(id, name)| {
            Ok(ObjectScore {
                id,
                object: name.clone(),
                score: salience(table.vectors.row(id), bank)?.as_f64(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.score.total_cmp(&b.score));
    Ok(out)
}

/// Top `top_k` objects by `Σ_{k ∈ field} f_k·x`, descending, ties by id.
/// The dot products are not masked, so scores may be negative.
pub fn rank_in_field<T: Real>(
    field: &BTreeSet<usize>,
    table: &ObjectTable<T>,
    bank: &FeatureBank<T>,
    top_k: usize,
) -> Result<Vec<ObjectScore>> {
    if let Some(&k) = field.iter().find(|&&k| k >= bank.num_features()) {
        return Err(Error::InvalidArgument(format!(
            "feature {k} outside a bank of {} features",
            bank.num_features()
        )));
    }
    let (n, d) = table.vectors.dims2()?;
    if d != bank.dim() {
        return Err(Error::DimensionMismatch {
            expected: bank.dim(),
            got: d,
        });
    }
    let dots = row_dots(table.vectors.data(), n, bank.vectors().data(), bank.num_features(), d);
    let kf = bank.num_features();
    let mut out: Vec<ObjectScore> = (0..n)
        .map(|id| {
            let score = field.iter().fold(T::zero(), |acc, &k| acc + dots[id * kf + k]);
            ObjectScore {
                id,
                object: table.names[id].clone(),
                score: score.as_f64(),
            }
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
    out.truncate(top_k);
    Ok(out)
}

pub fn write_scores(path: &Path, scores: &[ObjectScore]) -> Result<()> {
    write_csv(
        path,
        &["rank", "id", "object", "score"],
        scores
            .iter()
            .enumerate()
            .map(|(r, s)| [r.to_string(), s.id.to_string(), s.object.clone(), fmt_g9(s.score)]),
    )
}

/// Writes each row of `[n, ...]` as a `height x width` PGM named
/// `{prefix}{i:02}.pgm`.
pub fn export_images<T: Real>(
    images: &Tensor<T>,
    height: usize,
    width: usize,
    dir: &Path,
    prefix: &str,
) -> Result<Vec<PathBuf>> {
    let n = *images.shape().first().unwrap_or(&0);
    if n == 0 || images.len() != n * height * width {
        return Err(Error::InvalidArgument(format!(
            "tensor of shape {:?} cannot be viewed as {height}x{width} images",
            images.shape()
        )));
    }
    let per = height * width;
    let data = images.to_f64_vec();
    (0..n)
        .map(|i| {
            let path = dir.join(format!("{prefix}{i:02}.pgm"));
            pgm::write_pgm(&path, width, height, &data[i * per..(i + 1) * per])?;
            Ok(path)
        })
        .collect()
}

/// Image export for every input-shaped head parameter of `net`.
pub fn export_prototype_images<T: Real>(net: &MnistNet<T>, dir: &Path, tag: &str) -> Result<Vec<PathBuf>> {
    let params = net.image_params();
    if params.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "the {} model has no parameters shaped like its inputs",
            net.arch
        )));
    }
    let mut out = Vec::new();
    for (name, id) in params {
        let t = net.store.value(id);
        let (h, w) = (t.shape()[2], t.shape()[3]);
        out.extend(export_images(t, h, w, dir, &format!("{tag}-{name}"))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastPoint {
    pub epoch: usize,
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastTrace {
    pub points: Vec<ContrastPoint>,
}

impl ContrastTrace {
    pub fn final_alpha_exceeds_beta(&self) -> Option<bool> {
        self.points.last().map(|p| p.alpha > p.beta)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv(
            path,
            &["epoch", "theta", "alpha", "beta"],
            self.points
                .iter()
                .map(|p| [p.epoch.to_string(), fmt_g9(p.theta), fmt_g9(p.alpha), fmt_g9(p.beta)]),
        )
    }
}

/// `(θ, α, β)` per logged epoch.
pub fn trace_contrast_weights(log: &TrainLog) -> Result<ContrastTrace> {
    if log.epochs.is_empty() {
        return Err(Error::MissingSeries("training log has no epochs".into()));
    }
    let points = log
        .epochs
        .iter()
        .map(|e| {
            if [e.theta, e.alpha, e.beta].iter().any(|v| v.is_nan()) {
                return Err(Error::MissingSeries(format!(
                    "contrast weights missing at epoch {}",
                    e.epoch
                )));
            }
            Ok(ContrastPoint {
                epoch: e.epoch,
                theta: e.theta,
                alpha: e.alpha,
                beta: e.beta,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ContrastTrace { points })
}

/// Reads a `train_log.csv` written during training.
pub fn read_train_log(path: &Path) -> Result<TrainLog> {
    let mut r = csv::Reader::from_path(path)?;
    let epochs = r.deserialize().collect::<std::result::Result<_, _>>()?;
    Ok(TrainLog { epochs })
}
