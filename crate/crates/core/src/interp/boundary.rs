use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{ParamStore, Real, Tensor};
use crate::error::{Error, Result};
use crate::io::{fmt_g9, pgm, write_csv};
use crate::layers::TverskyProjection;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRange {
    pub lo: f64,
    pub hi: f64,
}

impl Default for GridRange {
    fn default() -> Self {
        Self { lo: -2.0, hi: 2.0 }
    }
}

impl GridRange {
    /// `n` evenly spaced points including both ends; one point is the
    /// midpoint.
    pub fn points(&self, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![0.5 * (self.lo + self.hi)],
            _ => (0..n)
                .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

/// Predicted class and per-class similarity at each cell of a square grid.
/// Cells are row-major with `y` as the row coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGrid {
    pub x: GridRange,
    pub y: GridRange,
    pub resolution: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub classes: Vec<usize>,
    /// `[resolution², p]`
    pub scores: Tensor<f64>,
}

impl BoundaryGrid {
    pub fn cells(&self) -> usize {
        self.classes.len()
    }

    /// Class of the cell nearest `(x, y)`.
    pub fn class_at(&self, x: f64, y: f64) -> usize {
        let nearest = |pts: &[f64], v: f64| {
            pts.iter()
                .enumerate()
                .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
                .map_or(0, |(i, _)| i)
        };
        let (j, i) = (nearest(&self.xs, x), nearest(&self.ys, y));
        self.classes[i * self.resolution + j]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let p = self.scores.shape()[1];
        let mut header = vec!["x".to_string(), "y".into(), "class".into()];
        header.extend((0..p).map(|c| format!("score_{c}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let r = self.resolution;
        write_csv(
            path,
            &header,
            (0..self.cells()).map(|c| {
                let mut row = vec![
                    fmt_g9(self.xs[c % r]),
                    fmt_g9(self.ys[c / r]),
                    self.classes[c].to_string(),
                ];
                row.extend(self.scores.row(c).iter().map(|&v| fmt_g9(v)));
                row
            }),
        )
    }

    /// Class map as a greyscale image, highest `y` on the top row.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let r = self.resolution;
        let pixels: Vec<f64> = (0..r)
            .rev()
            .flat_map(|i| (0..r).map(move |j| (i, j)))
            .map(|(i, j)| self.classes[i * r + j] as f64)
            .collect();
        pgm::write_pgm(path, r, r, &pixels)
    }
}

pub fn decision_boundary_grid<T: Real>(
    layer: &TverskyProjection,
    store: &ParamStore<T>,
    x: GridRange,
    y: GridRange,
    resolution: usize,
) -> Result<BoundaryGrid> {
    let d = layer.similarity.dim(store)?;
    if d != 2 {
        return Err(Error::InvalidArgument(format!(
            "decision boundaries need a 2-d input model, this one takes {d}-d inputs"
        )));
    }
    if resolution == 0 {
        return Err(Error::InvalidArgument("grid resolution must be positive".into()));
    }
    let (xs, ys) = (x.points(resolution), y.points(resolution));
    let mut points = Vec::with_capacity(resolution * resolution * 2);
    for &yv in &ys {
        for &xv in &xs {
            points.push(xv);
            points.push(yv);
        }
    }
    let inputs = Tensor::from_f64(vec![resolution * resolution, 2], &points)?;
    let scores = layer.eval(store, &inputs)?;
    Ok(BoundaryGrid {
        x,
        y,
        resolution,
        xs,
        ys,
        classes: scores.argmax_rows(),
        scores: scores.cast(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::build_constructed_xor;

    #[test]
    fn xor_corners() {
        let m = build_constructed_xor();
        let g = decision_boundary_grid(&m.layer, &m.store, GridRange::default(), GridRange::default(), 401).unwrap();
        assert_eq!(g.cells(), 401 * 401);
        for (x, want) in m.inputs.iter().zip(&m.truth) {
            assert_eq!(g.class_at(x[0], x[1]), *want);
        }
    }

    #[test]
    fn single_cell() {
        let m = build_constructed_xor();
        let g = decision_boundary_grid(&m.layer, &m.store, GridRange::default(), GridRange::default(), 1).unwrap();
        assert_eq!(g.cells(), 1);
        assert_eq!(g.xs, vec![0.0]);
    }

    #[test]
    fn rejects_other_dims() {
        let m = crate::experiments::build_constructed_add();
        assert!(decision_boundary_grid(&m.layer, &m.store, GridRange::default(), GridRange::default(), 3).is_err());
    }
}
