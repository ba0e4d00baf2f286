use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::engine::{Real, Tensor};
use crate::error::{Error, Result};

/// Random initialization of a `[rows, d]` matrix.
///
/// * `uniform`: `U(-1/√d, 1/√d)`
/// * `normal`: `N(0, 1/d)`
/// * `orthogonal`: unit-norm rows, mutually orthogonal within each block of
///   `d` rows (sign-corrected QR of a Gaussian matrix)
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMethod {
    Uniform,
    Normal,
    Orthogonal,
}

impl InitMethod {
    pub const ALL: [InitMethod; 3] = [InitMethod::Uniform, InitMethod::Normal, InitMethod::Orthogonal];

    pub fn as_str(self) -> &'static str {
        match self {
            InitMethod::Uniform => "uniform",
            InitMethod::Normal => "normal",
            InitMethod::Orthogonal => "orthogonal",
        }
    }

    pub fn sample<T: Real, R: Rng + ?Sized>(self, rows: usize, d: usize, rng: &mut R) -> Tensor<T> {
        let scale = 1.0 / (d as f64).sqrt();
        let data: Vec<f64> = match self {
            InitMethod::Uniform => {
                let u = Uniform::new(-scale, scale).expect("finite bounds");
                (0..rows * d).map(|_| u.sample(rng)).collect()
            }
            InitMethod::Normal => (0..rows * d)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            InitMethod::Orthogonal => {
                let mut out = Vec::with_capacity(rows * d);
                while out.len() < rows * d {
                    let q = orthogonal_block(d, rng);
                    let take = (rows * d - out.len()).min(d * d);
                    // rows of q, row-major
                    for i in 0..d {
                        for j in 0..d {
                            out.push(q[(i, j)]);
                        }
                    }
                    out.truncate(out.len() - (d * d - take));
                }
                out
            }
        };
        Tensor::from_f64(vec![rows, d], &data).expect("shape matches data")
    }
}

/// Haar-distributed `d × d` orthogonal matrix.
fn orthogonal_block<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

impl fmt::Display for InitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown init method '{s}'")))
    }
}
