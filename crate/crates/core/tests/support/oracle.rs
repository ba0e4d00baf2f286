//! Brute-force contrast measures that materialize feature sets first.
//!
//! Deliberately shares no code with the library: dot products, norms,
//! membership and every `Ψ` are written out again here.

#![allow(dead_code)]

use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Psi {
    Min,
    Max,
    Product,
    Mean,
    Gmean,
    Softmin,
}

impl Psi {
    pub const ALL: [Psi; 6] = [Psi::Min, Psi::Max, Psi::Product, Psi::Mean, Psi::Gmean, Psi::Softmin];

    pub fn name(self) -> &'static str {
        match self {
            Psi::Min => "min",
            Psi::Max => "max",
            Psi::Product => "product",
            Psi::Mean => "mean",
            Psi::Gmean => "gmean",
            Psi::Softmin => "softmin",
        }
    }

    pub fn apply(self, x: f64, y: f64) -> f64 {
        match self {
            Psi::Min => {
                if x < y {
                    x
                } else {
                    y
                }
            }
            Psi::Max => {
                if x > y {
                    x
                } else {
                    y
                }
            }
            Psi::Product => x * y,
            Psi::Mean => (x + y) / 2.0,
            Psi::Gmean => {
                let p = x * y;
                (if p > 1e-12 { p } else { 1e-12 }).sqrt()
            }
            Psi::Softmin => {
                let (wx, wy) = ((-x).exp(), (-y).exp());
                (x * wx + y * wy) / (wx + wy)
            }
        }
    }
}

/// `k -> x·f_k` for every feature the object has.
pub type Set = BTreeMap<usize, f64>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn unit(x: &[f64]) -> Vec<f64> {
    let n = dot(x, x).sqrt();
    x.iter().map(|v| v / n).collect()
}

pub fn feature_set(x: &[f64], features: &[Vec<f64>]) -> Set {
    let mut s = Set::new();
    for (k, f) in features.iter().enumerate() {
        let m = dot(x, f);
        if m > 0.0 {
            s.insert(k, m);
        }
    }
    s
}

pub fn salience(x: &[f64], features: &[Vec<f64>]) -> f64 {
    feature_set(x, features).values().sum()
}

pub fn intersection(a: &Set, b: &Set, psi: Psi) -> f64 {
    a.iter().filter_map(|(k, &x)| b.get(k).map(|&y| psi.apply(x, y))).sum()
}

/// `f(A - B)`; with `subtract`, shared features where `A` exceeds `B` add
/// the excess.
pub fn difference(a: &Set, b: &Set, subtract: bool) -> f64 {
    let mut total = 0.0;
    for (k, &x) in a {
        match b.get(k) {
            None => total += x,
            Some(&y) if subtract && x > y => total += x - y,
            Some(_) => {}
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measures {
    pub common: f64,
    pub a_only: f64,
    pub b_only: f64,
}

pub fn measures(a: &[f64], b: &[f64], features: &[Vec<f64>], psi: Psi, subtract: bool, normalize: bool) -> Measures {
    let (a, b) = if normalize {
        (unit(a), unit(b))
    } else {
        (a.to_vec(), b.to_vec())
    };
    let (sa, sb) = (feature_set(&a, features), feature_set(&b, features));
    Measures {
        common: intersection(&sa, &sb, psi),
        a_only: difference(&sa, &sb, subtract),
        b_only: difference(&sb, &sa, subtract),
    }
}

pub fn contrast(m: Measures, theta: f64, alpha: f64, beta: f64) -> f64 {
    theta * m.common - alpha * m.a_only - beta * m.b_only
}
