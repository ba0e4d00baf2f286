use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{MaskTrace, Real};
use crate::error::Error;

/// Aggregator `Ψ` applied to the two measures of a shared feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntersectionReduction {
    Min,
    Max,
    Product,
    Mean,
    Gmean,
    Softmin,
}

impl IntersectionReduction {
    pub const ALL: [Self; 6] = [
        Self::Min,
        Self::Max,
        Self::Product,
        Self::Mean,
        Self::Gmean,
        Self::Softmin,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Min => "min",
            Self::Max => "max",
            Self::Product => "product",
            Self::Mean => "mean",
            Self::Gmean => "gmean",
            Self::Softmin => "softmin",
        }
    }
}

/// Measure of `A - B`: features absent from `B` only, or additionally the
/// excess of `A` over `B` on shared features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DifferenceReduction {
    #[serde(rename = "ignorematch")]
    IgnoreMatch,
    #[serde(rename = "substractmatch")]
    SubstractMatch,
}

impl DifferenceReduction {
    pub const ALL: [Self; 2] = [Self::IgnoreMatch, Self::SubstractMatch];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::IgnoreMatch => "ignorematch",
            Self::SubstractMatch => "substractmatch",
        }
    }
}

macro_rules! str_enum {
    ($t:ty) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $t {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self, Error> {
                Self::ALL
                    .into_iter()
                    .find(|v| v.as_str() == s)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown {} '{s}'", stringify!($t))))
            }
        }
    };
}

str_enum!(IntersectionReduction);
str_enum!(DifferenceReduction);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReductionConfig {
    pub intersection: IntersectionReduction,
    pub difference: DifferenceReduction,
    /// L2-normalize objects and prototypes (never features) before measuring.
    pub normalize: bool,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        Self {
            intersection: IntersectionReduction::Product,
            difference: DifferenceReduction::IgnoreMatch,
            normalize: false,
        }
    }
}

impl ReductionConfig {
    pub fn new(intersection: IntersectionReduction, difference: DifferenceReduction) -> Self {
        Self {
            intersection,
            difference,
            normalize: false,
        }
    }

    pub fn normalized(mut self, normalize: bool) -> Self {
        self.normalize = normalize;
        self
    }
}

/// Floor on `x * y` under the square root of the geometric mean.
pub const GMEAN_EPS: f64 = 1e-12;

/// Temperature of the Boltzmann-weighted softmin.
pub const SOFTMIN_TAU: f64 = 1.0;

fn sigmoid<T: Real>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

/// `Ψ(x, y)`. Every variant depends only on the unordered pair, so the
/// result is bitwise symmetric.
pub fn psi<T: Real>(r: IntersectionReduction, x: T, y: T) -> T {
    let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
    match r {
        IntersectionReduction::Min => lo,
        IntersectionReduction::Max => hi,
        IntersectionReduction::Product => x * y,
        IntersectionReduction::Mean => (x + y) / T::lit(2.0),
        IntersectionReduction::Gmean => (x * y).max(T::lit(GMEAN_EPS)).sqrt(),
        IntersectionReduction::Softmin => {
            let gap = (hi - lo) / T::lit(SOFTMIN_TAU);
            hi - (hi - lo) * sigmoid(gap)
        }
    }
}

/// Partial derivatives `(dΨ/dx, dΨ/dy)`. Ties of min/max split evenly.
pub fn psi_grad<T: Real>(r: IntersectionReduction, x: T, y: T) -> (T, T) {
    let half = T::lit(0.5);
    match r {
        IntersectionReduction::Min => match x.partial_cmp(&y) {
            Some(std::cmp::Ordering::Less) => (T::one(), T::zero()),
            Some(std::cmp::Ordering::Greater) => (T::zero(), T::one()),
            _ => (half, half),
        },
        IntersectionReduction::Max => match x.partial_cmp(&y) {
            Some(std::cmp::Ordering::Greater) => (T::one(), T::zero()),
            Some(std::cmp::Ordering::Less) => (T::zero(), T::one()),
            _ => (half, half),
        },
        IntersectionReduction::Product => (y, x),
        IntersectionReduction::Mean => (half, half),
        IntersectionReduction::Gmean => {
            let p = x * y;
            if p > T::lit(GMEAN_EPS) {
                let root = p.sqrt();
                (y / (root + root), x / (root + root))
            } else {
                (T::zero(), T::zero())
            }
        }
        IntersectionReduction::Softmin => {
            let tau = T::lit(SOFTMIN_TAU);
            let (lo_is_x, lo, hi) = if x <= y { (true, x, y) } else { (false, y, x) };
            let d = hi - lo;
            let s = sigmoid(d / tau);
            let d_lo = s + d / tau * s * (T::one() - s);
            let d_hi = T::one() - d_lo;
            if lo_is_x {
                (d_lo, d_hi)
            } else {
                (d_hi, d_lo)
            }
        }
    }
}

/// The three contrast-model measures for one (object, prototype) pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairMeasures<T> {
    /// `f(A ∩ B)`
    pub common: T,
    /// `f(A - B)`
    pub a_only: T,
    /// `f(B - A)`
    pub b_only: T,
}

fn needs_gap_trace(cfg: &ReductionConfig) -> bool {
    matches!(
        cfg.intersection,
        IntersectionReduction::Min | IntersectionReduction::Max
    ) || cfg.difference == DifferenceReduction::SubstractMatch
}

/// Contribution of one feature to `f(A - B)` given the measures `x = a·f`,
/// `y = b·f`, and its partial derivatives.
#[inline]
pub(crate) fn difference_term<T: Real>(mode: DifferenceReduction, x: T, y: T) -> (T, T, T) {
    let zero = T::zero();
    let mut value = zero;
    let (mut dx, mut dy) = (zero, zero);
    if x > zero && y <= zero {
        value += x;
        dx = T::one();
    }
    if mode == DifferenceReduction::SubstractMatch && y > zero && x > y {
        value += x - y;
        dx = T::one();
        dy = -T::one();
    }
    (value, dx, dy)
}

/// Measures from precomputed per-feature dot products `a_dots[k] = a·f_k`
/// and `b_dots[k] = b·f_k`, summed in ascending feature order.
pub fn pair_measures<T: Real>(
    a_dots: &[T],
    b_dots: &[T],
    cfg: &ReductionConfig,
    mut trace: Option<&mut MaskTrace>,
) -> PairMeasures<T> {
    let zero = T::zero();
    let gap = needs_gap_trace(cfg);
    let mut m = PairMeasures::default();
    for (&x, &y) in a_dots.iter().zip(b_dots) {
        if let Some(t) = trace.as_deref_mut() {
            t.record(x.as_f64(), x > zero);
            t.record(y.as_f64(), y > zero);
            if gap {
                t.record((x - y).as_f64(), x > y);
            }
        }
        if x > zero && y > zero {
            m.common += psi(cfg.intersection, x, y);
        }
        m.a_only += difference_term(cfg.difference, x, y).0;
        m.b_only += difference_term(cfg.difference, y, x).0;
    }
    m
}

/// Back-propagates upstream gradients of the three measures into the dot
/// products. Indicators are treated as constants.
pub(crate) fn pair_measures_backward<T: Real>(
    a_dots: &[T],
    b_dots: &[T],
    cfg: &ReductionConfig,
    upstream: PairMeasures<T>,
    da: &mut [T],
    db: &mut [T],
) {
    let zero = T::zero();
    for k in 0..a_dots.len() {
        let (x, y) = (a_dots[k], b_dots[k]);
        if x > zero && y > zero && upstream.common != zero {
            let (gx, gy) = psi_grad(cfg.intersection, x, y);
            da[k] += upstream.common * gx;
            db[k] += upstream.common * gy;
        }
        let (_, dx, dy) = difference_term(cfg.difference, x, y);
        da[k] += upstream.a_only * dx;
        db[k] += upstream.a_only * dy;
        let (_, dy2, dx2) = difference_term(cfg.difference, y, x);
        da[k] += upstream.b_only * dx2;
        db[k] += upstream.b_only * dy2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_values_on_shared_pair() {
        let (x, y) = (0.5_f64, 0.25_f64);
        assert_eq!(psi(IntersectionReduction::Min, x, y), 0.25);
        assert_eq!(psi(IntersectionReduction::Max, x, y), 0.5);
        assert_eq!(psi(IntersectionReduction::Product, x, y), 0.125);
        assert_eq!(psi(IntersectionReduction::Mean, x, y), 0.375);
        assert!((psi(IntersectionReduction::Gmean, x, y) - 0.125_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn softmin_matches_boltzmann_form() {
        for &(x, y) in &[(0.5_f64, 0.25), (3.0, -1.0), (2.0, 2.0), (0.1, 7.5)] {
            let w = |v: f64| (-v).exp();
            let direct = (x * w(x) + y * w(y)) / (w(x) + w(y));
            let got = psi(IntersectionReduction::Softmin, x, y);
            assert!((got - direct).abs() < 1e-14, "{x} {y}: {got} vs {direct}");
            assert!(got >= x.min(y) && got <= x.max(y));
        }
    }

    #[test]
    fn psi_grad_matches_central_differences() {
        let h = 1e-6;
        for r in IntersectionReduction::ALL {
            for &(x, y) in &[(0.7_f64, 0.3), (0.2, 1.1), (1.5, 1.4)] {
                let (gx, gy) = psi_grad(r, x, y);
                let fx = (psi(r, x + h, y) - psi(r, x - h, y)) / (2.0 * h);
                let fy = (psi(r, x, y + h) - psi(r, x, y - h)) / (2.0 * h);
                assert!((gx - fx).abs() < 1e-7, "{r} dx at ({x},{y}): {gx} vs {fx}");
                assert!((gy - fy).abs() < 1e-7, "{r} dy at ({x},{y}): {gy} vs {fy}");
            }
        }
    }

    #[test]
    fn gmean_is_finite_at_zero_product() {
        let v = psi(IntersectionReduction::Gmean, 0.0_f32, 0.0);
        assert!(v.is_finite() && v > 0.0);
        assert_eq!(psi_grad(IntersectionReduction::Gmean, 0.0_f32, 0.0), (0.0, 0.0));
    }

    #[test]
    fn reduction_names_round_trip() {
        for r in IntersectionReduction::ALL {
            assert_eq!(r.as_str().parse::<IntersectionReduction>().unwrap(), r);
        }
        for d in DifferenceReduction::ALL {
            assert_eq!(d.to_string().parse::<DifferenceReduction>().unwrap(), d);
        }
        assert!("median".parse::<IntersectionReduction>().is_err());
    }
}
