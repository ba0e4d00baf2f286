//! Grid sweeps over XOR training trials and their aggregation.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::OpenOptions;
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::init::InitMethod;
use super::xor::{canonical_trial, run_trial, TrialProtocol, TrialResult, TrialSpec};
use crate::error::{Error, Result};
use crate::io::format::fmt_g9;
use crate::io::seed::short_hash;
use crate::io::write_atomic;
use crate::tversky::{DifferenceReduction, IntersectionReduction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub intersections: Vec<IntersectionReduction>,
    pub differences: Vec<DifferenceReduction>,
    pub normalize: Vec<bool>,
    pub num_features: Vec<usize>,
    pub prototype_inits: Vec<InitMethod>,
    pub feature_inits: Vec<InitMethod>,
    /// Seeds per grid point, indexed `0..seeds`.
    pub seeds: u64,
    /// Taken from the run config's master seed.
    #[serde(skip)]
    pub master_seed: u64,
    pub protocol: TrialProtocol,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self::desk(50)
    }
}

impl SweepConfig {
    /// Every level of every factor, 9 seeds each.
    pub fn full() -> Self {
        Self {
            intersections: IntersectionReduction::ALL.to_vec(),
            differences: DifferenceReduction::ALL.to_vec(),
            normalize: vec![false, true],
            num_features: vec![1, 2, 4, 8, 16, 32],
            prototype_inits: InitMethod::ALL.to_vec(),
            feature_inits: InitMethod::ALL.to_vec(),
            seeds: 9,
            master_seed: 0,
            protocol: TrialProtocol::default(),
        }
    }

    /// {product, min} x both differences x {1, 16} features, uniform init,
    /// no normalization.
    pub fn desk(seeds: u64) -> Self {
        Self {
            intersections: vec![IntersectionReduction::Product, IntersectionReduction::Min],
            differences: DifferenceReduction::ALL.to_vec(),
            normalize: vec![false],
            num_features: vec![1, 16],
            prototype_inits: vec![InitMethod::Uniform],
            feature_inits: vec![InitMethod::Uniform],
            seeds,
            master_seed: 0,
            protocol: TrialProtocol::default(),
        }
    }

    pub fn cardinality(&self) -> usize {
        self.intersections.len()
            * self.differences.len()
            * self.normalize.len()
            * self.num_features.len()
            * self.prototype_inits.len()
            * self.feature_inits.len()
            * self.seeds as usize
    }

    /// The full cross product in a fixed order.
    pub fn trials(&self) -> Vec<TrialSpec> {
        let mut out = Vec::with_capacity(self.cardinality());
        for &intersection in &self.intersections {
            for &difference in &self.differences {
                for &normalize in &self.normalize {
                    for &num_features in &self.num_features {
                        for &prototype_init in &self.prototype_inits {
                            for &feature_init in &self.feature_inits {
                                for seed_index in 0..self.seeds {
                                    out.push(TrialSpec {
                                        intersection,
                                        difference,
                                        normalize,
                                        num_features,
                                        prototype_init,
                                        feature_init,
                                        seed_index,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn trial_hash(&self, spec: &TrialSpec) -> String {
        short_hash(&canonical_trial(spec, &self.protocol, self.master_seed))
    }
}

pub const RESULT_HEADER: [&str; 15] = [
    "config_hash",
    "intersection",
    "difference",
    "normalize",
    "num_features",
    "prototype_init",
    "feature_init",
    "seed_index",
    "seed",
    "epochs",
    "final_loss",
    "final_acc",
    "best_acc",
    "converged",
    "wall_ms",
];

pub fn result_record(r: &TrialResult) -> [String; 15] {
    [
        r.config_hash.clone(),
        r.intersection.to_string(),
        r.difference.to_string(),
        r.normalize.to_string(),
        r.num_features.to_string(),
        r.prototype_init.to_string(),
        r.feature_init.to_string(),
        r.seed_index.to_string(),
        r.seed.to_string(),
        r.epochs.to_string(),
        fmt_g9(r.final_loss),
        fmt_g9(r.final_acc),
        fmt_g9(r.best_acc),
        r.converged.to_string(),
        fmt_g9(r.wall_ms),
    ]
}

/// Reads a results CSV. Rows that fail to parse (for example a line cut
/// short by an interrupted run) are skipped.
pub fn read_results(path: &Path) -> Result<Vec<TrialResult>> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.deserialize().filter_map(|r| r.ok()).collect())
}

pub fn write_results(path: &Path, results: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULT_HEADER)?;
    for r in results {
        w.write_record(result_record(r))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

/// Runs every trial of `sweep` on `threads` workers.
///
/// With a `checkpoint` path, finished trials are appended to that CSV as
/// they complete, trials already present are not re-run, and on success
/// the file is rewritten in grid order. Results come back in grid order.
pub fn run_sweep(sweep: &SweepConfig, threads: usize, checkpoint: Option<&Path>) -> Result<Vec<TrialResult>> {
    let specs = sweep.trials();
    let mut done: HashMap<String, TrialResult> = HashMap::new();
    if let Some(path) = checkpoint.filter(|p| p.exists()) {
        for r in read_results(path)? {
            done.insert(r.config_hash.clone(), r);
        }
    }
    let pending: Vec<(String, TrialSpec)> = specs
        .iter()
        .map(|s| (sweep.trial_hash(s), *s))
        .filter(|(h, _)| !done.contains_key(h))
        .collect();

    let sink = match checkpoint {
        Some(path) => {
            let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
            let file = OpenOptions::new().create(true).append(true).open(path)?;
            let mut w = csv::Writer::from_writer(file);
            if fresh {
                w.write_record(RESULT_HEADER)?;
                w.flush()?;
            }
            Some(Mutex::new(w))
        }
        None => None,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let fresh: Vec<TrialResult> = pool.install(|| {
        pending
            .par_iter()
            .map(|(_, spec)| {
                let r = run_trial(spec, &sweep.protocol, sweep.master_seed)?;
                if let Some(sink) = &sink {
                    let mut w = sink.lock().expect("writer lock");
                    w.write_record(result_record(&r))?;
                    w.flush()?;
                }
                Ok(r)
            })
            .collect::<Result<_>>()
    })?;
    drop(sink);

    for r in fresh {
        done.insert(r.config_hash.clone(), r);
    }
    let ordered: Vec<TrialResult> = specs
        .iter()
        .map(|s| done.remove(&sweep.trial_hash(s)).expect("every trial ran"))
        .collect();
    if let Some(path) = checkpoint {
        write_results(path, &ordered)?;
    }
    Ok(ordered)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Intersection,
    Difference,
    Normalize,
    NumFeatures,
    PrototypeInit,
    FeatureInit,
}

impl GroupKey {
    pub const ALL: [GroupKey; 6] = [
        GroupKey::Intersection,
        GroupKey::Difference,
        GroupKey::Normalize,
        GroupKey::NumFeatures,
        GroupKey::PrototypeInit,
        GroupKey::FeatureInit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GroupKey::Intersection => "intersection",
            GroupKey::Difference => "difference",
            GroupKey::Normalize => "normalize",
            GroupKey::NumFeatures => "num_features",
            GroupKey::PrototypeInit => "prototype_init",
            GroupKey::FeatureInit => "feature_init",
        }
    }

    pub fn value(self, r: &TrialResult) -> String {
        match self {
            GroupKey::Intersection => r.intersection.to_string(),
            GroupKey::Difference => r.difference.to_string(),
            GroupKey::Normalize => r.normalize.to_string(),
            GroupKey::NumFeatures => r.num_features.to_string(),
            GroupKey::PrototypeInit => r.prototype_init.to_string(),
            GroupKey::FeatureInit => r.feature_init.to_string(),
        }
    }

    fn sort_value(self, r: &TrialResult) -> (usize, String) {
        match self {
            GroupKey::NumFeatures => (r.num_features, String::new()),
            _ => (0, self.value(r)),
        }
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GroupKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown group key '{s}'")))
    }
}

/// Mean and standard error `s / √n` with the `n - 1` sample deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    /// A single observation has standard error 0; no observations give NaN.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self { mean, se: 0.0, n };
        }
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        Self {
            mean,
            se: sd / (n as f64).sqrt(),
            n,
        }
    }
}

impl fmt::Display for MeanSe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.se)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStats {
    pub keys: Vec<(GroupKey, String)>,
    pub n: usize,
    /// Over finite losses only.
    pub loss: MeanSe,
    pub acc: MeanSe,
    pub best_acc: MeanSe,
    pub p_conv: MeanSe,
    pub nan_losses: usize,
}

impl ConvergenceStats {
    pub fn of(keys: Vec<(GroupKey, String)>, group: &[&TrialResult]) -> Result<Self> {
        if group.is_empty() {
            return Err(Error::EmptyGroup);
        }
        let losses: Vec<f64> = group.iter().map(|r| r.final_loss).filter(|v| v.is_finite()).collect();
        let collect = |f: fn(&TrialResult) -> f64| group.iter().map(|r| f(r)).collect::<Vec<_>>();
        Ok(Self {
            keys,
            n: group.len(),
            nan_losses: group.len() - losses.len(),
            loss: MeanSe::of(&losses),
            acc: MeanSe::of(&collect(|r| r.final_acc)),
            best_acc: MeanSe::of(&collect(|r| r.best_acc)),
            p_conv: MeanSe::of(&collect(|r| f64::from(u8::from(r.converged)))),
        })
    }

    pub fn key(&self, k: GroupKey) -> Option<&str> {
        self.keys.iter().find(|(g, _)| *g == k).map(|(_, v)| v.as_str())
    }
}

/// Marginal statistics for each distinct combination of `keys`, in
/// ascending key order. An empty key list aggregates everything.
pub fn aggregate_convergence(results: &[TrialResult], keys: &[GroupKey]) -> Result<Vec<ConvergenceStats>> {
    if results.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let mut groups: BTreeMap<Vec<(usize, String)>, Vec<&TrialResult>> = BTreeMap::new();
    for r in results {
        let sort: Vec<_> = keys.iter().map(|k| k.sort_value(r)).collect();
        groups.entry(sort).or_default().push(r);
    }
    groups
        .into_values()
        .map(|group| {
            let labels = keys.iter().map(|&k| (k, k.value(group[0]))).collect();
            ConvergenceStats::of(labels, &group)
        })
        .collect()
}

/// One row per group: key columns, then `n`, mean/SE pairs and NaN count.
pub fn write_convergence(path: &Path, keys: &[GroupKey], stats: &[ConvergenceStats]) -> Result<()> {
    let mut header: Vec<&str> = keys.iter().map(|k| k.as_str()).collect();
    header.extend([
        "n",
        "p_conv",
        "p_conv_se",
        "loss",
        "loss_se",
        "acc",
        "acc_se",
        "best_acc",
        "best_acc_se",
        "nan_losses",
    ]);
    let rows = stats.iter().map(|s| {
        let mut row: Vec<String> = keys.iter().map(|&k| s.key(k).unwrap_or_default().to_string()).collect();
        row.push(s.n.to_string());
        for m in [s.p_conv, s.loss, s.acc, s.best_acc] {
            row.push(fmt_g9(m.mean));
            row.push(fmt_g9(m.se));
        }
        row.push(s.nan_losses.to_string());
        row
    });
    crate::io::write_csv(path, &header, rows)
}

/// Looks up the one group whose key values match `want`.
pub fn find_group<'a>(stats: &'a [ConvergenceStats], want: &[(GroupKey, &str)]) -> Option<&'a ConvergenceStats> {
    stats.iter().find(|s| want.iter().all(|(k, v)| s.key(*k) == Some(*v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_grid_cardinality() {
        assert_eq!(SweepConfig::full().cardinality(), 11_664);
        assert_eq!(SweepConfig::full().trials().len(), 11_664);
    }

    #[test]
    fn desk_grid_cardinality() {
        assert_eq!(SweepConfig::desk(50).cardinality(), 400);
    }

    #[test]
    fn mean_se_small_cases() {
        assert!(MeanSe::of(&[]).mean.is_nan());
        assert_eq!(
            MeanSe::of(&[2.0]),
            MeanSe {
                mean: 2.0,
                se: 0.0,
                n: 1
            }
        );
        let m = MeanSe::of(&[1.0, 1.0, 1.0, 1.0]);
        assert_eq!((m.mean, m.se), (1.0, 0.0));
        let m = MeanSe::of(&[0.0, 1.0]);
        assert!((m.se - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_results_rejected() {
        assert!(matches!(aggregate_convergence(&[], &[]), Err(Error::EmptyGroup)));
    }
}
