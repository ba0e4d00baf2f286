//! TOML run configuration.
//!
//! Every key has a default, unknown keys are rejected, and the resolved
//! configuration is written next to each command's outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::error::{Error, Result};
use crate::experiments::mnist::MnistProtocol;
use crate::experiments::sweep::SweepConfig;
use crate::interp::GridRange;
use crate::tversky::ReductionConfig;

/// Environment variable naming the MNIST directory.
pub const MNIST_ENV: &str = "TVERSKY_MNIST_DIR";

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryConfig {
    pub x: GridRange,
    pub y: GridRange,
    pub resolution: usize,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self {
            x: GridRange::default(),
            y: GridRange::default(),
            resolution: 401,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    /// Random points per reduction combination.
    pub points: usize,
    pub step: f64,
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            points: 100,
            step: 1e-6,
            tolerance: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream derives from it.
    pub seed: u64,
    /// Defaults to `$TVERSKY_OUT/<command>` or `runs/<command>`.
    pub output_dir: Option<PathBuf>,
    /// Worker threads for sweeps; 0 means one per core.
    pub threads: usize,
    /// Directory holding the four MNIST IDX files. Defaults to
    /// `$TVERSKY_MNIST_DIR` or `data/mnist`.
    pub data_dir: Option<PathBuf>,
    /// Overrides the built-in reductions of the constructed models.
    pub reduction: Option<ReductionConfig>,
    pub sweep: SweepConfig,
    pub mnist: MnistProtocol,
    pub boundary: BoundaryConfig,
    pub gradcheck: GradcheckConfig,
    pub top_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: None,
            threads: 0,
            data_dir: None,
            reduction: None,
            sweep: SweepConfig::default(),
            mnist: MnistProtocol::default(),
            boundary: BoundaryConfig::default(),
            gradcheck: GradcheckConfig::default(),
            top_k: 10,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.propagate_seed();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = super::read_file(path)?;
        let text = String::from_utf8(bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Copies the master seed into every sub-configuration.
    pub fn propagate_seed(&mut self) {
        self.sweep.master_seed = self.seed;
        self.mnist.seed = self.seed;
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn threads(&self) -> usize {
        if self.threads > 0 {
            self.threads
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }

    pub fn output_dir(&self, command: &str) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| super::default_out_root().join(command))
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| {
            std::env::var_os(MNIST_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("data/mnist"))
        })
    }

    /// Writes the resolved config and the tool version into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        let text = format!("# tversky {}\n{}", crate::VERSION, self.to_toml());
        write_atomic(&dir.join(RESOLVED_CONFIG), text.as_bytes())?;
        write_atomic(&dir.join("version.txt"), format!("{}\n", crate::VERSION).as_bytes())
    }
}
