use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tversky_core::experiments::{MnistArch, SweepConfig};
use tversky_core::io::config::RunConfig;
use tversky_core::tversky::{DifferenceReduction, IntersectionReduction, ReductionConfig};

#[derive(Debug, Parser)]
#[command(name = "tversky", version, about = "Tversky similarity experiments")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Overrides applied on top of the TOML config.
#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for this command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory with the MNIST IDX files.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_intersection)]
    pub intersection: Option<IntersectionReduction>,
    #[arg(long, global = true, value_parser = parse_difference)]
    pub difference: Option<DifferenceReduction>,
    #[arg(long, global = true)]
    pub normalize: Option<bool>,
}

fn parse_intersection(s: &str) -> Result<IntersectionReduction, String> {
    s.parse().map_err(|e: tversky_core::Error| e.to_string())
}

fn parse_difference(s: &str) -> Result<DifferenceReduction, String> {
    s.parse().map_err(|e: tversky_core::Error| e.to_string())
}

fn parse_arch(s: &str) -> Result<MnistArch, String> {
    s.parse().map_err(|e: tversky_core::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Grid {
    Desk,
    Full,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Constructed {
    Xor,
    Add,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score the hand-built XOR layer.
    XorConstruct,
    /// Score the hand-built 2-bit addition layer.
    AddConstruct,
    /// Gradient-descent XOR convergence sweep (resumable).
    XorSweep(SweepArgs),
    /// Train an MNIST classifier.
    TrainMnist(TrainArgs),
    /// Test accuracy of a saved MNIST model.
    Eval(ModelArgs),
    /// Rank objects by salience.
    Salience(ModelArgs),
    /// Evaluate a semantic-field expression and rank objects in the field.
    Field(FieldArgs),
    /// Decision regions of a constructed 2-d model.
    Boundary(BoundaryArgs),
    /// Export input-shaped parameters of a visual model as images.
    ProtoImages(ModelArgs),
    /// Finite-difference audit of every reduction combination.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Start from a named grid instead of the config's `[sweep]` table.
    #[arg(long, value_enum)]
    pub grid: Option<Grid>,
    #[arg(long)]
    pub seeds: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Print the grid size and exit.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_arch)]
    pub arch: Option<MnistArch>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Stop once test accuracy reaches this fraction.
    #[arg(long)]
    pub target_accuracy: Option<f64>,
    #[arg(long)]
    pub train_limit: Option<usize>,
    #[arg(long)]
    pub test_limit: Option<usize>,
    #[arg(long)]
    pub snapshot_every: Option<usize>,
}

/// A saved MNIST model, or a constructed one when no checkpoint is given.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Parameter file written by `train-mnist`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_parser = parse_arch)]
    pub arch: Option<MnistArch>,
    #[arg(long, value_enum, default_value = "xor")]
    pub model: Constructed,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub test_limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FieldArgs {
    /// e.g. `p0 & x3 - p1`
    pub expr: String,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct BoundaryArgs {
    #[arg(long, value_enum, default_value = "xor")]
    pub model: Constructed,
    #[arg(long)]
    pub resolution: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub points: Option<usize>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::XorConstruct => "xor-construct",
            Command::AddConstruct => "add-construct",
            Command::XorSweep(_) => "xor-sweep",
            Command::TrainMnist(_) => "train-mnist",
            Command::Eval(_) => "eval",
            Command::Salience(_) => "salience",
            Command::Field(_) => "field",
            Command::Boundary(_) => "boundary",
            Command::ProtoImages(_) => "proto-images",
            Command::Gradcheck(_) => "gradcheck",
        }
    }

    /// The model argument block, if this command takes one.
    fn model(&self) -> Option<&ModelArgs> {
        match self {
            Command::Eval(m) | Command::Salience(m) | Command::ProtoImages(m) => Some(m),
            Command::Field(f) => Some(&f.model),
            _ => None,
        }
    }
}

impl Cli {
    /// Loads the config and applies every flag override.
    ///
    /// Without `--config`, a command that reads a checkpoint picks up the
    /// resolved config saved next to it.
    pub fn resolve(&self) -> tversky_core::Result<RunConfig> {
        let c = &self.common;
        let beside_checkpoint = self
            .command
            .model()
            .and_then(|m| m.checkpoint.as_ref())
            .and_then(|p| p.parent())
            .map(|d| d.join(tversky_core::io::config::RESOLVED_CONFIG))
            .filter(|p| p.exists());
        let mut cfg = match (&c.config, beside_checkpoint) {
            (Some(p), _) => RunConfig::load(p)?,
            (None, Some(p)) => {
                let mut saved = RunConfig::load(&p)?;
                saved.output_dir = None;
                saved
            }
            (None, None) => RunConfig::default(),
        };
        if let Some(s) = c.seed {
            cfg.seed = s;
        }
        if let Some(o) = &c.out {
            cfg.output_dir = Some(o.clone());
        }
        if let Some(t) = c.threads {
            cfg.threads = t;
        }
        if let Some(d) = &c.data_dir {
            cfg.data_dir = Some(d.clone());
        }
        if c.intersection.is_some() || c.difference.is_some() || c.normalize.is_some() {
            let base = cfg.reduction.unwrap_or(cfg.mnist.reduction);
            let r = ReductionConfig::new(
                c.intersection.unwrap_or(base.intersection),
                c.difference.unwrap_or(base.difference),
            )
            .normalized(c.normalize.unwrap_or(base.normalize));
            cfg.reduction = Some(r);
            cfg.mnist.reduction = r;
        }
        match &self.command {
            Command::XorSweep(a) => {
                if let Some(grid) = a.grid {
                    let seeds = cfg.sweep.seeds;
                    let protocol = cfg.sweep.protocol;
                    cfg.sweep = match grid {
                        Grid::Desk => SweepConfig::desk(seeds),
                        Grid::Full => SweepConfig::full(),
                    };
                    cfg.sweep.protocol = protocol;
                }
                if let Some(s) = a.seeds {
                    cfg.sweep.seeds = s;
                }
                if let Some(e) = a.epochs {
                    cfg.sweep.protocol.epochs = e;
                }
            }
            Command::TrainMnist(a) => {
                let m = &mut cfg.mnist;
                m.arch = a.arch.unwrap_or(m.arch);
                m.epochs = a.epochs.unwrap_or(m.epochs);
                m.batch_size = a.batch_size.unwrap_or(m.batch_size);
                m.target_accuracy = a.target_accuracy.or(m.target_accuracy);
                m.train_limit = a.train_limit.or(m.train_limit);
                m.test_limit = a.test_limit.or(m.test_limit);
                m.snapshot_every = a.snapshot_every.unwrap_or(m.snapshot_every);
            }
            Command::Boundary(a) => {
                cfg.boundary.resolution = a.resolution.unwrap_or(cfg.boundary.resolution);
            }
            Command::Gradcheck(a) => {
                cfg.gradcheck.points = a.points.unwrap_or(cfg.gradcheck.points);
            }
            _ => {}
        }
        if let Some(m) = self.command.model() {
            cfg.mnist.arch = m.arch.unwrap_or(cfg.mnist.arch);
            cfg.top_k = m.top_k.unwrap_or(cfg.top_k);
            cfg.mnist.test_limit = m.test_limit.or(cfg.mnist.test_limit);
        }
        cfg.propagate_seed();
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(args: &[&str]) -> RunConfig {
        let mut argv = vec!["tversky"];
        argv.extend(args);
        Cli::try_parse_from(argv).unwrap().resolve().unwrap()
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 5\n[sweep]\nseeds = 3\n").unwrap();
        let p = path.to_str().unwrap();
        let cfg = resolve(&["--config", p, "xor-sweep"]);
        assert_eq!((cfg.seed, cfg.sweep.seeds, cfg.sweep.master_seed), (5, 3, 5));
        let cfg = resolve(&["--config", p, "--seed", "8", "xor-sweep", "--seeds", "7"]);
        assert_eq!(
            (cfg.seed, cfg.sweep.seeds, cfg.sweep.master_seed, cfg.mnist.seed),
            (8, 7, 8, 8)
        );
    }

    #[test]
    fn reduction_flags_fill_from_the_base() {
        let cfg = resolve(&["--difference", "substractmatch", "xor-construct"]);
        let r = cfg.reduction.unwrap();
        assert_eq!(r.difference, DifferenceReduction::SubstractMatch);
        assert_eq!(r.intersection, ReductionConfig::default().intersection);
        assert_eq!(cfg.mnist.reduction, r);
        assert!(resolve(&["xor-construct"]).reduction.is_none());
    }

    #[test]
    fn checkpoint_directory_config_is_reused() {
        let dir = tempfile::tempdir().unwrap();
        let mut saved = RunConfig::default();
        saved.mnist.arch = MnistArch::VisualTversky;
        saved.output_dir = Some("elsewhere".into());
        saved.echo(dir.path()).unwrap();
        let ckpt = dir.path().join("model.bin");
        let cfg = resolve(&["eval", "--checkpoint", ckpt.to_str().unwrap()]);
        assert_eq!(cfg.mnist.arch, MnistArch::VisualTversky);
        assert_eq!(cfg.output_dir, None);
        let cfg = resolve(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--arch", "tversky"]);
        assert_eq!(cfg.mnist.arch, MnistArch::Tversky);
    }

    #[test]
    fn named_grids() {
        assert_eq!(resolve(&["xor-sweep", "--grid", "full"]).sweep.cardinality(), 11_664);
        assert_eq!(
            resolve(&["xor-sweep", "--grid", "desk", "--seeds", "50"])
                .sweep
                .cardinality(),
            400
        );
    }
}
