//! Experiment harnesses: constructed models, XOR sweeps and MNIST training.

pub mod constructed;
pub mod gradsuite;
pub mod init;
pub mod mnist;
pub mod sweep;
pub mod xor;

pub use constructed::{build_constructed_add, build_constructed_xor, ConstructedModel};
pub use init::InitMethod;
pub use mnist::{train_mnist, MnistArch, MnistNet, MnistProtocol, TrainLog};
pub use sweep::{aggregate_convergence, run_sweep, ConvergenceStats, GroupKey, MeanSe, SweepConfig};
pub use xor::{run_trial, TrialProtocol, TrialResult, TrialSpec};
