//! Performance models for loop-body-split tensor n-mode product kernels.
//!
//! The crate predicts how splitting the inner product of a sum-factorization
//! kernel into independent partial sums changes FMA throughput:
//!
//! * [`depmodel`]: the dependency-ratio model and its inversion from measured GFLOPS.
//! * [`pipesim`]: a cycle-level simulator of dependent FMA streams used as an oracle.
//! * [`baselines`]: Roofline and ECM estimates for comparison.
//! * [`dataset`] and [`gbt`]: measurement ingestion and a gradient-boosted
//!   learner that predicts the ratio from code and hardware features.
//! * [`cli`] and [`desk`]: the command-line workflows and the synthetic
//!   end-to-end evaluation pipeline.

pub mod baselines;
pub mod cli;
pub mod dataset;
pub mod depmodel;
pub mod desk;
pub mod error;
pub mod gbt;
pub mod hw;
pub mod kernel;
pub mod pipesim;
pub mod report;

pub use error::{Error, Result};
pub use hw::{HardwareDescriptor, HardwareRegistry, OverlapHypothesis};
pub use kernel::{EnumMode, KernelSpec, SplitConfig};
