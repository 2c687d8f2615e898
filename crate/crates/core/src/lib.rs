//! Anti-causal invariant representation learning on finite and synthetic data.
//!
//! The crate is organised bottom-up:
//!
//! - [`causal_space`]: finite structural causal models over `(Y, E, X)`, exact
//!   causal kernels, product spaces and the kernel property checks.
//! - [`intervention`]: hard/soft interventional kernels and data-level
//!   intervention operators used by the training regularizer and metrics.
//! - [`dataset`]: seeded generators for the four synthetic environment families
//!   and the on-disk dataset container.
//! - [`representation`]: the two-level model (low-level encoder, high-level
//!   abstraction, predictor head) with analytic backpropagation.
//! - [`objective`]: worst-environment risk plus the environment-independence
//!   and causal-consistency regularizers.
//! - [`metrics`]: accuracy, environment independence, low-level invariance and
//!   intervention robustness.
//! - [`trainer`]: the joint min-max optimisation loop.

pub mod causal_space;
pub mod dataset;
mod error;
pub mod intervention;
pub mod metrics;
pub mod objective;
pub mod representation;
pub mod rng;
pub mod tol;
pub mod trainer;

pub use error::{Error, Result};

pub use causal_space::{
    CausalKernel, Event, FiniteScm, KernelMode, Omega, ProductCausalSpace, ScmSpec,
};
pub use dataset::{EnvironmentDataset, Family, GenConfig};
pub use intervention::{DataIntervention, DataOp, Intervention, InvarianceReport};
pub use metrics::MetricsReport;
pub use objective::ObjectiveBreakdown;
pub use representation::{AciaModel, Arch, Gradients};
pub use trainer::{TrainConfig, TrainHistory};

/// Version string recorded in every artifact header.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
