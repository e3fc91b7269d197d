//! Joint Bayesian estimation of several related Gaussian graphical models
//! under the multiple graphical horseshoe prior.
//!
//! - [`g3p`]: the three-parameter Gamma distribution and its exact sampler.
//! - [`sampler`]: the Gibbs/Metropolis chain over precision matrices,
//!   shrinkage scales and the group correlation matrix.
//! - [`selection`]: median-probability and cut-model edge selection.
//! - [`simulate`]: scenario generators.
//! - [`metrics`]: structure-recovery and forecast scores.

pub mod error;
pub mod g3p;
pub mod io;
pub mod metrics;
pub mod quad;
pub mod sampler;
pub mod selection;
pub mod simulate;
pub mod specfun;

/// Symmetric edge indicator matrix with a false diagonal.
pub type Adjacency = nalgebra::DMatrix<bool>;

pub use error::{DataIoError, G3pError, MetricsError, SamplerError, SimulateError, SpecFunError, TableIoError};
pub use g3p::{G3pParams, G3pSampler, SamplerTables};
pub use sampler::{ChainConfig, ChainState, ChainTrace, GroupData};
pub use selection::{SelectionConfig, SelectionMode, SelectionResult};
pub use simulate::{Scenario, ScenarioKind, ScenarioSpec};
