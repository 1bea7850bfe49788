//! EM-EP estimation of clustered-sparse massive MIMO downlink channels.
//!
//! The channel is expanded on an angular grid, the grid coefficients get a
//! Bernoulli-Gaussian prior whose support follows a two-state Markov chain,
//! and expectation propagation approximates the posterior. An outer EM loop
//! learns the hyperparameters and nudges the grid towards the true angles.

pub mod em;
pub mod ep;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod selftest;
pub mod signal;

pub use em::{run_em_ep, run_em_ep_b, BaselineMode, EmConfig, EstimateResult, IterationTrace};
pub use ep::{run_ep, EpConfig, EpOutput, EpState, GlobalPosterior};
pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, C64};
pub use model::{ModelParams, SupportPrior, Transition};
pub use signal::{AngularGrid, ArrayGeometry};
