//! Bayesian nonparametric classification of longitudinal profiles.
//!
//! Patients follow one of several sigmoid trajectories with a disease
//! probability attached to each; trajectories and probabilities are clustered
//! by a truncated Dirichlet-process mixture fitted by MCMC. New profiles are
//! classified by averaging the implied disease probability over the posterior.

pub mod dist;
pub mod error;
pub mod io;
pub mod linalg;
pub mod mcmc;
pub mod model;
pub mod nls;
pub mod partition;
pub mod prediction;
pub mod rng;
pub mod simulation;

pub use error::{Error, Result};
pub use mcmc::{run_chain, run_conditional_chain, run_two_component, PosteriorTrace, SamplerConfig};
pub use model::{DependenceParams, ModelState, Patient, TrajectoryParams};
pub use partition::{select_partition, PartitionEstimate, PartitionMethod};
pub use prediction::{bma_predict, predict_draw, PredictionResult};
