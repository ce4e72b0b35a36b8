//! Simulation of projected stochastic gradient methods in which every agent
//! reports a possibly biased gradient estimate evaluated at a stale iterate.
//!
//! The iteration is
//! `x(t+1) = P_S[x(t) - eta(t) sum_i g_i(x(tau_i(t)))]`
//! with scaled delays `ceil(kappa t) <= tau_i(t) <= t`.

pub mod analysis;
pub mod checks;
pub mod config;
pub mod delays;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod objectives;
pub mod schedules;
pub mod sets;
pub mod streams;

pub use analysis::{MetricKind, MetricSeries, RateFit};
pub use delays::{DelayKind, DelayMode, DelayModel};
pub use engine::{run, run_ensemble, RunConfig, Trajectory};
pub use error::{Error, Result};
pub use estimators::{EstimatorKind, GradientSource};
pub use objectives::{ObjectiveSuite, SmoothFunction};
pub use schedules::{Kappa, StepSizeSchedule};
pub use sets::FeasibleSet;
pub use config::{parse_config, ExperimentSpec};
pub use experiment::run_experiment;
