//! Contact-aided error-state Kalman filtering for bipedal robots.
//!
//! The crate bundles everything needed to study base state estimation on a
//! biped that fuses strapdown IMU integration with leg-kinematic measurements
//! of its feet:
//!
//! * [`so3`] — unit-quaternion rotation algebra (exp/log maps, composition)
//!   with the conventions used throughout the crate pinned in one place.
//! * [`ekf`] — model-agnostic error-state EKF machinery: discretization of a
//!   continuous linearized system, covariance propagation and the Joseph-form
//!   measurement update on a manifold state.
//! * [`model`] — the biped process and measurement models in two variants:
//!   point feet (position-only foothold states) and flat feet (position plus
//!   orientation foothold states).
//! * [`filter`] / [`contact`] — the assembled filter with contact-switching
//!   logic: foothold covariance inflation on liftoff, state and covariance
//!   reset on touchdown.
//! * [`observability`] — a numerical observability laboratory that evaluates
//!   the rank of the local observability matrix on constructed singular
//!   motions and reports which directions become unobservable.
//! * [`gait`] / [`sensors`] / [`dataset`] — a synthetic walking-gait
//!   generator with analytically consistent kinematics, sensor synthesis with
//!   seeded noise, and a CSV + JSON-sidecar dataset format.
//! * [`experiment`] / [`report`] — dataset-to-report pipelines used by the
//!   CLI and the examples, including per-phase error statistics.
//!
//! The runnable programs in `examples/` demonstrate each capability; the
//! `biped-ekf` binary exposes the same pipelines as `simulate`, `run`,
//! `observability` and `report` subcommands.

pub mod config;
pub mod contact;
pub mod dataset;
pub mod ekf;
pub mod experiment;
pub mod filter;
pub mod gait;
pub mod model;
pub mod observability;
pub mod report;
pub mod sensors;
pub mod so3;

pub use config::ExperimentConfig;
pub use dataset::Dataset;
pub use experiment::{run_filter, InitMode, RunConfig, RunResult};
pub use filter::{BipedFilter, FilterConfig};
pub use gait::{generate_truth, GaitConfig};
pub use model::{BipedModel, FilterMode, FilterState, FootKinematics, ImuSample, NoiseConfig};
pub use observability::{evaluate_suite, scenario_suite, ObsMethod, RankReport};
pub use report::{error_report, ErrorReport};
pub use sensors::{synthesize_sensors, SensorStream};
pub use so3::UnitQuat;
