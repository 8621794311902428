//! Numerical core of the incubator digital twin: lumped thermal models,
//! the bang-bang-with-wait controller, least-squares calibration, Kalman
//! state estimation with anomaly detection, and what-if controller search.

pub mod calibration;
pub mod controller;
pub mod estimator;
pub mod thermal;
pub mod whatif;

pub use thermal::{
    heat_energy, integrate, model_a_derivative, model_b_derivative, InputSchedule, Method, Model, ModelAParams,
    ModelBParams, PlantInput, Sample, ThermalState, Trajectory,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

pub type Result<T> = std::result::Result<T, Error>;
