//! Incubator digital twin services on top of the numerical core and the bus.

pub mod calibration;
pub mod config;
pub mod controller;
pub mod datalog;
pub mod demo;
pub mod estimator;
pub mod gateway;
pub mod messages;
pub mod orchestrator;
pub mod plant;
pub mod whatif;
