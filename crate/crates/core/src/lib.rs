//! Dynamic state estimation for coupled natural-gas / electric-power networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`net`]: network description, preprocessing and validation
//! * [`gas`]: discretized pipeline dynamics `x_{t+1} = F_G x_t + u_{t+1}`
//! * [`power`]: Holt prediction, PMU model, AC power flow
//! * [`coupling`]: gas-turbine conversion and gas boundary inputs
//! * [`estimator`]: joint model and the (robust) Kalman filter
//! * [`scenario`]: ground truth and measurement synthesis
//! * [`metrics`]: filter coefficient / error variance reports
//! * [`pipeline`]: config-driven runs tying everything together
//! * [`batch`]: many seeds and modes at once, in parallel with the
//!   `parallel` feature ([`exec`])

pub mod batch;
pub mod config;
pub mod coupling;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod gas;
pub mod measurement;
pub mod metrics;
pub mod net;
pub mod pipeline;
pub mod power;
pub mod scenario;

pub use error::{Error, Result};
