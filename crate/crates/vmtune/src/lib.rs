//! Toolkit for designing, simulating, and tuning virtual-mechanism robot
//! controllers.
//!
//! A controller is expressed as a virtual mechanism — rigid bodies, joints,
//! springs, dampers, and inerters — coupled to a robot model through
//! interface elements. The coupled system integrates as one ODE with cost
//! states that accumulate L2/L∞ performance surrogates; forward-mode dual
//! numbers propagate parameter sensitivities through the integration, and a
//! min-max loop tunes the controller parameters against sampled or
//! adversarially grown scenario sets. A frequency-sweep LTI oracle provides
//! independent ground truth for the linear cart benchmark.

pub mod closedloop;
pub mod dual;
pub mod elements;
pub mod experiments;
pub mod linalg;
pub mod lti;
pub mod mech;
pub mod optimize;
pub mod scalar;
pub mod scenarios;
pub mod schema;
pub mod sim;

#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("singular mass matrix at configuration q = {config:?}")]
    SingularMass { config: Vec<f64> },
    #[error("integration failure at t = {t}: {reason}")]
    Integration { t: f64, reason: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
