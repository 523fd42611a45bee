//! Discrete-time simulation of an IoT-instrumented manufacturing plant:
//! machines and sensors, a lossy publish/subscribe network, edge processing,
//! cloud analytics and paired baseline/optimized KPI evaluation.

pub mod analytics;
pub mod edge;
pub mod error;
pub mod fixed;
pub mod plant;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod transport;
pub mod world;

pub use error::{Error, Result, ValidationIssue};

/// Shared identifier for machines, sensors and gateways.
pub type Id = std::sync::Arc<str>;
