//! Document lifecycle analytics and temporal-stage prediction from
//! writing-application interaction logs.

pub mod collaboration;
pub mod features;
pub mod lifecycle;
pub mod pipeline;
pub mod predictor;
pub mod synthgen;
pub mod taxonomy;
pub mod telemetry;
