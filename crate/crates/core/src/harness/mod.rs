//! Dataset ingestion, persistence, metrics and experiment drivers.

pub mod checkpoint;
pub mod config;
pub mod experiments;
pub mod metrics;
pub mod mnist;
pub mod plot;
