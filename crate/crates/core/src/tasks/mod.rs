//! Discrimination, estimation and certification tasks.

pub mod certification;
pub mod eat;
pub mod entropy;
pub mod estimation;
pub mod usd;

use serde::Serialize;
use serde_json::Value;

/// Result record shared by the task front ends.
#[derive(Debug, Clone, Serialize)]
pub struct TaskRecord {
    pub inputs: Value,
    pub value: f64,
    pub details: Value,
}
