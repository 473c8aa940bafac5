//! Metric catalog and metric-propagation engine for AI-infrastructure
//! economics.
//!
//! Metrics live on a 6×3 grid of infrastructure layers and meta-domains
//! ([`taxonomy`]). The [`catalog`] holds dimension-checked formulas; the
//! [`mpg`] module propagates perturbations between metrics along typed
//! operators and analyses the resulting linear system.

pub mod catalog;
pub mod expr;
pub mod taxonomy;
pub mod topology;
pub mod units;
pub mod mpg;
pub mod scenario;
pub mod report;
pub mod cli;
