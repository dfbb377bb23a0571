//! Localized, debiased estimation of individualized treatment-slate contrasts
//! under network interference.

pub mod graph_config;
pub mod localize;
pub mod nuisance;
pub mod walsh;
pub mod estimator;
pub mod simgen;
pub mod harness;
