//! Statistical toolkit for hierarchically structured benchmark results.
//!
//! Outcomes are organized as model → app → scenario → configuration → rollouts.
//! The crate provides per-leaf interval estimators, two-stage suite aggregation,
//! a hierarchical bootstrap over the scenario/configuration/rollout ladder,
//! matched-pair variability decomposition, cross-model analyses, a calibrated
//! simulation lab for coverage studies, and an environment-integrity pipeline
//! (templates, constraints, predicates) for profile-backed task stores.
//!
//! All Monte Carlo entry points take an explicit `u64` seed and derive
//! counter-based substreams internally, so results are reproducible bit-for-bit
//! regardless of thread count.

pub mod analysis;
pub mod bootstrap;
pub mod estimators;
pub mod ingest;
pub mod integrity;
pub mod model;
pub mod rng;
pub mod simlab;
pub mod variability;
