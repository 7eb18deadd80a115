//! Distillation-guided neural architecture search.
//!
//! A recurrent actor-critic controller samples students from a factorized
//! search space; each student is scored by a reward that multiplies its
//! distilled accuracy with a soft latency (or FLOPs) constraint. The
//! [`analysis`] module holds the post-hoc statistics used to compare searches
//! driven by different teachers.

pub mod analysis;
pub mod controller;
pub mod cost;
pub mod evaluator;
pub mod exec;
pub mod orchestrator;
pub mod plan;
pub mod seed;
pub mod space;
