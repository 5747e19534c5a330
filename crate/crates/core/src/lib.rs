// SPDX-License-Identifier: Apache-2.0

//! Hybrid automated/manual grading of programming assignments.
//!
//! A run compiles every solution, validates the configured checks against
//! model solutions, grades student solutions with weighted checks (external
//! test runners, external static analyzers and interactive manual prompts),
//! checkpoints every result as JSON and writes CSV grade and feedback reports.

pub mod command;
pub mod config;
pub mod engine;
pub mod events;
pub mod inspector;
pub mod model;
pub mod pipeline;
pub mod pool;
pub mod prompt;
pub mod report;
pub mod session;
pub mod solutions;
pub mod store;
