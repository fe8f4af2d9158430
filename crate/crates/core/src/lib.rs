//! Curriculum-paced model-agnostic meta-learning for restoring MRI images
//! corrupted by several artifact types.
//!
//! The crate covers the whole pipeline: synthetic cine phantoms and
//! preprocessing ([`data`]), k-space and image-domain degradation operators
//! ([`artifacts`]), artifact tasks with support/query pools ([`tasks`]),
//! the pacing schedule ([`curriculum`]), a small convolutional network with
//! exact first and second derivatives ([`model`]), the joint, MAML and
//! curriculum-MAML trainers ([`trainers`]) and restoration metrics with
//! report tables ([`metrics`]).

pub mod artifacts;
pub mod config;
pub mod curriculum;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod tasks;
pub mod trainers;

pub use error::{Error, Result};
