//! Simulation engine that turns segmented airway volumes into synchronized
//! multi-modal bronchoscopy datasets, with pose/depth evaluation and a local
//! navigation planner.

pub mod anatomy;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod noise;
pub mod phantom;
pub mod pipeline;
pub mod planner;
pub mod render;
pub mod rng;
pub mod robot;
pub mod skeleton;

pub use error::{Error, Result};
