//! Discrete geofence design.
//!
//! Trajectory data is normalized and binned into a density grid, a quadratic
//! 0-1 model over the grid cells is built from area, weighted-cover,
//! domain-wall and adjacency terms, and the model is solved exactly (small
//! grids), by simulated annealing, or coarse-to-fine. A circular geofence
//! optimizer provides the comparison baseline, and coverage metrics score
//! both kinds against the data.

pub mod circular;
pub mod error;
pub mod eval;
pub mod export;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod service;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
