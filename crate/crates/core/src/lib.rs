//! Segments a basketball match into spatial phases from player-tracking
//! streams.
//!
//! The pipeline runs in five stages: ingest raw per-player position
//! readings onto a uniform grid, smooth each coordinate with a Kalman
//! filter, describe every instant by the ten pairwise player distances,
//! cluster those descriptors with k-means, and characterize the resulting
//! phases (spatial summaries, planar embeddings, offense labeling, and
//! switch statistics).

pub mod analysis;
pub mod clustering;
pub mod config;
pub mod error;
pub mod features;
pub mod ingest;
pub mod kalman;
pub mod pipeline;
pub mod plot;
pub mod synth;

pub use error::{Error, Result};
pub use ingest::{FrameSeries, PlayerId, Point, RawSession};
