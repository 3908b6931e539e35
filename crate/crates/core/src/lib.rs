//! Turn a video (or 1D signal) containing many repetitions of the same motion
//! into a single, fine-detail template cycle.
//!
//! The pipeline is purely Eulerian: no tracking, no optical flow. Frames are
//! treated as points in Euclidean space, stacked into sliding-window
//! embeddings, and the loop those windows trace is recovered with persistent
//! homology (to pick a spatial scale) and a graph Laplacian (to assign each
//! window a circular phase). Windows are then reordered by phase and vote
//! per pixel, with a median, on every frame of the output cycle.
//!
//! Modules follow the pipeline order:
//!
//! * [`videoio`] — frame/signal containers, PNG + raw I/O, Gaussian pyramid
//! * [`geometry`] — isometric projection, sliding-window embedding, distances
//! * [`period`] — 1D ISOMAP surrogate and NSDF fundamental-period estimation
//! * [`tda`] — Vietoris–Rips H1 persistence and scale selection
//! * [`spectral`] — graph Laplacian, eigenpair selection, circular phase
//! * [`template`] — phase unwrapping, cycle count, median-voted synthesis
//! * [`synth`] — procedural test scenes, corruptions, angular-error metric
//! * [`pipeline`] — end-to-end orchestration and the JSON analysis schema

pub mod error;
pub mod geometry;
pub mod period;
pub mod pipeline;
pub mod spectral;
pub mod synth;
pub mod tda;
pub mod template;
pub mod videoio;

pub use error::{Error, Result};
