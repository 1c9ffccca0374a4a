//! Clickstream analytics for predicting where viewers abandon online video.
//!
//! The pipeline runs raw daily click dumps through [`ingest`], groups clicks
//! into visits with [`sessionizer`], reconstructs video views and exit labels
//! in [`video`], ranks predictors in [`select`], and trains and cross-validates
//! the classifiers in [`learners`] with [`eval`]. [`synth`] produces seeded
//! stand-in dumps with planted signal.

pub mod eval;
pub mod ingest;
pub mod learners;
pub mod pipeline;
pub mod select;
pub mod sessionizer;
pub mod synth;
pub mod table;
pub mod util;
pub mod video;
