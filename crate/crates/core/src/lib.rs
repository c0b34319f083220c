//! Core of a crowdsourced outcome survey: participants report a scalar
//! outcome, answer and propose questions, and a periodic engine fits a
//! linear model of the outcome on the growing response matrix.
//!
//! The crate is `no_std` (it needs `alloc`). The `std` feature, on by
//! default, adds coefficient significance tests.

#![no_std]

extern crate alloc;

pub mod analytics;
pub mod engine;
pub mod error;
pub mod event;
pub mod flow;
pub mod matrix;
pub mod model;
pub mod moderation;
pub mod outcome;
pub mod peers;
#[cfg(feature = "std")]
pub mod significance;
pub mod sim;
pub mod store;
pub mod study;

pub use engine::{fit_least_squares, model_r2, predict_outcome, question_power, ModelArtifact};
pub use error::Error;
pub use event::{Action, Event};
pub use matrix::{build_design, encode_answer, filter_outliers, DesignMatrix, Grid};
pub use model::*;
pub use store::Store;
pub use study::{ParticipantSummary, Study};
