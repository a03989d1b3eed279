//! Bowling-action identification: dataset handling, preprocessing,
//! augmentation and a frozen-backbone VGG16 classifier with its training
//! and evaluation tooling.

pub mod archive;
pub mod cli;
pub mod config;
pub mod augment;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod model;
pub mod preprocess;
pub mod report;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
