//! Automatic error detection and repair selection for tabular ML datasets.
//!
//! The pipeline loads a CSV table, infers column types, runs a library of
//! detector generators over the training split to produce error predicates,
//! pairs those predicates with repair functions, and selects a budgeted
//! sequence of conditional repairs by boosting against clean test labels.
//! The selected ensemble compiles into a deployable cleaner+classifier.

pub mod boost;
pub mod config;
pub mod detect;
pub mod featurize;
pub mod inject;
pub mod isoforest;
pub mod model;
pub mod pipeline;
pub mod repair;
pub mod table;

pub use config::Config;
pub use table::{ColumnType, Dataset, Record, Schema, Table, Value};
