//! Few-shot short-term passenger-flow forecasting for newly opened metro
//! stations.
//!
//! A single-layer LSTM is meta-trained with first-order MAML across tasks
//! built from data-rich source stations. The resulting initialization is
//! then fine-tuned on a few days of data from the target stations and
//! compared against historical-average, plain LSTM and fine-tuned LSTM
//! baselines.

pub mod adapt;
pub mod baselines;
pub mod checkpoint;
pub mod error;
pub mod experiment;
pub mod flow_data;
pub mod lstm;
pub mod meta;
pub mod metrics;
pub mod optim;
pub mod parallel;
pub mod synth;
pub mod tasks;

pub use error::{Error, Result};
