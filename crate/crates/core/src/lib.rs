//! Cycle-stepped simulation of a data-routing accelerator that stays fast
//! under skewed key distributions by lending secondary PEs to overloaded
//! primaries.
//!
//! The pipeline is modelled stage by stage: memory fetch, preprocessing
//! PEs, a mapper/router pair dispatching to primary and secondary PEs, and
//! a merger. A runtime profiler builds a scheduling plan from a routing
//! histogram and reinstalls it when throughput degrades.

pub mod analyzer;
pub mod apps;
pub mod channel;
pub mod config;
pub mod datagen;
pub mod engine;
pub mod hash;
pub mod mapper;
pub mod profiler;
pub mod report;
pub mod routing;
pub mod tuple;

pub use apps::{AppError, AppKind, AppParams, Application};
pub use config::{ArchConfig, ConfigError};
pub use engine::{
    run_simulation, run_simulation_with, SimError, SimMetrics, SimOptions, SimOutput,
};
pub use tuple::{PeMessage, RoutedTuple, TupleRecord};
