//! Pipelines behind the `braidforge` command.

pub mod config;
pub mod pipeline;

pub use config::RunConfig;
