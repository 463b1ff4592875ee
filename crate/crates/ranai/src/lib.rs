//! Configuration, file formats, run orchestration and the agent bridge for
//! the RAN-AI teleoperated-driving simulator. The simulation itself lives in
//! `ranai-core`.

pub mod bridge;
pub mod config;
pub mod figdata;
pub mod output;
pub mod runner;
pub mod trace_csv;

pub use config::RunConfig;
pub use output::RunArtifacts;
