//! Simulation core for RAN-AI controlled teleoperated-driving scenarios.
//!
//! Everything here is deterministic and needs only an allocator: the event
//! engine, trace-driven channel, abstract RAN, sensor-streaming application,
//! Double-DQN agent and the controller that ties them together. File formats,
//! configuration and the CLI live in the `ranai` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod agent;
pub mod app;
pub mod channel;
pub mod controller;
pub mod engine;
pub mod ran;
pub mod rng;
pub mod scenario;
pub mod stats;
pub mod time;

pub use time::SimTime;
