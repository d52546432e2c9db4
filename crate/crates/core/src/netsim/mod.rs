//! Discrete-event network simulation, adversaries and attack scenarios.

pub mod adversary;
pub mod channel;
pub mod config;
pub mod scenario;
pub mod sim;
