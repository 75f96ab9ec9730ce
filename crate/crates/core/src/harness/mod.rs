//! Simulation harness: channel, cost accounting, persistence, scenarios.

pub mod card;
pub mod channel;
pub mod cost;
pub mod files;
pub mod report;
pub mod scenario;
pub mod sim;
