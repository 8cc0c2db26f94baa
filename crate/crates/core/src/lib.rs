//! Self-contained robot-simulation training harness: a broker-based node
//! network, a headless 2D omnidrive simulator, client facades, a gym-style
//! environment, DQN/REINFORCE agents and a crash-tolerant session runner.

pub mod agents;
pub mod busline;
pub mod envkit;
pub mod pipeline;
pub mod simclient;
pub mod simcore;
