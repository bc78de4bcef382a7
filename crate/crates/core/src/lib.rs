pub mod action_map;
pub mod agents;
pub mod bus;
pub mod eval;
pub mod foreign_sim;
pub mod geometry;
pub mod grid;
pub mod rng;
pub mod runner;
pub mod sim;
pub mod wire;
