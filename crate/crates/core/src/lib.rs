//! Deterministic 2D multi-agent driving scenario engine.

pub mod agents;
pub mod audit;
pub mod env;
pub mod events;
pub mod geometry;
pub mod map;
pub mod parsers;
pub mod rng;
pub mod sensors;
pub mod traffic;
