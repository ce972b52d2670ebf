//! Deterministic 2D indoor exploration simulator.
//!
//! A simulated lidar robot explores procedurally generated multi-room
//! floor plans, building an occupancy grid and three derived map products
//! (grayscale image map, thinned skeleton, semantic region map). Two
//! exploration strategies share one stack: a semantics-aware RRT frontier
//! explorer with dynamic goal sampling and region-biased scoring, and the
//! plain RRT explorer it degenerates to when both biases are switched off.

pub mod bench;
pub mod derived_maps;
pub mod explore;
pub mod geom;
pub mod mapping;
pub mod planner;
pub mod world;
