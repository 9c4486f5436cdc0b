//! Perception and kinematic-inference toolkit for robotic door operation.

pub mod cloud;
pub mod config;
pub mod doorsim;
pub mod experiment;
pub mod geometry;
pub mod grasp;
pub mod kinfit;
pub mod modelsel;
pub mod priors;
pub mod tsr;
pub mod unlatch;
