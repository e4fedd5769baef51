//! Hypernetwork-generated occupancy fields over the unit cube, trained either
//! at sampled points or over whole voxel cubes with interval arithmetic.

pub mod autodiff;
pub mod interp;
pub mod interval;
pub mod mesh;
pub mod metrics;
pub mod nets;
pub mod training;
pub mod voxel;
