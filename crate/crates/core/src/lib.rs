//! Training-free open-vocabulary segmentation over sparse voxel scenes.
//!
//! The crate is organised along the processing chain:
//!
//! * [`scene`] holds the voxel scene, cameras, ray traversal and every renderer.
//! * [`synth`] builds labeled scenes and camera orbits for testing.
//! * [`segmenter`] is the per-view instance segmentation interface.
//! * [`grouping`] lifts per-view masks into a voxel group field by centroid voting.
//! * [`clients`] abstracts captioning and chat models and validates their replies.
//! * [`scene_map`] turns groups into canonical captions.
//! * [`query`] answers referring queries against the scene map.
//! * [`eval`] has the metrics and the query benchmark harness.
//! * [`pipeline`] wires everything together for the command-line tool.

pub mod clients;
pub mod eval;
pub mod grouping;
pub mod image;
pub mod pipeline;
pub mod query;
pub mod rng;
pub mod scene;
pub mod scene_map;
pub mod segmenter;
pub mod synth;

pub use image::{InstanceMask, RgbImage};
pub use scene::{CameraView, PointMap, RayHits, VoxelScene};

/// World-space vector type used throughout the crate.
pub type Vec3 = nalgebra::Vector3<f64>;
