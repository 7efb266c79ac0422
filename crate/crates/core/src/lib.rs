//! Reconstruction of mirror surfaces from reflections of a reference plane
//! observed by an uncalibrated camera.
//!
//! The chain is: plane poses from the colinearity of reflection
//! correspondences ([`plane_pose`]), camera from pixel/line incidences
//! ([`projection`]), then surface points and camera refinement through the
//! cross-ratio along each incident ray ([`crossratio`]). [`sim`] ray-traces
//! synthetic scenes with ground truth and [`metrics`] scores the results.

pub mod camera;
pub mod crossratio;
pub mod error;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod lm;
pub mod metrics;
pub mod pipeline;
pub mod plane_pose;
pub mod plucker;
pub mod poly;
pub mod projection;
pub mod scalar;
pub mod sim;

pub use error::{Error, RankCause, Result};
pub use scalar::Real;

pub type PluckerLineF64 = plucker::PluckerLine<f64>;
pub type PluckerLineF32 = plucker::PluckerLine<f32>;
pub type PointProjectionMatrixF64 = plucker::PointProjectionMatrix<f64>;
pub type PointProjectionMatrixF32 = plucker::PointProjectionMatrix<f32>;
pub type LineProjectionMatrixF64 = plucker::LineProjectionMatrix<f64>;
pub type LineProjectionMatrixF32 = plucker::LineProjectionMatrix<f32>;
pub type IntrinsicsF64 = camera::Intrinsics<f64>;
pub type IntrinsicsF32 = camera::Intrinsics<f32>;
pub type RigidPoseF64 = geometry::RigidPose<f64>;
pub type RigidPoseF32 = geometry::RigidPose<f32>;
pub type CameraF64 = camera::Camera<f64>;
