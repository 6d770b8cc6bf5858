//! Geometric foundation: poses, axis-aligned bounds, volumetric IoU and
//! relative-direction signatures.

mod arrangement;
mod math;
mod object;

pub use arrangement::Arrangement;
pub use math::{Axis, Rotation, Vec3};
pub use object::{
    aabb_iou, apply_move, apply_rotate, relative_direction, world_aabb, Aabb, DirectionSignature, SceneObject,
    DEFAULT_DEAD_ZONE,
};

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}
