//! Camera poses and dense correspondences recovered by inverting the
//! transform chain of each draw.

mod flow;

use thiserror::Error;

use crate::math::{self, Mat4, Vec4};
use crate::raster::{RasterError, Vec2};
use crate::shader::ShaderError;
use crate::trace::FrameRecord;

pub use flow::{dense_flow_pair, invert_nonrigid, wide_baseline_flow, DrawMapping, NonrigidPoint, OCCLUSION_TOLERANCE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrespondenceError {
    #[error("view matrix is singular")]
    SingularView,
    #[error("transform chain is singular")]
    SingularMatrix,
    #[error("unprojected point has w near zero")]
    DegenerateDepth,
    #[error("draw {0} is not skinned")]
    NotSkinned(usize),
    #[error("pixel is not covered by draw {0}")]
    NotCovered(usize),
    #[error("triangle has no screen-space area")]
    DegenerateTriangle,
    #[error(transparent)]
    Shader(#[from] ShaderError),
}

impl From<RasterError> for CorrespondenceError {
    fn from(e: RasterError) -> Self {
        match e {
            RasterError::Shader(s) => CorrespondenceError::Shader(s),
            RasterError::DegenerateW(_) => CorrespondenceError::DegenerateDepth,
            RasterError::DegenerateTriangle => CorrespondenceError::DegenerateTriangle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlowStatus {
    Valid,
    Occluded,
    OutOfView,
    Untracked,
    Background,
}

impl FlowStatus {
    pub const ALL: [FlowStatus; 5] = [
        FlowStatus::Valid,
        FlowStatus::Occluded,
        FlowStatus::OutOfView,
        FlowStatus::Untracked,
        FlowStatus::Background,
    ];

    /// Code stored in status images.
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<FlowStatus> {
        FlowStatus::ALL.get(code as usize).copied()
    }
}

/// Per-pixel displacement from a source frame to a target frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: u32,
    pub height: u32,
    pub du: Vec<f32>,
    pub dv: Vec<f32>,
    pub status: Vec<FlowStatus>,
}

impl FlowField {
    /// All-background field with zero vectors.
    pub fn new(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        FlowField {
            width,
            height,
            du: vec![0.0; n],
            dv: vec![0.0; n],
            status: vec![FlowStatus::Background; n],
        }
    }

    pub fn len(&self) -> usize {
        self.du.len()
    }

    pub fn is_empty(&self) -> bool {
        self.du.is_empty()
    }

    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn vector(&self, i: usize) -> Vec2 {
        Vec2::new(self.du[i] as f64, self.dv[i] as f64)
    }

    /// Endpoint error against `other` at pixel `i`.
    pub fn endpoint_error(&self, other: &FlowField, i: usize) -> f64 {
        (self.vector(i) - other.vector(i)).norm()
    }

    pub fn count(&self, status: FlowStatus) -> usize {
        self.status.iter().filter(|&&s| s == status).count()
    }
}

/// Camera-to-world transform of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub frame_index: u32,
    pub camera_to_world: Mat4,
}

const DRIFT_TOL: f64 = 1e-9;

/// Inverse of the view matrix, with its rotation re-orthonormalized when
/// `f32` storage left it off by more than `1e-9`.
pub fn camera_pose(frame: &FrameRecord) -> Result<Pose, CorrespondenceError> {
    let view = math::to_f64(&frame.view);
    let mut inv = view.try_inverse().ok_or(CorrespondenceError::SingularView)?;
    let r = math::rotation_part(&inv);
    if math::orthonormality_error(&r) > DRIFT_TOL {
        inv.fixed_view_mut::<3, 3>(0, 0).copy_from(&math::orthonormalize(&r));
    }
    inv.fixed_view_mut::<1, 4>(3, 0).copy_from(&Vec4::new(0.0, 0.0, 0.0, 1.0).transpose());
    Ok(Pose {
        frame_index: frame.frame_index,
        camera_to_world: inv,
    })
}

/// Recovers the object-space point `x` (with `w = 1`) behind a pixel from
/// `s = C P V W x`, taking `s = (pixel, depth, 1)`.
pub fn unproject_pixel(
    pixel: &Vec2,
    depth: f64,
    clip: &Mat4,
    projection: &Mat4,
    view: &Mat4,
    world: &Mat4,
) -> Result<Vec4, CorrespondenceError> {
    let m = clip * projection * view * world;
    let inv = m.try_inverse().ok_or(CorrespondenceError::SingularMatrix)?;
    dehomogenize(inv * Vec4::new(pixel.x, pixel.y, depth, 1.0))
}

fn dehomogenize(x: Vec4) -> Result<Vec4, CorrespondenceError> {
    if x.w.abs() < 1e-12 || !x.w.is_finite() {
        return Err(CorrespondenceError::DegenerateDepth);
    }
    Ok(x / x.w)
}
