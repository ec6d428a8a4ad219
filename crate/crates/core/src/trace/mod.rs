//! Recorded rendering traces: classes, meshes, shaders, and per-frame draw
//! calls with their G-buffer planes.

mod container;
mod validate;

use nalgebra::Matrix4;

use crate::math::{self, Mat4, Vec3};
use crate::shader::{ShaderId, ShaderProgram};

pub use container::{decode_trace, encode_trace, load_trace, write_trace, TraceError, MAGIC, VERSION};
pub use validate::{validate_trace, Violation, ViolationKind};

/// Sentinel stored in `draw_index` / `primitive_index` for background pixels.
pub const BACKGROUND: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MeshId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SegmentId(pub u32);

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticClass {
    pub class_id: ClassId,
    pub name: String,
    pub is_dynamic: bool,
    /// World units per frame.
    pub max_speed: f32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkinWeights {
    pub bones: [u32; 2],
    pub weights: [f32; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub mesh_id: MeshId,
    pub positions: Vec<[f32; 3]>,
    pub triangles: Vec<[u32; 3]>,
    pub skin: Option<Vec<SkinWeights>>,
}

impl Mesh {
    pub fn position(&self, i: usize) -> Vec3 {
        let p = self.positions[i];
        Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Visibility {
    Rendered,
    Culled,
    DepthFailed,
}

impl Visibility {
    pub fn code(self) -> u8 {
        match self {
            Visibility::Rendered => 0,
            Visibility::Culled => 1,
            Visibility::DepthFailed => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Visibility> {
        match code {
            0 => Some(Visibility::Rendered),
            1 => Some(Visibility::Culled),
            2 => Some(Visibility::DepthFailed),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Visibility::Rendered => "rendered",
            Visibility::Culled => "culled",
            Visibility::DepthFailed => "depth_failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrawCall {
    pub mesh_ref: MeshId,
    pub world: Matrix4<f32>,
    pub segment_id: SegmentId,
    pub class_id: ClassId,
    /// `None` draws the mesh rigidly.
    pub shader_ref: Option<ShaderId>,
    pub bones: Vec<Matrix4<f32>>,
    pub visibility: Visibility,
}

impl DrawCall {
    /// World-space position: the translation column of the world matrix.
    pub fn position(&self) -> Vec3 {
        math::translation_part(&self.world_f64())
    }

    pub fn world_f64(&self) -> Mat4 {
        math::to_f64(&self.world)
    }

    pub fn is_skinned(&self) -> bool {
        self.shader_ref.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GBuffer {
    pub width: u32,
    pub height: u32,
    pub draw_index: Vec<u32>,
    pub primitive_index: Vec<u32>,
    pub ndc_depth: Vec<f32>,
    pub alpha: Vec<f32>,
}

impl GBuffer {
    /// Cleared buffer: background everywhere, depth 1, alpha 0.
    pub fn new(width: u32, height: u32) -> Self {
        let n = (width * height) as usize;
        GBuffer {
            width,
            height,
            draw_index: vec![BACKGROUND; n],
            primitive_index: vec![BACKGROUND; n],
            ndc_depth: vec![1.0; n],
            alpha: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        (self.width * self.height) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, x: u32, y: u32) -> usize {
        (y * self.width + x) as usize
    }

    /// Pixel count per draw for a frame with `draws` draw calls.
    pub fn coverage(&self, draws: usize) -> Vec<usize> {
        let mut counts = vec![0; draws];
        for &d in &self.draw_index {
            if let Some(c) = counts.get_mut(d as usize) {
                *c += 1;
            }
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_index: u32,
    pub view: Matrix4<f32>,
    pub projection: Matrix4<f32>,
    pub draws: Vec<DrawCall>,
    pub gbuffer: GBuffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSequence {
    pub class_table: Vec<SemanticClass>,
    pub meshes: Vec<Mesh>,
    pub shaders: Vec<ShaderProgram>,
    pub frames: Vec<FrameRecord>,
    pub resolution: (u32, u32),
}

fn find_by<'a, T>(items: &'a [T], id: u32, key: impl Fn(&T) -> u32) -> Option<&'a T> {
    // ids usually equal their position
    match items.get(id as usize) {
        Some(item) if key(item) == id => Some(item),
        _ => items.iter().find(|item| key(item) == id),
    }
}

impl TraceSequence {
    pub fn class(&self, id: ClassId) -> Option<&SemanticClass> {
        find_by(&self.class_table, id.0 as u32, |c| c.class_id.0 as u32)
    }

    pub fn mesh(&self, id: MeshId) -> Option<&Mesh> {
        find_by(&self.meshes, id.0, |m| m.mesh_id.0)
    }

    pub fn shader(&self, id: ShaderId) -> Option<&ShaderProgram> {
        find_by(&self.shaders, id.0, |s| s.shader_id.0)
    }
}
