use nalgebra::Matrix4;

use crate::math::Vec4;
use crate::shader::{slice_program, RegisterFile, ShaderError, ShaderProgram, POSITION_OUTPUT};
use crate::trace::{DrawCall, Mesh, TraceSequence};

/// The position slice of a vertex program, ready to run per vertex.
///
/// Register binding: `v0` is the rest position `(x, y, z, 1)`, `v1` holds
/// the two skin weights in `.xy`, `c0..c3` and `c4..c7` the rows of the
/// vertex's two bone matrices. Any other declared register reads zero.
#[derive(Debug, Clone)]
pub struct VertexStage {
    slice: ShaderProgram,
    position: usize,
}

impl VertexStage {
    pub fn new(prog: &ShaderProgram) -> Result<Self, ShaderError> {
        let slice = slice_program(prog, POSITION_OUTPUT)?.program;
        let position = slice
            .output_index(POSITION_OUTPUT)
            .ok_or_else(|| ShaderError::UnknownOutput(POSITION_OUTPUT.into()))? as usize;
        Ok(VertexStage { slice, position })
    }

    pub fn program(&self) -> &ShaderProgram {
        &self.slice
    }

    /// Deformed object-space position of vertex `i`.
    pub fn run(&self, mesh: &Mesh, i: usize, bones: &[Matrix4<f32>]) -> [f32; 4] {
        let mut file = RegisterFile::default();
        for d in &self.slice.inputs {
            file.bind_input(d.index, [0.0; 4]);
        }
        for d in &self.slice.constants {
            file.bind_constant(d.index, [0.0; 4]);
        }
        let p = mesh.positions[i];
        file.bind_input(0, [p[0], p[1], p[2], 1.0]);
        if let Some(skin) = mesh.skin.as_ref().and_then(|s| s.get(i)) {
            file.bind_input(1, [skin.weights[0], skin.weights[1], 0.0, 0.0]);
            for (slot, &bone) in skin.bones.iter().enumerate() {
                let m = &bones[bone as usize];
                for row in 0..4 {
                    let r = [m[(row, 0)], m[(row, 1)], m[(row, 2)], m[(row, 3)]];
                    file.bind_constant((slot * 4 + row) as u16, r);
                }
            }
        }
        self.slice.execute_unchecked(&file)[self.position]
    }

    pub fn run_f64(&self, mesh: &Mesh, i: usize, bones: &[Matrix4<f32>]) -> Vec4 {
        homogeneous(self.run(mesh, i, bones))
    }
}

fn homogeneous(v: [f32; 4]) -> Vec4 {
    Vec4::new(v[0] as f64, v[1] as f64, v[2] as f64, v[3] as f64)
}

/// Object-space positions of every vertex of `draw` as the vertex stage sees
/// them: rest positions for rigid draws, slice outputs for skinned ones.
/// Output order follows the vertex buffer.
pub fn draw_vertex_positions(seq: &TraceSequence, draw: &DrawCall) -> Result<Vec<Vec4>, ShaderError> {
    let mesh = seq
        .mesh(draw.mesh_ref)
        .unwrap_or_else(|| panic!("draw references missing mesh {}", draw.mesh_ref.0));
    match draw.shader_ref.and_then(|id| seq.shader(id)) {
        None => Ok((0..mesh.positions.len())
            .map(|i| mesh.position(i).push(1.0))
            .collect()),
        Some(prog) => {
            let stage = VertexStage::new(prog)?;
            Ok((0..mesh.positions.len())
                .map(|i| stage.run_f64(mesh, i, &draw.bones))
                .collect())
        }
    }
}
