use std::collections::HashSet;
use std::fmt;

use crate::math;
use crate::shader::{ShaderKind, POSITION_OUTPUT};

use super::{TraceSequence, Visibility, BACKGROUND};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    DuplicateClassId,
    ReservedClassId,
    BadSpeed,
    DuplicateMeshId,
    TriangleIndexOutOfRange,
    SkinLengthMismatch,
    SkinWeightRange,
    SkinWeightSum,
    DuplicateShaderId,
    DanglingMesh,
    DanglingClass,
    DanglingShader,
    BadVertexShader,
    MissingBones,
    FrameOrder,
    SingularView,
    WorldBottomRow,
    NonUniformScale,
    NonFinite,
    GBufferDimensions,
    SentinelMismatch,
    DrawIndexOutOfRange,
    PrimitiveOutOfRange,
    DepthRange,
    AlphaRange,
    HiddenDrawHasPixels,
}

impl ViolationKind {
    pub fn is_dangling(self) -> bool {
        matches!(
            self,
            ViolationKind::DanglingMesh | ViolationKind::DanglingClass | ViolationKind::DanglingShader
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Position in `frames`, when the violation belongs to a frame.
    pub frame: Option<usize>,
    pub draw: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.kind)?;
        if let Some(fr) = self.frame {
            write!(f, " in frame {fr}")?;
        }
        if let Some(d) = self.draw {
            write!(f, " draw {d}")?;
        }
        write!(f, ": {}", self.detail)
    }
}

struct Report(Vec<Violation>);

impl Report {
    fn push(&mut self, kind: ViolationKind, frame: Option<usize>, draw: Option<usize>, detail: impl Into<String>) {
        self.0.push(Violation {
            kind,
            frame,
            draw,
            detail: detail.into(),
        });
    }
}

const SKIN_SUM_TOL: f32 = 1e-5;
const SCALE_TOL: f64 = 1e-4;

/// Lists every invariant violation of `seq`; an empty list means valid.
/// Pixel-level problems are reported once per frame and kind, with a count.
pub fn validate_trace(seq: &TraceSequence) -> Vec<Violation> {
    let mut r = Report(Vec::new());
    use ViolationKind::*;

    let mut seen = HashSet::new();
    for c in &seq.class_table {
        if !seen.insert(c.class_id) {
            r.push(DuplicateClassId, None, None, format!("class id {}", c.class_id.0));
        }
        if c.class_id.0 == 0 {
            r.push(ReservedClassId, None, None, "class id 0 is reserved for background");
        }
        if !c.max_speed.is_finite() || c.max_speed < 0.0 || (c.is_dynamic && c.max_speed <= 0.0) {
            r.push(BadSpeed, None, None, format!("class {} max_speed {}", c.name, c.max_speed));
        }
    }

    let mut seen = HashSet::new();
    for (mi, m) in seq.meshes.iter().enumerate() {
        if !seen.insert(m.mesh_id) {
            r.push(DuplicateMeshId, None, None, format!("mesh id {}", m.mesh_id.0));
        }
        if m.positions.iter().flatten().any(|v| !v.is_finite()) {
            r.push(NonFinite, None, None, format!("mesh {mi} has non-finite positions"));
        }
        let n = m.positions.len() as u32;
        if let Some((ti, _)) = m.triangles.iter().enumerate().find(|(_, t)| t.iter().any(|&i| i >= n)) {
            r.push(TriangleIndexOutOfRange, None, None, format!("mesh {mi} triangle {ti}"));
        }
        if let Some(skin) = &m.skin {
            if skin.len() != m.positions.len() {
                r.push(SkinLengthMismatch, None, None, format!("mesh {mi}"));
            }
            for (vi, s) in skin.iter().enumerate() {
                if s.weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
                    r.push(SkinWeightRange, None, None, format!("mesh {mi} vertex {vi}"));
                } else if (s.weights[0] + s.weights[1] - 1.0).abs() > SKIN_SUM_TOL {
                    r.push(SkinWeightSum, None, None, format!("mesh {mi} vertex {vi}"));
                }
            }
        }
    }

    let mut seen = HashSet::new();
    for s in &seq.shaders {
        if !seen.insert(s.shader_id) {
            r.push(DuplicateShaderId, None, None, format!("shader id {}", s.shader_id.0));
        }
    }

    let (width, height) = seq.resolution;
    let mut last_index: Option<u32> = None;
    for (fi, frame) in seq.frames.iter().enumerate() {
        let f = Some(fi);
        if let Some(prev) = last_index {
            if frame.frame_index <= prev {
                r.push(FrameOrder, f, None, format!("frame_index {} after {}", frame.frame_index, prev));
            }
        }
        last_index = Some(frame.frame_index);
        let view = math::to_f64(&frame.view);
        if !view.iter().all(|v| v.is_finite()) || view.determinant().abs() < 1e-12 {
            r.push(SingularView, f, None, "view matrix is not invertible");
        }

        for (di, draw) in frame.draws.iter().enumerate() {
            let d = Some(di);
            let mesh = seq.mesh(draw.mesh_ref);
            if mesh.is_none() {
                r.push(DanglingMesh, f, d, format!("mesh {}", draw.mesh_ref.0));
            }
            if seq.class(draw.class_id).is_none() {
                r.push(DanglingClass, f, d, format!("class {}", draw.class_id.0));
            }
            match draw.shader_ref {
                Some(id) => match seq.shader(id) {
                    None => r.push(DanglingShader, f, d, format!("shader {}", id.0)),
                    Some(s) if s.kind != ShaderKind::Vertex || s.output_index(POSITION_OUTPUT).is_none() => {
                        r.push(BadVertexShader, f, d, format!("shader {} cannot position vertices", id.0))
                    }
                    Some(_) => {}
                },
                None => {
                    if mesh.is_some_and(|m| m.skin.is_some()) {
                        r.push(BadVertexShader, f, d, "skinned mesh drawn without a vertex shader");
                    }
                }
            }
            if draw.shader_ref.is_some() {
                let max_bone = mesh
                    .and_then(|m| m.skin.as_ref())
                    .and_then(|s| s.iter().flat_map(|w| w.bones).max());
                match max_bone {
                    Some(b) if b as usize >= draw.bones.len() => {
                        r.push(MissingBones, f, d, format!("bone {b} of {}", draw.bones.len()))
                    }
                    None if mesh.is_some() => r.push(MissingBones, f, d, "vertex shader on an unskinned mesh"),
                    _ => {}
                }
            }
            let w = &draw.world;
            if !w.iter().chain(draw.bones.iter().flat_map(|b| b.iter())).all(|v| v.is_finite()) {
                r.push(NonFinite, f, d, "non-finite world or bone matrix");
                continue;
            }
            if w[(3, 0)] != 0.0 || w[(3, 1)] != 0.0 || w[(3, 2)] != 0.0 || w[(3, 3)] != 1.0 {
                r.push(WorldBottomRow, f, d, "bottom row is not (0,0,0,1)");
            }
            if !is_similarity(&math::rotation_part(&draw.world_f64())) {
                r.push(NonUniformScale, f, d, "world matrix is not rotation times uniform scale");
            }
        }

        let gb = &frame.gbuffer;
        let n = (gb.width as usize) * (gb.height as usize);
        let planes_ok = [gb.draw_index.len(), gb.primitive_index.len(), gb.ndc_depth.len(), gb.alpha.len()]
            .iter()
            .all(|&l| l == n);
        if (gb.width, gb.height) != (width, height) || !planes_ok {
            r.push(
                GBufferDimensions,
                f,
                None,
                format!("gbuffer {}x{} under resolution {width}x{height}", gb.width, gb.height),
            );
            continue;
        }
        let mut counts = [0usize; 6];
        let mut first = [usize::MAX; 6];
        let mut flag = |slot: usize, px: usize| {
            counts[slot] += 1;
            first[slot] = first[slot].min(px);
        };
        let mut hidden_pixels = vec![0usize; frame.draws.len()];
        for px in 0..n {
            let di = gb.draw_index[px];
            let pi = gb.primitive_index[px];
            if !(0.0..=1.0).contains(&gb.alpha[px]) {
                flag(5, px);
            }
            if di == BACKGROUND {
                if pi != BACKGROUND {
                    flag(0, px);
                }
                continue;
            }
            let Some(draw) = frame.draws.get(di as usize) else {
                flag(1, px);
                continue;
            };
            if draw.visibility != Visibility::Rendered {
                hidden_pixels[di as usize] += 1;
            }
            if pi == BACKGROUND {
                flag(0, px);
            } else if let Some(m) = seq.mesh(draw.mesh_ref) {
                if pi as usize >= m.triangles.len() {
                    flag(2, px);
                }
            }
            if !(0.0..=1.0).contains(&gb.ndc_depth[px]) {
                flag(3, px);
            }
        }
        let kinds = [SentinelMismatch, DrawIndexOutOfRange, PrimitiveOutOfRange, DepthRange, AlphaRange];
        for (slot, kind) in [0usize, 1, 2, 3, 5].into_iter().zip(kinds) {
            if counts[slot] > 0 {
                let px = first[slot];
                r.push(
                    kind,
                    f,
                    None,
                    format!(
                        "{} pixel(s), first at ({}, {})",
                        counts[slot],
                        px % gb.width as usize,
                        px / gb.width as usize
                    ),
                );
            }
        }
        for (di, &count) in hidden_pixels.iter().enumerate() {
            if count > 0 {
                r.push(HiddenDrawHasPixels, f, Some(di), format!("{count} pixel(s)"));
            }
        }
    }
    r.0
}

fn is_similarity(m: &math::Mat3) -> bool {
    let norms: Vec<f64> = (0..3).map(|c| m.column(c).norm()).collect();
    let max = norms.iter().cloned().fold(0.0, f64::max);
    let min = norms.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || max / min - 1.0 > SCALE_TOL {
        return false;
    }
    (0..3).all(|a| ((a + 1)..3).all(|b| m.column(a).dot(&m.column(b)).abs() / (norms[a] * norms[b]) <= SCALE_TOL))
}
