//! Binary trace container.
//!
//! ```text
//! "VPTR" | u32 version | chunk*
//! chunk = tag[4] | u64 payload_len | payload | u32 crc32(payload)
//! ```
//!
//! Chunks appear as one `CLSS` (resolution and class table), then `MESH`,
//! `SHDR` and `FRAM` chunks, one per item. Little-endian, `f32` reals,
//! row-major matrices, planes row-major from the top-left pixel. The byte
//! layout of each payload is documented in `docs/trace-format.md`.

use std::fs;
use std::path::Path;

use nalgebra::Matrix4;
use thiserror::Error;

use crate::math;
use crate::shader::{parse_program, ShaderId};

use super::{
    validate_trace, ClassId, DrawCall, FrameRecord, GBuffer, Mesh, MeshId, SegmentId, SemanticClass, SkinWeights,
    TraceSequence, Violation, Visibility,
};

pub const MAGIC: [u8; 4] = *b"VPTR";
pub const VERSION: u32 = 1;
const RIGID_SENTINEL: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("bad magic at byte {offset}")]
    BadMagic { offset: u64 },
    #[error("unsupported version {found} at byte {offset}")]
    VersionMismatch { offset: u64, found: u32 },
    #[error("corrupt chunk at byte {offset}: {reason}")]
    CorruptChunk { offset: u64, reason: String },
    #[error("dangling reference at byte {offset}: {what}")]
    DanglingRef { offset: u64, what: String },
    #[error("invalid sequence: {0}")]
    InvalidSequence(Violation),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Default)]
struct Out(Vec<u8>);

impl Out {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn mat(&mut self, m: &Matrix4<f32>) {
        for v in math::row_major(m) {
            self.f32(v);
        }
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.0.extend_from_slice(b);
    }
}

fn chunk(file: &mut Vec<u8>, tag: &[u8; 4], payload: &[u8]) {
    file.extend_from_slice(tag);
    file.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    file.extend_from_slice(payload);
    file.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
}

/// Serializes a valid sequence. Output bytes depend only on the contents.
pub fn encode_trace(seq: &TraceSequence) -> Result<Vec<u8>, TraceError> {
    if let Some(v) = validate_trace(seq).into_iter().next() {
        return Err(TraceError::InvalidSequence(v));
    }
    let mut file = Vec::new();
    file.extend_from_slice(&MAGIC);
    file.extend_from_slice(&VERSION.to_le_bytes());

    let mut p = Out::default();
    p.u32(seq.resolution.0);
    p.u32(seq.resolution.1);
    p.u32(seq.class_table.len() as u32);
    for c in &seq.class_table {
        p.u16(c.class_id.0);
        p.u8(c.is_dynamic as u8);
        p.f32(c.max_speed);
        p.bytes(c.name.as_bytes());
    }
    chunk(&mut file, b"CLSS", &p.0);

    for m in &seq.meshes {
        let mut p = Out::default();
        p.u32(m.mesh_id.0);
        p.u32(m.positions.len() as u32);
        for v in m.positions.iter().flatten() {
            p.f32(*v);
        }
        p.u32(m.triangles.len() as u32);
        for i in m.triangles.iter().flatten() {
            p.u32(*i);
        }
        match &m.skin {
            None => p.u8(0),
            Some(skin) => {
                p.u8(1);
                for s in skin {
                    p.u32(s.bones[0]);
                    p.u32(s.bones[1]);
                    p.f32(s.weights[0]);
                    p.f32(s.weights[1]);
                }
            }
        }
        chunk(&mut file, b"MESH", &p.0);
    }

    for s in &seq.shaders {
        let mut p = Out::default();
        p.u32(s.shader_id.0);
        p.bytes(s.to_string().as_bytes());
        chunk(&mut file, b"SHDR", &p.0);
    }

    for fr in &seq.frames {
        let mut p = Out::default();
        p.u32(fr.frame_index);
        p.mat(&fr.view);
        p.mat(&fr.projection);
        p.u32(fr.draws.len() as u32);
        for d in &fr.draws {
            p.u32(d.mesh_ref.0);
            p.mat(&d.world);
            p.u32(d.segment_id.0);
            p.u16(d.class_id.0);
            p.u32(d.shader_ref.map_or(RIGID_SENTINEL, |s| s.0));
            p.u8(d.visibility.code());
            p.u32(d.bones.len() as u32);
            for b in &d.bones {
                p.mat(b);
            }
        }
        let g = &fr.gbuffer;
        p.u32(g.width);
        p.u32(g.height);
        g.draw_index.iter().for_each(|&v| p.u32(v));
        g.primitive_index.iter().for_each(|&v| p.u32(v));
        g.ndc_depth.iter().for_each(|&v| p.f32(v));
        g.alpha.iter().for_each(|&v| p.f32(v));
        chunk(&mut file, b"FRAM", &p.0);
    }
    Ok(file)
}

pub fn write_trace(seq: &TraceSequence, path: &Path) -> Result<(), TraceError> {
    let bytes = encode_trace(seq)?;
    fs::write(path, bytes)?;
    Ok(())
}

struct In<'a> {
    data: &'a [u8],
    pos: usize,
    /// File offset of `data[0]`.
    base: u64,
}

impl<'a> In<'a> {
    fn corrupt(&self, reason: impl Into<String>) -> TraceError {
        TraceError::CorruptChunk {
            offset: self.base + self.pos as u64,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], TraceError> {
        if self.data.len() - self.pos < n {
            return Err(self.corrupt("payload truncated"));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, TraceError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, TraceError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, TraceError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32, TraceError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn mat(&mut self) -> Result<Matrix4<f32>, TraceError> {
        let mut v = [0.0f32; 16];
        for x in &mut v {
            *x = self.f32()?;
        }
        Ok(math::from_row_major(&v))
    }
    /// Element count, checked against the bytes left so corrupt lengths fail early.
    fn count(&mut self, elem_size: usize) -> Result<usize, TraceError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(elem_size) > self.data.len() - self.pos {
            return Err(self.corrupt(format!("count {n} exceeds payload")));
        }
        Ok(n)
    }
    fn string(&mut self) -> Result<String, TraceError> {
        let n = self.count(1)?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| self.corrupt("invalid utf-8"))
    }
    fn finish(&self) -> Result<(), TraceError> {
        if self.pos != self.data.len() {
            return Err(self.corrupt("trailing bytes in payload"));
        }
        Ok(())
    }
}

fn read_frame(r: &mut In<'_>) -> Result<FrameRecord, TraceError> {
    let frame_index = r.u32()?;
    let view = r.mat()?;
    let projection = r.mat()?;
    let ndraws = r.count(83)?;
    let mut draws = Vec::with_capacity(ndraws);
    for _ in 0..ndraws {
        let mesh_ref = MeshId(r.u32()?);
        let world = r.mat()?;
        let segment_id = SegmentId(r.u32()?);
        let class_id = ClassId(r.u16()?);
        let shader = r.u32()?;
        let vis = r.u8()?;
        let visibility = Visibility::from_code(vis).ok_or_else(|| r.corrupt(format!("visibility code {vis}")))?;
        let nbones = r.count(64)?;
        let bones = (0..nbones).map(|_| r.mat()).collect::<Result<Vec<_>, _>>()?;
        draws.push(DrawCall {
            mesh_ref,
            world,
            segment_id,
            class_id,
            shader_ref: (shader != RIGID_SENTINEL).then_some(ShaderId(shader)),
            bones,
            visibility,
        });
    }
    let width = r.u32()?;
    let height = r.u32()?;
    let n = (width as usize)
        .checked_mul(height as usize)
        .filter(|n| n.saturating_mul(16) <= r.data.len() - r.pos)
        .ok_or_else(|| r.corrupt(format!("plane size {width}x{height} exceeds payload")))?;
    let draw_index = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
    let primitive_index = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
    let ndc_depth = (0..n).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?;
    let alpha = (0..n).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?;
    Ok(FrameRecord {
        frame_index,
        view,
        projection,
        draws,
        gbuffer: GBuffer {
            width,
            height,
            draw_index,
            primitive_index,
            ndc_depth,
            alpha,
        },
    })
}

/// Parses and validates a container image.
pub fn decode_trace(bytes: &[u8]) -> Result<TraceSequence, TraceError> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(TraceError::BadMagic { offset: 0 });
    }
    if bytes.len() < 8 {
        return Err(TraceError::CorruptChunk {
            offset: 4,
            reason: "missing version".into(),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(TraceError::VersionMismatch {
            offset: 4,
            found: version,
        });
    }

    let mut seq = TraceSequence {
        class_table: Vec::new(),
        meshes: Vec::new(),
        shaders: Vec::new(),
        frames: Vec::new(),
        resolution: (0, 0),
    };
    let mut frame_offsets = Vec::new();
    let mut have_header = false;
    let mut pos = 8usize;
    while pos < bytes.len() {
        let offset = pos as u64;
        let corrupt = |reason: String| TraceError::CorruptChunk { offset, reason };
        if bytes.len() - pos < 12 {
            return Err(corrupt("truncated chunk header".into()));
        }
        let tag: [u8; 4] = bytes[pos..pos + 4].try_into().unwrap();
        let len = u64::from_le_bytes(bytes[pos + 4..pos + 12].try_into().unwrap());
        let start = pos + 12;
        let remaining = (bytes.len() - start) as u64;
        if len > remaining || remaining - len < 4 {
            return Err(corrupt(format!("chunk length {len} runs past end of file")));
        }
        let end = start + len as usize;
        let payload = &bytes[start..end];
        let crc = u32::from_le_bytes(bytes[end..end + 4].try_into().unwrap());
        if crc != crc32fast::hash(payload) {
            return Err(corrupt("checksum mismatch".into()));
        }
        pos = end + 4;

        let mut r = In {
            data: payload,
            pos: 0,
            base: start as u64,
        };
        match &tag {
            b"CLSS" => {
                if have_header {
                    return Err(corrupt("duplicate CLSS chunk".into()));
                }
                have_header = true;
                seq.resolution = (r.u32()?, r.u32()?);
                let n = r.count(11)?;
                for _ in 0..n {
                    let class_id = ClassId(r.u16()?);
                    let is_dynamic = r.u8()? != 0;
                    let max_speed = r.f32()?;
                    let name = r.string()?;
                    seq.class_table.push(SemanticClass {
                        class_id,
                        name,
                        is_dynamic,
                        max_speed,
                    });
                }
            }
            _ if !have_header => return Err(corrupt("first chunk must be CLSS".into())),
            b"MESH" => {
                let mesh_id = MeshId(r.u32()?);
                let nv = r.count(12)?;
                let positions = (0..nv)
                    .map(|_| Ok([r.f32()?, r.f32()?, r.f32()?]))
                    .collect::<Result<Vec<_>, TraceError>>()?;
                let nt = r.count(12)?;
                let triangles = (0..nt)
                    .map(|_| Ok([r.u32()?, r.u32()?, r.u32()?]))
                    .collect::<Result<Vec<_>, TraceError>>()?;
                let skin = match r.u8()? {
                    0 => None,
                    1 => Some(
                        (0..nv)
                            .map(|_| {
                                Ok(SkinWeights {
                                    bones: [r.u32()?, r.u32()?],
                                    weights: [r.f32()?, r.f32()?],
                                })
                            })
                            .collect::<Result<Vec<_>, TraceError>>()?,
                    ),
                    other => return Err(r.corrupt(format!("skin flag {other}"))),
                };
                seq.meshes.push(Mesh {
                    mesh_id,
                    positions,
                    triangles,
                    skin,
                });
            }
            b"SHDR" => {
                let id = ShaderId(r.u32()?);
                let text = r.string()?;
                let prog = parse_program(&text).map_err(|e| corrupt(format!("shader {}: {e}", id.0)))?;
                seq.shaders.push(prog.with_id(id));
            }
            b"FRAM" => {
                seq.frames.push(read_frame(&mut r)?);
                frame_offsets.push(offset);
            }
            other => return Err(corrupt(format!("unknown tag {:?}", String::from_utf8_lossy(other)))),
        }
        r.finish()?;
    }
    if !have_header {
        return Err(TraceError::CorruptChunk {
            offset: 8,
            reason: "missing CLSS chunk".into(),
        });
    }

    let violations = validate_trace(&seq);
    if let Some(v) = violations.iter().find(|v| v.kind.is_dangling()) {
        let offset = v.frame.map_or(8, |f| frame_offsets[f]);
        return Err(TraceError::DanglingRef {
            offset,
            what: v.to_string(),
        });
    }
    if let Some(v) = violations.into_iter().next() {
        return Err(TraceError::InvalidSequence(v));
    }
    Ok(seq)
}

pub fn load_trace(path: &Path) -> Result<TraceSequence, TraceError> {
    let bytes = fs::read(path)?;
    decode_trace(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shader::builtin;

    fn sample() -> TraceSequence {
        let class = |id, name: &str, dynamic, speed| SemanticClass {
            class_id: ClassId(id),
            name: name.into(),
            is_dynamic: dynamic,
            max_speed: speed,
        };
        let mesh = Mesh {
            mesh_id: MeshId(0),
            positions: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            triangles: vec![[0, 1, 2]],
            skin: None,
        };
        let skinned = Mesh {
            mesh_id: MeshId(1),
            skin: Some(vec![
                SkinWeights {
                    bones: [0, 1],
                    weights: [0.25, 0.75],
                };
                3
            ]),
            ..mesh.clone()
        };
        let mut gbuffer = GBuffer::new(4, 3);
        gbuffer.draw_index[5] = 0;
        gbuffer.primitive_index[5] = 0;
        gbuffer.ndc_depth[5] = 0.5;
        gbuffer.alpha[5] = 1.0;
        let draw = DrawCall {
            mesh_ref: MeshId(0),
            world: Matrix4::new_translation(&nalgebra::Vector3::new(1.0, 2.0, -5.0)),
            segment_id: SegmentId(3),
            class_id: ClassId(1),
            shader_ref: None,
            bones: vec![],
            visibility: Visibility::Rendered,
        };
        let skinned_draw = DrawCall {
            mesh_ref: MeshId(1),
            shader_ref: Some(ShaderId(0)),
            bones: vec![Matrix4::identity(); 2],
            visibility: Visibility::Culled,
            ..draw.clone()
        };
        TraceSequence {
            class_table: vec![class(1, "car", true, 2.0), class(2, "building", false, 0.5)],
            meshes: vec![mesh, skinned],
            shaders: vec![parse_program(builtin::SKINNING_VS).unwrap().with_id(ShaderId(0))],
            frames: vec![FrameRecord {
                frame_index: 0,
                view: Matrix4::identity(),
                projection: math::to_f32(&math::perspective(60.0, 4.0 / 3.0, 0.5, 200.0)),
                draws: vec![draw, skinned_draw],
                gbuffer,
            }],
            resolution: (4, 3),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let seq = sample();
        let bytes = encode_trace(&seq).unwrap();
        assert_eq!(decode_trace(&bytes).unwrap(), seq);
        assert_eq!(encode_trace(&seq).unwrap(), bytes);
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.vptr");
        let seq = sample();
        write_trace(&seq, &path).unwrap();
        assert_eq!(load_trace(&path).unwrap(), seq);
    }

    #[test]
    fn empty_frame_list_round_trips() {
        let mut seq = sample();
        seq.frames.clear();
        let bytes = encode_trace(&seq).unwrap();
        assert!(decode_trace(&bytes).unwrap().frames.is_empty());
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        let mut bytes = encode_trace(&sample()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_trace(&bytes), Err(TraceError::BadMagic { offset: 0 })));
        assert!(matches!(decode_trace(b""), Err(TraceError::BadMagic { offset: 0 })));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = encode_trace(&sample()).unwrap();
        bytes[4] = 9;
        assert!(matches!(
            decode_trace(&bytes),
            Err(TraceError::VersionMismatch { offset: 4, found: 9 })
        ));
    }

    #[test]
    fn flipped_payload_byte_fails_checksum() {
        let mut bytes = encode_trace(&sample()).unwrap();
        let last = bytes.len() - 10;
        bytes[last] ^= 0x40;
        match decode_trace(&bytes) {
            Err(TraceError::CorruptChunk { reason, .. }) => assert!(reason.contains("checksum")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncation_is_corrupt() {
        let bytes = encode_trace(&sample()).unwrap();
        for cut in [9, 20, bytes.len() - 1] {
            assert!(matches!(decode_trace(&bytes[..cut]), Err(TraceError::CorruptChunk { .. })), "cut {cut}");
        }
    }

    #[test]
    fn writer_rejects_dangling_mesh() {
        let mut seq = sample();
        seq.frames[0].draws[0].mesh_ref = MeshId(77);
        match encode_trace(&seq) {
            Err(TraceError::InvalidSequence(v)) => assert_eq!(v.kind, super::super::ViolationKind::DanglingMesh),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn loader_reports_dangling_mesh_at_frame_chunk() {
        let seq = sample();
        let good = encode_trace(&seq).unwrap();
        // patch the mesh ref of the first draw inside the frame chunk
        let fram = good.windows(4).position(|w| w == b"FRAM").unwrap();
        let draw_start = fram + 12 + 4 + 64 + 64 + 4;
        let mut bad = good.clone();
        bad[draw_start..draw_start + 4].copy_from_slice(&77u32.to_le_bytes());
        let payload_len = u64::from_le_bytes(bad[fram + 4..fram + 12].try_into().unwrap()) as usize;
        let crc = crc32fast::hash(&bad[fram + 12..fram + 12 + payload_len]);
        bad[fram + 12 + payload_len..fram + 16 + payload_len].copy_from_slice(&crc.to_le_bytes());
        match decode_trace(&bad) {
            Err(TraceError::DanglingRef { offset, .. }) => assert_eq!(offset, fram as u64),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gbuffer_of_wrong_size_is_rejected() {
        let mut seq = sample();
        seq.resolution = (20, 20);
        seq.frames[0].gbuffer = GBuffer::new(10, 10);
        match encode_trace(&seq) {
            Err(TraceError::InvalidSequence(v)) => {
                assert_eq!(v.kind, super::super::ViolationKind::GBufferDimensions)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overweight_skin_is_rejected() {
        let mut seq = sample();
        seq.meshes[1].skin.as_mut().unwrap()[0].weights = [0.6, 0.6];
        match encode_trace(&seq) {
            Err(TraceError::InvalidSequence(v)) => assert_eq!(v.kind, super::super::ViolationKind::SkinWeightSum),
            other => panic!("{other:?}"),
        }
    }
}
