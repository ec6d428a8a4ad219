//! Object instances from draws that share a world matrix: labels,
//! boundaries and camera-frame boxes.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::math::{self, Mat3, Vec3};
use crate::raster::draw_vertex_positions;
use crate::shader::ShaderError;
use crate::trace::{ClassId, FrameRecord, TraceSequence, Visibility, BACKGROUND};

/// Entry-wise tolerance for treating two world matrices as shared.
pub const WORLD_MATCH_TOLERANCE: f32 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceError {
    #[error("instance has no vertices")]
    EmptyGeometry,
    #[error("world matrix of instance {0} has non-uniform scale")]
    NonUniformScale(u32),
    #[error(transparent)]
    Shader(#[from] ShaderError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub instance_id: u32,
    /// Member draw indices, ascending.
    pub members: Vec<usize>,
    pub class_id: ClassId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMap {
    pub frame_index: u32,
    pub instances: Vec<Instance>,
    pub width: u32,
    pub height: u32,
    /// Per-pixel instance id, `0` for background.
    pub label_image: Vec<u32>,
}

impl InstanceMap {
    /// Instance id of each draw, `0` for draws without pixels.
    pub fn draw_instances(&self, draws: usize) -> Vec<u32> {
        let mut out = vec![0; draws];
        for inst in &self.instances {
            for &m in &inst.members {
                out[m] = inst.instance_id;
            }
        }
        out
    }

    pub fn instance(&self, id: u32) -> Option<&Instance> {
        self.instances.iter().find(|i| i.instance_id == id)
    }
}

/// Most frequent class among the members, ties going to the smaller id.
pub fn vote_semantic_class(classes: &[ClassId]) -> Option<ClassId> {
    let mut counts: BTreeMap<ClassId, usize> = BTreeMap::new();
    for &c in classes {
        *counts.entry(c).or_default() += 1;
    }
    // BTreeMap iterates by ascending id, so the first maximum wins
    counts
        .into_iter()
        .fold(None, |best: Option<(ClassId, usize)>, (c, n)| match best {
            Some((_, m)) if m >= n => best,
            _ => Some((c, n)),
        })
        .map(|(c, _)| c)
}

fn same_world(a: &nalgebra::Matrix4<f32>, b: &nalgebra::Matrix4<f32>) -> bool {
    a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= WORLD_MATCH_TOLERANCE)
}

/// Groups the rendered draws of a frame by shared world matrix. Each group
/// is compared against its first member; ids are the smallest member draw
/// index plus one.
pub fn cluster_instances(frame: &FrameRecord) -> InstanceMap {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (di, d) in frame.draws.iter().enumerate() {
        if d.visibility != Visibility::Rendered {
            continue;
        }
        match groups.iter_mut().find(|g| same_world(&frame.draws[g[0]].world, &d.world)) {
            Some(g) => g.push(di),
            None => groups.push(vec![di]),
        }
    }
    let instances: Vec<Instance> = groups
        .into_iter()
        .map(|members| {
            let classes: Vec<ClassId> = members.iter().map(|&m| frame.draws[m].class_id).collect();
            Instance {
                instance_id: members[0] as u32 + 1,
                class_id: vote_semantic_class(&classes).expect("non-empty group"),
                members,
            }
        })
        .collect();
    let mut map = InstanceMap {
        frame_index: frame.frame_index,
        instances,
        width: frame.gbuffer.width,
        height: frame.gbuffer.height,
        label_image: vec![],
    };
    map.label_image = instance_mask(frame, &map).0;
    map
}

/// Per-pixel instance ids and voted class ids (`0` on background).
pub fn instance_mask(frame: &FrameRecord, map: &InstanceMap) -> (Vec<u32>, Vec<u16>) {
    let of_draw = map.draw_instances(frame.draws.len());
    let mut class_of = BTreeMap::new();
    for inst in &map.instances {
        class_of.insert(inst.instance_id, inst.class_id.0);
    }
    frame
        .gbuffer
        .draw_index
        .iter()
        .map(|&d| {
            if d == BACKGROUND {
                return (0, 0);
            }
            let id = of_draw[d as usize];
            (id, class_of.get(&id).copied().unwrap_or(0))
        })
        .unzip()
}

/// Pixels with a 4-neighbour carrying a different label.
pub fn instance_boundaries(labels: &[u32], width: u32, height: u32) -> Vec<bool> {
    let (w, h) = (width as usize, height as usize);
    let mut out = vec![false; labels.len()];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let l = labels[i];
            out[i] = (x > 0 && labels[i - 1] != l)
                || (x + 1 < w && labels[i + 1] != l)
                || (y > 0 && labels[i - w] != l)
                || (y + 1 < h && labels[i + w] != l);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BBox3D {
    pub instance_id: u32,
    pub class_id: ClassId,
    /// Camera frame.
    pub center: Vec3,
    pub half_extents: Vec3,
    /// Camera-frame orientation of the box axes.
    pub rotation: Mat3,
}

const SCALE_TOLERANCE: f64 = 1e-5;

/// Splits `m = s * R` for a rotation `R`, rejecting other linear parts.
fn uniform_scale(m: &Mat3) -> Option<(f64, Mat3)> {
    let norms = [m.column(0).norm(), m.column(1).norm(), m.column(2).norm()];
    let s = (norms[0] + norms[1] + norms[2]) / 3.0;
    if s <= 0.0 || norms.iter().any(|n| (n - s).abs() > SCALE_TOLERANCE * s) {
        return None;
    }
    let r = m / s;
    if math::orthonormality_error(&r) > SCALE_TOLERANCE || r.determinant() <= 0.0 {
        return None;
    }
    Some((s, math::orthonormalize(&r)))
}

/// Object-frame bound of all member vertices, carried rigidly into the
/// camera frame by `V W`. Skinned members contribute their deformed
/// vertices; the world scale is folded into the extents.
pub fn bbox3d(seq: &TraceSequence, frame: &FrameRecord, instance: &Instance) -> Result<BBox3D, InstanceError> {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for &m in &instance.members {
        let draw = &frame.draws[m];
        let mesh = seq.mesh(draw.mesh_ref).expect("validated mesh reference");
        let points: Vec<Vec3> = if draw.is_skinned() {
            draw_vertex_positions(seq, draw)?.iter().map(|p| p.xyz()).collect()
        } else {
            (0..mesh.positions.len()).map(|i| mesh.position(i)).collect()
        };
        for p in points {
            lo = lo.inf(&p);
            hi = hi.sup(&p);
        }
    }
    if !(lo.x <= hi.x) {
        return Err(InstanceError::EmptyGeometry);
    }
    let first = instance.members.first().ok_or(InstanceError::EmptyGeometry)?;
    let m = math::to_f64(&frame.view) * frame.draws[*first].world_f64();
    let (scale, rotation) =
        uniform_scale(&math::rotation_part(&m)).ok_or(InstanceError::NonUniformScale(instance.instance_id))?;
    Ok(BBox3D {
        instance_id: instance.instance_id,
        class_id: instance.class_id,
        center: (m * ((lo + hi) * 0.5).push(1.0)).xyz(),
        half_extents: (hi - lo) * 0.5 * scale,
        rotation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Mat4;
    use crate::scene::cuboid;
    use crate::trace::{DrawCall, GBuffer, MeshId, SegmentId};
    use nalgebra::Matrix4;

    fn draw(world: Mat4, class: u16) -> DrawCall {
        DrawCall {
            mesh_ref: MeshId(0),
            world: math::to_f32(&world),
            segment_id: SegmentId(0),
            class_id: ClassId(class),
            shader_ref: None,
            bones: vec![],
            visibility: Visibility::Rendered,
        }
    }

    fn frame(draws: Vec<DrawCall>) -> FrameRecord {
        FrameRecord {
            frame_index: 0,
            view: Matrix4::identity(),
            projection: Matrix4::identity(),
            draws,
            gbuffer: GBuffer::new(2, 2),
        }
    }

    fn cube_seq() -> TraceSequence {
        TraceSequence {
            class_table: vec![],
            meshes: vec![cuboid(MeshId(0), Vec3::zeros(), Vec3::repeat(1.0), 1)],
            shaders: vec![],
            frames: vec![],
            resolution: (2, 2),
        }
    }

    #[test]
    fn shared_matrix_forms_one_instance() {
        let w = math::translation(Vec3::new(1.0, 0.0, -4.0));
        let f = frame((0..5).map(|_| draw(w, 6)).collect());
        let map = cluster_instances(&f);
        assert_eq!(map.instances.len(), 1);
        assert_eq!(map.instances[0].members, vec![0, 1, 2, 3, 4]);
        assert_eq!(map.instances[0].instance_id, 1);
    }

    #[test]
    fn distinct_matrices_and_hidden_draws() {
        let mut draws = vec![
            draw(math::translation(Vec3::new(1.0, 0.0, 0.0)), 5),
            draw(math::translation(Vec3::new(2.0, 0.0, 0.0)), 5),
            draw(math::translation(Vec3::new(2.0, 0.0, 0.0)), 5),
        ];
        draws[1].visibility = Visibility::Culled;
        let map = cluster_instances(&frame(draws));
        let ids: Vec<_> = map.instances.iter().map(|i| (i.instance_id, i.members.clone())).collect();
        assert_eq!(ids, vec![(1, vec![0]), (3, vec![2])]);
    }

    #[test]
    fn votes() {
        let c = |v: &[u16]| vote_semantic_class(&v.iter().map(|&x| ClassId(x)).collect::<Vec<_>>());
        assert_eq!(c(&[6, 6, 9]), Some(ClassId(6)));
        assert_eq!(c(&[5]), Some(ClassId(5)));
        assert_eq!(c(&[9, 9, 6, 6]), Some(ClassId(6)));
        assert_eq!(c(&[]), None);
    }

    #[test]
    fn mask_follows_draws() {
        let mut f = frame(vec![draw(Mat4::identity(), 3), draw(math::translation(Vec3::x()), 4)]);
        f.gbuffer.draw_index = vec![0, 1, BACKGROUND, 1];
        let map = cluster_instances(&f);
        assert_eq!(map.label_image, vec![1, 2, 0, 2]);
        assert_eq!(instance_mask(&f, &map).1, vec![3, 4, 0, 4]);
    }

    #[test]
    fn boundaries() {
        assert!(instance_boundaries(&[7; 12], 4, 3).iter().all(|&b| !b));
        // split between columns 1 and 2
        let labels: Vec<u32> = (0..12).map(|i| if i % 4 < 2 { 1 } else { 2 }).collect();
        let b = instance_boundaries(&labels, 4, 3);
        for (i, &v) in b.iter().enumerate() {
            assert_eq!(v, i % 4 == 1 || i % 4 == 2);
        }
    }

    #[test]
    fn square_boundary_count() {
        // n x n square inside a larger background: 4n - 4 inner ring plus 4n outer neighbours
        let (w, n, o) = (12u32, 5usize, 3usize);
        let mut labels = vec![0u32; (w * w) as usize];
        for y in o..o + n {
            for x in o..o + n {
                labels[y * w as usize + x] = 1;
            }
        }
        let count = instance_boundaries(&labels, w, w).iter().filter(|&&b| b).count();
        assert_eq!(count, (4 * n - 4) + 4 * n);
    }

    #[test]
    fn unit_cube_boxes() {
        let seq = cube_seq();
        let inst = Instance {
            instance_id: 1,
            members: vec![0],
            class_id: ClassId(2),
        };
        let b = bbox3d(&seq, &frame(vec![draw(Mat4::identity(), 2)]), &inst).unwrap();
        assert_eq!(b.center, Vec3::zeros());
        assert_eq!(b.half_extents, Vec3::repeat(0.5));
        assert!((b.rotation - Mat3::identity()).norm() < 1e-12);

        let w = math::translation(Vec3::new(0.0, 0.0, -5.0));
        let b = bbox3d(&seq, &frame(vec![draw(w, 2)]), &inst).unwrap();
        assert_eq!(b.center, Vec3::new(0.0, 0.0, -5.0));

        let w = math::rigid_yaw_pitch(Vec3::zeros(), 45.0, 0.0);
        let b = bbox3d(&seq, &frame(vec![draw(w, 2)]), &inst).unwrap();
        assert!((b.rotation - math::rotation_part(&w)).norm() < 1e-6);
        assert!((b.half_extents - Vec3::repeat(0.5)).norm() < 1e-6);
    }

    #[test]
    fn scale_is_folded_into_extents() {
        let seq = cube_seq();
        let inst = Instance {
            instance_id: 1,
            members: vec![0],
            class_id: ClassId(2),
        };
        let mut w = math::rigid_yaw_pitch(Vec3::zeros(), 30.0, 0.0);
        w.fixed_view_mut::<3, 3>(0, 0).scale_mut(2.0);
        let b = bbox3d(&seq, &frame(vec![draw(w, 2)]), &inst).unwrap();
        assert!((b.half_extents - Vec3::repeat(1.0)).norm() < 1e-6);
        let mut w = Mat4::identity();
        w[(0, 0)] = 3.0;
        assert_eq!(
            bbox3d(&seq, &frame(vec![draw(w, 2)]), &inst),
            Err(InstanceError::NonUniformScale(1))
        );
    }
}
