//! Flow truth by ray casting the scripted geometry, independent of the
//! matrix-inversion path used for derivation.

use rayon::prelude::*;

use crate::correspondence::{FlowField, FlowStatus, OCCLUSION_TOLERANCE};
use crate::math::{self, Mat4, Vec3};
use crate::raster::{project_clip, Viewport};
use crate::trace::{DrawCall, FrameRecord, TraceSequence, BACKGROUND};

use super::{blend_skin, OracleGroundTruth};

/// Object-space vertices of a draw as posed in its frame, in `f64`.
fn posed_vertices(seq: &TraceSequence, draw: &DrawCall) -> Vec<Vec3> {
    let mesh = seq.mesh(draw.mesh_ref).expect("generated mesh");
    match (&mesh.skin, draw.is_skinned()) {
        (Some(skin), true) => {
            let bones: Vec<Mat4> = draw.bones.iter().map(math::to_f64).collect();
            (0..mesh.positions.len())
                .map(|i| blend_skin(mesh.position(i), &skin[i], &bones))
                .collect()
        }
        _ => (0..mesh.positions.len()).map(|i| mesh.position(i)).collect(),
    }
}

/// Barycentrics of the hit of the ray `origin + t * dir` with the plane of
/// the triangle, inside or not.
fn ray_triangle(dir: &Vec3, tri: &[Vec3; 3]) -> Option<[f64; 3]> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-15 {
        return None;
    }
    let t = -tri[0];
    let u = t.dot(&p) / det;
    let q = t.cross(&e1);
    let v = dir.dot(&q) / det;
    Some([1.0 - u - v, u, v])
}

struct Posed {
    vertices: Vec<Vec3>,
    eye: Mat4,
}

fn pose_draws(seq: &TraceSequence, frame: &FrameRecord, wanted: &[bool]) -> Vec<Option<Posed>> {
    let view = math::to_f64(&frame.view);
    frame
        .draws
        .iter()
        .zip(wanted)
        .map(|(d, &w)| {
            w.then(|| Posed {
                vertices: posed_vertices(seq, d),
                eye: view * d.world_f64(),
            })
        })
        .collect()
}

/// Ground-truth flow from frame `f` to frame `g`.
///
/// Each pixel's ray is cast through the eye-space triangle recorded in the
/// G-buffer; the hit is carried to `g` along the same barycentrics on the
/// target draw of the same scripted piece.
pub fn oracle_flow(seq: &TraceSequence, truth: &OracleGroundTruth, f: usize, g: usize) -> FlowField {
    let (width, height) = seq.resolution;
    let vp = Viewport::new(width, height);
    let (ff, fg) = (&seq.frames[f], &seq.frames[g]);
    let mapping = truth.mapping(f, g);
    let mut used = vec![false; ff.draws.len()];
    for &d in &ff.gbuffer.draw_index {
        if d != BACKGROUND {
            used[d as usize] = true;
        }
    }
    let mut wanted = vec![false; fg.draws.len()];
    for (d, m) in mapping.iter().enumerate() {
        if let (true, Some(t)) = (used[d], m) {
            wanted[*t] = true;
        }
    }
    let source = pose_draws(seq, ff, &used);
    let target = pose_draws(seq, fg, &wanted);
    let p_f = math::to_f64(&ff.projection);
    let p_g = math::to_f64(&fg.projection);
    let depth_g = &truth.frames[g].depth;

    let pixel = |x: u32, y: u32| -> (f32, f32, FlowStatus) {
        let i = ff.gbuffer.index(x, y);
        let d = ff.gbuffer.draw_index[i];
        if d == BACKGROUND {
            return (0.0, 0.0, FlowStatus::Background);
        }
        let d = d as usize;
        let Some(t) = mapping[d] else {
            return (0.0, 0.0, FlowStatus::Untracked);
        };
        let (src, dst) = (source[d].as_ref().unwrap(), target[t].as_ref().unwrap());
        let mesh = seq.mesh(ff.draws[d].mesh_ref).unwrap();
        let tri = mesh.triangles[ff.gbuffer.primitive_index[i] as usize];
        let obj = tri.map(|k| src.vertices[k as usize]);
        let eye = obj.map(|p| (src.eye * p.push(1.0)).xyz());
        let ndc_x = 2.0 * (x as f64 + 0.5) / width as f64 - 1.0;
        let ndc_y = 1.0 - 2.0 * (y as f64 + 0.5) / height as f64;
        let dir = Vec3::new(ndc_x / p_f[(0, 0)], ndc_y / p_f[(1, 1)], -1.0);
        let Some(l) = ray_triangle(&dir, &eye) else {
            return (0.0, 0.0, FlowStatus::Untracked);
        };
        let point = if ff.draws[d].mesh_ref == fg.draws[t].mesh_ref {
            let moved = tri.map(|k| dst.vertices[k as usize]);
            moved[0] * l[0] + moved[1] * l[1] + moved[2] * l[2]
        } else {
            obj[0] * l[0] + obj[1] * l[1] + obj[2] * l[2]
        };
        let clip = p_g * dst.eye * point.push(1.0);
        let Ok(s) = project_clip(&clip, &vp) else {
            return (0.0, 0.0, FlowStatus::OutOfView);
        };
        let flow = s.pixel - Viewport::pixel_center(x, y);
        let (du, dv) = (flow.x as f32, flow.y as f32);
        if s.clip_w <= 0.0 || !vp.contains(&s.pixel) {
            return (du, dv, FlowStatus::OutOfView);
        }
        let j = fg.gbuffer.index(s.pixel.x.floor() as u32, s.pixel.y.floor() as u32);
        if s.depth > depth_g[j] + OCCLUSION_TOLERANCE {
            return (du, dv, FlowStatus::Occluded);
        }
        (du, dv, FlowStatus::Valid)
    };

    let rows: Vec<Vec<(f32, f32, FlowStatus)>> = (0..height)
        .into_par_iter()
        .map(|y| (0..width).map(|x| pixel(x, y)).collect())
        .collect();
    let mut out = FlowField::new(width, height);
    for (i, (du, dv, s)) in rows.into_iter().flatten().enumerate() {
        out.du[i] = du;
        out.dv[i] = dv;
        out.status[i] = s;
    }
    out
}
