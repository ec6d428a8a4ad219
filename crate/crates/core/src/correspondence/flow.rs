use rayon::prelude::*;

use crate::math::{self, Mat4, Vec3, Vec4};
use crate::raster::{draw_vertex_positions, invert_interpolation, project_clip, Barycentrics, Projected, Vec2, Viewport};
use crate::trace::{FrameRecord, TraceSequence, BACKGROUND};
use crate::tracking::TrackSet;

use super::{dehomogenize, CorrespondenceError, FlowField, FlowStatus};

/// Target draw in frame `g` for each draw of frame `f`.
pub type DrawMapping = Vec<Option<usize>>;

/// Reprojected depth may exceed the target depth buffer by this much (NDC, `[0, 1]`).
pub const OCCLUSION_TOLERANCE: f64 = 1e-4;

/// A pixel of a skinned draw mapped back onto its rest mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonrigidPoint {
    pub triangle: u32,
    pub barycentrics: Barycentrics,
    /// Point on the rest-pose triangle.
    pub rest: Vec3,
}

fn clip_to_pixels(frame: &FrameRecord, world: &Mat4) -> Mat4 {
    math::to_f64(&frame.projection) * math::to_f64(&frame.view) * world
}

/// Vertices of a skinned draw after its position slice, projected to the screen.
struct SkinnedSource {
    projected: Vec<Option<Projected>>,
}

enum Source {
    Rigid { inverse: Mat4 },
    Skinned(SkinnedSource),
}

struct Target {
    forward: Mat4,
    /// Slice outputs per vertex when the target draw is skinned.
    deformed: Option<Vec<Vec4>>,
}

fn prepare_source(seq: &TraceSequence, frame: &FrameRecord, di: usize) -> Result<Source, CorrespondenceError> {
    let draw = &frame.draws[di];
    let vp = Viewport::new(seq.resolution.0, seq.resolution.1);
    let m = clip_to_pixels(frame, &draw.world_f64());
    if draw.is_skinned() {
        let positions = draw_vertex_positions(seq, draw)?;
        let projected = positions.iter().map(|x| project_clip(&(m * x), &vp).ok()).collect();
        Ok(Source::Skinned(SkinnedSource { projected }))
    } else {
        let inverse = (vp.clip_matrix() * m)
            .try_inverse()
            .ok_or(CorrespondenceError::SingularMatrix)?;
        Ok(Source::Rigid { inverse })
    }
}

fn prepare_target(seq: &TraceSequence, frame: &FrameRecord, di: usize) -> Result<Target, CorrespondenceError> {
    let draw = &frame.draws[di];
    Ok(Target {
        forward: clip_to_pixels(frame, &draw.world_f64()),
        deformed: if draw.is_skinned() {
            Some(draw_vertex_positions(seq, draw)?)
        } else {
            None
        },
    })
}

fn locate_on_triangle(
    seq: &TraceSequence,
    frame: &FrameRecord,
    di: usize,
    source: &SkinnedSource,
    triangle: u32,
    pixel: &Vec2,
) -> Result<NonrigidPoint, CorrespondenceError> {
    let mesh = seq.mesh(frame.draws[di].mesh_ref).expect("validated mesh reference");
    let tri = mesh.triangles[triangle as usize];
    let v = tri.map(|i| source.projected[i as usize]);
    let [Some(a), Some(b), Some(c)] = v else {
        return Err(CorrespondenceError::DegenerateDepth);
    };
    let bary = invert_interpolation(pixel, &[a, b, c])?;
    let rest = bary.interpolate(&tri.map(|i| mesh.position(i as usize)));
    Ok(NonrigidPoint {
        triangle,
        barycentrics: bary,
        rest,
    })
}

/// Maps a pixel of skinned draw `di` back onto the rest mesh: the draw's
/// position slice is run on the pixel's triangle, the rasterizer's
/// interpolation is inverted, and the weights are applied to the rest vertices.
pub fn invert_nonrigid(
    seq: &TraceSequence,
    frame: &FrameRecord,
    di: usize,
    pixel: &Vec2,
) -> Result<NonrigidPoint, CorrespondenceError> {
    if !frame.draws[di].is_skinned() {
        return Err(CorrespondenceError::NotSkinned(di));
    }
    let gb = &frame.gbuffer;
    let (x, y) = (pixel.x.floor(), pixel.y.floor());
    if x < 0.0 || y < 0.0 || x >= gb.width as f64 || y >= gb.height as f64 {
        return Err(CorrespondenceError::NotCovered(di));
    }
    let i = gb.index(x as u32, y as u32);
    if gb.draw_index[i] != di as u32 {
        return Err(CorrespondenceError::NotCovered(di));
    }
    let Source::Skinned(source) = prepare_source(seq, frame, di)? else {
        unreachable!()
    };
    locate_on_triangle(seq, frame, di, &source, gb.primitive_index[i], pixel)
}

struct PairContext<'a> {
    seq: &'a TraceSequence,
    f: &'a FrameRecord,
    g: &'a FrameRecord,
    viewport: Viewport,
    sources: Vec<Option<Source>>,
    targets: Vec<Option<Target>>,
    mapping: &'a DrawMapping,
}

impl PairContext<'_> {
    fn pixel(&self, x: u32, y: u32) -> (f32, f32, FlowStatus) {
        let gb = &self.f.gbuffer;
        let i = gb.index(x, y);
        let di = gb.draw_index[i];
        if di == BACKGROUND {
            return (0.0, 0.0, FlowStatus::Background);
        }
        let di = di as usize;
        let (Some(source), Some(target)) = (
            self.sources[di].as_ref(),
            self.mapping[di].and_then(|t| self.targets[t].as_ref()),
        ) else {
            return (0.0, 0.0, FlowStatus::Untracked);
        };
        let pixel = Viewport::pixel_center(x, y);
        let point = match source {
            Source::Rigid { inverse } => {
                let s = Vec4::new(pixel.x, pixel.y, gb.ndc_depth[i] as f64, 1.0);
                dehomogenize(inverse * s).map(|x| (x, None))
            }
            Source::Skinned(src) => locate_on_triangle(self.seq, self.f, di, src, gb.primitive_index[i], &pixel)
                .map(|p| (p.rest.push(1.0), Some(p))),
        };
        let Ok((object_point, on_triangle)) = point else {
            return (0.0, 0.0, FlowStatus::Untracked);
        };
        let tdi = self.mapping[di].unwrap();
        let x = match (&target.deformed, on_triangle) {
            (Some(deformed), Some(p)) if self.f.draws[di].mesh_ref == self.g.draws[tdi].mesh_ref => {
                let tri = self.seq.mesh(self.g.draws[tdi].mesh_ref).unwrap().triangles[p.triangle as usize];
                p.barycentrics.interpolate(&tri.map(|k| deformed[k as usize]))
            }
            _ => object_point,
        };
        let Ok(s) = project_clip(&(target.forward * x), &self.viewport) else {
            return (0.0, 0.0, FlowStatus::OutOfView);
        };
        let flow = s.pixel - pixel;
        let (du, dv) = (flow.x as f32, flow.y as f32);
        if s.clip_w <= 0.0 || !self.viewport.contains(&s.pixel) {
            return (du, dv, FlowStatus::OutOfView);
        }
        let gg = &self.g.gbuffer;
        let j = gg.index(s.pixel.x.floor() as u32, s.pixel.y.floor() as u32);
        if s.depth > gg.ndc_depth[j] as f64 + OCCLUSION_TOLERANCE {
            return (du, dv, FlowStatus::Occluded);
        }
        (du, dv, FlowStatus::Valid)
    }
}

/// Dense flow from frame `f` to frame `g` (indices into `seq.frames`).
///
/// Rigid pixels are unprojected with the recorded depth; skinned pixels go
/// through [`invert_nonrigid`]. Points are then carried forward through the
/// target draw's transforms and, for skinned targets, its slice outputs.
pub fn dense_flow_pair(seq: &TraceSequence, f: usize, g: usize, mapping: &DrawMapping) -> FlowField {
    let (ff, fg) = (&seq.frames[f], &seq.frames[g]);
    let (width, height) = seq.resolution;
    let mut used = vec![false; ff.draws.len()];
    for px in &ff.gbuffer.draw_index {
        if let Some(u) = used.get_mut(*px as usize) {
            *u = true;
        }
    }
    let sources = (0..ff.draws.len())
        .into_par_iter()
        .map(|d| {
            if used[d] && mapping[d].is_some() {
                prepare_source(seq, ff, d).ok()
            } else {
                None
            }
        })
        .collect();
    let mut wanted = vec![false; fg.draws.len()];
    for (d, t) in mapping.iter().enumerate() {
        if let (true, Some(t)) = (used[d], t) {
            wanted[*t] = true;
        }
    }
    let targets = (0..fg.draws.len())
        .into_par_iter()
        .map(|d| if wanted[d] { prepare_target(seq, fg, d).ok() } else { None })
        .collect();
    let ctx = PairContext {
        seq,
        f: ff,
        g: fg,
        viewport: Viewport::new(width, height),
        sources,
        targets,
        mapping,
    };
    let rows: Vec<Vec<(f32, f32, FlowStatus)>> = (0..height)
        .into_par_iter()
        .map(|y| (0..width).map(|x| ctx.pixel(x, y)).collect())
        .collect();
    let mut out = FlowField::new(width, height);
    for (i, (du, dv, s)) in rows.into_iter().flatten().enumerate() {
        out.du[i] = du;
        out.dv[i] = dv;
        out.status[i] = s;
    }
    out
}

/// Flow between two arbitrary frames, associating draws through their
/// persistent track ids.
pub fn wide_baseline_flow(seq: &TraceSequence, f: usize, h: usize, tracks: &TrackSet) -> FlowField {
    dense_flow_pair(seq, f, h, &tracks.mapping(f, h))
}
