use rayon::prelude::*;

use crate::math::{self, Mat4, Vec4};
use crate::shader::{builtin, inject_gbuffer_writes, parse_program, RegisterFile, ShaderProgram};
use crate::trace::{FrameRecord, GBuffer, TraceSequence, Visibility};

use super::{draw_vertex_positions, project_clip, Vec2, Viewport};

/// Vertex positions are snapped to `1 / 2^SUBPIXEL_BITS` pixel before coverage.
pub const SUBPIXEL_BITS: u32 = 8;
const SUBPIXEL: f64 = (1 << SUBPIXEL_BITS) as f64;
const HALF_PIXEL: i64 = 1 << (SUBPIXEL_BITS - 1);
/// Triangles reaching further than this from the viewport are dropped.
const GUARD_BAND: f64 = (1 << 24) as f64;
const OPAQUE_ALPHA: f32 = 0.5;

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub gbuffer: GBuffer,
    /// Depth of the winning fragment per pixel, before rounding to `f32`.
    pub depth: Vec<f64>,
    pub visibility: Vec<Visibility>,
}

fn snap(v: f64) -> i64 {
    (v * SUBPIXEL).round() as i64
}

fn edge(a: (i64, i64), b: (i64, i64), p: (i64, i64)) -> i128 {
    (b.0 - a.0) as i128 * (p.1 - a.1) as i128 - (b.1 - a.1) as i128 * (p.0 - a.0) as i128
}

/// Top-left rule for a positively oriented triangle in y-down screen space:
/// left edges go up, top edges go right.
fn is_top_left(a: (i64, i64), b: (i64, i64)) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    dy < 0 || (dy == 0 && dx > 0)
}

struct Coverage {
    v: [(i64, i64); 3],
    bias: [i128; 3],
}

impl Coverage {
    fn new(tri: &[Vec2; 3]) -> Option<Coverage> {
        let mut v = tri.map(|p| (snap(p.x), snap(p.y)));
        let area = edge(v[0], v[1], v[2]);
        if area == 0 {
            return None;
        }
        if area < 0 {
            v.swap(1, 2);
        }
        let bias = [(0, 1), (1, 2), (2, 0)].map(|(a, b)| if is_top_left(v[a], v[b]) { 0 } else { -1 });
        Some(Coverage { v, bias })
    }

    fn covers(&self, px: i64, py: i64) -> bool {
        let p = (px * (2 * HALF_PIXEL) + HALF_PIXEL, py * (2 * HALF_PIXEL) + HALF_PIXEL);
        [(0, 1), (1, 2), (2, 0)]
            .iter()
            .zip(self.bias)
            .all(|(&(a, b), bias)| edge(self.v[a], self.v[b], p) + bias >= 0)
    }

    /// Inclusive pixel range whose centers may fall inside.
    fn pixel_bounds(&self) -> (i64, i64, i64, i64) {
        let lo = |c: i64| (c - HALF_PIXEL).div_euclid(2 * HALF_PIXEL);
        let hi = |c: i64| (c - HALF_PIXEL).div_euclid(2 * HALF_PIXEL) + 1;
        let xs = self.v.map(|p| p.0);
        let ys = self.v.map(|p| p.1);
        (
            lo(*xs.iter().min().unwrap()),
            hi(*xs.iter().max().unwrap()),
            lo(*ys.iter().min().unwrap()),
            hi(*ys.iter().max().unwrap()),
        )
    }
}

/// Whether pixel `(px, py)` belongs to the screen-space triangle under the
/// rasterizer's snapping and fill rule.
pub fn triangle_covers(tri: &[Vec2; 3], px: i64, py: i64) -> bool {
    Coverage::new(tri).is_some_and(|c| c.covers(px, py))
}

/// Screen-linear attribute `a + (x - x0) * dx + (y - y0) * dy`.
#[derive(Clone, Copy)]
struct Plane {
    origin: Vec2,
    a: f64,
    dx: f64,
    dy: f64,
}

impl Plane {
    fn new(p: &[Vec2; 3], values: [f64; 3]) -> Option<Plane> {
        let e1 = p[1] - p[0];
        let e2 = p[2] - p[0];
        let det = e1.perp(&e2);
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let (v1, v2) = (values[1] - values[0], values[2] - values[0]);
        Some(Plane {
            origin: p[0],
            a: values[0],
            dx: (v1 * e2.y - v2 * e1.y) / det,
            dy: (v2 * e1.x - v1 * e2.x) / det,
        })
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        self.a + (x - self.origin.x) * self.dx + (y - self.origin.y) * self.dy
    }
}

struct Triangle {
    draw: u32,
    primitive: u32,
    coverage: Coverage,
    bounds: (i64, i64, i64, i64),
    depth: Plane,
    inv_w: Plane,
}

struct DrawShading {
    program: ShaderProgram,
    id: usize,
    depth: usize,
    alpha: f32,
}

fn beyond_guard_band(p: &Vec2, vp: &Viewport) -> bool {
    p.x < -GUARD_BAND || p.y < -GUARD_BAND || p.x > vp.width as f64 + GUARD_BAND || p.y > vp.height as f64 + GUARD_BAND
}

/// All vertices outside one clip plane.
fn outside_frustum(clip: &[Vec4]) -> bool {
    let planes: [fn(&Vec4) -> bool; 6] = [
        |c| c.x < -c.w,
        |c| c.x > c.w,
        |c| c.y < -c.w,
        |c| c.y > c.w,
        |c| c.z < -c.w,
        |c| c.z > c.w,
    ];
    planes.iter().any(|out| clip.iter().all(out))
}

fn setup_draw(
    seq: &TraceSequence,
    frame: &FrameRecord,
    di: usize,
    vp: &Viewport,
    triangles: &mut Vec<Triangle>,
) -> bool {
    let draw = &frame.draws[di];
    let mesh = seq.mesh(draw.mesh_ref).expect("validated mesh reference");
    let positions = draw_vertex_positions(seq, draw).expect("validated vertex program");
    let m: Mat4 = math::to_f64(&frame.projection) * math::to_f64(&frame.view) * draw.world_f64();
    let clip: Vec<Vec4> = positions.iter().map(|x| m * x).collect();
    if clip.is_empty() || outside_frustum(&clip) {
        return false;
    }
    let projected: Vec<_> = clip.iter().map(|c| project_clip(c, vp).ok().filter(|_| c.w > 0.0)).collect();
    for (ti, t) in mesh.triangles.iter().enumerate() {
        let Some(verts) = t
            .iter()
            .map(|&i| projected[i as usize])
            .collect::<Option<Vec<_>>>()
        else {
            continue;
        };
        let screen = [verts[0].pixel, verts[1].pixel, verts[2].pixel];
        if screen.iter().any(|p| beyond_guard_band(p, vp)) {
            continue;
        }
        let Some(coverage) = Coverage::new(&screen) else {
            continue;
        };
        let (Some(depth), Some(inv_w)) = (
            Plane::new(&screen, [verts[0].depth, verts[1].depth, verts[2].depth]),
            Plane::new(&screen, [1.0 / verts[0].clip_w, 1.0 / verts[1].clip_w, 1.0 / verts[2].clip_w]),
        ) else {
            continue;
        };
        let bounds = coverage.pixel_bounds();
        triangles.push(Triangle {
            draw: di as u32,
            primitive: ti as u32,
            coverage,
            bounds,
            depth,
            inv_w,
        });
    }
    true
}

struct Row {
    draw_index: Vec<u32>,
    primitive_index: Vec<u32>,
    ndc_depth: Vec<f32>,
    alpha: Vec<f32>,
    depth: Vec<f64>,
}

fn shade(s: &DrawShading, x: f64, y: f64, depth: f64, inv_w: f64) -> (u32, f32, f32) {
    let mut file = RegisterFile::default();
    file.bind_input(0, [x as f32, y as f32, depth as f32, inv_w as f32]);
    file.bind_input(1, [1.0, 1.0, 1.0, s.alpha]);
    file.bind_constant(0, [1.0; 4]);
    let out = s.program.execute_unchecked(&file);
    (out[s.id][0] as u32, out[s.depth][2], out[s.depth][3])
}

fn render_row(y: i64, width: u32, triangles: &[Triangle], shading: &[Option<DrawShading>]) -> Row {
    let w = width as usize;
    let mut row = Row {
        draw_index: vec![crate::trace::BACKGROUND; w],
        primitive_index: vec![crate::trace::BACKGROUND; w],
        ndc_depth: vec![1.0; w],
        alpha: vec![0.0; w],
        depth: vec![f64::INFINITY; w],
    };
    let cy = y as f64 + 0.5;
    for t in triangles {
        let (x0, x1, y0, y1) = t.bounds;
        if y < y0 || y > y1 {
            continue;
        }
        let Some(s) = &shading[t.draw as usize] else {
            continue;
        };
        for x in x0.max(0)..=x1.min(width as i64 - 1) {
            if !t.coverage.covers(x, y) {
                continue;
            }
            let cx = x as f64 + 0.5;
            let depth = t.depth.at(cx, cy);
            let xi = x as usize;
            if !(0.0..=1.0).contains(&depth) || depth >= row.depth[xi] {
                continue;
            }
            let (id, frag_depth, alpha) = shade(s, cx, cy, depth, t.inv_w.at(cx, cy));
            row.alpha[xi] = alpha + row.alpha[xi] * (1.0 - alpha);
            if alpha >= OPAQUE_ALPHA {
                row.draw_index[xi] = id;
                row.primitive_index[xi] = t.primitive;
                row.ndc_depth[xi] = frag_depth;
                row.depth[xi] = depth;
            }
        }
    }
    for (d, px) in row.depth.iter_mut().zip(&row.draw_index) {
        if *px == crate::trace::BACKGROUND {
            *d = 1.0;
        }
    }
    row
}

/// Renders one frame with per-draw material opacity (`1.0` when `opacity`
/// is shorter than the draw list) and classifies each draw's visibility.
///
/// Each fragment runs the surface pixel program rewritten to emit the draw
/// index and depth; fragments at or above opacity 0.5 take the pixel.
pub fn render_frame(frame: &FrameRecord, seq: &TraceSequence, opacity: &[f32]) -> RenderOutput {
    let (width, height) = seq.resolution;
    let vp = Viewport::new(width, height);
    let surface = parse_program(builtin::SURFACE_PS).expect("built-in surface program");

    let mut triangles = Vec::new();
    let mut shading = Vec::with_capacity(frame.draws.len());
    let mut culled = Vec::with_capacity(frame.draws.len());
    for di in 0..frame.draws.len() {
        let in_view = setup_draw(seq, frame, di, &vp, &mut triangles);
        culled.push(!in_view);
        let (program, slots) = inject_gbuffer_writes(&surface, di as u32, "v0").expect("surface program has free slots");
        shading.push(in_view.then(|| DrawShading {
            program,
            id: slots.id as usize,
            depth: slots.depth as usize,
            alpha: opacity.get(di).copied().unwrap_or(1.0),
        }));
    }

    let rows: Vec<Row> = (0..height as i64)
        .into_par_iter()
        .map(|y| render_row(y, width, &triangles, &shading))
        .collect();
    let mut gbuffer = GBuffer::new(width, height);
    let mut depth = Vec::with_capacity(gbuffer.len());
    for (y, row) in rows.into_iter().enumerate() {
        let span = y * width as usize..(y + 1) * width as usize;
        gbuffer.draw_index[span.clone()].copy_from_slice(&row.draw_index);
        gbuffer.primitive_index[span.clone()].copy_from_slice(&row.primitive_index);
        gbuffer.ndc_depth[span.clone()].copy_from_slice(&row.ndc_depth);
        gbuffer.alpha[span].copy_from_slice(&row.alpha);
        depth.extend(row.depth);
    }
    let coverage = gbuffer.coverage(frame.draws.len());
    let visibility = culled
        .iter()
        .zip(coverage)
        .map(|(&c, n)| match (c, n) {
            (true, _) => Visibility::Culled,
            (false, 0) => Visibility::DepthFailed,
            _ => Visibility::Rendered,
        })
        .collect();
    RenderOutput {
        gbuffer,
        depth,
        visibility,
    }
}

/// Z-buffered fill of every draw in submission order with opaque materials.
///
/// # Panics
///
/// If the frame references meshes or shaders missing from `seq`.
pub fn rasterize_frame(frame: &FrameRecord, seq: &TraceSequence) -> GBuffer {
    render_frame(frame, seq, &[]).gbuffer
}
