//! Deterministic software rasterizer and the projection helpers shared with
//! the correspondence engine.

mod fill;
mod vertex;

use nalgebra::Vector2;
use thiserror::Error;

use crate::math::{self, Mat4, Vec4};
use crate::shader::ShaderError;

pub use fill::{rasterize_frame, render_frame, triangle_covers, RenderOutput, SUBPIXEL_BITS};
pub use vertex::{draw_vertex_positions, VertexStage};

pub type Vec2 = Vector2<f64>;

const W_EPS: f64 = 1e-12;
const AREA_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("clip-space w {0} is too close to zero")]
    DegenerateW(f64),
    #[error("triangle has no screen-space area")]
    DegenerateTriangle,
    #[error(transparent)]
    Shader(#[from] ShaderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Viewport {
    pub width: u32,
    pub height: u32,
}

impl Viewport {
    pub fn new(width: u32, height: u32) -> Self {
        Viewport { width, height }
    }

    /// Clip matrix `C`: NDC to pixel coordinates and depth to `[0, 1]`.
    pub fn clip_matrix(&self) -> Mat4 {
        math::viewport_matrix(self.width, self.height)
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64
    }

    pub fn pixel_center(x: u32, y: u32) -> Vec2 {
        Vec2::new(x as f64 + 0.5, y as f64 + 0.5)
    }
}

/// A vertex after the full transform chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected {
    pub pixel: Vec2,
    /// NDC depth mapped to `[0, 1]`.
    pub depth: f64,
    pub clip_w: f64,
}

/// Projects a clip-space position through the perspective divide and `C`.
pub fn project_clip(clip: &Vec4, viewport: &Viewport) -> Result<Projected, RasterError> {
    if clip.w.abs() < W_EPS || !clip.w.is_finite() {
        return Err(RasterError::DegenerateW(clip.w));
    }
    let s = viewport.clip_matrix() * (clip / clip.w);
    Ok(Projected {
        pixel: Vec2::new(s.x, s.y),
        depth: s.z,
        clip_w: clip.w,
    })
}

/// `s = C P V W x` followed by the perspective divide.
pub fn project_vertex(
    x: &Vec4,
    world: &Mat4,
    view: &Mat4,
    projection: &Mat4,
    viewport: &Viewport,
) -> Result<Projected, RasterError> {
    project_clip(&(projection * view * world * x), viewport)
}

/// Perspective-correct barycentric weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Barycentrics(pub [f64; 3]);

impl Barycentrics {
    pub fn interpolate<T>(&self, values: &[T; 3]) -> T
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    {
        values[0] * self.0[0] + values[1] * self.0[1] + values[2] * self.0[2]
    }

    pub fn is_inside(&self, eps: f64) -> bool {
        self.0.iter().all(|&l| l >= -eps)
    }
}

/// Affine weights of `p` relative to a screen-space triangle.
pub fn screen_barycentrics(p: &Vec2, tri: &[Vec2; 3]) -> Result<[f64; 3], RasterError> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let area = e1.perp(&e2);
    if area.abs() <= AREA_EPS || !area.is_finite() {
        return Err(RasterError::DegenerateTriangle);
    }
    let d = p - tri[0];
    let b1 = d.perp(&e2) / area;
    let b2 = e1.perp(&d) / area;
    Ok([1.0 - b1 - b2, b1, b2])
}

/// Inverts the rasterizer's perspective-correct interpolation at `pixel`.
///
/// Screen-space weights are found first and then divided by each vertex's
/// clip `w` and renormalized.
pub fn invert_interpolation(pixel: &Vec2, tri: &[Projected; 3]) -> Result<Barycentrics, RasterError> {
    let b = screen_barycentrics(pixel, &[tri[0].pixel, tri[1].pixel, tri[2].pixel])?;
    let q = [b[0] / tri[0].clip_w, b[1] / tri[1].clip_w, b[2] / tri[2].clip_w];
    let sum = q[0] + q[1] + q[2];
    if sum.abs() < W_EPS || !sum.is_finite() {
        return Err(RasterError::DegenerateTriangle);
    }
    Ok(Barycentrics([q[0] / sum, q[1] / sum, q[2] / sum]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;
    use proptest::prelude::*;

    fn pinhole() -> Mat4 {
        math::perspective(60.0, 320.0 / 180.0, 0.5, 200.0)
    }

    #[test]
    fn orthographic_center_maps_to_center() {
        let id = Mat4::identity();
        let p = project_vertex(&Vec4::new(0.0, 0.0, 0.5, 1.0), &id, &id, &id, &Viewport::new(100, 100)).unwrap();
        assert_eq!(p.pixel, Vec2::new(50.0, 50.0));
        assert_eq!(p.depth, 0.75);
    }

    #[test]
    fn translation_shifts_by_focal_scale() {
        let vp = Viewport::new(320, 180);
        let p = pinhole();
        let x = Vec4::new(0.0, 0.0, -4.0, 1.0);
        let id = Mat4::identity();
        let a = project_vertex(&x, &id, &id, &p, &vp).unwrap();
        let b = project_vertex(&x, &math::translation(Vec3::new(0.5, 0.0, 0.0)), &id, &p, &vp).unwrap();
        let focal_px = p[(0, 0)] * 160.0;
        assert!((b.pixel.x - a.pixel.x - 0.5 * focal_px / 4.0).abs() < 1e-9);
        assert_eq!(a.pixel.y, b.pixel.y);
    }

    #[test]
    fn pinhole_point_round_trips() {
        let vp = Viewport::new(320, 180);
        let p = pinhole();
        let id = Mat4::identity();
        let x = Vec4::new(1.0, 0.0, -4.0, 1.0);
        let s = project_vertex(&x, &id, &id, &p, &vp).unwrap();
        let inv = (vp.clip_matrix() * p).try_inverse().unwrap();
        let back = inv * Vec4::new(s.pixel.x, s.pixel.y, s.depth, 1.0);
        let back = back / back.w;
        assert!((back - x).norm() < 1e-5);
        assert_eq!(s.clip_w, 4.0);
    }

    #[test]
    fn zero_w_is_degenerate() {
        let id = Mat4::identity();
        let r = project_vertex(&Vec4::new(1.0, 0.0, 0.0, 1.0), &id, &id, &pinhole(), &Viewport::new(4, 4));
        assert!(matches!(r, Err(RasterError::DegenerateW(_))));
    }

    fn tri(points: [(f64, f64, f64); 3]) -> [Projected; 3] {
        points.map(|(x, y, w)| Projected {
            pixel: Vec2::new(x, y),
            depth: 0.5,
            clip_w: w,
        })
    }

    #[test]
    fn vertex_and_centroid_weights() {
        let t = tri([(0.0, 0.0, 1.0), (10.0, 0.0, 1.0), (0.0, 10.0, 1.0)]);
        let b = invert_interpolation(&Vec2::new(0.0, 0.0), &t).unwrap();
        assert_eq!(b.0, [1.0, 0.0, 0.0]);
        let c = invert_interpolation(&Vec2::new(10.0 / 3.0, 10.0 / 3.0), &t).unwrap();
        for l in c.0 {
            assert!((l - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn collinear_triangle_is_degenerate() {
        let t = tri([(0.0, 0.0, 1.0), (1.0, 1.0, 1.0), (2.0, 2.0, 1.0)]);
        assert_eq!(
            invert_interpolation(&Vec2::new(1.0, 0.0), &t).unwrap_err(),
            RasterError::DegenerateTriangle
        );
    }

    proptest! {
        #[test]
        fn reinterpolation_reproduces_pixel(
            verts in prop::array::uniform3((-50.0f64..50.0, -50.0f64..50.0, 0.5f64..30.0)),
            weights in prop::array::uniform3(0.01f64..1.0),
        ) {
            let t = tri(verts);
            let screen = [t[0].pixel, t[1].pixel, t[2].pixel];
            let area = (screen[1] - screen[0]).perp(&(screen[2] - screen[0]));
            prop_assume!(area.abs() > 1.0);
            let s: f64 = weights.iter().sum();
            let pixel = screen[0] * (weights[0] / s) + screen[1] * (weights[1] / s) + screen[2] * (weights[2] / s);
            let b = invert_interpolation(&pixel, &t).unwrap();
            prop_assert!((b.0.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            // forward perspective-correct interpolation: weights / w, renormalized in screen space
            let q: Vec<f64> = (0..3).map(|i| b.0[i] * t[i].clip_w).collect();
            let qs: f64 = q.iter().sum();
            let forward = screen[0] * (q[0] / qs) + screen[1] * (q[1] / qs) + screen[2] * (q[2] / qs);
            prop_assert!((forward - pixel).norm() < 1e-5);
        }
    }
}
