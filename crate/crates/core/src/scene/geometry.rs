//! Procedural meshes for the scene generator.

use std::collections::HashMap;

use crate::math::{Mat4, Vec3};
use crate::trace::{Mesh, MeshId, SkinWeights};

#[derive(Default)]
struct Builder {
    positions: Vec<[f32; 3]>,
    triangles: Vec<[u32; 3]>,
}

impl Builder {
    fn vertex(&mut self, p: Vec3) -> u32 {
        self.positions.push([p.x as f32, p.y as f32, p.z as f32]);
        (self.positions.len() - 1) as u32
    }

    /// `n x n` grid of quads spanning `origin + s*u + t*v` for `s, t` in `[0, 1]`.
    fn grid(&mut self, origin: Vec3, u: Vec3, v: Vec3, nu: u32, nv: u32) {
        let base = self.positions.len() as u32;
        for j in 0..=nv {
            for i in 0..=nu {
                self.vertex(origin + u * (i as f64 / nu as f64) + v * (j as f64 / nv as f64));
            }
        }
        let idx = |i: u32, j: u32| base + j * (nu + 1) + i;
        for j in 0..nv {
            for i in 0..nu {
                self.triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                self.triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
    }

    fn finish(self, id: MeshId) -> Mesh {
        Mesh {
            mesh_id: id,
            positions: self.positions,
            triangles: self.triangles,
            skin: None,
        }
    }
}

/// Axis-aligned box centered at `center`, each face split into `n x n` quads.
pub fn cuboid(id: MeshId, center: Vec3, size: Vec3, n: u32) -> Mesh {
    let h = size * 0.5;
    let mut b = Builder::default();
    let (x, y, z) = (Vec3::x() * size.x, Vec3::y() * size.y, Vec3::z() * size.z);
    let lo = center - h;
    let hi = center + h;
    b.grid(lo, x, y, n, n);
    b.grid(Vec3::new(lo.x, lo.y, hi.z), x, y, n, n);
    b.grid(lo, y, z, n, n);
    b.grid(Vec3::new(hi.x, lo.y, lo.z), y, z, n, n);
    b.grid(lo, x, z, n, n);
    b.grid(Vec3::new(lo.x, hi.y, lo.z), x, z, n, n);
    b.finish(id)
}

/// Unit-radius icosphere after `levels` rounds of midpoint subdivision.
pub fn icosphere(id: MeshId, levels: u32) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..levels {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vec3>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalize());
                (verts.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let mut b = Builder::default();
    for v in verts {
        b.vertex(v);
    }
    b.triangles = faces;
    b.finish(id)
}

/// Ground grid of `tiles_x x tiles_z` quads in the xz-plane, centered on the origin.
pub fn ground(id: MeshId, size: Vec3, tiles_x: u32, tiles_z: u32) -> Mesh {
    let mut b = Builder::default();
    b.grid(
        Vec3::new(-size.x / 2.0, 0.0, -size.z / 2.0),
        Vec3::x() * size.x,
        Vec3::z() * size.z,
        tiles_x,
        tiles_z,
    );
    b.finish(id)
}

/// Flat two-bone strip in the xy-plane; bone 1 takes over from bone 0
/// across the middle half of the strip's length.
pub fn skinned_strip(id: MeshId, size: Vec3, segments: u32, rows: u32) -> Mesh {
    let mut b = Builder::default();
    b.grid(
        Vec3::new(-size.x / 2.0, -size.y / 2.0, 0.0),
        Vec3::x() * size.x,
        Vec3::y() * size.y,
        segments,
        rows,
    );
    let skin = b
        .positions
        .iter()
        .map(|p| {
            let t = ((p[0] as f64 + 0.25 * size.x) / (0.5 * size.x)).clamp(0.0, 1.0) as f32;
            SkinWeights {
                bones: [0, 1],
                weights: [1.0 - t, t],
            }
        })
        .collect();
    let mut mesh = b.finish(id);
    mesh.skin = Some(skin);
    mesh
}

/// Bone matrices of a strip bent by `bend_deg` about the z-axis through its center.
pub fn strip_bones(bend_deg: f64) -> [Mat4; 2] {
    let rot = nalgebra::Rotation3::from_axis_angle(&Vec3::z_axis(), bend_deg.to_radians()).to_homogeneous();
    [Mat4::identity(), rot]
}

/// Two-bone linear blend skinning in `f64`.
pub fn blend_skin(rest: Vec3, skin: &SkinWeights, bones: &[Mat4]) -> Vec3 {
    let x = rest.push(1.0);
    let a = bones[skin.bones[0] as usize] * x;
    let b = bones[skin.bones[1] as usize] * x;
    let p = a * skin.weights[0] as f64 + b * skin.weights[1] as f64;
    p.xyz()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cuboid_counts() {
        let m = cuboid(MeshId(0), Vec3::zeros(), Vec3::new(1.0, 2.0, 3.0), 2);
        assert_eq!(m.triangles.len(), 6 * 2 * 4);
        assert_eq!(m.positions.len(), 6 * 9);
        let max_y = m.positions.iter().map(|p| p[1]).fold(f32::MIN, f32::max);
        assert_eq!(max_y, 1.0);
    }

    #[test]
    fn icosphere_is_closed_and_unit() {
        let m = icosphere(MeshId(0), 2);
        assert_eq!(m.triangles.len(), 320);
        // Euler characteristic of a sphere
        assert_eq!(m.positions.len() as i64 - 480 + 320, 2);
        assert!(m.positions.iter().all(|p| ((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - 1.0).abs() < 1e-6));
    }

    #[test]
    fn strip_weights_sum_to_one() {
        let m = skinned_strip(MeshId(0), Vec3::new(2.0, 0.6, 1.0), 16, 3);
        let skin = m.skin.unwrap();
        assert_eq!(skin.len(), m.positions.len());
        assert!(skin.iter().all(|s| (s.weights[0] + s.weights[1] - 1.0).abs() <= 1e-6));
        assert_eq!(skin[0].weights, [1.0, 0.0]);
        assert_eq!(skin[16].weights, [0.0, 1.0]);
    }

    #[test]
    fn blend_formula() {
        let bones = [
            crate::math::translation(Vec3::new(1.0, 0.0, 0.0)),
            crate::math::translation(Vec3::new(0.0, 1.0, 0.0)),
        ];
        let s = SkinWeights {
            bones: [0, 1],
            weights: [0.25, 0.75],
        };
        assert_eq!(blend_skin(Vec3::zeros(), &s, &bones), Vec3::new(0.25, 0.75, 0.0));
    }
}
