//! Small linear-algebra helpers shared by the rasterizer and the engines.
//!
//! Conventions: right-handed eye space looking down `-z`, clip-space depth in
//! `[-1, 1]` before the viewport transform, and pixel coordinates with the
//! origin at the top-left corner and pixel centers at `(i + 0.5, j + 0.5)`.

use nalgebra::{Matrix3, Matrix4, Rotation3, Vector3, Vector4};

pub type Mat4 = Matrix4<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Vec3 = Vector3<f64>;
pub type Vec4 = Vector4<f64>;

/// OpenGL-style perspective projection with a vertical field of view.
pub fn perspective(fov_y_deg: f64, aspect: f64, near: f64, far: f64) -> Mat4 {
    let f = 1.0 / (fov_y_deg.to_radians() * 0.5).tan();
    let mut p = Mat4::zeros();
    p[(0, 0)] = f / aspect;
    p[(1, 1)] = f;
    p[(2, 2)] = (far + near) / (near - far);
    p[(2, 3)] = 2.0 * far * near / (near - far);
    p[(3, 2)] = -1.0;
    p
}

/// Maps NDC `[-1,1]^2 x [-1,1]` to pixel coordinates (y down) and depth in `[0,1]`.
pub fn viewport_matrix(width: u32, height: u32) -> Mat4 {
    let (w, h) = (width as f64, height as f64);
    Mat4::new(
        w / 2.0, 0.0, 0.0, w / 2.0, //
        0.0, -h / 2.0, 0.0, h / 2.0, //
        0.0, 0.0, 0.5, 0.5, //
        0.0, 0.0, 0.0, 1.0,
    )
}

pub fn translation(t: Vec3) -> Mat4 {
    Mat4::new_translation(&t)
}

/// Rigid transform `T(position) * Ry(yaw) * Rx(pitch)`.
pub fn rigid_yaw_pitch(position: Vec3, yaw_deg: f64, pitch_deg: f64) -> Mat4 {
    let r = Rotation3::from_axis_angle(&Vector3::y_axis(), yaw_deg.to_radians())
        * Rotation3::from_axis_angle(&Vector3::x_axis(), pitch_deg.to_radians());
    let mut m = r.to_homogeneous();
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&position);
    m
}

pub fn rotation_part(m: &Mat4) -> Mat3 {
    m.fixed_view::<3, 3>(0, 0).into_owned()
}

pub fn translation_part(m: &Mat4) -> Vec3 {
    m.fixed_view::<3, 1>(0, 3).into_owned()
}

/// Nearest rotation matrix (polar decomposition through the SVD).
pub fn orthonormalize(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// Largest absolute deviation of `R^T R` from the identity.
pub fn orthonormality_error(r: &Mat3) -> f64 {
    (r.transpose() * r - Mat3::identity()).abs().max()
}

/// Rotation angle in radians, robust near 0 and pi.
pub fn rotation_angle(r: &Mat3) -> f64 {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let sin = 0.5
        * Vec3::new(
            r[(2, 1)] - r[(1, 2)],
            r[(0, 2)] - r[(2, 0)],
            r[(1, 0)] - r[(0, 1)],
        )
        .norm();
    sin.atan2(cos)
}

pub fn to_f64(m: &Matrix4<f32>) -> Mat4 {
    m.cast::<f64>()
}

pub fn to_f32(m: &Mat4) -> Matrix4<f32> {
    m.cast::<f32>()
}

/// Rigid inverse of a transform with orthonormal rotation.
pub fn rigid_inverse(m: &Mat4) -> Mat4 {
    let rt = rotation_part(m).transpose();
    let t = -(rt * translation_part(m));
    let mut out = rt.to_homogeneous();
    out.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    out
}

pub fn row_major(m: &Matrix4<f32>) -> [f32; 16] {
    let mut out = [0.0; 16];
    for r in 0..4 {
        for c in 0..4 {
            out[r * 4 + c] = m[(r, c)];
        }
    }
    out
}

pub fn from_row_major(v: &[f32; 16]) -> Matrix4<f32> {
    Matrix4::from_row_slice(v)
}
