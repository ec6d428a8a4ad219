//! Listings shipped with the crate.

/// Two-bone linear blend skinning.
///
/// `v0` rest position, `v1` bone weights in `.xy`, `v2` texture coordinates;
/// `c0..c3` and `c4..c7` hold the rows of the two bone matrices bound for the
/// vertex, `c8` a texture transform. `o_pos` is the deformed object-space
/// position; the world, view and projection matrices are applied after it.
pub const SKINNING_VS: &str = "\
vs
in v0:4
in v1:4
in v2:4
out o_pos:4
out o_tex:4
const c0..c8:4
m44 r0, v0, c0
m44 r1, v0, c4
mul r0, r0, v1.x
mad r0, r1, v1.y, r0
mov o_pos, r0
mul r2, v2, c8
mov o_tex, r2.xyxy
";

/// Surface pixel program used by the rasterizer before id/depth injection.
///
/// `v0` fragment `(x, y, depth, 1/w)`, `v1` material colour with alpha in `.w`,
/// `c0` tint. `o1` and `o2` are free render-target slots.
pub const SURFACE_PS: &str = "\
ps
in v0:4
in v1:4
out o_color:4
out o1:4
out o2:4
const c0:4
mul o_color, v1, c0
";
