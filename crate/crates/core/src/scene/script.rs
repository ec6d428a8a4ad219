use serde::{Deserialize, Serialize};

use super::SceneError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Primitive {
    Box,
    Icosphere,
    SkinnedStrip,
    /// Flat tiled ground grid in the object's xz-plane.
    Ground,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub id: u16,
    pub name: String,
    pub dynamic: bool,
    pub max_speed: f32,
}

/// Rigid placement at a frame; angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub frame: u32,
    pub position: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
    #[serde(default)]
    pub pitch: f64,
}

/// Bend of the second bone of a skinned strip, degrees about the strip's z-axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoneKeyframe {
    pub frame: u32,
    pub bend: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LodSwap {
    /// First frame drawn with the decimated mesh.
    pub frame: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub name: String,
    pub primitive: Primitive,
    pub class: String,
    /// Objects naming the same model share meshes and segment ids.
    #[serde(default)]
    pub model: Option<String>,
    /// Object-space extents before `scale` (box, strip and ground).
    #[serde(default = "default_size")]
    pub size: [f64; 3],
    #[serde(default = "one")]
    pub scale: f64,
    /// Extra draws sharing the object's world matrix (wheels, trims).
    #[serde(default)]
    pub parts: u32,
    #[serde(default = "one_f32")]
    pub opacity: f32,
    pub keyframes: Vec<Keyframe>,
    #[serde(default)]
    pub bones: Vec<BoneKeyframe>,
    /// Half-open `[start, end)` frame ranges in which the object is not submitted.
    #[serde(default)]
    pub absent: Vec<[u32; 2]>,
    #[serde(default)]
    pub lod: Option<LodSwap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub center: [f64; 3],
    pub radius: f64,
    pub height: f64,
    #[serde(default)]
    pub start_deg: f64,
    pub degrees_per_frame: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    #[serde(default = "default_fov")]
    pub fov_y: f64,
    #[serde(default = "default_near")]
    pub near: f64,
    #[serde(default = "default_far")]
    pub far: f64,
    #[serde(default)]
    pub keyframes: Vec<Keyframe>,
    #[serde(default)]
    pub orbit: Option<Orbit>,
}

/// Randomly placed static objects, drawn from the scene seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatterSpec {
    pub count: u32,
    pub classes: Vec<String>,
    /// `[x_min, x_max, z_min, z_max]`.
    pub region: [f64; 4],
    #[serde(default = "default_scale_range")]
    pub scale: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneScript {
    pub frames: u32,
    #[serde(default = "default_resolution")]
    pub resolution: [u32; 2],
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_classes")]
    pub classes: Vec<ClassSpec>,
    pub camera: CameraSpec,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub scatter: Option<ScatterSpec>,
}

fn one() -> f64 {
    1.0
}
fn one_f32() -> f32 {
    1.0
}
fn default_size() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}
fn default_fov() -> f64 {
    60.0
}
fn default_near() -> f64 {
    0.5
}
fn default_far() -> f64 {
    200.0
}
fn default_resolution() -> [u32; 2] {
    [320, 180]
}
fn default_scale_range() -> [f64; 2] {
    [0.6, 1.4]
}

pub fn default_classes() -> Vec<ClassSpec> {
    let c = |id, name: &str, dynamic, max_speed| ClassSpec {
        id,
        name: name.into(),
        dynamic,
        max_speed,
    };
    vec![
        c(1, "road", false, 0.05),
        c(2, "building", false, 0.05),
        c(3, "pole", false, 0.05),
        c(4, "vegetation", false, 0.05),
        c(5, "car", true, 1.0),
        c(6, "truck", true, 1.0),
        c(7, "person", true, 0.4),
        c(8, "sign", false, 0.05),
    ]
}

impl SceneScript {
    pub fn from_toml(text: &str) -> Result<SceneScript, SceneError> {
        let script: SceneScript = toml::from_str(text).map_err(|e| SceneError::InvalidScript(e.to_string()))?;
        script.check()?;
        Ok(script)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene script serializes")
    }

    pub fn class_id(&self, name: &str) -> Option<u16> {
        self.classes.iter().find(|c| c.name == name).map(|c| c.id)
    }

    pub fn check(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::InvalidScript(m));
        if self.frames == 0 {
            return bad("frames must be positive".into());
        }
        if self.resolution[0] == 0 || self.resolution[1] == 0 {
            return bad("resolution must be positive".into());
        }
        for c in &self.classes {
            if c.id == 0 {
                return bad(format!("class {}: id 0 is reserved for background", c.name));
            }
            if !(c.max_speed > 0.0) {
                return bad(format!("class {}: max_speed must be positive", c.name));
            }
        }
        let cam = &self.camera;
        if !(cam.near > 0.0 && cam.far > cam.near && cam.fov_y > 0.0 && cam.fov_y < 180.0) {
            return bad("camera: need 0 < near < far and 0 < fov_y < 180".into());
        }
        match (&cam.orbit, cam.keyframes.is_empty()) {
            (Some(_), false) => return bad("camera: give keyframes or orbit, not both".into()),
            (None, true) => return bad("camera: no keyframes".into()),
            _ => {}
        }
        self.check_keyframes("camera", cam.keyframes.iter().map(|k| k.frame))?;
        for o in &self.objects {
            if self.class_id(&o.class).is_none() {
                return bad(format!("object {}: unknown class {}", o.name, o.class));
            }
            if o.keyframes.is_empty() {
                return bad(format!("object {}: no keyframes", o.name));
            }
            self.check_keyframes(&o.name, o.keyframes.iter().map(|k| k.frame))?;
            self.check_keyframes(&o.name, o.bones.iter().map(|k| k.frame))?;
            if !(o.scale > 0.0) || o.size.iter().any(|&s| !(s > 0.0)) {
                return bad(format!("object {}: scale and size must be positive", o.name));
            }
            if !(0.0..=1.0).contains(&o.opacity) {
                return bad(format!("object {}: opacity outside [0, 1]", o.name));
            }
            if o.absent.iter().any(|r| r[0] >= r[1]) {
                return bad(format!("object {}: empty absent range", o.name));
            }
            if o.primitive != Primitive::SkinnedStrip && !o.bones.is_empty() {
                return bad(format!("object {}: bone keyframes need a skinned strip", o.name));
            }
            if let Some(lod) = &o.lod {
                if o.primitive == Primitive::SkinnedStrip {
                    return bad(format!("object {}: skinned strips have no LOD variant", o.name));
                }
                if lod.frame >= self.frames {
                    return bad(format!("object {}: LOD frame outside the sequence", o.name));
                }
            }
        }
        let models: Vec<_> = self.objects.iter().filter_map(|o| o.model.as_ref().map(|m| (m, o))).collect();
        for (m, o) in &models {
            let first = models.iter().find(|(n, _)| n == m).unwrap().1;
            if (first.primitive, first.size, first.parts, first.lod.is_some())
                != (o.primitive, o.size, o.parts, o.lod.is_some())
            {
                return bad(format!("model {m}: objects sharing it must share geometry"));
            }
        }
        if let Some(s) = &self.scatter {
            if let Some(c) = s.classes.iter().find(|c| self.class_id(c).is_none()) {
                return bad(format!("scatter: unknown class {c}"));
            }
            if s.classes.is_empty() && s.count > 0 {
                return bad("scatter: no classes".into());
            }
            if !(s.region[0] < s.region[1] && s.region[2] < s.region[3] && 0.0 < s.scale[0] && s.scale[0] <= s.scale[1]) {
                return bad("scatter: empty region or scale range".into());
            }
        }
        Ok(())
    }

    fn check_keyframes(&self, what: &str, frames: impl Iterator<Item = u32>) -> Result<(), SceneError> {
        let mut last = None;
        for f in frames {
            if f >= self.frames {
                return Err(SceneError::InvalidScript(format!(
                    "{what}: keyframe {f} outside [0, {})",
                    self.frames
                )));
            }
            if last.is_some_and(|l| f <= l) {
                return Err(SceneError::InvalidScript(format!("{what}: keyframes must increase")));
            }
            last = Some(f);
        }
        Ok(())
    }
}

fn kf(frame: u32, position: [f64; 3], yaw: f64) -> Keyframe {
    Keyframe {
        frame,
        position,
        yaw,
        pitch: 0.0,
    }
}

fn object(name: &str, primitive: Primitive, class: &str, keyframes: Vec<Keyframe>) -> ObjectSpec {
    ObjectSpec {
        name: name.into(),
        primitive,
        class: class.into(),
        model: None,
        size: default_size(),
        scale: 1.0,
        parts: 0,
        opacity: 1.0,
        keyframes,
        bones: vec![],
        absent: vec![],
        lod: None,
    }
}

fn camera(keyframes: Vec<Keyframe>) -> CameraSpec {
    CameraSpec {
        fov_y: default_fov(),
        near: default_near(),
        far: default_far(),
        keyframes,
        orbit: None,
    }
}

fn ground() -> ObjectSpec {
    ObjectSpec {
        size: [24.0, 1.0, 24.0],
        ..object("ground", Primitive::Ground, "road", vec![kf(0, [0.0, -1.0, -6.0], 0.0)])
    }
}

fn building(name: &str, position: [f64; 3], size: [f64; 3], yaw: f64) -> ObjectSpec {
    ObjectSpec {
        size,
        ..object(name, Primitive::Box, "building", vec![kf(0, position, yaw)])
    }
}

fn car(name: &str, frames: u32, from: [f64; 3], velocity: [f64; 3], yaw: f64) -> ObjectSpec {
    let last = frames - 1;
    let to = [
        from[0] + velocity[0] * last as f64,
        from[1] + velocity[1] * last as f64,
        from[2] + velocity[2] * last as f64,
    ];
    let keys = if last == 0 {
        vec![kf(0, from, yaw)]
    } else {
        vec![kf(0, from, yaw), kf(last, to, yaw)]
    };
    ObjectSpec {
        size: [1.6, 0.7, 0.8],
        parts: 2,
        ..object(name, Primitive::Box, "car", keys)
    }
}

fn strip(name: &str, keyframes: Vec<Keyframe>, bones: Vec<BoneKeyframe>) -> ObjectSpec {
    ObjectSpec {
        size: [2.0, 0.6, 1.0],
        bones,
        ..object(name, Primitive::SkinnedStrip, "person", keyframes)
    }
}

pub const PRESETS: [&str; 8] = [
    "static-pan",
    "city-block",
    "skinned-strip",
    "occlusion",
    "occlusion-long",
    "lod-swap",
    "orbit",
    "single-frame",
];

/// Built-in scene scripts. `seed` feeds the scatter placement and the
/// speeds of the city-block traffic.
pub fn preset(name: &str, seed: u64) -> Result<SceneScript, SceneError> {
    let base = |frames, camera, objects| SceneScript {
        frames,
        resolution: default_resolution(),
        seed,
        classes: default_classes(),
        camera,
        objects,
        scatter: None,
    };
    let script = match name {
        "static-pan" => {
            let frames = 20;
            base(
                frames,
                camera(vec![kf(0, [-1.0, 0.5, 2.0], 0.0), kf(frames - 1, [0.9, 0.5, 2.0], 0.0)]),
                vec![
                    ground(),
                    building("block-a", [-3.0, 0.5, -9.0], [3.0, 3.0, 2.0], 20.0),
                    building("block-b", [2.5, 1.0, -12.0], [2.5, 4.0, 2.5], -15.0),
                    ObjectSpec {
                        scale: 0.8,
                        ..object("shrub", Primitive::Icosphere, "vegetation", vec![kf(0, [0.5, -0.4, -5.0], 0.0)])
                    },
                    building("pole", [-0.8, 0.5, -4.0], [0.15, 3.0, 0.15], 0.0),
                ],
            )
        }
        "city-block" => {
            let frames = 24;
            // traffic speeds vary with the seed, all below the car speed cap
            let v = 0.08 + (seed % 5) as f64 * 0.02;
            let mut s = base(
                frames,
                camera(vec![
                    kf(0, [0.0, 0.6, 3.0], 0.0),
                    kf(12, [0.3, 0.6, 1.5], 5.0),
                    kf(frames - 1, [0.6, 0.7, 0.0], 12.0),
                ]),
                vec![
                    ground(),
                    building("tower", [-4.0, 1.5, -12.0], [3.0, 5.0, 3.0], 10.0),
                    building("hall", [4.5, 0.5, -10.0], [4.0, 3.0, 3.0], -25.0),
                    ObjectSpec {
                        model: Some("sedan".into()),
                        ..car("sedan-1", frames, [-4.0, -0.45, -6.0], [v * 2.0, 0.0, 0.0], 0.0)
                    },
                    ObjectSpec {
                        model: Some("sedan".into()),
                        ..car("sedan-2", frames, [3.0, -0.45, -8.0], [-v * 1.5, 0.0, 0.02], 180.0)
                    },
                    // leaves the view to the right and comes back
                    ObjectSpec {
                        keyframes: vec![
                            kf(0, [1.5, -0.45, -4.0], 90.0),
                            kf(10, [7.5, -0.45, -4.0], 90.0),
                            kf(frames - 1, [2.0, -0.45, -4.5], 90.0),
                        ],
                        ..car("van", frames, [0.0; 3], [0.0; 3], 90.0)
                    },
                    strip(
                        "walker",
                        vec![kf(0, [-1.5, -0.2, -4.0], 30.0), kf(frames - 1, [-0.5, -0.2, -4.5], 30.0)],
                        vec![
                            BoneKeyframe { frame: 0, bend: 0.0 },
                            BoneKeyframe { frame: 12, bend: 35.0 },
                            BoneKeyframe {
                                frame: frames - 1,
                                bend: -10.0,
                            },
                        ],
                    ),
                    ObjectSpec {
                        class: "sign".into(),
                        ..building("sign", [1.2, 0.0, -3.5], [0.6, 0.4, 0.05], -10.0)
                    },
                ],
            );
            s.scatter = Some(ScatterSpec {
                count: 6,
                classes: vec!["vegetation".into(), "pole".into(), "building".into()],
                region: [-7.0, 7.0, -16.0, -9.0],
                scale: default_scale_range(),
            });
            s
        }
        "skinned-strip" => {
            let frames = 20;
            base(
                frames,
                camera(vec![kf(0, [0.0, 0.3, 1.0], 0.0), kf(frames - 1, [0.3, 0.3, 1.2], 3.0)]),
                vec![strip(
                    "strip",
                    vec![kf(0, [-0.2, 0.0, -2.5], 15.0), kf(frames - 1, [0.2, 0.0, -2.6], 25.0)],
                    vec![
                        BoneKeyframe { frame: 0, bend: -20.0 },
                        BoneKeyframe { frame: 10, bend: 40.0 },
                        BoneKeyframe {
                            frame: frames - 1,
                            bend: 5.0,
                        },
                    ],
                )],
            )
        }
        "occlusion" | "occlusion-long" => {
            let gap = if name == "occlusion" { 3 } else { 12 };
            let frames = 10 + gap + 10;
            let start = 10;
            base(
                frames,
                camera(vec![kf(0, [0.0, 0.5, 2.0], 0.0), kf(frames - 1, [0.2, 0.5, 1.8], 0.0)]),
                vec![
                    ground(),
                    building("wall", [0.0, 0.0, -6.0], [1.5, 2.0, 0.3], 0.0),
                    ObjectSpec {
                        absent: vec![[start, start + gap]],
                        ..car("car", frames, [-3.0, -0.45, -9.0], [0.25, 0.0, 0.0], 0.0)
                    },
                    ObjectSpec {
                        scale: 0.6,
                        ..object("shrub", Primitive::Icosphere, "vegetation", vec![kf(0, [2.0, -0.4, -5.0], 0.0)])
                    },
                ],
            )
        }
        "lod-swap" => {
            let frames = 20;
            base(
                frames,
                camera(vec![kf(0, [0.0, 0.5, 2.0], 0.0), kf(frames - 1, [0.0, 0.5, -1.0], 0.0)]),
                vec![
                    ground(),
                    ObjectSpec {
                        lod: Some(LodSwap { frame: 8 }),
                        ..building("kiosk", [1.5, 0.0, -6.0], [1.0, 2.0, 1.0], 30.0)
                    },
                    ObjectSpec {
                        lod: Some(LodSwap { frame: 12 }),
                        scale: 0.7,
                        ..object("tree", Primitive::Icosphere, "vegetation", vec![kf(0, [-1.5, 0.0, -7.0], 0.0)])
                    },
                    ObjectSpec {
                        lod: Some(LodSwap { frame: 10 }),
                        ..car("car", frames, [-2.0, -0.45, -8.0], [0.12, 0.0, 0.0], 0.0)
                    },
                ],
            )
        }
        "orbit" => {
            let frames = 24;
            base(
                frames,
                CameraSpec {
                    keyframes: vec![],
                    orbit: Some(Orbit {
                        center: [0.0, 0.0, -1.0],
                        radius: 4.0,
                        height: 1.2,
                        start_deg: -20.0,
                        degrees_per_frame: 2.0,
                    }),
                    ..camera(vec![])
                },
                vec![
                    ObjectSpec {
                        size: [10.0, 1.0, 10.0],
                        ..object("ground", Primitive::Ground, "road", vec![kf(0, [0.0, -1.0, -1.0], 0.0)])
                    },
                    building("monument", [0.0, 0.0, -1.0], [1.0, 2.0, 1.0], 0.0),
                    ObjectSpec {
                        class: "truck".into(),
                        ..car("cart", frames, [-2.0, -0.45, 0.0], [0.0, 0.0, -0.1], 90.0)
                    },
                    ObjectSpec {
                        scale: 0.5,
                        ..object(
                            "ball",
                            Primitive::Icosphere,
                            "vegetation",
                            vec![kf(0, [1.5, -0.5, -2.0], 0.0)],
                        )
                    },
                ],
            )
        }
        "single-frame" => base(
            1,
            camera(vec![kf(0, [0.0, 0.5, 2.0], 0.0)]),
            vec![
                ground(),
                building("block", [0.0, 0.5, -6.0], [2.0, 3.0, 2.0], 15.0),
                car("car", 1, [-1.5, -0.45, -4.0], [0.0; 3], 30.0),
            ],
        ),
        other => return Err(SceneError::UnknownPreset(other.to_string())),
    };
    script.check()?;
    Ok(script)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid_and_round_trip_through_toml() {
        for name in PRESETS {
            let s = preset(name, 7).unwrap();
            let back = SceneScript::from_toml(&s.to_toml()).unwrap();
            assert_eq!(back, s, "{name}");
        }
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(preset("nope", 0), Err(SceneError::UnknownPreset(_))));
    }

    #[test]
    fn keyframe_outside_sequence_is_rejected() {
        let mut s = preset("single-frame", 0).unwrap();
        s.objects[1].keyframes[0].frame = 3;
        assert!(matches!(s.check(), Err(SceneError::InvalidScript(_))));
    }

    #[test]
    fn minimal_toml_uses_defaults() {
        let text = r#"
            frames = 2
            [camera]
            keyframes = [{ frame = 0, position = [0.0, 0.0, 3.0] }]
            [[objects]]
            name = "cube"
            primitive = "box"
            class = "car"
            keyframes = [{ frame = 0, position = [0.0, 0.0, 0.0], yaw = 45.0 }]
        "#;
        let s = SceneScript::from_toml(text).unwrap();
        assert_eq!(s.resolution, [320, 180]);
        assert_eq!(s.camera.fov_y, 60.0);
        assert_eq!(s.objects[0].scale, 1.0);
        assert_eq!(s.classes, default_classes());
    }

    #[test]
    fn syntax_errors_surface_as_invalid_script() {
        assert!(matches!(
            SceneScript::from_toml("frames = \"many\""),
            Err(SceneError::InvalidScript(_))
        ));
    }
}
