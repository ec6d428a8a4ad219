//! On-disk formats for derived annotations: `.flo` flow, PNG label and status
//! planes, and whitespace-separated text records.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb};
use thiserror::Error;

use crate::correspondence::{FlowField, FlowStatus, Pose};
use crate::instance::BBox3D;
use crate::math::{Mat3, Mat4, Vec3};
use crate::trace::{ClassId, Visibility};

/// Sanity tag opening every `.flo` file.
pub const FLO_TAG: f32 = 202021.25;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
}

impl FormatError {
    fn malformed(path: &Path, message: impl Into<String>) -> Self {
        FormatError::Malformed {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, FormatError::Io { .. })
    }
}

fn image_error(path: &Path, e: image::ImageError) -> FormatError {
    match e {
        image::ImageError::IoError(source) => FormatError::io(path, source),
        other => FormatError::malformed(path, other.to_string()),
    }
}

fn read(path: &Path) -> Result<Vec<u8>, FormatError> {
    fs::read(path).map_err(|e| FormatError::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    fs::write(path, bytes).map_err(|e| FormatError::io(path, e))
}

pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + flow.len() * 8);
    out.extend_from_slice(&FLO_TAG.to_le_bytes());
    out.extend_from_slice(&(flow.width as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height as i32).to_le_bytes());
    for (u, v) in flow.du.iter().zip(&flow.dv) {
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes the vectors of a `.flo` file; every status is `Valid`.
pub fn decode_flo(bytes: &[u8], path: &Path) -> Result<FlowField, FormatError> {
    let word = |k: usize| -> Result<[u8; 4], FormatError> {
        bytes
            .get(4 * k..4 * k + 4)
            .map(|b| b.try_into().unwrap())
            .ok_or_else(|| FormatError::malformed(path, "truncated flow file"))
    };
    if f32::from_le_bytes(word(0)?) != FLO_TAG {
        return Err(FormatError::malformed(path, "bad flow tag"));
    }
    let (w, h) = (i32::from_le_bytes(word(1)?), i32::from_le_bytes(word(2)?));
    if w < 0 || h < 0 {
        return Err(FormatError::malformed(path, "negative flow dimensions"));
    }
    let n = w as usize * h as usize;
    if bytes.len() != 12 + 8 * n {
        return Err(FormatError::malformed(path, "flow payload length does not match dimensions"));
    }
    let mut flow = FlowField::new(w as u32, h as u32);
    for i in 0..n {
        flow.du[i] = f32::from_le_bytes(word(3 + 2 * i)?);
        flow.dv[i] = f32::from_le_bytes(word(4 + 2 * i)?);
        flow.status[i] = FlowStatus::Valid;
    }
    Ok(flow)
}

pub fn write_flo(path: &Path, flow: &FlowField) -> Result<(), FormatError> {
    write(path, &encode_flo(flow))
}

pub fn read_flo(path: &Path) -> Result<FlowField, FormatError> {
    decode_flo(&read(path)?, path)
}

pub fn write_status_png(path: &Path, flow: &FlowField) -> Result<(), FormatError> {
    let codes: Vec<u8> = flow.status.iter().map(|s| s.code()).collect();
    ImageBuffer::<Luma<u8>, _>::from_raw(flow.width, flow.height, codes)
        .expect("plane size matches")
        .save(path)
        .map_err(|e| image_error(path, e))
}

/// Reads a status plane into `flow`, which must have matching dimensions.
pub fn read_status_png(path: &Path, flow: &mut FlowField) -> Result<(), FormatError> {
    let img = image::open(path).map_err(|e| image_error(path, e))?;
    let img = match img {
        image::DynamicImage::ImageLuma8(i) => i,
        _ => return Err(FormatError::malformed(path, "status plane must be 8-bit grayscale")),
    };
    if (img.width(), img.height()) != (flow.width, flow.height) {
        return Err(FormatError::malformed(path, "status plane size differs from flow"));
    }
    for (s, &c) in flow.status.iter_mut().zip(img.as_raw()) {
        *s = FlowStatus::from_code(c).ok_or_else(|| FormatError::malformed(path, format!("status code {c}")))?;
    }
    Ok(())
}

/// Flow vectors from `<stem>.flo` and statuses from `<stem>_status.png`
/// when present.
pub fn read_flow_pair(flo: &Path) -> Result<FlowField, FormatError> {
    let mut flow = read_flo(flo)?;
    let status = status_path(flo);
    if status.exists() {
        read_status_png(&status, &mut flow)?;
    }
    Ok(flow)
}

pub fn status_path(flo: &Path) -> PathBuf {
    let stem = flo.file_stem().and_then(|s| s.to_str()).unwrap_or("flow");
    flo.with_file_name(format!("{stem}_status.png"))
}

pub fn write_label_png(path: &Path, width: u32, height: u32, labels: &[u16]) -> Result<(), FormatError> {
    ImageBuffer::<Luma<u16>, _>::from_raw(width, height, labels.to_vec())
        .ok_or_else(|| FormatError::malformed(path, "label plane size mismatch"))?
        .save(path)
        .map_err(|e| image_error(path, e))
}

/// Converts instance ids to 16-bit labels.
pub fn to_u16_labels(labels: &[u32], path: &Path) -> Result<Vec<u16>, FormatError> {
    labels
        .iter()
        .map(|&l| u16::try_from(l).map_err(|_| FormatError::malformed(path, format!("label {l} exceeds 16 bits"))))
        .collect()
}

/// `(width, height, labels)` of a 16-bit grayscale PNG.
pub fn read_label_png(path: &Path) -> Result<(u32, u32, Vec<u16>), FormatError> {
    let img = image::open(path).map_err(|e| image_error(path, e))?;
    match img {
        image::DynamicImage::ImageLuma16(i) => Ok((i.width(), i.height(), i.into_raw())),
        _ => Err(FormatError::malformed(path, "label image must be 16-bit grayscale")),
    }
}

pub fn write_boundary_png(path: &Path, width: u32, height: u32, mask: &[bool]) -> Result<(), FormatError> {
    let px: Vec<u8> = mask.iter().map(|&b| if b { 255 } else { 0 }).collect();
    ImageBuffer::<Luma<u8>, _>::from_raw(width, height, px)
        .expect("plane size matches")
        .save(path)
        .map_err(|e| image_error(path, e))
}

/// One text record per line; blank lines and `#` comments are skipped.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(n, l)| (n, l.split_whitespace().collect()))
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, s: &str) -> Result<T, FormatError> {
    s.parse()
        .map_err(|_| FormatError::malformed(path, format!("line {line}: cannot parse {s:?}")))
}

pub const BOX_HEADER: &str = "# frame_index instance_id class_id cx cy cz hx hy hz r00 r01 r02 r10 r11 r12 r20 r21 r22";

pub fn format_boxes(boxes: &[(u32, BBox3D)]) -> String {
    let mut s = String::from(BOX_HEADER);
    s.push('\n');
    for (frame, b) in boxes {
        write!(s, "{frame} {} {}", b.instance_id, b.class_id.0).unwrap();
        for v in b.center.iter().chain(b.half_extents.iter()) {
            write!(s, " {v}").unwrap();
        }
        for r in 0..3 {
            for c in 0..3 {
                write!(s, " {}", b.rotation[(r, c)]).unwrap();
            }
        }
        s.push('\n');
    }
    s
}

pub fn parse_boxes(text: &str, path: &Path) -> Result<Vec<(u32, BBox3D)>, FormatError> {
    records(text)
        .map(|(n, f)| {
            if f.len() != 18 {
                return Err(FormatError::malformed(path, format!("line {n}: expected 18 fields")));
            }
            let v: Vec<f64> = f[3..].iter().map(|s| field(path, n, s)).collect::<Result<_, _>>()?;
            Ok((
                field(path, n, f[0])?,
                BBox3D {
                    instance_id: field(path, n, f[1])?,
                    class_id: ClassId(field(path, n, f[2])?),
                    center: Vec3::new(v[0], v[1], v[2]),
                    half_extents: Vec3::new(v[3], v[4], v[5]),
                    rotation: Mat3::from_row_slice(&v[6..15]),
                },
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackRecord {
    pub frame_index: u32,
    pub track_id: u32,
    pub instance_id: u32,
    pub class_id: ClassId,
    pub visibility: Visibility,
}

pub const TRACK_HEADER: &str = "# frame_index track_id instance_id class_id visibility";

pub fn format_tracks(records: &[TrackRecord]) -> String {
    let mut s = String::from(TRACK_HEADER);
    s.push('\n');
    for r in records {
        writeln!(
            s,
            "{} {} {} {} {}",
            r.frame_index,
            r.track_id,
            r.instance_id,
            r.class_id.0,
            r.visibility.name()
        )
        .unwrap();
    }
    s
}

pub fn parse_tracks(text: &str, path: &Path) -> Result<Vec<TrackRecord>, FormatError> {
    records(text)
        .map(|(n, f)| {
            if f.len() != 5 {
                return Err(FormatError::malformed(path, format!("line {n}: expected 5 fields")));
            }
            let visibility = [Visibility::Rendered, Visibility::Culled, Visibility::DepthFailed]
                .into_iter()
                .find(|v| v.name() == f[4])
                .ok_or_else(|| FormatError::malformed(path, format!("line {n}: visibility {:?}", f[4])))?;
            Ok(TrackRecord {
                frame_index: field(path, n, f[0])?,
                track_id: field(path, n, f[1])?,
                instance_id: field(path, n, f[2])?,
                class_id: ClassId(field(path, n, f[3])?),
                visibility,
            })
        })
        .collect()
}

/// KITTI layout: the top three rows of each camera-to-world matrix, row-major.
pub fn format_poses(poses: &[Pose]) -> String {
    let mut s = String::new();
    for p in poses {
        let m = &p.camera_to_world;
        let vals: Vec<String> = (0..3)
            .flat_map(|r| (0..4).map(move |c| (r, c)))
            .map(|(r, c)| m[(r, c)].to_string())
            .collect();
        s.push_str(&vals.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_poses(text: &str, path: &Path) -> Result<Vec<Mat4>, FormatError> {
    records(text)
        .map(|(n, f)| {
            if f.len() != 12 {
                return Err(FormatError::malformed(path, format!("line {n}: expected 12 values")));
            }
            let v: Vec<f64> = f.iter().map(|s| field(path, n, s)).collect::<Result<_, _>>()?;
            let mut m = Mat4::identity();
            for r in 0..3 {
                for c in 0..4 {
                    m[(r, c)] = v[4 * r + c];
                }
            }
            Ok(m)
        })
        .collect()
}

/// `key=value` lines in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub entries: Vec<(String, String)>,
}

impl Report {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str) -> Report {
        Report {
            entries: text
                .lines()
                .filter_map(|l| l.split_once('='))
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .collect(),
        }
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), FormatError> {
    let file = fs::File::create(path).map_err(|e| FormatError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes()).map_err(|e| FormatError::io(path, e))?;
    w.flush().map_err(|e| FormatError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|e| FormatError::io(path, e))
}

fn hsv(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h = h.rem_euclid(1.0) * 6.0;
    let i = h.floor();
    let f = h - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    let (r, g, b) = match i as u32 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [r, g, b].map(|c| (c * 255.0).round() as u8)
}

/// Hue encodes direction and saturation the magnitude relative to the
/// largest valid vector; non-valid pixels are black.
pub fn write_flow_vis(path: &Path, flow: &FlowField) -> Result<(), FormatError> {
    let max = (0..flow.len())
        .filter(|&i| flow.status[i] == FlowStatus::Valid)
        .map(|i| flow.vector(i).norm())
        .fold(1e-9, f64::max);
    let mut img = ImageBuffer::<Rgb<u8>, _>::new(flow.width, flow.height);
    for (i, px) in img.pixels_mut().enumerate() {
        if flow.status[i] != FlowStatus::Valid {
            continue;
        }
        let v = flow.vector(i);
        let hue = (v.y.atan2(v.x) / std::f64::consts::TAU).rem_euclid(1.0);
        *px = Rgb(hsv(hue, (v.norm() / max).min(1.0), 1.0));
    }
    img.save(path).map_err(|e| image_error(path, e))
}

/// Deterministic colour per id; `0` is black.
pub fn id_color(id: u32) -> [u8; 3] {
    if id == 0 {
        return [0, 0, 0];
    }
    let h = id.wrapping_mul(0x9E37_79B9).rotate_left(7);
    hsv(h as f64 / u32::MAX as f64, 0.65, 0.95)
}

pub fn write_label_vis(path: &Path, width: u32, height: u32, labels: &[u32]) -> Result<(), FormatError> {
    let mut img = ImageBuffer::<Rgb<u8>, _>::new(width, height);
    for (px, &l) in img.pixels_mut().zip(labels) {
        *px = Rgb(id_color(l));
    }
    img.save(path).map_err(|e| image_error(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_flow() -> FlowField {
        let mut f = FlowField::new(3, 2);
        for i in 0..6 {
            f.du[i] = i as f32 * 0.123_456_7 - 1.0;
            f.dv[i] = f32::from_bits(0x3f80_0001 + i as u32);
            f.status[i] = FlowStatus::ALL[i % 5];
        }
        f
    }

    #[test]
    fn flo_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.flo");
        let f = sample_flow();
        write_flo(&p, &f).unwrap();
        write_status_png(&status_path(&p), &f).unwrap();
        let back = read_flow_pair(&p).unwrap();
        assert_eq!(back, f);
        let bytes = fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 12 + 6 * 8);
        assert_eq!(&bytes[0..4], b"PIEH");
    }

    #[test]
    fn flo_rejects_bad_input() {
        let p = Path::new("x.flo");
        let mut bytes = encode_flo(&sample_flow());
        assert!(decode_flo(&bytes[..20], p).is_err());
        bytes[0] = 0;
        assert!(matches!(decode_flo(&bytes, p), Err(FormatError::Malformed { .. })));
    }

    #[test]
    fn label_png_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.png");
        let labels: Vec<u16> = (0..40).map(|i| (i * 1733 % 65536) as u16).collect();
        write_label_png(&p, 8, 5, &labels).unwrap();
        assert_eq!(read_label_png(&p).unwrap(), (8, 5, labels));
    }

    #[test]
    fn oversized_labels_are_rejected() {
        assert!(to_u16_labels(&[1, 70000], Path::new("x")).is_err());
    }

    #[test]
    fn text_records_round_trip() {
        let b = BBox3D {
            instance_id: 4,
            class_id: ClassId(5),
            center: Vec3::new(0.1, -2.0, 1.0 / 3.0),
            half_extents: Vec3::new(1.0, 2.0, 3.0),
            rotation: Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0),
        };
        let p = Path::new("boxes.txt");
        assert_eq!(parse_boxes(&format_boxes(&[(7, b.clone())]), p).unwrap(), vec![(7, b)]);
        let t = TrackRecord {
            frame_index: 3,
            track_id: 9,
            instance_id: 2,
            class_id: ClassId(1),
            visibility: Visibility::DepthFailed,
        };
        assert_eq!(parse_tracks(&format_tracks(&[t.clone()]), p).unwrap(), vec![t]);
        let pose = Pose {
            frame_index: 0,
            camera_to_world: crate::math::rigid_yaw_pitch(Vec3::new(1.0, 2.0, 3.0), 33.0, -4.0),
        };
        assert_eq!(parse_poses(&format_poses(&[pose]), p).unwrap(), vec![pose.camera_to_world]);
    }

    #[test]
    fn report_round_trip() {
        let mut r = Report::default();
        r.push("task", "flow");
        r.push("wauc", 99.5);
        let back = Report::parse(&r.render());
        assert_eq!(back, r);
        assert_eq!(back.get("wauc"), Some("99.5"));
    }

    #[test]
    fn id_colors_are_stable() {
        assert_eq!(id_color(0), [0, 0, 0]);
        assert_eq!(id_color(17), id_color(17));
        assert_ne!(id_color(1), id_color(2));
    }
}
