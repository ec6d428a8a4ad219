//! End-to-end derivation of every annotation from a trace, the on-disk
//! output layout, and evaluation of predictions against that layout.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::correspondence::{camera_pose, dense_flow_pair, wide_baseline_flow, CorrespondenceError, FlowField, Pose};
use crate::instance::{bbox3d, cluster_instances, instance_boundaries, instance_mask, BBox3D, InstanceError, InstanceMap};
use crate::io::{self, FormatError, Report, TrackRecord};
use crate::metrics::{
    rotation_error, ApAccumulator, ConfusionAccumulator, Detection, GroundTruthInstance, MetricsError, TrajectoryPair,
    WaucAccumulator, DEFAULT_SEGMENT_LENGTHS,
};
use crate::scene::OracleGroundTruth;
use crate::tracking::{track_sequence, TrackSet, TrackingParams, DEFAULT_MAX_EXTRAPOLATION};
use crate::trace::TraceSequence;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("frame {frame}: {source}")]
    Pose {
        frame: u32,
        #[source]
        source: CorrespondenceError,
    },
    #[error("frame {frame}: {source}")]
    Instance {
        frame: u32,
        #[source]
        source: InstanceError,
    },
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutputFormats {
    pub png: bool,
    pub flo: bool,
    pub txt: bool,
}

impl OutputFormats {
    pub const ALL: OutputFormats = OutputFormats {
        png: true,
        flo: true,
        txt: true,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeriveConfig {
    /// Worker count; `0` lets the pool choose.
    pub threads: usize,
    pub max_extrapolation_frames: u32,
    /// Frame offsets `k >= 2` for extra flow pairs `(f, f + k)`.
    pub wide_baseline: Vec<usize>,
    pub export_vis: bool,
    pub formats: OutputFormats,
}

impl Default for DeriveConfig {
    fn default() -> Self {
        DeriveConfig {
            threads: 0,
            max_extrapolation_frames: DEFAULT_MAX_EXTRAPOLATION,
            wide_baseline: vec![],
            export_vis: false,
            formats: OutputFormats::ALL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutputs {
    pub frame_index: u32,
    pub instances: InstanceMap,
    pub semantic: Vec<u16>,
    pub boundaries: Vec<bool>,
    pub boxes: Vec<BBox3D>,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowPair {
    /// Positions in the frame list.
    pub source: usize,
    pub target: usize,
    pub flow: FlowField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Derived {
    pub frames: Vec<FrameOutputs>,
    pub tracks: TrackSet,
    pub flows: Vec<FlowPair>,
    pub track_records: Vec<TrackRecord>,
}

fn derive_frame(seq: &TraceSequence, k: usize) -> Result<FrameOutputs, PipelineError> {
    let frame = &seq.frames[k];
    let pose = camera_pose(frame).map_err(|source| PipelineError::Pose {
        frame: frame.frame_index,
        source,
    })?;
    let instances = cluster_instances(frame);
    let (_, semantic) = instance_mask(frame, &instances);
    let boundaries = instance_boundaries(&instances.label_image, instances.width, instances.height);
    let boxes = instances
        .instances
        .iter()
        .map(|i| bbox3d(seq, frame, i))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| PipelineError::Instance {
            frame: frame.frame_index,
            source,
        })?;
    Ok(FrameOutputs {
        frame_index: frame.frame_index,
        instances,
        semantic,
        boundaries,
        boxes,
        pose,
    })
}

fn run(seq: &TraceSequence, config: &DeriveConfig) -> Result<Derived, PipelineError> {
    let frames = (0..seq.frames.len())
        .into_par_iter()
        .map(|k| derive_frame(seq, k))
        .collect::<Result<Vec<_>, _>>()?;
    let tracks = track_sequence(
        seq,
        TrackingParams {
            max_extrapolation_frames: config.max_extrapolation_frames,
        },
    );
    let n = seq.frames.len();
    let mut pairs: Vec<(usize, usize)> = (1..n).map(|g| (g - 1, g)).collect();
    for &k in config.wide_baseline.iter().filter(|&&k| k >= 2) {
        pairs.extend((k..n).map(|h| (h - k, h)));
    }
    let flows = pairs
        .par_iter()
        .map(|&(f, g)| FlowPair {
            source: f,
            target: g,
            flow: if g == f + 1 {
                dense_flow_pair(seq, f, g, &tracks.mapping(f, g))
            } else {
                wide_baseline_flow(seq, f, g, &tracks)
            },
        })
        .collect();
    let mut track_records = Vec::new();
    for (k, frame) in seq.frames.iter().enumerate() {
        let inst = frames[k].instances.draw_instances(frame.draws.len());
        for (di, d) in frame.draws.iter().enumerate() {
            track_records.push(TrackRecord {
                frame_index: frame.frame_index,
                track_id: tracks.track_of(k, di),
                instance_id: inst[di],
                class_id: d.class_id,
                visibility: d.visibility,
            });
        }
    }
    Ok(Derived {
        frames,
        tracks,
        flows,
        track_records,
    })
}

/// Derives every annotation. Results do not depend on the worker count.
pub fn derive(seq: &TraceSequence, config: &DeriveConfig) -> Result<Derived, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    pool.install(|| run(seq, config))
}

/// Persistent id of each instance: the smallest track id among its members.
pub fn persistent_instance_ids(map: &InstanceMap, tracks: &TrackSet, frame: usize) -> Vec<(u32, u32)> {
    map.instances
        .iter()
        .map(|i| {
            let t = i.members.iter().map(|&m| tracks.track_of(frame, m)).min().unwrap_or(0);
            (i.instance_id, t)
        })
        .collect()
}

pub fn frame_name(frame_index: u32) -> String {
    format!("{frame_index:06}")
}

pub fn flow_name(source: u32, target: u32) -> String {
    format!("{source:06}_{target:06}")
}

fn ensure_dir(path: &Path) -> Result<(), FormatError> {
    fs::create_dir_all(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One frame of annotation images.
pub struct LayoutFrame<'a> {
    pub frame_index: u32,
    pub instance_labels: &'a [u32],
    pub semantic: &'a [u16],
    pub boundaries: Vec<bool>,
}

/// Everything written to an annotation directory. Derived outputs and the
/// generator's oracle share this layout, so either can be evaluated
/// against the other.
pub struct Layout<'a> {
    pub width: u32,
    pub height: u32,
    pub frames: Vec<LayoutFrame<'a>>,
    /// `(source frame index, target frame index, flow)`.
    pub flows: Vec<(u32, u32, &'a FlowField)>,
    pub boxes: Vec<(u32, BBox3D)>,
    pub tracks: Vec<TrackRecord>,
    pub poses: Vec<Pose>,
    pub summary: Vec<(&'static str, usize)>,
}

/// Writes `layout` under `dir` and returns the written paths, relative to
/// `dir`, in writing order. `manifest.txt` lists them.
pub fn write_layout(
    layout: &Layout,
    dir: &Path,
    formats: OutputFormats,
    export_vis: bool,
) -> Result<Vec<PathBuf>, FormatError> {
    let (w, h) = (layout.width, layout.height);
    let mut written = Vec::new();
    ensure_dir(dir)?;
    if formats.png {
        for sub in ["instances", "semantic", "boundaries"] {
            ensure_dir(&dir.join(sub))?;
        }
        for f in &layout.frames {
            let name = format!("{}.png", frame_name(f.frame_index));
            let inst = Path::new("instances").join(&name);
            let labels = io::to_u16_labels(f.instance_labels, &dir.join(&inst))?;
            io::write_label_png(&dir.join(&inst), w, h, &labels)?;
            written.push(inst);
            let sem = Path::new("semantic").join(&name);
            io::write_label_png(&dir.join(&sem), w, h, f.semantic)?;
            written.push(sem);
            let bnd = Path::new("boundaries").join(&name);
            io::write_boundary_png(&dir.join(&bnd), w, h, &f.boundaries)?;
            written.push(bnd);
        }
    }
    if formats.flo {
        ensure_dir(&dir.join("flow"))?;
        for &(s, t, flow) in &layout.flows {
            let flo = Path::new("flow").join(format!("{}.flo", flow_name(s, t)));
            io::write_flo(&dir.join(&flo), flow)?;
            let status = io::status_path(&flo);
            io::write_status_png(&dir.join(&status), flow)?;
            written.push(flo);
            written.push(status);
        }
    }
    if formats.txt {
        for (name, text) in [
            ("boxes.txt", io::format_boxes(&layout.boxes)),
            ("tracks.txt", io::format_tracks(&layout.tracks)),
            ("poses.txt", io::format_poses(&layout.poses)),
        ] {
            io::write_text(&dir.join(name), &text)?;
            written.push(PathBuf::from(name));
        }
    }
    if export_vis {
        ensure_dir(&dir.join("vis"))?;
        for f in &layout.frames {
            let p = Path::new("vis").join(format!("instances_{}.png", frame_name(f.frame_index)));
            io::write_label_vis(&dir.join(&p), w, h, f.instance_labels)?;
            written.push(p);
        }
        for &(s, t, flow) in &layout.flows {
            let p = Path::new("vis").join(format!("flow_{}.png", flow_name(s, t)));
            io::write_flow_vis(&dir.join(&p), flow)?;
            written.push(p);
        }
    }
    let mut manifest = Report::default();
    for &(k, v) in &layout.summary {
        manifest.push(k, v);
    }
    for p in &written {
        manifest.push("file", p.display());
    }
    io::write_text(&dir.join("manifest.txt"), &manifest.render())?;
    written.push(PathBuf::from("manifest.txt"));
    Ok(written)
}

/// Writes the derived annotations under `dir`; see [`write_layout`].
pub fn write_outputs(
    seq: &TraceSequence,
    derived: &Derived,
    dir: &Path,
    config: &DeriveConfig,
) -> Result<Vec<PathBuf>, FormatError> {
    let index = |k: usize| seq.frames[k].frame_index;
    let layout = Layout {
        width: seq.resolution.0,
        height: seq.resolution.1,
        frames: derived
            .frames
            .iter()
            .map(|f| LayoutFrame {
                frame_index: f.frame_index,
                instance_labels: &f.instances.label_image,
                semantic: &f.semantic,
                boundaries: f.boundaries.clone(),
            })
            .collect(),
        flows: derived.flows.iter().map(|p| (index(p.source), index(p.target), &p.flow)).collect(),
        boxes: derived
            .frames
            .iter()
            .flat_map(|f| f.boxes.iter().map(|b| (f.frame_index, b.clone())))
            .collect(),
        tracks: derived.track_records.clone(),
        poses: derived.frames.iter().map(|f| f.pose).collect(),
        summary: vec![
            ("frames", derived.frames.len()),
            ("flow_pairs", derived.flows.len()),
            ("tracks", derived.tracks.tracks.len()),
        ],
    };
    write_layout(&layout, dir, config.formats, config.export_vis)
}

/// Writes the generator's ground truth in the derived-output layout. Track
/// ids are the scripted `(object, part)` identities.
pub fn write_oracle(seq: &TraceSequence, truth: &OracleGroundTruth, dir: &Path) -> Result<Vec<PathBuf>, FormatError> {
    let (w, h) = seq.resolution;
    let mut tracks = Vec::new();
    for (k, of) in truth.frames.iter().enumerate() {
        let mut inst = vec![0; of.identity.len()];
        for i in &of.instances {
            for &m in &i.members {
                inst[m] = i.instance_id;
            }
        }
        for (di, d) in seq.frames[k].draws.iter().enumerate() {
            tracks.push(TrackRecord {
                frame_index: of.frame_index,
                track_id: of.identity[di],
                instance_id: inst[di],
                class_id: d.class_id,
                visibility: d.visibility,
            });
        }
    }
    let layout = Layout {
        width: w,
        height: h,
        frames: truth
            .frames
            .iter()
            .map(|f| LayoutFrame {
                frame_index: f.frame_index,
                instance_labels: &f.instance_labels,
                semantic: &f.semantic_labels,
                boundaries: instance_boundaries(&f.instance_labels, w, h),
            })
            .collect(),
        flows: truth
            .flows
            .iter()
            .enumerate()
            .map(|(k, fl)| (truth.frames[k].frame_index, truth.frames[k + 1].frame_index, fl))
            .collect(),
        boxes: truth
            .frames
            .iter()
            .flat_map(|f| {
                f.boxes.iter().map(|b| {
                    (
                        f.frame_index,
                        BBox3D {
                            instance_id: b.instance_id,
                            class_id: b.class_id,
                            center: b.center,
                            half_extents: b.half_extents,
                            rotation: b.rotation,
                        },
                    )
                })
            })
            .collect(),
        tracks,
        poses: truth
            .frames
            .iter()
            .map(|f| Pose {
                frame_index: f.frame_index,
                camera_to_world: f.camera_to_world,
            })
            .collect(),
        summary: vec![("frames", truth.frames.len()), ("flow_pairs", truth.flows.len())],
    };
    write_layout(&layout, dir, OutputFormats::ALL, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalTask {
    Seg,
    Inst,
    Flow,
    Odom,
}

impl EvalTask {
    pub fn name(self) -> &'static str {
        match self {
            EvalTask::Seg => "seg",
            EvalTask::Inst => "inst",
            EvalTask::Flow => "flow",
            EvalTask::Odom => "odom",
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{path}: {source}")]
    Metric {
        path: PathBuf,
        #[source]
        source: MetricsError,
    },
    #[error("{0}: no files to evaluate")]
    Empty(PathBuf),
}

fn listed(dir: &Path, ext: &str, skip_suffix: Option<&str>) -> Result<Vec<String>, FormatError> {
    let entries = fs::read_dir(dir).map_err(|source| FormatError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.ends_with(ext) && skip_suffix.is_none_or(|s| !n.ends_with(s)))
        .collect();
    names.sort();
    Ok(names)
}

fn metric(path: &Path, source: MetricsError) -> EvalError {
    EvalError::Metric {
        path: path.to_path_buf(),
        source,
    }
}

fn labels(path: &Path, size: Option<(u32, u32)>) -> Result<(u32, u32, Vec<u16>), EvalError> {
    let l = io::read_label_png(path)?;
    if let Some(s) = size {
        if (l.0, l.1) != s {
            return Err(metric(path, MetricsError::DimensionMismatch(l.2.len(), (s.0 * s.1) as usize)));
        }
    }
    Ok(l)
}

fn instance_masks(inst: &[u16], sem: &[u16]) -> BTreeMap<u16, (Vec<u32>, BTreeMap<u16, usize>)> {
    let mut out: BTreeMap<u16, (Vec<u32>, BTreeMap<u16, usize>)> = BTreeMap::new();
    for (i, (&id, &c)) in inst.iter().zip(sem).enumerate() {
        if id == 0 {
            continue;
        }
        let e = out.entry(id).or_default();
        e.0.push(i as u32);
        *e.1.entry(c).or_default() += 1;
    }
    out
}

fn majority(votes: &BTreeMap<u16, usize>) -> u16 {
    let mut best = (0, 0);
    for (&c, &n) in votes {
        if n > best.1 {
            best = (c, n);
        }
    }
    best.0
}

fn read_scores(path: &Path) -> Result<BTreeMap<u16, f64>, FormatError> {
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let text = io::read_text(path)?;
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() || f[0].starts_with('#') {
            continue;
        }
        let bad = || FormatError::Malformed {
            path: path.to_path_buf(),
            message: format!("line {}: expected `instance_id score`", n + 1),
        };
        if f.len() != 2 {
            return Err(bad());
        }
        out.insert(f[0].parse().map_err(|_| bad())?, f[1].parse().map_err(|_| bad())?);
    }
    Ok(out)
}

/// Scores `pred_dir` against `gt_dir`, both in the layout written by
/// [`write_outputs`]. Instance predictions may carry confidences in
/// `scores/<frame>.txt` as `instance_id score` lines (default `1`).
pub fn evaluate(task: EvalTask, pred_dir: &Path, gt_dir: &Path) -> Result<Report, EvalError> {
    let mut report = Report::default();
    report.push("task", task.name());
    match task {
        EvalTask::Seg => {
            let names = listed(&gt_dir.join("semantic"), ".png", None)?;
            let mut pairs = Vec::new();
            let mut classes = std::collections::BTreeSet::new();
            for n in &names {
                let (w, h, gt) = labels(&gt_dir.join("semantic").join(n), None)?;
                let (_, _, pred) = labels(&pred_dir.join("semantic").join(n), Some((w, h)))?;
                classes.extend(gt.iter().chain(&pred).copied().filter(|&c| c != 0));
                pairs.push((pred, gt));
            }
            if names.is_empty() {
                return Err(EvalError::Empty(gt_dir.join("semantic")));
            }
            let classes: Vec<u16> = classes.into_iter().collect();
            let mut acc = ConfusionAccumulator::new(&classes);
            for (p, g) in &pairs {
                acc.add(p, g).map_err(|e| metric(gt_dir, e))?;
            }
            let r = acc.report();
            report.push("frames", names.len());
            report.push("miou", r.mean);
            for (c, v) in r.per_class {
                report.push(format!("iou_{c}"), v);
            }
        }
        EvalTask::Inst => {
            let names = listed(&gt_dir.join("instances"), ".png", None)?;
            if names.is_empty() {
                return Err(EvalError::Empty(gt_dir.join("instances")));
            }
            let mut acc = ApAccumulator::new();
            for n in &names {
                let (w, h, gi) = labels(&gt_dir.join("instances").join(n), None)?;
                let (_, _, gs) = labels(&gt_dir.join("semantic").join(n), Some((w, h)))?;
                let (_, _, pi) = labels(&pred_dir.join("instances").join(n), Some((w, h)))?;
                let (_, _, ps) = labels(&pred_dir.join("semantic").join(n), Some((w, h)))?;
                let stem = n.trim_end_matches(".png");
                let scores = read_scores(&pred_dir.join("scores").join(format!("{stem}.txt")))?;
                let gt: Vec<GroundTruthInstance> = instance_masks(&gi, &gs)
                    .into_values()
                    .map(|(mask, votes)| GroundTruthInstance {
                        class_id: majority(&votes),
                        mask,
                    })
                    .collect();
                let det: Vec<Detection> = instance_masks(&pi, &ps)
                    .into_iter()
                    .map(|(id, (mask, votes))| Detection {
                        class_id: majority(&votes),
                        score: scores.get(&id).copied().unwrap_or(1.0),
                        mask,
                    })
                    .collect();
                acc.add_image(&gt, &det).map_err(|e| metric(&pred_dir.join("instances").join(n), e))?;
            }
            let r = acc.report();
            report.push("frames", names.len());
            report.push("map", r.mean);
            for (c, v) in r.per_class {
                report.push(format!("ap_{c}"), v);
            }
        }
        EvalTask::Flow => {
            let names = listed(&gt_dir.join("flow"), ".flo", None)?;
            if names.is_empty() {
                return Err(EvalError::Empty(gt_dir.join("flow")));
            }
            let mut acc = WaucAccumulator::default();
            for n in &names {
                let gt = io::read_flow_pair(&gt_dir.join("flow").join(n))?;
                let path = pred_dir.join("flow").join(n);
                let pred = io::read_flo(&path)?;
                acc.add(&pred, &gt).map_err(|e| metric(&path, e))?;
            }
            report.push("pairs", names.len());
            report.push("valid_pixels", acc.pixels);
            report.push("wauc", acc.value().map_err(|e| metric(gt_dir, e))?);
        }
        EvalTask::Odom => {
            let gt_path = gt_dir.join("poses.txt");
            let pred_path = pred_dir.join("poses.txt");
            let pair = TrajectoryPair {
                ground_truth: io::parse_poses(&io::read_text(&gt_path)?, &gt_path)?,
                predicted: io::parse_poses(&io::read_text(&pred_path)?, &pred_path)?,
            };
            let r = rotation_error(&pair, &DEFAULT_SEGMENT_LENGTHS).map_err(|e| metric(&pred_path, e))?;
            report.push("frames", pair.ground_truth.len());
            report.push("rotation_deg_per_unit", r.rotation);
            report.push("translation_percent", r.translation_percent);
            for (len, e, n) in r.per_length {
                report.push(format!("rotation_len_{len}"), e);
                report.push(format!("segments_len_{len}"), n);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, preset};

    #[test]
    fn single_frame_has_no_flow_pairs() {
        let (seq, _) = generate_scene(&preset("single-frame", 7).unwrap()).unwrap();
        let d = derive(&seq, &DeriveConfig::default()).unwrap();
        assert_eq!(d.frames.len(), 1);
        assert!(d.flows.is_empty());
        assert_eq!(d.track_records.len(), seq.frames[0].draws.len());
    }

    #[test]
    fn wide_baseline_pairs_are_added() {
        let (seq, _) = generate_scene(&preset("static-pan", 0).unwrap()).unwrap();
        let config = DeriveConfig {
            wide_baseline: vec![3],
            ..Default::default()
        };
        let d = derive(&seq, &config).unwrap();
        assert_eq!(d.flows.len(), 19 + 17);
        assert!(d.flows.iter().any(|p| (p.source, p.target) == (0, 3)));
    }

    #[test]
    fn evaluating_ground_truth_against_itself() {
        let (seq, _) = generate_scene(&preset("occlusion", 0).unwrap()).unwrap();
        let d = derive(&seq, &DeriveConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&seq, &d, dir.path(), &DeriveConfig::default()).unwrap();
        let get = |t, k: &str| -> f64 { evaluate(t, dir.path(), dir.path()).unwrap().get(k).unwrap().parse().unwrap() };
        assert_eq!(get(EvalTask::Seg, "miou"), 1.0);
        assert_eq!(get(EvalTask::Inst, "map"), 1.0);
        assert_eq!(get(EvalTask::Flow, "wauc"), 100.0);
        // static camera: no segment reaches a unit of path length
        assert!(matches!(
            evaluate(EvalTask::Odom, dir.path(), dir.path()),
            Err(EvalError::Metric {
                source: MetricsError::TrajectoryTooShort,
                ..
            })
        ));
    }

    #[test]
    fn odometry_of_ground_truth_against_itself() {
        let (seq, _) = generate_scene(&preset("static-pan", 0).unwrap()).unwrap();
        let config = DeriveConfig {
            formats: OutputFormats {
                png: false,
                flo: false,
                txt: true,
            },
            ..Default::default()
        };
        let d = derive(&seq, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&seq, &d, dir.path(), &config).unwrap();
        let r = evaluate(EvalTask::Odom, dir.path(), dir.path()).unwrap();
        assert_eq!(r.get("rotation_deg_per_unit"), Some("0"));
    }

    #[test]
    fn missing_prediction_is_a_format_error() {
        let (seq, _) = generate_scene(&preset("single-frame", 0).unwrap()).unwrap();
        let d = derive(&seq, &DeriveConfig::default()).unwrap();
        let gt = tempfile::tempdir().unwrap();
        let pred = tempfile::tempdir().unwrap();
        write_outputs(&seq, &d, gt.path(), &DeriveConfig::default()).unwrap();
        let e = evaluate(EvalTask::Seg, pred.path(), gt.path()).unwrap_err();
        assert!(e.to_string().contains("semantic"));
    }
}
