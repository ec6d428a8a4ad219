//! Mesh association across frames and persistent track identities.

mod matching;

use crate::math::Vec3;
use crate::trace::{ClassId, FrameRecord, SegmentId, SemanticClass, TraceSequence};

pub use matching::{matching_weight, solve_matching};

pub const DEFAULT_MAX_EXTRAPOLATION: u32 = 10;

pub type TrackId = u32;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    /// Draw index in its frame; `None` for an extrapolated phantom.
    pub draw: Option<usize>,
    pub track: Option<TrackId>,
    pub position: Vec3,
    pub class_id: ClassId,
    pub segment_id: SegmentId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
    pub admissible: bool,
    /// `speed cap - distance` on admissible edges, `0` otherwise.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationGraph {
    pub nodes_f: Vec<Node>,
    pub nodes_g: Vec<Node>,
    /// One edge per node pair, row-major over `(i, j)`.
    pub edges: Vec<Edge>,
}

/// Nodes for every draw of a frame, culled and depth-failed ones included.
pub fn frame_nodes(frame: &FrameRecord) -> Vec<Node> {
    frame
        .draws
        .iter()
        .enumerate()
        .map(|(di, d)| Node {
            draw: Some(di),
            track: None,
            position: d.position(),
            class_id: d.class_id,
            segment_id: d.segment_id,
        })
        .collect()
}

/// Whether an `f -> g` edge may be matched, with the cap taken from the
/// `f` node's class: same class, distance strictly under the cap, and for
/// dynamic classes the same segment id.
pub fn is_admissible(a: &Node, b: &Node, distance: f64, classes: &[SemanticClass]) -> bool {
    let Some(class) = classes.iter().find(|c| c.class_id == a.class_id) else {
        return false;
    };
    a.class_id == b.class_id
        && distance < class.max_speed as f64
        && (!class.is_dynamic || a.segment_id == b.segment_id)
}

pub fn build_graph(nodes_f: Vec<Node>, nodes_g: Vec<Node>, classes: &[SemanticClass]) -> AssociationGraph {
    let mut edges = Vec::with_capacity(nodes_f.len() * nodes_g.len());
    for (i, a) in nodes_f.iter().enumerate() {
        let cap = classes
            .iter()
            .find(|c| c.class_id == a.class_id)
            .map_or(0.0, |c| c.max_speed as f64);
        for (j, b) in nodes_g.iter().enumerate() {
            let distance = (a.position - b.position).norm();
            let admissible = is_admissible(a, b, distance, classes);
            edges.push(Edge {
                i,
                j,
                distance,
                admissible,
                weight: if admissible { cap - distance } else { 0.0 },
            });
        }
    }
    AssociationGraph {
        nodes_f,
        nodes_g,
        edges,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrackEntry {
    Draw(usize),
    Extrapolated { position: Vec3, frames_missing: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: TrackId,
    pub class_id: ClassId,
    /// `(frame position, entry)` in increasing frame order.
    pub entries: Vec<(usize, TrackEntry)>,
}

impl Track {
    pub fn first_frame(&self) -> usize {
        self.entries[0].0
    }

    pub fn draw_in(&self, frame: usize) -> Option<usize> {
        self.entries.iter().find_map(|&(f, e)| match e {
            TrackEntry::Draw(d) if f == frame => Some(d),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackSet {
    pub tracks: Vec<Track>,
    pub max_extrapolation_frames: u32,
    /// Track of each draw, per frame position.
    pub assignment: Vec<Vec<TrackId>>,
}

impl TrackSet {
    pub fn track_of(&self, frame: usize, draw: usize) -> TrackId {
        self.assignment[frame][draw]
    }

    pub fn track(&self, id: TrackId) -> &Track {
        &self.tracks[(id - 1) as usize]
    }

    /// Draw in frame `g` carrying the same track as each draw of frame `f`.
    pub fn mapping(&self, f: usize, g: usize) -> Vec<Option<usize>> {
        self.assignment[f]
            .iter()
            .map(|&t| self.track(t).draw_in(g))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackingParams {
    pub max_extrapolation_frames: u32,
}

impl Default for TrackingParams {
    fn default() -> Self {
        TrackingParams {
            max_extrapolation_frames: DEFAULT_MAX_EXTRAPOLATION,
        }
    }
}

struct Active {
    id: TrackId,
    class_id: ClassId,
    segment_id: SegmentId,
    last_frame: usize,
    last_position: Vec3,
    velocity: Vec3,
    /// Draw matched in the most recent frame, if any.
    draw: Option<usize>,
}

impl Active {
    fn position_at(&self, frame: usize) -> Vec3 {
        self.last_position + self.velocity * (frame - self.last_frame) as f64
    }
}

/// Sequential association over consecutive frame pairs.
///
/// Tracks whose object disappears are carried as phantoms at their linearly
/// extrapolated position and retire once missing for more than
/// `max_extrapolation_frames` frames. Ids start at 1 and are never reused.
pub fn track_sequence(seq: &TraceSequence, params: TrackingParams) -> TrackSet {
    let mut tracks: Vec<Track> = Vec::new();
    let mut assignment: Vec<Vec<TrackId>> = Vec::with_capacity(seq.frames.len());
    let mut active: Vec<Active> = Vec::new();

    let open = |tracks: &mut Vec<Track>, frame: usize, di: usize, fr: &FrameRecord| -> Active {
        let d = &fr.draws[di];
        let id = tracks.len() as TrackId + 1;
        tracks.push(Track {
            track_id: id,
            class_id: d.class_id,
            entries: vec![(frame, TrackEntry::Draw(di))],
        });
        Active {
            id,
            class_id: d.class_id,
            segment_id: d.segment_id,
            last_frame: frame,
            last_position: d.position(),
            velocity: Vec3::zeros(),
            draw: Some(di),
        }
    };

    for (g, frame) in seq.frames.iter().enumerate() {
        let mut ids = vec![0; frame.draws.len()];
        let mut next_active = Vec::with_capacity(active.len() + frame.draws.len());
        if g == 0 {
            for di in 0..frame.draws.len() {
                let a = open(&mut tracks, g, di, frame);
                ids[di] = a.id;
                next_active.push(a);
            }
        } else {
            let f = g - 1;
            let nodes_f: Vec<Node> = active
                .iter()
                .map(|a| Node {
                    draw: a.draw,
                    track: Some(a.id),
                    position: a.position_at(f),
                    class_id: a.class_id,
                    segment_id: a.segment_id,
                })
                .collect();
            let graph = build_graph(nodes_f, frame_nodes(frame), &seq.class_table);
            let pairs = solve_matching(&graph);
            let mut matched_f = vec![None; active.len()];
            let mut matched_g = vec![false; frame.draws.len()];
            for &(i, j) in &pairs {
                matched_f[i] = Some(j);
                matched_g[j] = true;
            }
            for (a, m) in active.into_iter().zip(matched_f) {
                let track = &mut tracks[(a.id - 1) as usize];
                match m {
                    Some(j) => {
                        let d = &frame.draws[j];
                        let p = d.position();
                        let gap = (g - a.last_frame) as f64;
                        track.entries.push((g, TrackEntry::Draw(j)));
                        ids[j] = a.id;
                        next_active.push(Active {
                            segment_id: d.segment_id,
                            last_frame: g,
                            last_position: p,
                            velocity: (p - a.last_position) / gap,
                            draw: Some(j),
                            ..a
                        });
                    }
                    None => {
                        let missing = (g - a.last_frame) as u32;
                        if missing <= params.max_extrapolation_frames {
                            track.entries.push((
                                g,
                                TrackEntry::Extrapolated {
                                    position: a.position_at(g),
                                    frames_missing: missing,
                                },
                            ));
                            next_active.push(Active { draw: None, ..a });
                        }
                    }
                }
            }
            for j in (0..frame.draws.len()).filter(|&j| !matched_g[j]) {
                let a = open(&mut tracks, g, j, frame);
                ids[j] = a.id;
                next_active.push(a);
            }
        }
        assignment.push(ids);
        active = next_active;
    }
    TrackSet {
        tracks,
        max_extrapolation_frames: params.max_extrapolation_frames,
        assignment,
    }
}
