#![allow(dead_code)]

use rand::Rng;

use tracegt::correspondence::{dense_flow_pair, FlowStatus};
use tracegt::scene::OracleGroundTruth;
use tracegt::shader::{
    Dest, Instruction, Opcode, Operand, OutputDecl, RegDecl, RegFile, RegRef, RegisterFile, ShaderId, ShaderKind,
    ShaderProgram, Swizzle, WriteMask,
};
use tracegt::trace::{TraceSequence, BACKGROUND};
use tracegt::tracking::{AssociationGraph, TrackSet};

pub const VS_INPUTS: u16 = 4;
pub const VS_CONSTANTS: u16 = 12;
pub const TEMPS: u16 = 6;

fn reg(file: RegFile, index: u16) -> RegRef {
    RegRef { file, index }
}

fn random_value<R: Rng>(rng: &mut R) -> f32 {
    match rng.random_range(0..10) {
        0 => 0.0,
        1 => -1.0,
        2 => 1.0,
        _ => rng.random_range(-10.0..10.0),
    }
}

fn random_source<R: Rng>(rng: &mut R, readable: &[RegRef]) -> Operand {
    if rng.random_range(0..8) == 0 {
        let v = if rng.random() {
            [random_value(rng); 4]
        } else {
            [random_value(rng), random_value(rng), random_value(rng), random_value(rng)]
        };
        return Operand::Imm(v);
    }
    let swizzle = if rng.random() {
        Swizzle::IDENTITY
    } else {
        Swizzle([0, 1, 2, 3].map(|_| rng.random_range(0..4)))
    };
    // half the reads use earlier results, which lengthens dependency chains
    let computed = readable.iter().filter(|r| matches!(r.file, RegFile::Temp | RegFile::Output)).count();
    let pick = if rng.random() {
        readable.len() - computed + rng.random_range(0..computed)
    } else {
        rng.random_range(0..readable.len())
    };
    Operand::Reg {
        reg: readable[pick],
        swizzle,
        negate: rng.random_range(0..4) == 0,
    }
}

/// Straight-line program over the full opcode set, `m44` rows taken from
/// constants as the assembly language requires. Vertex programs read
/// `v0..v3`, `c0..c11`, temps and outputs and write temps and outputs
/// `o_pos, o_tex, o_n`. Pixel programs read `v0..v2`, `c0..c3` and write
/// `o_color, o_aux`, leaving `o1, o2` untouched.
pub fn random_program<R: Rng>(rng: &mut R, kind: ShaderKind) -> ShaderProgram {
    let (inputs, constants, outputs, written): (u16, u16, &[&str], u16) = match kind {
        ShaderKind::Vertex => (VS_INPUTS, VS_CONSTANTS, &["o_pos", "o_tex", "o_n"], 3),
        ShaderKind::Pixel => (3, 4, &["o_color", "o_aux", "o1", "o2"], 2),
    };
    let mut readable: Vec<RegRef> = (0..inputs).map(|i| reg(RegFile::Input, i)).collect();
    readable.extend((0..constants).map(|i| reg(RegFile::Constant, i)));
    readable.extend((0..TEMPS).map(|i| reg(RegFile::Temp, i)));
    readable.extend((0..written).map(|i| reg(RegFile::Output, i)));
    let mut writable: Vec<RegRef> = (0..TEMPS).map(|i| reg(RegFile::Temp, i)).collect();
    writable.extend((0..written).map(|i| reg(RegFile::Output, i)));

    let n = rng.random_range(1..=24);
    let mut instructions = Vec::with_capacity(n);
    for k in 0..n {
        let opcode = Opcode::ALL[rng.random_range(0..Opcode::ALL.len())];
        let mask = match rng.random_range(0..3) {
            0 => WriteMask::ALL,
            _ => WriteMask(rng.random_range(1..16)),
        };
        // the first output is written often and at the end, so slices are non-trivial
        let target = if k + 1 == n || rng.random_range(0..5) == 0 {
            reg(RegFile::Output, 0)
        } else {
            writable[rng.random_range(0..writable.len())]
        };
        let dest = Dest { reg: target, mask };
        let sources = if opcode == Opcode::M44 {
            let base = reg(RegFile::Constant, rng.random_range(0..=constants - 4));
            vec![random_source(rng, &readable), Operand::reg(base)]
        } else {
            (0..opcode.arity()).map(|_| random_source(rng, &readable)).collect()
        };
        instructions.push(Instruction { opcode, dest, sources });
    }
    let mut prog = ShaderProgram {
        shader_id: ShaderId(rng.random_range(0..100)),
        kind,
        inputs: (0..inputs).map(|index| RegDecl { index, arity: 4 }).collect(),
        outputs: outputs
            .iter()
            .map(|name| OutputDecl {
                name: name.to_string(),
                arity: 4,
                used: false,
            })
            .collect(),
        constants: (0..constants).map(|index| RegDecl { index, arity: 4 }).collect(),
        instructions,
    };
    prog.refresh_usage();
    prog
}

pub fn random_bindings<R: Rng>(rng: &mut R, prog: &ShaderProgram) -> RegisterFile {
    let mut file = RegisterFile::default();
    for d in &prog.inputs {
        file.bind_input(d.index, [0; 4].map(|_| random_value(rng)));
    }
    for d in &prog.constants {
        file.bind_constant(d.index, [0; 4].map(|_| random_value(rng)));
    }
    file
}

pub fn bits(v: &[f32; 4]) -> [u32; 4] {
    v.map(f32::to_bits)
}

/// Exhaustive maximum matching weight: rows in order, each either unmatched
/// or taking a free admissible column, memoized on `(row, used columns)`.
pub fn brute_force_optimum(graph: &AssociationGraph) -> f64 {
    let (n, m) = (graph.nodes_f.len(), graph.nodes_g.len());
    let mut w = vec![vec![None; m]; n];
    for e in graph.edges.iter().filter(|e| e.admissible) {
        w[e.i][e.j] = Some(e.weight);
    }
    let mut memo = vec![vec![f64::NAN; 1 << m]; n + 1];
    fn go(i: usize, used: usize, w: &[Vec<Option<f64>>], memo: &mut [Vec<f64>]) -> f64 {
        if i == w.len() {
            return 0.0;
        }
        if !memo[i][used].is_nan() {
            return memo[i][used];
        }
        let mut best = go(i + 1, used, w, memo);
        for (j, wij) in w[i].iter().enumerate() {
            if let Some(x) = wij {
                if used & (1 << j) == 0 {
                    best = best.max(x + go(i + 1, used | (1 << j), w, memo));
                }
            }
        }
        memo[i][used] = best;
        best
    }
    go(0, 0, &w, &mut memo)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct FlowTally {
    /// Oracle-valid pixels considered.
    pub pixels: usize,
    /// Of those, pixels not derived valid or beyond the tolerance.
    pub failures: usize,
    pub worst: f64,
}

impl FlowTally {
    pub fn inlier_rate(&self) -> f64 {
        1.0 - self.failures as f64 / self.pixels as f64
    }
}

/// Compares derived consecutive-pair flow to the oracle over oracle-valid
/// pixels selected by `keep(frame, pixel)`.
pub fn compare_flow(
    seq: &TraceSequence,
    truth: &OracleGroundTruth,
    tracks: &TrackSet,
    tolerance: f64,
    keep: impl Fn(usize, usize) -> bool,
) -> FlowTally {
    let mut t = FlowTally::default();
    for (k, oracle) in truth.flows.iter().enumerate() {
        let derived = dense_flow_pair(seq, k, k + 1, &tracks.mapping(k, k + 1));
        for i in 0..oracle.len() {
            if oracle.status[i] != FlowStatus::Valid || !keep(k, i) {
                continue;
            }
            t.pixels += 1;
            let e = derived.endpoint_error(oracle, i);
            if derived.status[i] != FlowStatus::Valid || e > tolerance {
                t.failures += 1;
            } else {
                t.worst = t.worst.max(e);
            }
        }
    }
    t
}

/// Whether pixel `i` of frame `k` shows a skinned draw.
pub fn is_skinned_pixel(seq: &TraceSequence, k: usize, i: usize) -> bool {
    let frame = &seq.frames[k];
    let d = frame.gbuffer.draw_index[i];
    d != BACKGROUND && frame.draws[d as usize].is_skinned()
}
