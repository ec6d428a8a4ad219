use std::collections::HashMap;

use super::{RegFile, RegRef, ShaderError, ShaderProgram};

/// A program reduced to the instructions one output depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceResult {
    pub program: ShaderProgram,
    /// Indices of the kept instructions in the original program, increasing.
    pub kept: Vec<usize>,
}

/// Backward data-flow slice toward `target`, tracked per register component.
///
/// A kept instruction kills the live components it writes and makes live the
/// components its sources contribute to them. Declarations are retained so
/// the slice binds exactly like the original.
pub fn slice_program(prog: &ShaderProgram, target: &str) -> Result<SliceResult, ShaderError> {
    let index = prog
        .output_index(target)
        .ok_or_else(|| ShaderError::UnknownOutput(target.to_string()))?;
    let mut live: HashMap<RegRef, u8> = HashMap::new();
    live.insert(
        RegRef {
            file: RegFile::Output,
            index,
        },
        0b1111,
    );

    let mut kept = Vec::new();
    for (i, inst) in prog.instructions.iter().enumerate().rev() {
        let live_mask = live.get(&inst.dest.reg).copied().unwrap_or(0) & inst.dest.mask.0;
        if live_mask == 0 {
            continue;
        }
        kept.push(i);
        let remaining = live.entry(inst.dest.reg).or_insert(0);
        *remaining &= !live_mask;
        for k in (0..4).filter(|k| live_mask & (1 << k) != 0) {
            for (reg, comp) in inst.reads_for(k) {
                *live.entry(reg).or_insert(0) |= 1 << comp;
            }
        }
    }
    kept.reverse();

    let mut program = prog.clone();
    program.instructions = kept.iter().map(|&i| prog.instructions[i].clone()).collect();
    program.refresh_usage();
    Ok(SliceResult { program, kept })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shader::{builtin, parse_program};

    #[test]
    fn whole_program_feeds_position() {
        let p = parse_program("vs; in v0:4; out o_pos:4; const c0..c3:4; m44 r0, v0, c0; add o_pos, r0, v0").unwrap();
        let s = slice_program(&p, "o_pos").unwrap();
        assert_eq!(s.kept, vec![0, 1]);
        assert_eq!(s.program.instructions, p.instructions);
    }

    #[test]
    fn drops_texture_coordinate_work() {
        let p = parse_program(
            "vs; in v0:4; in v1:4; out o_pos:4; out o_tex:4; const c0..c7:4\n\
             m44 o_pos, v0, c0\nmul o_tex, v1, c7",
        )
        .unwrap();
        let s = slice_program(&p, "o_pos").unwrap();
        assert_eq!(s.kept, vec![0]);
        assert!(!s.program.outputs[1].used);
    }

    #[test]
    fn component_precision() {
        // r0.y is dead for o_pos.x, so the instruction producing it goes away
        let p = parse_program(
            "vs; in v0:4; out o_pos:4\nmov r0.x, v0.x\nmov r0.y, v0.y\nmov o_pos.x, r0.x\nmov o_pos.yzw, v0.w",
        )
        .unwrap();
        assert_eq!(slice_program(&p, "o_pos").unwrap().kept, vec![0, 2, 3]);
    }

    #[test]
    fn overwritten_values_are_dead() {
        let p = parse_program("vs; in v0:4; out o_pos:4\nmov r0, l(1)\nmov r0, v0\nmov o_pos, r0").unwrap();
        assert_eq!(slice_program(&p, "o_pos").unwrap().kept, vec![1, 2]);
    }

    #[test]
    fn unknown_output() {
        let p = parse_program(builtin::SKINNING_VS).unwrap();
        assert_eq!(slice_program(&p, "o_nope").unwrap_err(), ShaderError::UnknownOutput("o_nope".into()));
    }

    #[test]
    fn skinning_slice_keeps_blend_only() {
        let p = parse_program(builtin::SKINNING_VS).unwrap();
        let s = slice_program(&p, "o_pos").unwrap();
        assert_eq!(s.kept, vec![0, 1, 2, 3, 4]);
    }
}
