use super::{
    Dest, Instruction, Opcode, Operand, RegFile, RegRef, ShaderError, ShaderKind, ShaderProgram, Swizzle,
    WriteMask,
};

/// Where a rewritten pixel program leaves its G-buffer values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GBufferSlots {
    /// Output index that carries the resource id in every component.
    pub id: u16,
    /// Output index with depth in `.xyz` and the alpha copy in `.w`.
    pub depth: u16,
}

/// Output slots no instruction reads or writes, in declaration order.
pub fn free_output_slots(prog: &ShaderProgram) -> Vec<u16> {
    prog.outputs
        .iter()
        .enumerate()
        .filter(|(_, o)| !o.used)
        .map(|(i, _)| i as u16)
        .collect()
}

/// Rewrites a pixel program to broadcast `id_value` and the depth (`.z` of
/// `depth_source`) into its first two unused outputs.
///
/// Every instruction writing the alpha channel of the first used output is
/// duplicated right after itself with its destination redirected to the
/// depth slot's `.w`. Original outputs are untouched.
pub fn inject_gbuffer_writes(
    pixel_prog: &ShaderProgram,
    id_value: u32,
    depth_source: &str,
) -> Result<(ShaderProgram, GBufferSlots), ShaderError> {
    if pixel_prog.kind != ShaderKind::Pixel {
        return Err(ShaderError::WrongKind {
            expected: ShaderKind::Pixel,
        });
    }
    let depth_reg = depth_source
        .strip_prefix('v')
        .and_then(|s| s.parse::<u16>().ok())
        .map(|index| RegRef {
            file: RegFile::Input,
            index,
        })
        .filter(|r| pixel_prog.is_declared(*r))
        .ok_or_else(|| ShaderError::UndeclaredRegister {
            line: 0,
            name: depth_source.to_string(),
        })?;
    if id_value > 1 << 24 {
        return Err(ShaderError::IdOutOfRange(id_value));
    }
    let free = free_output_slots(pixel_prog);
    if free.len() < 2 {
        return Err(ShaderError::NoFreeSlots { available: free.len() });
    }
    let slots = GBufferSlots {
        id: free[0],
        depth: free[1],
    };
    let out_reg = |index| RegRef {
        file: RegFile::Output,
        index,
    };
    let color = pixel_prog.outputs.iter().position(|o| o.used).map(|i| out_reg(i as u16));

    let mut instructions = Vec::with_capacity(pixel_prog.instructions.len() + 4);
    for inst in &pixel_prog.instructions {
        instructions.push(inst.clone());
        if Some(inst.dest.reg) == color && inst.dest.mask.contains(3) {
            let alpha_dest = Dest {
                reg: out_reg(slots.depth),
                mask: WriteMask(0b1000),
            };
            let reads_own_dest = inst.sources.iter().any(|s| s.register() == Some(inst.dest.reg));
            let copy = if reads_own_dest {
                // sources changed under the original write; copy its result
                Instruction {
                    opcode: Opcode::Mov,
                    dest: alpha_dest,
                    sources: vec![Operand::reg(inst.dest.reg)],
                }
            } else {
                Instruction {
                    dest: alpha_dest,
                    ..inst.clone()
                }
            };
            instructions.push(copy);
        }
    }
    instructions.push(Instruction {
        opcode: Opcode::Mov,
        dest: Dest {
            reg: out_reg(slots.id),
            mask: WriteMask::ALL,
        },
        sources: vec![Operand::Imm([id_value as f32; 4])],
    });
    instructions.push(Instruction {
        opcode: Opcode::Mov,
        dest: Dest {
            reg: out_reg(slots.depth),
            mask: WriteMask(0b0111),
        },
        sources: vec![Operand::Reg {
            reg: depth_reg,
            swizzle: Swizzle([2; 4]),
            negate: false,
        }],
    });

    let mut program = pixel_prog.clone();
    program.instructions = instructions;
    program.refresh_usage();
    Ok((program, slots))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shader::{builtin, execute_program, parse_program, Bindings};

    const PS: &str = "ps; in v0:4; in v1:4; out o0:4; out o1:4; out o2:4; out o3:4; const c0:4\n\
                      mul o0, v1, c0\nadd o0.w, o0.w, l(0.25)";

    #[test]
    fn id_and_depth_land_in_free_slots() {
        let p = parse_program(PS).unwrap();
        let (q, slots) = inject_gbuffer_writes(&p, 42, "v0").unwrap();
        assert_eq!(slots, GBufferSlots { id: 1, depth: 2 });
        let inputs = Bindings::new().with("v0", &[3.5, 7.5, 0.625, 1.0]).with("v1", &[0.2, 0.4, 0.6, 0.5]);
        let consts = Bindings::new().with("c0", &[1.0, 1.0, 1.0, 0.5]);
        let before = execute_program(&p, &inputs, &consts).unwrap();
        let after = execute_program(&q, &inputs, &consts).unwrap();
        assert_eq!(after.get("o1"), Some([42.0; 4]));
        let o2 = after.get("o2").unwrap();
        assert_eq!(&o2[..3], &[0.625; 3]);
        assert_eq!(o2[3], before.get("o0").unwrap()[3]);
        assert_eq!(after.get("o0"), before.get("o0"));
        assert_eq!(after.get("o3"), before.get("o3"));
    }

    #[test]
    fn alpha_copies_follow_each_original() {
        let p = parse_program(PS).unwrap();
        let (q, _) = inject_gbuffer_writes(&p, 1, "v0").unwrap();
        assert_eq!(q.instructions.len(), p.instructions.len() * 2 + 2);
        assert_eq!(q.instructions[1].dest.reg.index, 2);
        // second original reads its own destination, so the copy is a mov
        assert_eq!(q.instructions[3].opcode, Opcode::Mov);
    }

    #[test]
    fn no_free_slots() {
        let p = parse_program("ps; in v0:4; out o0:4; out o1:4; mov o0, v0; mov o1, v0").unwrap();
        assert_eq!(
            inject_gbuffer_writes(&p, 1, "v0").unwrap_err(),
            ShaderError::NoFreeSlots { available: 0 }
        );
        let one = parse_program("ps; in v0:4; out o0:4; out o1:4; mov o0, v0").unwrap();
        assert_eq!(
            inject_gbuffer_writes(&one, 1, "v0").unwrap_err(),
            ShaderError::NoFreeSlots { available: 1 }
        );
    }

    #[test]
    fn rejects_vertex_programs_and_bad_depth_source() {
        let vs = parse_program(builtin::SKINNING_VS).unwrap();
        assert!(matches!(inject_gbuffer_writes(&vs, 1, "v0"), Err(ShaderError::WrongKind { .. })));
        let ps = parse_program(builtin::SURFACE_PS).unwrap();
        assert!(matches!(
            inject_gbuffer_writes(&ps, 1, "v7"),
            Err(ShaderError::UndeclaredRegister { .. })
        ));
    }
}
