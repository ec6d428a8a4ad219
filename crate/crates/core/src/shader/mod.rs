//! A small register-based shader ISA.
//!
//! Programs are straight-line code over 4-wide `f32` registers. Inputs
//! (`v<N>`), constants (`c<N>`) and temporaries (`r<N>`) are numbered;
//! outputs carry a free-form name starting with `o` (`o_pos`, `o1`, ...).
//! The text form is documented in `docs/shader-asm.md`.

mod exec;
mod inject;
mod parse;
mod slice;

pub mod builtin;

use std::fmt;

use thiserror::Error;

pub use exec::{execute_program, Bindings, RegisterFile};
pub use inject::{free_output_slots, inject_gbuffer_writes, GBufferSlots};
pub use parse::parse_program;
pub use slice::{slice_program, SliceResult};

/// Name of the position output every vertex program must declare.
pub const POSITION_OUTPUT: &str = "o_pos";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ShaderId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShaderKind {
    Vertex,
    Pixel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegFile {
    Input,
    Output,
    Constant,
    Temp,
}

/// A register reference. Inputs, constants and temps are indexed by their
/// number; outputs by position in the output declaration list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegRef {
    pub file: RegFile,
    pub index: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegDecl {
    pub index: u16,
    pub arity: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputDecl {
    pub name: String,
    pub arity: u8,
    /// Set when some instruction reads or writes the slot.
    pub used: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Swizzle(pub [u8; 4]);

impl Swizzle {
    pub const IDENTITY: Swizzle = Swizzle([0, 1, 2, 3]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WriteMask(pub u8);

impl WriteMask {
    pub const ALL: WriteMask = WriteMask(0b1111);

    pub fn contains(self, comp: usize) -> bool {
        self.0 & (1 << comp) != 0
    }

    pub fn components(self) -> impl Iterator<Item = usize> {
        (0..4).filter(move |&k| self.contains(k))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Reg {
        reg: RegRef,
        swizzle: Swizzle,
        negate: bool,
    },
    Imm([f32; 4]),
}

impl Operand {
    pub fn reg(reg: RegRef) -> Operand {
        Operand::Reg {
            reg,
            swizzle: Swizzle::IDENTITY,
            negate: false,
        }
    }

    pub fn register(&self) -> Option<RegRef> {
        match self {
            Operand::Reg { reg, .. } => Some(*reg),
            Operand::Imm(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dest {
    pub reg: RegRef,
    pub mask: WriteMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Opcode {
    Mov,
    Add,
    Sub,
    Mul,
    Dp4,
    Mad,
    /// `m44 d, a, cN`: `d.k = dp4(a, c(N+k))`.
    M44,
    Rcp,
    Min,
    Max,
}

impl Opcode {
    pub const ALL: [Opcode; 10] = [
        Opcode::Mov,
        Opcode::Add,
        Opcode::Sub,
        Opcode::Mul,
        Opcode::Dp4,
        Opcode::Mad,
        Opcode::M44,
        Opcode::Rcp,
        Opcode::Min,
        Opcode::Max,
    ];

    pub fn arity(self) -> usize {
        match self {
            Opcode::Mov | Opcode::Rcp => 1,
            Opcode::Mad => 3,
            _ => 2,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Mov => "mov",
            Opcode::Add => "add",
            Opcode::Sub => "sub",
            Opcode::Mul => "mul",
            Opcode::Dp4 => "dp4",
            Opcode::Mad => "mad",
            Opcode::M44 => "m44",
            Opcode::Rcp => "rcp",
            Opcode::Min => "min",
            Opcode::Max => "max",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Opcode> {
        Opcode::ALL.into_iter().find(|op| op.mnemonic() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instruction {
    pub opcode: Opcode,
    pub dest: Dest,
    pub sources: Vec<Operand>,
}

impl Instruction {
    /// Every `(register, component)` read to produce destination component `k`.
    pub fn reads_for(&self, k: usize) -> Vec<(RegRef, usize)> {
        let mut out = Vec::new();
        match self.opcode {
            Opcode::Dp4 => {
                for src in &self.sources {
                    if let Operand::Reg { reg, swizzle, .. } = src {
                        out.extend(swizzle.0.iter().map(|&c| (*reg, c as usize)));
                    }
                }
            }
            Opcode::M44 => {
                if let Operand::Reg { reg, swizzle, .. } = &self.sources[0] {
                    out.extend(swizzle.0.iter().map(|&c| (*reg, c as usize)));
                }
                if let Some(base) = self.sources[1].register() {
                    let row = RegRef {
                        file: base.file,
                        index: base.index + k as u16,
                    };
                    out.extend((0..4).map(|c| (row, c)));
                }
            }
            _ => {
                for src in &self.sources {
                    if let Operand::Reg { reg, swizzle, .. } = src {
                        out.push((*reg, swizzle.0[k] as usize));
                    }
                }
            }
        }
        out
    }

    /// Registers this instruction reads, ignoring components.
    pub fn read_registers(&self) -> Vec<RegRef> {
        let mut regs: Vec<RegRef> = self.dest.mask.components().flat_map(|k| self.reads_for(k)).map(|(r, _)| r).collect();
        regs.sort();
        regs.dedup();
        regs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShaderProgram {
    pub shader_id: ShaderId,
    pub kind: ShaderKind,
    pub inputs: Vec<RegDecl>,
    pub outputs: Vec<OutputDecl>,
    pub constants: Vec<RegDecl>,
    pub instructions: Vec<Instruction>,
}

impl ShaderProgram {
    pub fn output_index(&self, name: &str) -> Option<u16> {
        self.outputs.iter().position(|o| o.name == name).map(|i| i as u16)
    }

    pub fn is_declared(&self, reg: RegRef) -> bool {
        match reg.file {
            RegFile::Input => self.inputs.iter().any(|d| d.index == reg.index),
            RegFile::Constant => self.constants.iter().any(|d| d.index == reg.index),
            RegFile::Output => (reg.index as usize) < self.outputs.len(),
            RegFile::Temp => true,
        }
    }

    /// Recomputes every output's `used` flag from the instruction stream.
    pub fn refresh_usage(&mut self) {
        for o in &mut self.outputs {
            o.used = false;
        }
        for inst in &self.instructions {
            let touched = std::iter::once(inst.dest.reg).chain(inst.sources.iter().filter_map(Operand::register));
            for reg in touched {
                if reg.file == RegFile::Output {
                    self.outputs[reg.index as usize].used = true;
                }
            }
        }
    }

    pub fn with_id(mut self, id: ShaderId) -> Self {
        self.shader_id = id;
        self
    }

    fn reg_name(&self, reg: RegRef) -> String {
        match reg.file {
            RegFile::Input => format!("v{}", reg.index),
            RegFile::Constant => format!("c{}", reg.index),
            RegFile::Temp => format!("r{}", reg.index),
            RegFile::Output => self.outputs[reg.index as usize].name.clone(),
        }
    }
}

const COMPONENTS: [char; 4] = ['x', 'y', 'z', 'w'];

fn fmt_imm(v: &[f32; 4]) -> String {
    if v.iter().all(|&x| x.to_bits() == v[0].to_bits()) {
        format!("l({:?})", v[0])
    } else {
        format!("l({:?}, {:?}, {:?}, {:?})", v[0], v[1], v[2], v[3])
    }
}

impl fmt::Display for ShaderProgram {
    /// Canonical listing; `parse_program` of the output reproduces the program.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{}",
            match self.kind {
                ShaderKind::Vertex => "vs",
                ShaderKind::Pixel => "ps",
            }
        )?;
        for d in &self.inputs {
            writeln!(f, "in v{}:{}", d.index, d.arity)?;
        }
        for d in &self.outputs {
            writeln!(f, "out {}:{}", d.name, d.arity)?;
        }
        for d in &self.constants {
            writeln!(f, "const c{}:{}", d.index, d.arity)?;
        }
        for inst in &self.instructions {
            write!(f, "{} {}", inst.opcode.mnemonic(), self.reg_name(inst.dest.reg))?;
            if inst.dest.mask != WriteMask::ALL {
                write!(f, ".")?;
                for k in inst.dest.mask.components() {
                    write!(f, "{}", COMPONENTS[k])?;
                }
            }
            for src in &inst.sources {
                match src {
                    Operand::Imm(v) => write!(f, ", {}", fmt_imm(v))?,
                    Operand::Reg { reg, swizzle, negate } => {
                        write!(f, ", {}{}", if *negate { "-" } else { "" }, self.reg_name(*reg))?;
                        if *swizzle != Swizzle::IDENTITY {
                            write!(f, ".")?;
                            for &c in &swizzle.0 {
                                write!(f, "{}", COMPONENTS[c as usize])?;
                            }
                        }
                    }
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShaderError {
    #[error("line {line}: {message}")]
    SyntaxError { line: usize, message: String },
    #[error("line {line}: undeclared register `{name}`")]
    UndeclaredRegister { line: usize, name: String },
    #[error("register `{0}` is not bound")]
    UnboundRegister(String),
    #[error("`{0}` is not a declared output")]
    UnknownOutput(String),
    #[error("program has {available} unused output slots, 2 are required")]
    NoFreeSlots { available: usize },
    #[error("expected a {expected:?} program")]
    WrongKind { expected: ShaderKind },
    #[error("identifier {0} is not exactly representable in a float register")]
    IdOutOfRange(u32),
}
