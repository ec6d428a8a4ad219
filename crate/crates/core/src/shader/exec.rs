use std::collections::BTreeMap;

use super::{Instruction, Opcode, Operand, RegFile, RegRef, ShaderError, ShaderProgram};

/// Named register values, e.g. `v0 -> (x, y, z, w)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bindings(pub BTreeMap<String, [f32; 4]>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    /// Binds up to four components; missing ones default to `(0, 0, 0, 1)`.
    pub fn set(&mut self, name: &str, values: &[f32]) {
        let mut v = [0.0, 0.0, 0.0, 1.0];
        v[..values.len().min(4)].copy_from_slice(&values[..values.len().min(4)]);
        self.0.insert(name.to_string(), v);
    }

    pub fn with(mut self, name: &str, values: &[f32]) -> Self {
        self.set(name, values);
        self
    }

    pub fn get(&self, name: &str) -> Option<[f32; 4]> {
        self.0.get(name).copied()
    }
}

/// Index-addressed register values: `inputs[N]` is `vN`, `constants[N]` is `cN`.
#[derive(Debug, Clone, Default)]
pub struct RegisterFile {
    pub inputs: Vec<Option<[f32; 4]>>,
    pub constants: Vec<Option<[f32; 4]>>,
}

impl RegisterFile {
    pub fn bind_input(&mut self, index: u16, v: [f32; 4]) {
        bind(&mut self.inputs, index, v);
    }

    pub fn bind_constant(&mut self, index: u16, v: [f32; 4]) {
        bind(&mut self.constants, index, v);
    }

    fn value(&self, reg: RegRef) -> Option<[f32; 4]> {
        let slot = match reg.file {
            RegFile::Input => &self.inputs,
            RegFile::Constant => &self.constants,
            _ => return None,
        };
        slot.get(reg.index as usize).copied().flatten()
    }
}

fn bind(slots: &mut Vec<Option<[f32; 4]>>, index: u16, v: [f32; 4]) {
    let i = index as usize;
    if slots.len() <= i {
        slots.resize(i + 1, None);
    }
    slots[i] = Some(v);
}

struct Machine<'a> {
    prog: &'a ShaderProgram,
    file: &'a RegisterFile,
    temps: Vec<[f32; 4]>,
    outputs: Vec<[f32; 4]>,
}

impl Machine<'_> {
    fn read(&self, reg: RegRef) -> [f32; 4] {
        match reg.file {
            RegFile::Temp => self.temps[reg.index as usize],
            RegFile::Output => self.outputs[reg.index as usize],
            // bound-ness is checked before execution starts
            _ => self.file.value(reg).unwrap_or_default(),
        }
    }

    fn operand(&self, op: &Operand) -> [f32; 4] {
        match op {
            Operand::Imm(v) => *v,
            Operand::Reg { reg, swizzle, negate } => {
                let raw = self.read(*reg);
                let mut v = [0.0; 4];
                for k in 0..4 {
                    v[k] = raw[swizzle.0[k] as usize];
                    if *negate {
                        v[k] = -v[k];
                    }
                }
                v
            }
        }
    }

    fn step(&mut self, inst: &Instruction) {
        let a = self.operand(&inst.sources[0]);
        let mut result = [0.0f32; 4];
        match inst.opcode {
            Opcode::Mov => result = a,
            Opcode::Rcp => result = a.map(|x| 1.0 / x),
            Opcode::Add | Opcode::Sub | Opcode::Mul | Opcode::Min | Opcode::Max => {
                let b = self.operand(&inst.sources[1]);
                for k in 0..4 {
                    result[k] = match inst.opcode {
                        Opcode::Add => a[k] + b[k],
                        Opcode::Sub => a[k] - b[k],
                        Opcode::Mul => a[k] * b[k],
                        Opcode::Min => a[k].min(b[k]),
                        _ => a[k].max(b[k]),
                    };
                }
            }
            Opcode::Mad => {
                let b = self.operand(&inst.sources[1]);
                let c = self.operand(&inst.sources[2]);
                for k in 0..4 {
                    // two roundings, no fused multiply-add
                    let prod = a[k] * b[k];
                    result[k] = prod + c[k];
                }
            }
            Opcode::Dp4 => {
                let b = self.operand(&inst.sources[1]);
                result = [dp4(&a, &b); 4];
            }
            Opcode::M44 => {
                let base = inst.sources[1].register().expect("m44 base is a register");
                for (k, out) in result.iter_mut().enumerate() {
                    let row = self.read(RegRef {
                        file: base.file,
                        index: base.index + k as u16,
                    });
                    *out = dp4(&a, &row);
                }
            }
        }
        let dest = inst.dest;
        let target = match dest.reg.file {
            RegFile::Temp => &mut self.temps[dest.reg.index as usize],
            RegFile::Output => &mut self.outputs[dest.reg.index as usize],
            _ => unreachable!("parser rejects writes to read-only registers"),
        };
        for k in dest.mask.components() {
            target[k] = result[k];
        }
    }
}

fn dp4(a: &[f32; 4], b: &[f32; 4]) -> f32 {
    let mut acc = a[0] * b[0];
    acc += a[1] * b[1];
    acc += a[2] * b[2];
    acc += a[3] * b[3];
    acc
}

impl ShaderProgram {
    fn reg_label(&self, reg: RegRef) -> String {
        match reg.file {
            RegFile::Input => format!("v{}", reg.index),
            RegFile::Constant => format!("c{}", reg.index),
            RegFile::Temp => format!("r{}", reg.index),
            RegFile::Output => self.outputs[reg.index as usize].name.clone(),
        }
    }

    /// Fails with `UnboundRegister` for the first input or constant the
    /// instruction stream reads without a binding.
    pub fn check_bound(&self, file: &RegisterFile) -> Result<(), ShaderError> {
        for inst in &self.instructions {
            for reg in inst.read_registers() {
                if matches!(reg.file, RegFile::Input | RegFile::Constant) && file.value(reg).is_none() {
                    return Err(ShaderError::UnboundRegister(self.reg_label(reg)));
                }
            }
        }
        Ok(())
    }

    /// Runs the program; returns output registers in declaration order.
    /// Outputs and temporaries start at zero.
    pub fn execute(&self, file: &RegisterFile) -> Result<Vec<[f32; 4]>, ShaderError> {
        self.check_bound(file)?;
        Ok(self.execute_unchecked(file))
    }

    /// As [`ShaderProgram::execute`] without the binding check; unbound reads yield zero.
    pub fn execute_unchecked(&self, file: &RegisterFile) -> Vec<[f32; 4]> {
        let temp_count = self
            .instructions
            .iter()
            .flat_map(|i| std::iter::once(i.dest.reg).chain(i.sources.iter().filter_map(Operand::register)))
            .filter(|r| r.file == RegFile::Temp)
            .map(|r| r.index as usize + 1)
            .max()
            .unwrap_or(0);
        let mut m = Machine {
            prog: self,
            file,
            temps: vec![[0.0; 4]; temp_count],
            outputs: vec![[0.0; 4]; self.outputs.len()],
        };
        for inst in &m.prog.instructions {
            m.step(inst);
        }
        m.outputs
    }
}

/// Executes `prog` with named bindings and returns every declared output by name.
pub fn execute_program(
    prog: &ShaderProgram,
    inputs: &Bindings,
    constants: &Bindings,
) -> Result<Bindings, ShaderError> {
    let mut file = RegisterFile::default();
    for (name, v) in &inputs.0 {
        if let Some(i) = name.strip_prefix('v').and_then(|s| s.parse().ok()) {
            file.bind_input(i, *v);
        }
    }
    for (name, v) in &constants.0 {
        if let Some(i) = name.strip_prefix('c').and_then(|s| s.parse().ok()) {
            file.bind_constant(i, *v);
        }
    }
    let outputs = prog.execute(&file)?;
    Ok(Bindings(
        prog.outputs
            .iter()
            .zip(outputs)
            .map(|(decl, v)| (decl.name.clone(), v))
            .collect(),
    ))
}
