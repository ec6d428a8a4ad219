use super::{
    Dest, Instruction, Opcode, Operand, OutputDecl, RegDecl, RegFile, RegRef, ShaderError, ShaderId,
    ShaderKind, ShaderProgram, Swizzle, WriteMask,
};

struct Statement<'a> {
    line: usize,
    text: &'a str,
}

fn statements(text: &str) -> Vec<Statement<'_>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let code = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        for piece in code.split(';') {
            let piece = piece.trim();
            if !piece.is_empty() {
                out.push(Statement { line: i + 1, text: piece });
            }
        }
    }
    out
}

fn syntax(line: usize, message: impl Into<String>) -> ShaderError {
    ShaderError::SyntaxError {
        line,
        message: message.into(),
    }
}

fn numbered(name: &str, prefix: char) -> Option<u16> {
    let rest = name.strip_prefix(prefix)?;
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

fn parse_arity(line: usize, s: &str) -> Result<u8, ShaderError> {
    match s.trim().parse::<u8>() {
        Ok(a @ 1..=4) => Ok(a),
        _ => Err(syntax(line, format!("invalid arity `{s}`"))),
    }
}

/// `v0:4` or `c0..c3:4` into (indices, arity).
fn parse_numbered_decl(line: usize, spec: &str, prefix: char) -> Result<(Vec<u16>, u8), ShaderError> {
    let (names, arity) = spec
        .split_once(':')
        .ok_or_else(|| syntax(line, format!("declaration `{spec}` lacks `:arity`")))?;
    let arity = parse_arity(line, arity)?;
    let names = names.trim();
    let bad = || syntax(line, format!("invalid register name `{names}`"));
    let indices = match names.split_once("..") {
        Some((a, b)) => {
            let lo = numbered(a.trim(), prefix).ok_or_else(bad)?;
            let hi = numbered(b.trim(), prefix).ok_or_else(bad)?;
            if hi < lo {
                return Err(syntax(line, format!("empty register range `{names}`")));
            }
            (lo..=hi).collect()
        }
        None => vec![numbered(names, prefix).ok_or_else(bad)?],
    };
    Ok((indices, arity))
}

fn is_output_name(name: &str) -> bool {
    name.starts_with('o') && name.len() > 1 && name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

fn split_operands(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out
}

fn component(line: usize, ch: char) -> Result<u8, ShaderError> {
    match ch {
        'x' | 'r' => Ok(0),
        'y' | 'g' => Ok(1),
        'z' | 'b' => Ok(2),
        'w' | 'a' => Ok(3),
        _ => Err(syntax(line, format!("invalid component `{ch}`"))),
    }
}

struct Resolver<'p> {
    prog: &'p ShaderProgram,
}

impl Resolver<'_> {
    fn register(&self, line: usize, name: &str) -> Result<RegRef, ShaderError> {
        let undeclared = || ShaderError::UndeclaredRegister {
            line,
            name: name.to_string(),
        };
        if let Some(i) = numbered(name, 'r') {
            return Ok(RegRef { file: RegFile::Temp, index: i });
        }
        if let Some(i) = numbered(name, 'v') {
            let reg = RegRef { file: RegFile::Input, index: i };
            return if self.prog.is_declared(reg) { Ok(reg) } else { Err(undeclared()) };
        }
        if let Some(i) = numbered(name, 'c') {
            let reg = RegRef { file: RegFile::Constant, index: i };
            return if self.prog.is_declared(reg) { Ok(reg) } else { Err(undeclared()) };
        }
        match self.prog.output_index(name) {
            Some(index) => Ok(RegRef { file: RegFile::Output, index }),
            None => Err(undeclared()),
        }
    }

    fn dest(&self, line: usize, s: &str) -> Result<Dest, ShaderError> {
        let (name, mask) = match s.split_once('.') {
            Some((n, m)) => (n, Some(m)),
            None => (s, None),
        };
        let reg = self.register(line, name.trim())?;
        if matches!(reg.file, RegFile::Input | RegFile::Constant) {
            return Err(syntax(line, format!("`{name}` is read-only")));
        }
        let mask = match mask {
            None => WriteMask::ALL,
            Some(m) => {
                let mut bits = 0u8;
                let mut last: i32 = -1;
                for ch in m.chars() {
                    let c = component(line, ch)? as i32;
                    if c <= last {
                        return Err(syntax(line, format!("write mask `{m}` must list components in order")));
                    }
                    last = c;
                    bits |= 1 << c;
                }
                if bits == 0 {
                    return Err(syntax(line, "empty write mask"));
                }
                WriteMask(bits)
            }
        };
        Ok(Dest { reg, mask })
    }

    fn operand(&self, line: usize, s: &str) -> Result<Operand, ShaderError> {
        if let Some(body) = s.strip_prefix("l(") {
            let body = body
                .strip_suffix(')')
                .ok_or_else(|| syntax(line, format!("unterminated immediate `{s}`")))?;
            let vals = body
                .split(',')
                .map(|v| v.trim().parse::<f32>())
                .collect::<Result<Vec<f32>, _>>()
                .map_err(|_| syntax(line, format!("invalid immediate `{s}`")))?;
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(syntax(line, format!("non-finite immediate `{s}`")));
            }
            return match vals.len() {
                1 => Ok(Operand::Imm([vals[0]; 4])),
                4 => Ok(Operand::Imm([vals[0], vals[1], vals[2], vals[3]])),
                _ => Err(syntax(line, "immediates take 1 or 4 values")),
            };
        }
        let (negate, s) = match s.strip_prefix('-') {
            Some(rest) => (true, rest.trim()),
            None => (false, s),
        };
        let (name, swz) = match s.split_once('.') {
            Some((n, w)) => (n, Some(w)),
            None => (s, None),
        };
        let reg = self.register(line, name)?;
        let swizzle = match swz {
            None => Swizzle::IDENTITY,
            Some(w) => {
                let comps = w.chars().map(|ch| component(line, ch)).collect::<Result<Vec<u8>, _>>()?;
                match comps.len() {
                    1 => Swizzle([comps[0]; 4]),
                    4 => Swizzle([comps[0], comps[1], comps[2], comps[3]]),
                    _ => return Err(syntax(line, format!("swizzle `{w}` must have 1 or 4 components"))),
                }
            }
        };
        Ok(Operand::Reg { reg, swizzle, negate })
    }

    fn instruction(&self, line: usize, text: &str) -> Result<Instruction, ShaderError> {
        let (mnemonic, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
        let opcode =
            Opcode::from_mnemonic(mnemonic).ok_or_else(|| syntax(line, format!("unknown opcode `{mnemonic}`")))?;
        let parts = split_operands(rest);
        if parts.len() != opcode.arity() + 1 || parts.iter().any(|p| p.is_empty()) {
            return Err(syntax(
                line,
                format!("`{mnemonic}` takes a destination and {} source(s)", opcode.arity()),
            ));
        }
        let dest = self.dest(line, parts[0])?;
        let sources = parts[1..]
            .iter()
            .map(|p| self.operand(line, p))
            .collect::<Result<Vec<_>, _>>()?;
        if opcode == Opcode::M44 {
            match &sources[1] {
                Operand::Reg {
                    reg,
                    swizzle: Swizzle::IDENTITY,
                    negate: false,
                } if reg.file == RegFile::Constant => {
                    for k in 1..4u16 {
                        let row = RegRef {
                            file: RegFile::Constant,
                            index: reg.index + k,
                        };
                        if !self.prog.is_declared(row) {
                            return Err(ShaderError::UndeclaredRegister {
                                line,
                                name: format!("c{}", row.index),
                            });
                        }
                    }
                }
                _ => return Err(syntax(line, "m44 takes a plain constant register as matrix base")),
            }
        }
        Ok(Instruction { opcode, dest, sources })
    }
}

/// Parses an assembly listing. The program id defaults to 0; containers
/// assign the real id with [`ShaderProgram::with_id`].
pub fn parse_program(text: &str) -> Result<ShaderProgram, ShaderError> {
    let stmts = statements(text);
    let first = stmts.first().ok_or_else(|| syntax(1, "empty program"))?;
    let kind = match first.text {
        "vs" => ShaderKind::Vertex,
        "ps" => ShaderKind::Pixel,
        other => return Err(syntax(first.line, format!("expected `vs` or `ps`, found `{other}`"))),
    };
    let mut prog = ShaderProgram {
        shader_id: ShaderId(0),
        kind,
        inputs: Vec::new(),
        outputs: Vec::new(),
        constants: Vec::new(),
        instructions: Vec::new(),
    };

    let mut body = Vec::new();
    for st in &stmts[1..] {
        let (head, rest) = st.text.split_once(char::is_whitespace).unwrap_or((st.text, ""));
        match head {
            "in" | "const" => {
                let prefix = if head == "in" { 'v' } else { 'c' };
                let (indices, arity) = parse_numbered_decl(st.line, rest.trim(), prefix)?;
                let list = if head == "in" { &mut prog.inputs } else { &mut prog.constants };
                for index in indices {
                    if list.iter().any(|d| d.index == index) {
                        return Err(syntax(st.line, format!("duplicate declaration of {prefix}{index}")));
                    }
                    list.push(RegDecl { index, arity });
                }
            }
            "out" => {
                let (name, arity) = rest
                    .trim()
                    .split_once(':')
                    .ok_or_else(|| syntax(st.line, "output declaration lacks `:arity`"))?;
                let name = name.trim();
                if !is_output_name(name) {
                    return Err(syntax(st.line, format!("invalid output name `{name}`")));
                }
                if prog.output_index(name).is_some() {
                    return Err(syntax(st.line, format!("duplicate declaration of {name}")));
                }
                let arity = parse_arity(st.line, arity)?;
                prog.outputs.push(OutputDecl {
                    name: name.to_string(),
                    arity,
                    used: false,
                });
            }
            _ => body.push(st),
        }
    }

    if kind == ShaderKind::Vertex && prog.output_index(super::POSITION_OUTPUT).is_none() {
        return Err(syntax(first.line, "vertex programs must declare `o_pos`"));
    }

    let resolver = Resolver { prog: &prog };
    let instructions = body
        .iter()
        .map(|st| resolver.instruction(st.line, st.text))
        .collect::<Result<Vec<_>, _>>()?;
    prog.instructions = instructions;
    prog.refresh_usage();
    Ok(prog)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_line_listing() {
        let p = parse_program("vs; in v0:4; out o_pos:4; const c0..c3:4; m44 o_pos, v0, c0").unwrap();
        assert_eq!(p.instructions.len(), 1);
        assert_eq!(p.constants.len(), 4);
        assert_eq!(p.kind, ShaderKind::Vertex);
        assert!(p.outputs[0].used);
    }

    #[test]
    fn undeclared_input_is_rejected() {
        let err = parse_program("vs\nin v0:4\nout o_pos:4\nmov o_pos, v9").unwrap_err();
        assert_eq!(
            err,
            ShaderError::UndeclaredRegister {
                line: 4,
                name: "v9".into()
            }
        );
    }

    #[test]
    fn unknown_opcode_reports_line() {
        let err = parse_program("vs\nin v0:4\nout o_pos:4\n\nfrc o_pos, v0").unwrap_err();
        assert!(matches!(err, ShaderError::SyntaxError { line: 5, .. }), "{err:?}");
    }

    #[test]
    fn m44_needs_four_rows() {
        let err = parse_program("vs; in v0:4; out o_pos:4; const c0..c2:4; m44 o_pos, v0, c0").unwrap_err();
        assert!(matches!(err, ShaderError::UndeclaredRegister { ref name, .. } if name == "c3"));
    }

    #[test]
    fn writes_to_inputs_are_rejected() {
        let err = parse_program("vs; in v0:4; out o_pos:4; mov v0, l(1)").unwrap_err();
        assert!(matches!(err, ShaderError::SyntaxError { .. }));
    }

    #[test]
    fn swizzles_masks_and_immediates() {
        let p = parse_program("ps; in v0:4; out o0:4; out o1:4; mad o0.xw, -v0.zyxw, l(0.5), l(1, 2, 3, 4) # c").unwrap();
        let inst = &p.instructions[0];
        assert_eq!(inst.dest.mask, WriteMask(0b1001));
        assert_eq!(
            inst.sources[0],
            Operand::Reg {
                reg: RegRef {
                    file: RegFile::Input,
                    index: 0
                },
                swizzle: Swizzle([2, 1, 0, 3]),
                negate: true
            }
        );
        assert_eq!(inst.sources[2], Operand::Imm([1.0, 2.0, 3.0, 4.0]));
        assert!(p.outputs[0].used);
        assert!(!p.outputs[1].used);
    }

    #[test]
    fn vertex_program_without_position_is_rejected() {
        assert!(parse_program("vs; in v0:4; out o_tex:4; mov o_tex, v0").is_err());
    }

    #[test]
    fn display_round_trips() {
        let src = "vs; in v0:4; in v1:2; out o_pos:4; out o_t:2; const c0..c3:4; const c7:4\n\
                   m44 r0, v0, c0; mul r1.xy, v1.xyxy, c7.w; add o_pos, r0, -r1; mov o_t.x, l(0.1, -2, 3e-7, 4)";
        let p = parse_program(src).unwrap();
        let again = parse_program(&p.to_string()).unwrap();
        assert_eq!(p, again);
    }
}
