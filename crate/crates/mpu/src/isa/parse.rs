//! Line-oriented parser for the kernel text format.
//!
//! ```text
//! .kernel axpy .smem 0 .grid 512 128
//! start:
//!   mov.u32 %r1, %tid.x
//!   setp.ge.s32 %p1, %r1, 65536
//!   @%p1 bra done
//!   ld.global.f32 %f1, [%rd1+4]
//!   st.global.f32 [%rd2], %f1 @N
//! done:
//!   exit
//! ```
//!
//! `//` starts a comment, `label:` lines name the following instruction,
//! `@N`/`@F` trailers are compiler location hints, and `.reg` lines (as
//! emitted by `mpu compile`) are accepted and skipped.

use super::*;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

fn err<T>(line: usize, col: usize, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        line,
        col,
        msg: msg.into(),
    })
}

fn parse_dtype(s: &str) -> Option<DType> {
    match s {
        "s32" => Some(DType::S32),
        "u32" => Some(DType::U32),
        "f32" => Some(DType::F32),
        "u64" | "s64" => Some(DType::U64),
        _ => None,
    }
}

fn parse_cmp(s: &str) -> Option<CmpOp> {
    match s {
        "eq" => Some(CmpOp::Eq),
        "ne" => Some(CmpOp::Ne),
        "lt" => Some(CmpOp::Lt),
        "le" => Some(CmpOp::Le),
        "gt" => Some(CmpOp::Gt),
        "ge" => Some(CmpOp::Ge),
        _ => None,
    }
}

fn parse_reg(tok: &str) -> Option<RegisterId> {
    let rest = tok.strip_prefix('%')?;
    let (class, digits) = if let Some(d) = rest.strip_prefix("rd") {
        (RegClass::Int64, d)
    } else if let Some(d) = rest.strip_prefix('r') {
        (RegClass::Int32, d)
    } else if let Some(d) = rest.strip_prefix('f') {
        (RegClass::Float32, d)
    } else if let Some(d) = rest.strip_prefix('p') {
        (RegClass::Pred, d)
    } else {
        return None;
    };
    let index: u16 = digits.parse().ok()?;
    Some(RegisterId { class, index })
}

fn parse_special(tok: &str) -> Option<Special> {
    match tok {
        "%tid.x" => Some(Special::TidX),
        "%ntid.x" => Some(Special::NtidX),
        "%ctaid.x" => Some(Special::CtaidX),
        "%nctaid.x" => Some(Special::NctaidX),
        _ => None,
    }
}

fn parse_operand(tok: &str, line: usize) -> Result<Operand, ParseError> {
    if let Some(s) = parse_special(tok) {
        return Ok(Operand::Special(s));
    }
    if tok.starts_with('%') {
        return match parse_reg(tok) {
            Some(r) => Ok(Operand::Reg(r)),
            None => err(line, 0, format!("malformed register `{tok}`")),
        };
    }
    if let Some(hex) = tok.strip_prefix("0f").or_else(|| tok.strip_prefix("0F")) {
        let bits = u32::from_str_radix(hex, 16)
            .map_err(|_| ParseError {
                line,
                col: 0,
                msg: format!("malformed float immediate `{tok}`"),
            })?;
        return Ok(Operand::ImmFloat(f32::from_bits(bits)));
    }
    if tok.contains('.') || tok.contains('e') && !tok.starts_with("0x") {
        if let Ok(v) = tok.parse::<f32>() {
            return Ok(Operand::ImmFloat(v));
        }
    }
    let v = if let Some(hex) = tok.strip_prefix("0x") {
        i64::from_str_radix(hex, 16)
    } else if let Some(hex) = tok.strip_prefix("-0x") {
        i64::from_str_radix(hex, 16).map(|v| -v)
    } else {
        tok.parse::<i64>()
    };
    match v {
        Ok(v) => Ok(Operand::ImmInt(v)),
        Err(_) => err(line, 0, format!("malformed operand `{tok}`")),
    }
}

/// `[%reg]` or `[%reg+imm]` / `[%reg-imm]`
fn parse_addr(tok: &str, line: usize) -> Result<(RegisterId, i64), ParseError> {
    let inner = tok
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| ParseError {
            line,
            col: 0,
            msg: format!("malformed address operand `{tok}`"),
        })?;
    let (reg_s, off) = if let Some(p) = inner.find('+') {
        (&inner[..p], inner[p + 1..].parse::<i64>().map_err(|_| ParseError {
            line,
            col: 0,
            msg: format!("malformed address offset in `{tok}`"),
        })?)
    } else if let Some(p) = inner.rfind('-') {
        (&inner[..p], -inner[p + 1..].parse::<i64>().map_err(|_| ParseError {
            line,
            col: 0,
            msg: format!("malformed address offset in `{tok}`"),
        })?)
    } else {
        (inner, 0)
    };
    match parse_reg(reg_s) {
        Some(r) => Ok((r, off)),
        None => err(line, 0, format!("malformed address register `{reg_s}`")),
    }
}

struct PendingBra {
    instr_idx: usize,
    label: String,
    line: usize,
}

pub fn parse_kernel(text: &str) -> Result<Kernel, ParseError> {
    let mut name = String::new();
    let mut smem_bytes = 0u32;
    let mut grid = (1u32, 32u32);
    let mut saw_header = false;

    let mut instructions: Vec<Instruction> = Vec::new();
    let mut labels: BTreeMap<String, usize> = BTreeMap::new();
    let mut pending: Vec<PendingBra> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = match raw.find("//") {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }

        if let Some(rest) = line.strip_prefix(".kernel") {
            let toks: Vec<&str> = rest.split_whitespace().collect();
            if toks.is_empty() {
                return err(lineno, 1, "missing kernel name");
            }
            name = toks[0].to_string();
            let mut i = 1;
            while i < toks.len() {
                match toks[i] {
                    ".smem" => {
                        smem_bytes = toks
                            .get(i + 1)
                            .and_then(|t| t.parse().ok())
                            .ok_or_else(|| ParseError {
                                line: lineno,
                                col: 1,
                                msg: "malformed .smem value".into(),
                            })?;
                        i += 2;
                    }
                    ".grid" => {
                        let b = toks.get(i + 1).and_then(|t| t.parse().ok());
                        let t = toks.get(i + 2).and_then(|t| t.parse().ok());
                        match (b, t) {
                            (Some(b), Some(t)) => grid = (b, t),
                            _ => return err(lineno, 1, "malformed .grid values"),
                        }
                        i += 3;
                    }
                    other => {
                        return err(lineno, 1, format!("unknown header directive `{other}`"))
                    }
                }
            }
            saw_header = true;
            continue;
        }
        if line.starts_with(".reg") {
            // register-location header emitted by the compiler; informational
            continue;
        }
        if let Some(label) = line.strip_suffix(':') {
            let label = label.trim();
            if label.is_empty() || label.contains(char::is_whitespace) {
                return err(lineno, 1, format!("malformed label `{line}`"));
            }
            if labels.insert(label.to_string(), instructions.len()).is_some() {
                return err(lineno, 1, format!("duplicate label `{label}`"));
            }
            continue;
        }

        let instr = parse_instruction(line, lineno, instructions.len(), &mut pending)?;
        instructions.push(instr);
    }

    if !saw_header {
        return err(1, 1, "missing `.kernel` header line");
    }

    for p in pending {
        match labels.get(&p.label) {
            Some(&idx) => instructions[p.instr_idx].label_target = Some(idx),
            None => return err(p.line, 1, format!("unresolved label `{}`", p.label)),
        }
    }

    Ok(Kernel {
        name,
        instructions,
        labels,
        smem_bytes,
        grid,
    })
}

fn parse_instruction(
    line: &str,
    lineno: usize,
    instr_idx: usize,
    pending: &mut Vec<PendingBra>,
) -> Result<Instruction, ParseError> {
    let mut s = line;

    // guard prefix
    let mut guard = None;
    if s.starts_with('@') && !s.starts_with("@N") && !s.starts_with("@F") {
        let (g, rest) = s.split_once(char::is_whitespace).ok_or_else(|| ParseError {
            line: lineno,
            col: 1,
            msg: "guard without instruction".into(),
        })?;
        let body = &g[1..];
        let (neg, reg_s) = match body.strip_prefix('!') {
            Some(r) => (true, r),
            None => (false, body),
        };
        let reg = parse_reg(reg_s).ok_or_else(|| ParseError {
            line: lineno,
            col: 1,
            msg: format!("malformed guard `{g}`"),
        })?;
        guard = Some((reg, neg));
        s = rest.trim_start();
    }

    // location-hint trailer
    let mut loc_hint = LocHint::None;
    if let Some(rest) = s.strip_suffix("@N") {
        loc_hint = LocHint::Near;
        s = rest.trim_end();
    } else if let Some(rest) = s.strip_suffix("@F") {
        loc_hint = LocHint::Far;
        s = rest.trim_end();
    }

    let (mnemonic, operand_str) = match s.split_once(char::is_whitespace) {
        Some((m, o)) => (m, o.trim()),
        None => (s, ""),
    };
    let operands: Vec<String> = if operand_str.is_empty() {
        Vec::new()
    } else {
        operand_str.split(',').map(|t| t.trim().to_string()).collect()
    };

    let parts: Vec<&str> = mnemonic.split('.').collect();
    let mut instr = match parts.as_slice() {
        ["exit"] => Instruction::new(Opcode::Exit, DType::U32),
        ["bar", "sync"] => Instruction::new(Opcode::BarSync, DType::U32),
        ["bra"] => Instruction::new(Opcode::Bra, DType::U32),
        ["setp", cmp, ty] => {
            let mut i = Instruction::new(
                Opcode::Setp,
                parse_dtype(ty).ok_or_else(|| ParseError {
                    line: lineno,
                    col: 1,
                    msg: format!("unknown type `{ty}`"),
                })?,
            );
            i.cmp = Some(parse_cmp(cmp).ok_or_else(|| ParseError {
                line: lineno,
                col: 1,
                msg: format!("unknown comparison `{cmp}`"),
            })?);
            i
        }
        ["cvt", to, from] => {
            let mut i = Instruction::new(
                Opcode::Cvt,
                parse_dtype(to).ok_or_else(|| ParseError {
                    line: lineno,
                    col: 1,
                    msg: format!("unknown type `{to}`"),
                })?,
            );
            i.cvt_src = Some(parse_dtype(from).ok_or_else(|| ParseError {
                line: lineno,
                col: 1,
                msg: format!("unknown type `{from}`"),
            })?);
            i
        }
        [op @ ("ld" | "st"), space @ ("global" | "shared"), ty] => {
            let opcode = match (*op, *space) {
                ("ld", "global") => Opcode::LdGlobal,
                ("st", "global") => Opcode::StGlobal,
                ("ld", "shared") => Opcode::LdShared,
                _ => Opcode::StShared,
            };
            Instruction::new(
                opcode,
                parse_dtype(ty).ok_or_else(|| ParseError {
                    line: lineno,
                    col: 1,
                    msg: format!("unknown type `{ty}`"),
                })?,
            )
        }
        [op, ty] => {
            let opcode = match *op {
                "add" => Opcode::Add,
                "sub" => Opcode::Sub,
                "mul" => Opcode::Mul,
                "mad" => Opcode::Mad,
                "div" => Opcode::Div,
                "min" => Opcode::Min,
                "max" => Opcode::Max,
                "mov" => Opcode::Mov,
                other => {
                    return err(lineno, 1, format!("unknown opcode `{other}`"));
                }
            };
            Instruction::new(
                opcode,
                parse_dtype(ty).ok_or_else(|| ParseError {
                    line: lineno,
                    col: 1,
                    msg: format!("unknown type `{ty}`"),
                })?,
            )
        }
        _ => return err(lineno, 1, format!("unknown opcode `{mnemonic}`")),
    };
    instr.guard = guard;
    instr.loc_hint = loc_hint;

    // operands
    match instr.opcode {
        Opcode::Exit | Opcode::BarSync => {
            if !operands.is_empty() {
                return err(lineno, 1, "unexpected operands");
            }
        }
        Opcode::Bra => {
            if operands.len() != 1 {
                return err(lineno, 1, "bra takes one label operand");
            }
            pending.push(PendingBra {
                instr_idx,
                label: operands[0].clone(),
                line: lineno,
            });
        }
        Opcode::LdGlobal | Opcode::LdShared => {
            if operands.len() != 2 {
                return err(lineno, 1, "ld takes `dst, [addr]`");
            }
            let dst = parse_reg(&operands[0]).ok_or_else(|| ParseError {
                line: lineno,
                col: 1,
                msg: format!("malformed register `{}`", operands[0]),
            })?;
            let (areg, off) = parse_addr(&operands[1], lineno)?;
            instr.dst = Some(dst);
            instr.srcs = vec![Operand::Reg(areg)];
            instr.offset = off;
        }
        Opcode::StGlobal | Opcode::StShared => {
            if operands.len() != 2 {
                return err(lineno, 1, "st takes `[addr], src`");
            }
            let (areg, off) = parse_addr(&operands[0], lineno)?;
            let data = parse_operand(&operands[1], lineno)?;
            instr.srcs = vec![Operand::Reg(areg), data];
            instr.offset = off;
        }
        _ => {
            // dst + n sources
            if operands.is_empty() {
                return err(lineno, 1, "missing destination operand");
            }
            if let Some(sp) = parse_special(&operands[0]) {
                instr.dst_special = Some(sp);
            } else {
                let dst = parse_reg(&operands[0]).ok_or_else(|| ParseError {
                    line: lineno,
                    col: 1,
                    msg: format!("malformed register `{}`", operands[0]),
                })?;
                instr.dst = Some(dst);
            }
            for o in &operands[1..] {
                instr.srcs.push(parse_operand(o, lineno)?);
            }
        }
    }

    Ok(instr)
}
