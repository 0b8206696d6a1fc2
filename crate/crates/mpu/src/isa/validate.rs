//! Static validation of parsed kernels. Diagnostics are returned, not
//! raised; an empty list means the kernel is well formed.

use super::*;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// Offending instruction index, when attributable.
    pub instr: Option<usize>,
    pub msg: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.instr {
            Some(i) => write!(f, "instruction {}: {}", i, self.msg),
            None => write!(f, "{}", self.msg),
        }
    }
}

fn diag(out: &mut Vec<Diagnostic>, instr: Option<usize>, msg: impl Into<String>) {
    out.push(Diagnostic {
        instr,
        msg: msg.into(),
    });
}

fn operand_class_ok(op: &Operand, want: RegClass) -> bool {
    match op {
        Operand::Reg(r) => r.class == want,
        Operand::Special(_) => want == RegClass::Int32,
        Operand::ImmInt(_) => matches!(want, RegClass::Int32 | RegClass::Int64),
        Operand::ImmFloat(_) => want == RegClass::Float32,
    }
}

pub fn validate_kernel(k: &Kernel) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let n = k.instructions.len();

    if k.grid.0 == 0 || k.grid.1 == 0 {
        diag(&mut out, None, "grid dimensions must be non-zero");
    }
    if k.grid.1 % SIMT_WIDTH as u32 != 0 {
        diag(
            &mut out,
            None,
            format!(
                "threads_per_block ({}) must be a multiple of the SIMT width ({SIMT_WIDTH})",
                k.grid.1
            ),
        );
    }
    if n == 0 {
        diag(&mut out, None, "kernel has no instructions");
        return out;
    }

    for (idx, i) in k.instructions.iter().enumerate() {
        validate_instruction(idx, i, n, &mut out);
    }

    // every reachable path must end in an (unguarded) exit
    let mut reachable = vec![false; n];
    let mut stack = vec![0usize];
    while let Some(pc) = stack.pop() {
        if pc >= n {
            continue;
        }
        if std::mem::replace(&mut reachable[pc], true) {
            continue;
        }
        let i = &k.instructions[pc];
        let mut succs: Vec<usize> = Vec::new();
        match i.opcode {
            Opcode::Exit => {
                if i.guard.is_some() {
                    succs.push(pc + 1);
                }
            }
            Opcode::Bra => {
                if let Some(t) = i.label_target {
                    if t <= n {
                        succs.push(t);
                    }
                }
                if i.guard.is_some() {
                    succs.push(pc + 1);
                }
            }
            _ => succs.push(pc + 1),
        }
        for s in &succs {
            if *s >= n {
                diag(
                    &mut out,
                    Some(pc),
                    "execution can fall off the end of the kernel (missing exit)",
                );
            } else {
                stack.push(*s);
            }
        }
    }

    out
}

fn validate_instruction(idx: usize, i: &Instruction, n: usize, out: &mut Vec<Diagnostic>) {
    if i.dst_special.is_some() {
        diag(out, Some(idx), "write to read-only special register");
        return;
    }
    if let Some((g, _)) = i.guard {
        if g.class != RegClass::Pred {
            diag(out, Some(idx), "guard must be a predicate register");
        }
    }

    let cls = i.dtype.class();
    let expect = |out: &mut Vec<Diagnostic>, cond: bool, msg: &str| {
        if !cond {
            diag(out, Some(idx), msg);
        }
    };

    match i.opcode {
        Opcode::Exit | Opcode::BarSync => {}
        Opcode::Bra => match i.label_target {
            Some(t) if t < n => {}
            Some(_) => diag(out, Some(idx), "bra target out of range"),
            None => diag(out, Some(idx), "unresolved label"),
        },
        Opcode::Add | Opcode::Sub | Opcode::Mul | Opcode::Div | Opcode::Min | Opcode::Max => {
            expect(out, i.srcs.len() == 2, "expected 2 source operands");
            expect(
                out,
                i.dst.map(|d| d.class) == Some(cls),
                "destination class does not match type",
            );
            for s in &i.srcs {
                expect(out, operand_class_ok(s, cls), "source class does not match type");
            }
            if i.dtype == DType::U64 {
                expect(
                    out,
                    matches!(i.opcode, Opcode::Add | Opcode::Mul),
                    "only add/mul/mov/cvt are supported for the 64-bit class",
                );
            }
        }
        Opcode::Mad => {
            expect(out, i.srcs.len() == 3, "mad expects 3 source operands");
            expect(
                out,
                i.dst.map(|d| d.class) == Some(cls),
                "destination class does not match type",
            );
            for s in &i.srcs {
                expect(out, operand_class_ok(s, cls), "source class does not match type");
            }
            expect(out, i.dtype != DType::U64, "mad is not supported for u64");
        }
        Opcode::Mov => {
            expect(out, i.srcs.len() == 1, "mov expects 1 source operand");
            expect(
                out,
                i.dst.map(|d| d.class) == Some(cls),
                "destination class does not match type",
            );
            expect(
                out,
                operand_class_ok(&i.srcs[0], cls),
                "source class does not match type",
            );
        }
        Opcode::Cvt => {
            expect(out, i.srcs.len() == 1, "cvt expects 1 source operand");
            expect(
                out,
                i.dst.map(|d| d.class) == Some(cls),
                "destination class does not match cvt target type",
            );
            if let Some(from) = i.cvt_src {
                expect(
                    out,
                    operand_class_ok(&i.srcs[0], from.class()),
                    "source class does not match cvt source type",
                );
            }
        }
        Opcode::Setp => {
            expect(out, i.srcs.len() == 2, "setp expects 2 source operands");
            expect(
                out,
                i.dst.map(|d| d.class) == Some(RegClass::Pred),
                "setp destination must be a predicate register",
            );
            for s in &i.srcs {
                expect(out, operand_class_ok(s, cls), "source class does not match type");
            }
        }
        Opcode::LdGlobal | Opcode::StGlobal | Opcode::LdShared | Opcode::StShared => {
            let want_addr = if i.opcode.is_shared_mem() {
                RegClass::Int32
            } else {
                RegClass::Int64
            };
            match i.addr_reg() {
                Some(a) => expect(
                    out,
                    a.class == want_addr,
                    "address register has the wrong class",
                ),
                None => diag(out, Some(idx), "missing address register"),
            }
            expect(
                out,
                i.dtype != DType::U64,
                "ld/st data type must be a 32-bit type",
            );
            match i.opcode {
                Opcode::LdGlobal | Opcode::LdShared => {
                    expect(
                        out,
                        i.dst.map(|d| d.class) == Some(cls),
                        "load destination class does not match type",
                    );
                }
                _ => match i.srcs.get(1) {
                    Some(s) => expect(
                        out,
                        operand_class_ok(s, cls),
                        "store data class does not match type",
                    ),
                    None => diag(out, Some(idx), "missing store data operand"),
                },
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;

    fn kernel(body: &str) -> Kernel {
        parse_kernel(&format!(".kernel t .smem 0 .grid 1 32\n{body}\n")).unwrap()
    }

    #[test]
    fn minimal_exit_kernel() {
        let k = kernel("exit");
        assert_eq!(k.instructions.len(), 1);
        assert!(validate_kernel(&k).is_empty());
    }

    #[test]
    fn parse_mul_example() {
        let k = kernel("mul.f32 %f3, %f1, %f2\nexit");
        let i = &k.instructions[0];
        assert_eq!(i.opcode, Opcode::Mul);
        assert_eq!(i.dtype, DType::F32);
        assert_eq!(i.dst, Some(RegisterId::new(RegClass::Float32, 3)));
        assert_eq!(
            i.srcs,
            vec![
                Operand::Reg(RegisterId::new(RegClass::Float32, 1)),
                Operand::Reg(RegisterId::new(RegClass::Float32, 2)),
            ]
        );
    }

    #[test]
    fn parse_ld_global() {
        let k = kernel("ld.global.f32 %f1, [%rd1]\nexit");
        let i = &k.instructions[0];
        assert_eq!(i.opcode, Opcode::LdGlobal);
        assert_eq!(i.dst, Some(RegisterId::new(RegClass::Float32, 1)));
        assert_eq!(i.addr_reg(), Some(RegisterId::new(RegClass::Int64, 1)));
    }

    #[test]
    fn write_special_is_diagnosed() {
        let k = kernel("mov.u32 %tid.x, %r1\nexit");
        let ds = validate_kernel(&k);
        assert!(ds.iter().any(|d| d.msg.contains("read-only special")));
    }

    #[test]
    fn unresolved_label_is_parse_error() {
        let e = parse_kernel(".kernel t .smem 0\nbra nowhere\nexit\n").unwrap_err();
        assert!(e.msg.contains("unresolved label"));
    }

    #[test]
    fn missing_exit_on_path() {
        let k = kernel("add.s32 %r1, %r2, %r3");
        let ds = validate_kernel(&k);
        assert!(ds.iter().any(|d| d.msg.contains("fall off")));
    }

    #[test]
    fn guard_and_hint_roundtrip() {
        let text = ".kernel t .smem 16 .grid 2 64\nloop:\n  @!%p1 bra loop\n  add.f32 %f1, %f2, 0f40000000 @N\n  exit\n";
        let k = parse_kernel(text).unwrap();
        assert!(validate_kernel(&k).is_empty());
        let printed = print_kernel(&k);
        let k2 = parse_kernel(&printed).unwrap();
        assert_eq!(k, k2);
    }
}
