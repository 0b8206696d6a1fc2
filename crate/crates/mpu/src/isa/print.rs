use super::*;
use std::fmt::Write;

fn mnemonic(i: &Instruction) -> String {
    match i.opcode {
        Opcode::Exit => "exit".into(),
        Opcode::BarSync => "bar.sync".into(),
        Opcode::Bra => "bra".into(),
        Opcode::Setp => format!("setp.{}.{}", i.cmp.unwrap().name(), i.dtype.name()),
        Opcode::Cvt => format!("cvt.{}.{}", i.dtype.name(), i.cvt_src.unwrap().name()),
        op => format!("{}.{}", op.name(), i.dtype.name()),
    }
}

fn addr_str(reg: RegisterId, offset: i64) -> String {
    if offset == 0 {
        format!("[{reg}]")
    } else if offset > 0 {
        format!("[{reg}+{offset}]")
    } else {
        format!("[{reg}{offset}]")
    }
}

/// Textual form of a kernel; `parse_kernel(print_kernel(k)) == k` for any
/// valid kernel.
pub fn print_kernel(k: &Kernel) -> String {
    let mut out = String::new();
    writeln!(
        out,
        ".kernel {} .smem {} .grid {} {}",
        k.name, k.smem_bytes, k.grid.0, k.grid.1
    )
    .unwrap();

    // first label per index wins the bra operand; all labels are emitted
    let mut by_index: std::collections::BTreeMap<usize, Vec<&str>> = Default::default();
    for (name, &idx) in &k.labels {
        by_index.entry(idx).or_default().push(name);
    }

    for (idx, i) in k.instructions.iter().enumerate() {
        if let Some(names) = by_index.get(&idx) {
            for n in names {
                writeln!(out, "{n}:").unwrap();
            }
        }
        let mut line = String::from("  ");
        if let Some((g, neg)) = i.guard {
            write!(line, "@{}{} ", if neg { "!" } else { "" }, g).unwrap();
        }
        write!(line, "{}", mnemonic(i)).unwrap();
        let ops: Vec<String> = match i.opcode {
            Opcode::Exit | Opcode::BarSync => vec![],
            Opcode::Bra => {
                let target = i.label_target.expect("unresolved bra");
                let name = by_index
                    .get(&target)
                    .and_then(|v| v.first())
                    .expect("bra target has no label");
                vec![name.to_string()]
            }
            Opcode::LdGlobal | Opcode::LdShared => vec![
                i.dst.unwrap().to_string(),
                addr_str(i.srcs[0].reg().unwrap(), i.offset),
            ],
            Opcode::StGlobal | Opcode::StShared => vec![
                addr_str(i.srcs[0].reg().unwrap(), i.offset),
                i.srcs[1].to_string(),
            ],
            _ => {
                let mut v = vec![i.dst.unwrap().to_string()];
                v.extend(i.srcs.iter().map(|o| o.to_string()));
                v
            }
        };
        if !ops.is_empty() {
            write!(line, " {}", ops.join(", ")).unwrap();
        }
        match i.loc_hint {
            LocHint::Near => line.push_str(" @N"),
            LocHint::Far => line.push_str(" @F"),
            LocHint::None => {}
        }
        writeln!(out, "{line}").unwrap();
    }
    // trailing labels (e.g. a label at the end of the body)
    if let Some(names) = by_index.get(&k.instructions.len()) {
        for n in names {
            writeln!(out, "{n}:").unwrap();
        }
    }
    out
}
