//! Location annotation: a fixpoint static analysis that assigns every
//! register and instruction to the near-bank or far-bank side of the
//! hybrid pipeline.
//!
//! Seeds: branch/guard sources and predicate destinations are far-bank;
//! global load/store value registers are near-bank with their address
//! registers far-bank; shared-memory operands are all near-bank. The
//! propagation pass lets an unknown source register adopt its
//! instruction's destination location; a register observed with
//! conflicting locations widens to Both. Seeds are never weakened.

use crate::isa::{Instruction, Kernel, LocHint, Opcode, RegisterId};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegLoc {
    /// unknown (only before the fixpoint completes)
    U,
    /// near-bank only
    N,
    /// far-bank only
    F,
    /// both locations
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstrLoc {
    N,
    F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocationTable {
    pub reg_loc: BTreeMap<RegisterId, RegLoc>,
    /// per instruction index
    pub instr_loc: Vec<InstrLoc>,
    /// full propagation passes executed until the fixpoint
    pub passes: usize,
}

fn widen(cur: RegLoc, new: RegLoc) -> RegLoc {
    match (cur, new) {
        (RegLoc::U, l) => l,
        (l, RegLoc::U) => l,
        (a, b) if a == b => a,
        _ => RegLoc::B,
    }
}

pub fn annotate_locations(k: &Kernel) -> LocationTable {
    let mut reg_loc: BTreeMap<RegisterId, RegLoc> = BTreeMap::new();
    for r in k.registers() {
        reg_loc.insert(r, RegLoc::U);
    }

    // seeding, in program order
    for i in &k.instructions {
        let seed = |tbl: &mut BTreeMap<RegisterId, RegLoc>, reg: RegisterId, loc: RegLoc| {
            let e = tbl.get_mut(&reg).expect("register collected");
            *e = widen(*e, loc);
        };
        match i.opcode {
            Opcode::Bra => {
                for r in i.src_regs() {
                    seed(&mut reg_loc, r, RegLoc::F);
                }
            }
            Opcode::Setp => {
                // predicates live on the far-bank control pipeline
                if let Some(d) = i.dst {
                    seed(&mut reg_loc, d, RegLoc::F);
                }
            }
            Opcode::LdGlobal => {
                if let Some(a) = i.addr_reg() {
                    seed(&mut reg_loc, a, RegLoc::F);
                }
                if let Some(d) = i.dst {
                    seed(&mut reg_loc, d, RegLoc::N);
                }
            }
            Opcode::StGlobal => {
                if let Some(a) = i.addr_reg() {
                    seed(&mut reg_loc, a, RegLoc::F);
                }
                if let Some(d) = i.store_data_reg() {
                    seed(&mut reg_loc, d, RegLoc::N);
                }
            }
            Opcode::LdShared | Opcode::StShared => {
                if let Some(a) = i.addr_reg() {
                    seed(&mut reg_loc, a, RegLoc::N);
                }
                if let Some(d) = i.dst.or_else(|| i.store_data_reg()) {
                    seed(&mut reg_loc, d, RegLoc::N);
                }
            }
            _ => {}
        }
    }

    // propagation to fixpoint: an unknown source adopts the destination
    // location; a known source conflicting with a known destination
    // widens to B. Instructions are visited in program order.
    let mut passes = 0usize;
    loop {
        passes += 1;
        let mut changed = false;
        for i in &k.instructions {
            // every memory operand is seeded directly; propagating the
            // access side onto them would spuriously widen to B
            if i.opcode.is_memory() {
                continue;
            }
            let dst_loc = instruction_dst_loc(i, &reg_loc);
            let dl = match dst_loc {
                RegLoc::N | RegLoc::F => dst_loc,
                _ => continue,
            };
            for s in i.src_regs() {
                let cur = reg_loc[&s];
                let nv = match cur {
                    RegLoc::U => dl,
                    RegLoc::B => RegLoc::B,
                    l if l == dl => l,
                    _ => RegLoc::B,
                };
                if nv != cur {
                    reg_loc.insert(s, nv);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    // dead registers that stayed unknown fall back to far-bank
    for l in reg_loc.values_mut() {
        if *l == RegLoc::U {
            *l = RegLoc::F;
        }
    }

    // instruction locations follow their destination register; B
    // destinations (and destination-less control flow) resolve to F,
    // shared-memory stores to N.
    let instr_loc = k
        .instructions
        .iter()
        .map(|i| match instruction_dst_loc(i, &reg_loc) {
            RegLoc::N => InstrLoc::N,
            _ => InstrLoc::F,
        })
        .collect();

    LocationTable {
        reg_loc,
        instr_loc,
        passes,
    }
}

/// The "destination" a store is annotated through is its memory operand:
/// far-bank for global, near-bank for shared.
fn instruction_dst_loc(i: &Instruction, reg_loc: &BTreeMap<RegisterId, RegLoc>) -> RegLoc {
    match i.opcode {
        Opcode::StGlobal | Opcode::Bra | Opcode::BarSync | Opcode::Exit => RegLoc::F,
        Opcode::StShared => RegLoc::N,
        _ => match i.dst {
            Some(d) => reg_loc[&d],
            None => RegLoc::F,
        },
    }
}

/// Write `@N`/`@F` hints onto a kernel from an annotation table.
pub fn apply_hints(k: &Kernel, loc: &LocationTable) -> Kernel {
    let mut out = k.clone();
    for (i, l) in out.instructions.iter_mut().zip(&loc.instr_loc) {
        i.loc_hint = match l {
            InstrLoc::N => LocHint::Near,
            InstrLoc::F => LocHint::Far,
        };
    }
    out
}

/// Strip all hints (for the hardware-default policy runs).
pub fn strip_hints(k: &Kernel) -> Kernel {
    let mut out = k.clone();
    for i in &mut out.instructions {
        i.loc_hint = LocHint::None;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocationBreakdown {
    pub pct_n: f64,
    pub pct_f: f64,
    pub pct_b: f64,
}

pub fn location_report(loc: &LocationTable) -> LocationBreakdown {
    let total = loc.reg_loc.len().max(1) as f64;
    let count = |want: RegLoc| loc.reg_loc.values().filter(|&&l| l == want).count() as f64;
    LocationBreakdown {
        pct_n: 100.0 * count(RegLoc::N) / total,
        pct_f: 100.0 * count(RegLoc::F) / total,
        pct_b: 100.0 * count(RegLoc::B) / total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{parse_kernel, RegClass};

    fn kern(body: &str) -> Kernel {
        parse_kernel(&format!(".kernel t .smem 0 .grid 1 32\n{body}\n")).unwrap()
    }

    fn reg(class: RegClass, idx: u16) -> RegisterId {
        RegisterId::new(class, idx)
    }

    #[test]
    fn store_only_kernel_seeds() {
        let k = kern("st.global.f32 [%rd1], %f1\nexit");
        let t = annotate_locations(&k);
        assert_eq!(t.reg_loc[&reg(RegClass::Int64, 1)], RegLoc::F);
        assert_eq!(t.reg_loc[&reg(RegClass::Float32, 1)], RegLoc::N);
    }

    #[test]
    fn exit_only_kernel_is_empty() {
        let k = kern("exit");
        let t = annotate_locations(&k);
        assert!(t.reg_loc.is_empty());
        assert_eq!(t.instr_loc, vec![InstrLoc::F]);
    }

    #[test]
    fn shared_operands_are_near() {
        let k = kern("ld.shared.f32 %f1, [%r2]\nexit");
        let t = annotate_locations(&k);
        assert_eq!(t.reg_loc[&reg(RegClass::Int32, 2)], RegLoc::N);
        assert_eq!(t.reg_loc[&reg(RegClass::Float32, 1)], RegLoc::N);
    }

    #[test]
    fn axpy_chain_fixpoint() {
        // hand-run of the fixpoint on the 8-instruction value/address split
        let k = kern(
            "mov.u32 %r1, %tid.x\n\
             cvt.u64.u32 %rd1, %r1\n\
             mul.u64 %rd2, %rd1, 4\n\
             add.u64 %rd3, %rd2, 4096\n\
             ld.global.f32 %f1, [%rd3]\n\
             mul.f32 %f2, %f1, 0f40000000\n\
             st.global.f32 [%rd3], %f2\n\
             exit",
        );
        let t = annotate_locations(&k);
        // value chain near
        assert_eq!(t.reg_loc[&reg(RegClass::Float32, 1)], RegLoc::N);
        assert_eq!(t.reg_loc[&reg(RegClass::Float32, 2)], RegLoc::N);
        // address chain far
        for idx in 1..=3 {
            assert_eq!(t.reg_loc[&reg(RegClass::Int64, idx)], RegLoc::F);
        }
        assert_eq!(t.reg_loc[&reg(RegClass::Int32, 1)], RegLoc::F);
        // the f32 mul executes near-bank
        assert_eq!(t.instr_loc[5], InstrLoc::N);
        // no register left unknown
        assert!(t.reg_loc.values().all(|&l| l != RegLoc::U));
    }

    #[test]
    fn annotation_is_idempotent_over_hints() {
        let k = kern(
            "ld.global.f32 %f1, [%rd1]\n\
             mul.f32 %f2, %f1, %f1\n\
             st.global.f32 [%rd1], %f2\n\
             exit",
        );
        let t = annotate_locations(&k);
        let hinted = apply_hints(&k, &t);
        let t2 = annotate_locations(&hinted);
        assert_eq!(t, t2);
    }
}
