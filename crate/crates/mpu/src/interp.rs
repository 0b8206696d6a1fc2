//! Scalar reference interpreter. Each thread runs as an independent
//! scalar program; threads in a block rendezvous only at barriers. This
//! deliberately shares no machinery with the pipeline model beyond the
//! per-lane ALU semantics, so agreement between the two is meaningful.

use crate::exec::{bits_f32, eval_alu, eval_cmp, eval_cvt, LaneVal};
use crate::isa::{DType, Instruction, Kernel, Opcode, Operand, RegisterId, Special};
use crate::mem::image::MemImage;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InterpError {
    #[error("block {block} thread {thread} pc {pc}: {msg}")]
    Fault {
        block: u32,
        thread: u32,
        pc: usize,
        msg: String,
    },
    #[error("block {0}: barrier divergence (some threads exited, others wait)")]
    BarrierDivergence(u32),
    #[error("thread exceeded {0} instructions; likely an infinite loop")]
    Runaway(u64),
}

#[derive(Debug, Clone, Default)]
pub struct InterpStats {
    pub instructions: u64,
    pub dyn_per_opcode: BTreeMap<&'static str, u64>,
}

struct Thread {
    pc: usize,
    regs: BTreeMap<RegisterId, LaneVal>,
    tid: u32,
    done: bool,
    at_barrier: bool,
}

impl Thread {
    fn read(&self, r: RegisterId) -> LaneVal {
        self.regs.get(&r).copied().unwrap_or(0)
    }
}

pub const MAX_THREAD_INSTRS: u64 = 4_000_000;

/// Runs `kernel` to completion against `mem`, mutating it in place.
pub fn run_kernel(kernel: &Kernel, mem: &mut MemImage) -> Result<InterpStats, InterpError> {
    let mut stats = InterpStats::default();
    let (blocks, tpb) = kernel.grid;
    for block in 0..blocks {
        run_block(kernel, mem, block, tpb, blocks, &mut stats)?;
    }
    Ok(stats)
}

fn run_block(
    kernel: &Kernel,
    mem: &mut MemImage,
    block: u32,
    tpb: u32,
    blocks: u32,
    stats: &mut InterpStats,
) -> Result<(), InterpError> {
    let mut smem = vec![0u8; kernel.smem_bytes as usize];
    let mut threads: Vec<Thread> = (0..tpb)
        .map(|tid| Thread {
            pc: 0,
            regs: BTreeMap::new(),
            tid,
            done: false,
            at_barrier: false,
        })
        .collect();
    let mut budget = MAX_THREAD_INSTRS.saturating_mul(tpb as u64);
    loop {
        let mut progressed = false;
        for t in threads.iter_mut() {
            if t.done || t.at_barrier {
                continue;
            }
            // run until barrier or exit
            while !t.done {
                if budget == 0 {
                    return Err(InterpError::Runaway(MAX_THREAD_INSTRS));
                }
                budget -= 1;
                let instr = kernel.instructions.get(t.pc).ok_or_else(|| fault(
                    block, t.tid, t.pc, "pc past end of kernel",
                ))?;
                stats.instructions += 1;
                *stats.dyn_per_opcode.entry(instr.opcode.name()).or_default() += 1;
                if instr.opcode == Opcode::BarSync && guard_passes(t, instr) {
                    t.at_barrier = true;
                    t.pc += 1;
                    break;
                }
                step_thread(t, instr, kernel, mem, &mut smem, block, tpb, blocks)?;
            }
            progressed = true;
        }
        let waiting = threads.iter().filter(|t| t.at_barrier).count();
        if waiting > 0 {
            if threads.iter().any(|t| t.done) {
                return Err(InterpError::BarrierDivergence(block));
            }
            if waiting == threads.len() {
                for t in threads.iter_mut() {
                    t.at_barrier = false;
                }
                continue;
            }
        }
        if threads.iter().all(|t| t.done) {
            return Ok(());
        }
        if !progressed {
            // every live thread is parked at a barrier that can't release
            return Err(InterpError::BarrierDivergence(block));
        }
    }
}

fn guard_passes(t: &Thread, instr: &Instruction) -> bool {
    match instr.guard {
        None => true,
        Some((p, negated)) => (t.read(p) != 0) != negated,
    }
}

fn fault(block: u32, thread: u32, pc: usize, msg: &str) -> InterpError {
    InterpError::Fault {
        block,
        thread,
        pc,
        msg: msg.to_string(),
    }
}

#[allow(clippy::too_many_arguments)]
fn step_thread(
    t: &mut Thread,
    instr: &Instruction,
    kernel: &Kernel,
    mem: &mut MemImage,
    smem: &mut [u8],
    block: u32,
    tpb: u32,
    blocks: u32,
) -> Result<(), InterpError> {
    if !guard_passes(t, instr) {
        t.pc += 1;
        return Ok(());
    }
    let read_op = |t: &Thread, op: &Operand| -> LaneVal {
        match op {
            Operand::Reg(r) => t.read(*r),
            Operand::Special(s) => special_value(*s, t.tid, block, tpb, blocks),
            Operand::ImmInt(v) => *v as LaneVal,
            Operand::ImmFloat(f) => bits_f32(*f),
        }
    };
    match instr.opcode {
        Opcode::Add
        | Opcode::Sub
        | Opcode::Mul
        | Opcode::Mad
        | Opcode::Div
        | Opcode::Min
        | Opcode::Max => {
            let a = read_op(t, &instr.srcs[0]);
            let b = read_op(t, &instr.srcs[1]);
            let c = instr.srcs.get(2).map_or(0, |o| read_op(t, o));
            let v = eval_alu(instr.opcode, instr.dtype, a, b, c);
            t.regs.insert(instr.dst.unwrap(), v);
            t.pc += 1;
        }
        Opcode::Mov => {
            let v = read_op(t, &instr.srcs[0]);
            t.regs.insert(instr.dst.unwrap(), mask_to_width(v, instr.dtype));
            t.pc += 1;
        }
        Opcode::Cvt => {
            let v = read_op(t, &instr.srcs[0]);
            let out = eval_cvt(instr.dtype, instr.cvt_src.unwrap(), v);
            t.regs.insert(instr.dst.unwrap(), out);
            t.pc += 1;
        }
        Opcode::Setp => {
            let a = read_op(t, &instr.srcs[0]);
            let b = read_op(t, &instr.srcs[1]);
            let v = eval_cmp(instr.cmp.unwrap(), instr.dtype, a, b);
            t.regs.insert(instr.dst.unwrap(), v as LaneVal);
            t.pc += 1;
        }
        Opcode::Bra => {
            t.pc = instr.label_target.unwrap();
        }
        Opcode::LdGlobal => {
            let addr = addr_of(t, instr);
            let v = mem.read_u32(addr) as LaneVal;
            t.regs.insert(instr.dst.unwrap(), v);
            t.pc += 1;
        }
        Opcode::StGlobal => {
            let addr = addr_of(t, instr);
            let v = read_op(t, &instr.srcs[1]) as u32;
            mem.write_u32(addr, v);
            t.pc += 1;
        }
        Opcode::LdShared => {
            let addr = addr_of(t, instr) as usize;
            let end = addr + 4;
            if end > smem.len() {
                return Err(fault(block, t.tid, t.pc, "shared load out of bounds"));
            }
            let v = u32::from_le_bytes(smem[addr..end].try_into().unwrap());
            t.regs.insert(instr.dst.unwrap(), v as LaneVal);
            t.pc += 1;
        }
        Opcode::StShared => {
            let addr = addr_of(t, instr) as usize;
            let end = addr + 4;
            if end > smem.len() {
                return Err(fault(block, t.tid, t.pc, "shared store out of bounds"));
            }
            let v = read_op(t, &instr.srcs[1]) as u32;
            smem[addr..end].copy_from_slice(&v.to_le_bytes());
            t.pc += 1;
        }
        Opcode::BarSync => unreachable!("handled by block loop"),
        Opcode::Exit => {
            t.done = true;
        }
    }
    let _ = kernel;
    Ok(())
}

fn mask_to_width(v: LaneVal, dtype: DType) -> LaneVal {
    match dtype {
        DType::U64 => v,
        _ => v & 0xFFFF_FFFF,
    }
}

fn addr_of(t: &Thread, instr: &Instruction) -> u64 {
    let base = match &instr.srcs[0] {
        Operand::Reg(r) => t.read(*r),
        Operand::ImmInt(v) => *v as u64,
        _ => 0,
    };
    let base = if instr.opcode.is_shared_mem() {
        base & 0xFFFF_FFFF
    } else {
        base
    };
    base.wrapping_add(instr.offset as u64)
}

pub fn special_value(s: Special, tid: u32, block: u32, tpb: u32, blocks: u32) -> LaneVal {
    match s {
        Special::TidX => tid as LaneVal,
        Special::NtidX => tpb as LaneVal,
        Special::CtaidX => block as LaneVal,
        Special::NctaidX => blocks as LaneVal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_kernel;

    fn run(src: &str, setup: impl FnOnce(&mut MemImage)) -> MemImage {
        let k = parse_kernel(src).unwrap();
        crate::isa::validate_kernel(&k)
            .into_iter()
            .for_each(|d| panic!("invalid test kernel: {}", d.msg));
        let mut mem = MemImage::new();
        setup(&mut mem);
        run_kernel(&k, &mut mem).unwrap();
        mem
    }

    #[test]
    fn scale_by_two() {
        let mem = run(
            ".kernel scale .smem 0 .grid 1 32\n\
             mov.u64 %rd1, 4096\n\
             cvt.u64.u32 %rd2, %tid.x\n\
             mul.u64 %rd2, %rd2, 4\n\
             add.u64 %rd1, %rd1, %rd2\n\
             ld.global.f32 %f1, [%rd1]\n\
             mul.f32 %f1, %f1, 0f40000000\n\
             st.global.f32 [%rd1], %f1\n\
             exit\n",
            |m| {
                for i in 0..32 {
                    m.write_f32(4096 + i * 4, i as f32);
                }
            },
        );
        for i in 0..32 {
            assert_eq!(mem.read_f32(4096 + i * 4), 2.0 * i as f32);
        }
    }

    #[test]
    fn guarded_store_and_branch_loop() {
        // sum 0..10 per thread via a loop, store thread 0 only
        let mem = run(
            ".kernel loop .smem 0 .grid 1 32\n\
             mov.s32 %r1, 0\n\
             mov.s32 %r2, 0\n\
             top:\n\
             add.s32 %r1, %r1, %r2\n\
             add.s32 %r2, %r2, 1\n\
             setp.lt.s32 %p1, %r2, 10\n\
             @%p1 bra top\n\
             mov.u64 %rd1, 8192\n\
             setp.eq.s32 %p2, %tid.x, 0\n\
             @%p2 st.global.u32 [%rd1], %r1\n\
             exit\n",
            |_| {},
        );
        assert_eq!(mem.read_u32(8192), 45);
    }

    #[test]
    fn barrier_orders_shared_memory() {
        // thread i writes smem[i]; after the barrier reads smem[31-i]
        let mem = run(
            ".kernel swap .smem 128 .grid 2 32\n\
             mov.s32 %r1, %tid.x\n\
             mul.s32 %r2, %r1, 4\n\
             st.shared.u32 [%r2], %r1\n\
             bar.sync\n\
             mov.s32 %r3, 31\n\
             sub.s32 %r3, %r3, %r1\n\
             mul.s32 %r3, %r3, 4\n\
             ld.shared.u32 %r4, [%r3]\n\
             cvt.u64.u32 %rd1, %tid.x\n\
             mul.u64 %rd1, %rd1, 4\n\
             cvt.u64.u32 %rd2, %ctaid.x\n\
             mul.u64 %rd2, %rd2, 128\n\
             add.u64 %rd1, %rd1, %rd2\n\
             st.global.u32 [%rd1], %r4\n\
             exit\n",
            |_| {},
        );
        for b in 0..2u64 {
            for i in 0..32u64 {
                assert_eq!(mem.read_u32(b * 128 + i * 4), (31 - i) as u32, "b{b} i{i}");
            }
        }
    }

    #[test]
    fn runaway_loop_detected() {
        let k = parse_kernel(
            ".kernel spin .smem 0 .grid 1 32\n\
             top:\n\
             bra top\n\
             exit\n",
        )
        .unwrap();
        let mut mem = MemImage::new();
        assert!(matches!(
            run_kernel(&k, &mut mem),
            Err(InterpError::Runaway(_))
        ));
    }
}
