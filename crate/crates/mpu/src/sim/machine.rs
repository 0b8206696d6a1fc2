//! The cycle-level machine: cores with warp schedulers, per-core TSV
//! buses, stacked DRAM banks, the mesh interconnect, and a global event
//! queue. Architectural state updates functionally at issue; timing is
//! tracked through per-instruction jobs whose stages occupy the modeled
//! resources.

use crate::compiler::annotate::InstrLoc;
use crate::compiler::regalloc::AllocatedKernel;
use crate::config::{OffloadPolicy, SchedulerPolicy, SimConfig, SmemLocation};
use crate::energy::{EnergyEvent, Stats, TsvClass};
use crate::exec::{bits_f32, eval_alu, eval_cmp, eval_cvt, LaneVal};
use crate::interp::special_value;
use crate::isa::{Opcode, Operand, RegisterId, SIMT_WIDTH};
use crate::mem::addr::{AddrFault, AddressMapping};
use crate::mem::bank::{Bank, BankRequest, CmdRecord};
use crate::mem::image::MemImage;
use crate::mem::smem::access_cycles;
use crate::sim::core::{decide_location, StackEntry, WarpCtx};
use crate::sim::lsu::{
    coalesce, fast_path_eligible, split_local_remote, LaneAddrs, MemTxn, OFFLOAD_HEADER_BITS,
};
use crate::sim::noc::Noc;
use crate::sim::tsv::TsvBus;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("simulation exceeded {0} cycles")]
    Timeout(u64),
    #[error(transparent)]
    Addr(#[from] AddrFault),
    #[error("block {block} warp {warp} pc {pc}: shared access at {addr:#x} beyond {size} bytes")]
    SmemBounds { block: u32, warp: u32, pc: usize, addr: u64, size: u32 },
    #[error("deadlock: no runnable warp and no pending event at cycle {0}")]
    Deadlock(u64),
}

const ADDR_CMD_BITS: u64 = 64;
const MAX_WARP_INFLIGHT: u32 = 8;
const MAX_RESIDENT_BLOCKS: usize = 4;

#[derive(Debug, Clone, Copy)]
enum Stage {
    Tsv { core: usize, class: TsvClass, bits: u64 },
    BankReq { core: usize, bank: usize, sub: u32, row: u64, col: u64, write: bool },
    Noc { src: (u32, u32), dst: (u32, u32), bits: u64 },
    Delay { cycles: u64 },
}

#[derive(Debug)]
struct Job {
    fl: usize,
    stages: Vec<Stage>,
    next: usize,
}

#[derive(Debug)]
struct InFlight {
    core: usize,
    warp: usize,
    remaining: u32,
    retire_extra: u64,
    dsts: Vec<RegisterId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    JobStage(usize),
    Retire(usize),
}

struct CoreState {
    proc: u32,
    core: u32,
    tsv: TsvBus,
    banks: Vec<Bank>,
    warps: Vec<WarpCtx>,
    smem: BTreeMap<u32, Vec<u8>>,
    block_queue: VecDeque<u32>,
    resident: Vec<BlockSlot>,
    // near-bank instruction buffer: (block, pc) pairs whose offload
    // descriptor has already been sent down
    offloaded_pcs: BTreeSet<(u32, usize)>,
    rr: Vec<usize>,
    greedy: Vec<Option<usize>>,
}

#[derive(Debug)]
struct BlockSlot {
    block: u32,
    warp_lo: usize,
    warp_hi: usize,
    finished: bool,
}

pub struct RunOutcome {
    pub stats: Stats,
    pub cmd_trace: Vec<CmdRecord>,
    pub trace: Vec<String>,
}

pub struct Machine<'a> {
    cfg: &'a SimConfig,
    alloc: &'a AllocatedKernel,
    map: AddressMapping,
    cores: Vec<CoreState>,
    noc: Noc,
    events: BinaryHeap<Reverse<(u64, u64, Event)>>,
    seq: u64,
    jobs: Vec<Job>,
    inflight: Vec<InFlight>,
    stats: Stats,
    cmd_trace: Vec<CmdRecord>,
    trace: Vec<String>,
    cycle: u64,
}

pub fn run_kernel_sim(
    alloc: &AllocatedKernel,
    cfg: &SimConfig,
    mem: &mut MemImage,
) -> Result<RunOutcome, SimError> {
    let mut m = Machine::new(alloc, cfg);
    m.run(mem)?;
    Ok(RunOutcome {
        stats: m.stats,
        cmd_trace: m.cmd_trace,
        trace: m.trace,
    })
}

impl<'a> Machine<'a> {
    fn new(alloc: &'a AllocatedKernel, cfg: &'a SimConfig) -> Self {
        let total = cfg.total_cores();
        let banks_per_core = (cfg.nbus_per_core * cfg.banks_per_nbu) as usize;
        let cores = (0..total)
            .map(|i| {
                let proc = i / cfg.cores_per_proc;
                let core = i % cfg.cores_per_proc;
                CoreState {
                    proc,
                    core,
                    tsv: TsvBus::default(),
                    banks: (0..banks_per_core)
                        .map(|b| {
                            Bank::new(i * banks_per_core as u32 + b as u32, cfg.row_buffers, cfg.timing)
                        })
                        .collect(),
                    warps: Vec::new(),
                    smem: BTreeMap::new(),
                    block_queue: VecDeque::new(),
                    resident: Vec::new(),
                    offloaded_pcs: BTreeSet::new(),
                    rr: vec![0; cfg.subcores_per_core as usize],
                    greedy: vec![None; cfg.subcores_per_core as usize],
                }
            })
            .collect();
        Self {
            cfg,
            alloc,
            map: AddressMapping::new(cfg),
            cores,
            noc: Noc::default(),
            events: BinaryHeap::new(),
            seq: 0,
            jobs: Vec::new(),
            inflight: Vec::new(),
            stats: Stats::default(),
            cmd_trace: Vec::new(),
            trace: Vec::new(),
            cycle: 0,
        }
    }

    fn schedule(&mut self, at: u64, ev: Event) {
        self.seq += 1;
        self.events.push(Reverse((at.max(self.cycle + 1), self.seq, ev)));
    }

    fn run(&mut self, mem: &mut MemImage) -> Result<(), SimError> {
        let (blocks, _) = self.alloc.kernel.grid;
        let total = self.cores.len() as u32;
        for b in 0..blocks {
            self.cores[(b % total) as usize].block_queue.push_back(b);
        }
        for c in 0..self.cores.len() {
            self.dispatch_blocks(c);
        }
        loop {
            self.cycle += 1;
            if self.cycle > self.cfg.max_cycles {
                return Err(SimError::Timeout(self.cfg.max_cycles));
            }
            self.process_events();
            self.step_tsv();
            self.step_banks();
            self.release_barriers();
            for c in 0..self.cores.len() {
                let mut retired = Vec::new();
                for s in 0..self.cores[c].resident.len() {
                    let slot = &self.cores[c].resident[s];
                    if slot.finished {
                        continue;
                    }
                    let done = self.cores[c].warps[slot.warp_lo..slot.warp_hi]
                        .iter()
                        .all(|w| w.done && w.in_flight == 0);
                    if done {
                        retired.push(s);
                    }
                }
                for s in retired {
                    let blk = self.cores[c].resident[s].block;
                    if self.cfg.trace {
                        self.trace.push(format!("{},block,{blk},done", self.cycle));
                    }
                    self.cores[c].resident[s].finished = true;
                    self.cores[c].smem.remove(&blk);
                    self.cores[c].offloaded_pcs.retain(|(b, _)| *b != blk);
                }
                self.dispatch_blocks(c);
            }
            self.issue_all(mem)?;
            if self.finished() {
                self.stats.cycles = self.cycle;
                return Ok(());
            }
        }
    }

    fn finished(&self) -> bool {
        self.events.is_empty()
            && self.cores.iter().all(|c| {
                c.resident.iter().all(|s| s.finished)
                    && c.block_queue.is_empty()
                    && !c.tsv.busy()
                    && c.banks.iter().all(|b| !b.busy())
            })
    }

    fn dispatch_blocks(&mut self, c: usize) {
        let warps = self.alloc.kernel.warps_per_block();
        loop {
            let active = self.cores[c].resident.iter().filter(|s| !s.finished).count();
            if active >= MAX_RESIDENT_BLOCKS {
                return;
            }
            let Some(blk) = self.cores[c].block_queue.pop_front() else {
                return;
            };
            let lo = self.cores[c].warps.len();
            self.cores[c]
                .warps
                .extend((0..warps).map(|w| WarpCtx::new(blk, w)));
            let hi = self.cores[c].warps.len();
            self.cores[c]
                .smem
                .insert(blk, vec![0u8; self.alloc.kernel.smem_bytes as usize]);
            self.cores[c].resident.push(BlockSlot { block: blk, warp_lo: lo, warp_hi: hi, finished: false });
        }
    }

    fn process_events(&mut self) {
        while let Some(Reverse((t, _, _))) = self.events.peek() {
            if *t > self.cycle {
                break;
            }
            let Reverse((_, _, ev)) = self.events.pop().unwrap();
            match ev {
                Event::JobStage(j) => self.advance_job(j),
                Event::Retire(fl) => {
                    let f = &self.inflight[fl];
                    let (core, warp, dsts) = (f.core, f.warp, f.dsts.clone());
                    let w = &mut self.cores[core].warps[warp];
                    for d in dsts {
                        w.pending_regs.remove(&d);
                    }
                    w.in_flight -= 1;
                }
            }
        }
    }

    fn step_tsv(&mut self) {
        let mut done = Vec::new();
        for c in 0..self.cores.len() {
            self.cores[c]
                .tsv
                .step(self.cycle, self.cfg, &mut self.stats, &mut done);
        }
        for token in done {
            self.advance_job(token as usize);
        }
    }

    fn step_banks(&mut self) {
        let mut done = Vec::new();
        for c in 0..self.cores.len() {
            for b in 0..self.cores[c].banks.len() {
                let bank = &mut self.cores[c].banks[b];
                bank.step(self.cycle, &self.cfg.energy, &mut self.stats, &mut self.cmd_trace);
                bank.drain_returns(self.cycle, &mut done);
            }
        }
        for tag in done {
            self.advance_job(tag as usize);
        }
    }

    /// Starts the current stage of a job, or completes the job.
    fn advance_job(&mut self, j: usize) {
        let job = &mut self.jobs[j];
        if job.next >= job.stages.len() {
            let fl = job.fl;
            let f = &mut self.inflight[fl];
            f.remaining -= 1;
            if f.remaining == 0 {
                let extra = f.retire_extra;
                self.schedule(self.cycle + extra, Event::Retire(fl));
            }
            return;
        }
        let stage = job.stages[job.next];
        job.next += 1;
        match stage {
            Stage::Tsv { core, class, bits } => {
                self.cores[core].tsv.enqueue(class, bits, j as u64);
            }
            Stage::BankReq { core, bank, sub, row, col, write } => {
                self.cores[core].banks[bank].enqueue(BankRequest {
                    subarray: sub,
                    physical_row: row,
                    col,
                    is_write: write,
                    tag: j as u64,
                    arrival: self.cycle,
                });
            }
            Stage::Noc { src, dst, bits } => {
                let t = self.noc.send(self.cycle, src, dst, bits, self.cfg, &mut self.stats);
                self.schedule(t, Event::JobStage(j));
            }
            Stage::Delay { cycles } => {
                self.schedule(self.cycle + cycles, Event::JobStage(j));
            }
        }
    }

    fn release_barriers(&mut self) {
        for c in &mut self.cores {
            for s in &c.resident {
                if s.finished {
                    continue;
                }
                let block_warps = &mut c.warps[s.warp_lo..s.warp_hi];
                let live: Vec<&WarpCtx> = block_warps.iter().filter(|w| !w.done).collect();
                if !live.is_empty() && live.iter().all(|w| w.at_barrier) {
                    for w in block_warps.iter_mut() {
                        w.at_barrier = false;
                    }
                }
            }
        }
    }

    fn issue_all(&mut self, mem: &mut MemImage) -> Result<(), SimError> {
        for c in 0..self.cores.len() {
            if self.cores[c].resident.iter().all(|s| s.finished) {
                continue;
            }
            for s in 0..self.cfg.subcores_per_core as usize {
                if let Some(w) = self.pick_warp(c, s) {
                    self.issue(c, w, mem)?;
                }
            }
        }
        Ok(())
    }

    fn warp_ready(&self, c: usize, w: usize) -> bool {
        let warp = &self.cores[c].warps[w];
        if warp.done || warp.at_barrier || warp.in_flight >= MAX_WARP_INFLIGHT {
            return false;
        }
        let instr = &self.alloc.kernel.instructions[warp.pc()];
        if matches!(instr.opcode, Opcode::BarSync | Opcode::Exit) && warp.in_flight > 0 {
            return false;
        }
        let mut regs = instr.src_regs();
        if let Some(d) = instr.dst {
            regs.push(d);
        }
        regs.iter().all(|r| !warp.pending_regs.contains(r))
    }

    fn pick_warp(&mut self, c: usize, s: usize) -> Option<usize> {
        let sub = self.cfg.subcores_per_core as usize;
        let mine: Vec<usize> = (0..self.cores[c].warps.len())
            .filter(|&w| self.cores[c].warps[w].warp_in_block as usize % sub == s)
            .collect();
        if mine.is_empty() {
            return None;
        }
        match self.cfg.scheduler {
            SchedulerPolicy::LooseRoundRobin => {
                let start = self.cores[c].rr[s];
                for off in 0..mine.len() {
                    let w = mine[(start + off) % mine.len()];
                    if self.warp_ready(c, w) {
                        self.cores[c].rr[s] = (start + off + 1) % mine.len();
                        return Some(w);
                    }
                }
                None
            }
            SchedulerPolicy::GreedyThenOldest => {
                if let Some(g) = self.cores[c].greedy[s] {
                    if self.warp_ready(c, g) {
                        return Some(g);
                    }
                }
                for &w in &mine {
                    if self.warp_ready(c, w) {
                        self.cores[c].greedy[s] = Some(w);
                        return Some(w);
                    }
                }
                None
            }
        }
    }

    fn new_inflight(&mut self, c: usize, w: usize, dsts: Vec<RegisterId>, extra: u64) -> usize {
        self.inflight.push(InFlight {
            core: c,
            warp: w,
            remaining: 0,
            retire_extra: extra,
            dsts,
        });
        self.inflight.len() - 1
    }

    fn spawn_job(&mut self, fl: usize, stages: Vec<Stage>) {
        self.inflight[fl].remaining += 1;
        self.jobs.push(Job { fl, stages, next: 0 });
        let j = self.jobs.len() - 1;
        // start immediately (stage resources see it this cycle or next)
        let job = &mut self.jobs[j];
        let stage = job.stages[job.next];
        job.next += 1;
        match stage {
            Stage::Tsv { core, class, bits } => {
                self.cores[core].tsv.enqueue(class, bits, j as u64);
            }
            Stage::BankReq { core, bank, sub, row, col, write } => {
                self.cores[core].banks[bank].enqueue(BankRequest {
                    subarray: sub,
                    physical_row: row,
                    col,
                    is_write: write,
                    tag: j as u64,
                    arrival: self.cycle,
                });
            }
            Stage::Noc { src, dst, bits } => {
                let t = self.noc.send(self.cycle, src, dst, bits, self.cfg, &mut self.stats);
                self.schedule(t, Event::JobStage(j));
            }
            Stage::Delay { cycles } => {
                self.schedule(self.cycle + cycles, Event::JobStage(j));
            }
        }
    }

    fn finish_inflight(&mut self, fl: usize) {
        // a paperwork-only instruction with no resource legs
        if self.inflight[fl].remaining == 0 {
            let extra = self.inflight[fl].retire_extra;
            self.schedule(self.cycle + extra, Event::Retire(fl));
        }
    }

    fn bank_index(&self, nbu: u32, bank: u32) -> usize {
        (nbu * self.cfg.banks_per_nbu + bank) as usize
    }

    fn core_index(&self, proc: u32, core: u32) -> usize {
        (proc * self.cfg.cores_per_proc + core) as usize
    }

    fn issue(&mut self, c: usize, w: usize, mem: &mut MemImage) -> Result<(), SimError> {
        let cfg = self.cfg;
        let kernel = &self.alloc.kernel;
        let (blocks, tpb) = kernel.grid;
        let home = (self.cores[c].proc, self.cores[c].core);
        let pc = self.cores[c].warps[w].pc();
        let instr = &kernel.instructions[pc];
        let opcode = instr.opcode;
        let block = self.cores[c].warps[w].block;
        let warp_in_block = self.cores[c].warps[w].warp_in_block;
        let subcore = warp_in_block % cfg.subcores_per_core;

        let loc = decide_location(instr, cfg.offload_policy, &self.cores[c].warps[w]);
        match loc {
            InstrLoc::N => self.stats.instr_near += 1,
            InstrLoc::F => self.stats.instr_far += 1,
        }
        // descriptors are cached in the near-bank instruction buffer:
        // only the first encounter per block crosses down
        let first_offload =
            loc == InstrLoc::N && self.cores[c].offloaded_pcs.insert((block, pc));

        // per-lane operand evaluation under the active mask
        let warp = &self.cores[c].warps[w];
        let top_mask = warp.top().mask;
        let guard_mask = match instr.guard {
            None => u32::MAX,
            Some((p, neg)) => {
                let vals = warp.read(p);
                let mut m = 0u32;
                for (l, v) in vals.iter().enumerate() {
                    if (*v != 0) != neg {
                        m |= 1 << l;
                    }
                }
                m
            }
        };
        let exec_mask = top_mask & guard_mask;
        let lanes_active = exec_mask.count_ones();

        let read_op = |warp: &WarpCtx, op: &Operand, lane: usize| -> LaneVal {
            match op {
                Operand::Reg(r) => warp.read(*r)[lane],
                Operand::Special(s) => {
                    special_value(*s, warp_in_block * SIMT_WIDTH as u32 + lane as u32, block, tpb, blocks)
                }
                Operand::ImmInt(v) => *v as LaneVal,
                Operand::ImmFloat(f) => bits_f32(*f),
            }
        };

        // energy: operand collection and register file traffic
        self.stats.record(&cfg.energy, EnergyEvent::OperandCollector);
        let warp = &self.cores[c].warps[w];
        let mut rf_accesses = instr.src_regs().len() as u32;
        if instr.dst.is_some() {
            rf_accesses += 1;
        }
        for _ in 0..rf_accesses {
            self.stats.record(&cfg.energy, EnergyEvent::RfAccess);
        }

        // plan register moves demanded by the execution side
        let mut moves: Vec<(RegisterId, InstrLoc)> = Vec::new();
        let need = |warp: &WarpCtx, moves: &mut Vec<(RegisterId, InstrLoc)>, r: RegisterId, at: InstrLoc| {
            let e = warp.entry(r);
            let have = match at {
                InstrLoc::F => e.fb,
                InstrLoc::N => e.nb,
            };
            if !have && !moves.iter().any(|(mr, ml)| *mr == r && *ml == at) {
                moves.push((r, at));
            }
        };
        // guards are evaluated by the far-bank front end
        if let Some((p, _)) = instr.guard {
            need(warp, &mut moves, p, InstrLoc::F);
        }

        let mut dsts: Vec<RegisterId> = Vec::new();
        let mut writes: Vec<(RegisterId, InstrLoc, [LaneVal; SIMT_WIDTH])> = Vec::new();
        let mut jobs: Vec<Vec<Stage>> = Vec::new();
        let mut retire_extra = cfg.issue_latency;
        let mut pc_update = PcUpdate::Advance;
        let mut trace_event = String::new();

        match opcode {
            Opcode::Add
            | Opcode::Sub
            | Opcode::Mul
            | Opcode::Mad
            | Opcode::Div
            | Opcode::Min
            | Opcode::Max
            | Opcode::Mov
            | Opcode::Cvt
            | Opcode::Setp => {
                for s in instr.src_regs() {
                    need(warp, &mut moves, s, loc);
                }
                let mut vals = [0 as LaneVal; SIMT_WIDTH];
                for l in 0..SIMT_WIDTH {
                    if exec_mask & (1 << l) == 0 {
                        continue;
                    }
                    vals[l] = match opcode {
                        Opcode::Mov => {
                            let v = read_op(warp, &instr.srcs[0], l);
                            if instr.dtype == crate::isa::DType::U64 {
                                v
                            } else {
                                v & 0xFFFF_FFFF
                            }
                        }
                        Opcode::Cvt => {
                            eval_cvt(instr.dtype, instr.cvt_src.unwrap(), read_op(warp, &instr.srcs[0], l))
                        }
                        Opcode::Setp => eval_cmp(
                            instr.cmp.unwrap(),
                            instr.dtype,
                            read_op(warp, &instr.srcs[0], l),
                            read_op(warp, &instr.srcs[1], l),
                        ) as LaneVal,
                        _ => eval_alu(
                            opcode,
                            instr.dtype,
                            read_op(warp, &instr.srcs[0], l),
                            read_op(warp, &instr.srcs[1], l),
                            instr.srcs.get(2).map_or(0, |o| read_op(warp, o, l)),
                        ),
                    };
                }
                if lanes_active > 0 {
                    self.stats.record(
                        &cfg.energy,
                        EnergyEvent::Alu { opcode: opcode.name(), lanes: lanes_active },
                    );
                    let write_loc = if opcode == Opcode::Setp { InstrLoc::F } else { loc };
                    writes.push((instr.dst.unwrap(), write_loc, vals));
                    dsts.push(instr.dst.unwrap());
                }
                retire_extra = if opcode == Opcode::Div { cfg.div_latency } else { cfg.alu_latency };
                if first_offload {
                    jobs.push(vec![Stage::Tsv {
                        core: c,
                        class: TsvClass::InstrOffload,
                        bits: OFFLOAD_HEADER_BITS,
                    }]);
                }
            }
            Opcode::Bra => {
                if let Some((p, _)) = instr.guard {
                    need(warp, &mut moves, p, InstrLoc::F);
                }
                let target = instr.label_target.unwrap();
                if instr.guard.is_none() {
                    pc_update = PcUpdate::Jump(target);
                } else {
                    let taken = exec_mask;
                    let fall = top_mask & !taken;
                    let rpc = *self.alloc.reconv.get(&pc).expect("conditional bra has a reconvergence point");
                    pc_update = PcUpdate::Branch { taken, fall, target, rpc };
                }
                retire_extra = cfg.alu_latency;
            }
            Opcode::Exit => {
                pc_update = PcUpdate::Exit(exec_mask);
            }
            Opcode::BarSync => {
                pc_update = PcUpdate::Barrier;
            }
            Opcode::LdGlobal | Opcode::StGlobal => {
                let addr_reg = instr.addr_reg().unwrap();
                let is_store = opcode == Opcode::StGlobal;
                let mut addrs: LaneAddrs = [None; SIMT_WIDTH];
                for l in 0..SIMT_WIDTH {
                    if exec_mask & (1 << l) != 0 {
                        addrs[l] = Some(
                            warp.read(addr_reg)[l].wrapping_add(instr.offset as u64),
                        );
                    }
                }
                self.stats.lanes_requested += lanes_active as u64;
                let fast_allowed = cfg.ldst_offload_enabled
                    && matches!(
                        cfg.offload_policy,
                        OffloadPolicy::Annotated | OffloadPolicy::HwDefault | OffloadPolicy::AllNear
                    );
                let data_near = if is_store {
                    instr.store_data_reg().map(|r| warp.entry(r).nb).unwrap_or(true)
                } else {
                    true
                };
                let fast = fast_allowed
                    && data_near
                    && fast_path_eligible(&addrs, &self.map, home, subcore);

                // functional access at issue
                if is_store {
                    let data_reg = instr.store_data_reg().unwrap();
                    let vals = *warp.read(data_reg);
                    for (l, a) in addrs.iter().enumerate() {
                        if let Some(a) = a {
                            self.map.decode(*a)?;
                            mem.write_u32(*a, vals[l] as u32);
                        }
                    }
                } else {
                    let mut vals = [0 as LaneVal; SIMT_WIDTH];
                    for (l, a) in addrs.iter().enumerate() {
                        if let Some(a) = a {
                            vals[l] = mem.read_u32(*a) as LaneVal;
                        }
                    }
                    if lanes_active > 0 {
                        let write_loc = if fast { InstrLoc::N } else { InstrLoc::F };
                        writes.push((instr.dst.unwrap(), write_loc, vals));
                        dsts.push(instr.dst.unwrap());
                    }
                }

                // timing legs
                let txns = coalesce(&addrs, &self.map)?;
                if fast {
                    self.stats.offloaded_ldst += 1;
                    self.stats.lanes_serviced_offload += lanes_active as u64;
                    self.stats.record(&cfg.energy, EnergyEvent::LsuExtension);
                    for (i, t) in txns.iter().enumerate() {
                        let bank = self.bank_index(t.nbu, t.bank);
                        let mut stages = Vec::new();
                        if i == 0 {
                            stages.push(Stage::Tsv {
                                core: c,
                                class: TsvClass::InstrOffload,
                                bits: OFFLOAD_HEADER_BITS,
                            });
                        } else {
                            // expanded by the near-bank unit behind the header
                            stages.push(Stage::Delay { cycles: 2 });
                        }
                        stages.push(Stage::BankReq {
                            core: c,
                            bank,
                            sub: t.subarray,
                            row: t.physical_row,
                            col: t.col,
                            write: is_store,
                        });
                        jobs.push(stages);
                    }
                    trace_event = "offload".into();
                } else {
                    // the far-bank LSU expands the access itself: it needs
                    // the lane addresses, and stores also the data
                    need(warp, &mut moves, addr_reg, InstrLoc::F);
                    if is_store {
                        if let Some(d) = instr.store_data_reg() {
                            need(warp, &mut moves, d, InstrLoc::F);
                        }
                    }
                    let (local, remote) = split_local_remote(txns, home);
                    for t in &local {
                        self.stats.lanes_serviced_local += t.lanes as u64;
                        jobs.push(self.slow_txn_stages(c, c, t, is_store));
                    }
                    for t in &remote {
                        self.stats.lanes_serviced_remote += t.lanes as u64;
                        let dst_core = self.core_index(t.proc, t.core);
                        let req_bits = ADDR_CMD_BITS
                            + if is_store { cfg.bank_io_bits } else { 0 };
                        let resp_bits = if is_store { 32 } else { cfg.bank_io_bits };
                        let mut stages = vec![Stage::Noc {
                            src: home,
                            dst: (t.proc, t.core),
                            bits: req_bits,
                        }];
                        stages.extend(self.slow_txn_stages(dst_core, dst_core, t, is_store));
                        stages.push(Stage::Noc {
                            src: (t.proc, t.core),
                            dst: home,
                            bits: resp_bits,
                        });
                        jobs.push(stages);
                    }
                }
            }
            Opcode::LdShared | Opcode::StShared => {
                let addr_reg = instr.addr_reg().unwrap();
                need(warp, &mut moves, addr_reg, loc);
                let is_store = opcode == Opcode::StShared;
                let mut word_addrs: [Option<u32>; SIMT_WIDTH] = [None; SIMT_WIDTH];
                for l in 0..SIMT_WIDTH {
                    if exec_mask & (1 << l) != 0 {
                        let a = (warp.read(addr_reg)[l] as u32).wrapping_add(instr.offset as u32);
                        if a + 4 > kernel.smem_bytes {
                            return Err(SimError::SmemBounds {
                                block,
                                warp: warp_in_block,
                                pc,
                                addr: a as u64,
                                size: kernel.smem_bytes,
                            });
                        }
                        word_addrs[l] = Some(a);
                    }
                }
                let conflict = access_cycles(&word_addrs);
                self.stats.record(&cfg.energy, EnergyEvent::SmemAccess);
                let mut stages = vec![Stage::Delay { cycles: conflict as u64 * cfg.smem_cycle }];
                let smem_near = cfg.smem_location == SmemLocation::NearBank;
                if (loc == InstrLoc::N) != smem_near {
                    // executing on the opposite side of the scratchpad:
                    // request down plus lane data across the TSVs
                    let bits = ADDR_CMD_BITS + lanes_active as u64 * 32;
                    stages.push(Stage::Tsv { core: c, class: TsvClass::SmemFarBank, bits });
                }
                jobs.push(stages);
                // functional access
                if is_store {
                    let data_reg = instr.store_data_reg().unwrap();
                    need(warp, &mut moves, data_reg, loc);
                    let vals = *warp.read(data_reg);
                    let smem = self.cores[c].smem.get_mut(&block).unwrap();
                    for (l, a) in word_addrs.iter().enumerate() {
                        if let Some(a) = a {
                            let v = (vals[l] as u32).to_le_bytes();
                            smem[*a as usize..*a as usize + 4].copy_from_slice(&v);
                        }
                    }
                } else {
                    let mut vals = [0 as LaneVal; SIMT_WIDTH];
                    let smem = &self.cores[c].smem[&block];
                    for (l, a) in word_addrs.iter().enumerate() {
                        if let Some(a) = a {
                            let b = &smem[*a as usize..*a as usize + 4];
                            vals[l] = u32::from_le_bytes(b.try_into().unwrap()) as LaneVal;
                        }
                    }
                    if lanes_active > 0 {
                        writes.push((instr.dst.unwrap(), loc, vals));
                        dsts.push(instr.dst.unwrap());
                    }
                }
            }
        }

        // apply mutations: moves, writes, pc, bookkeeping
        let warp = &mut self.cores[c].warps[w];
        for (r, at) in &moves {
            let bits = warp.ensure_at(*r, *at);
            if bits > 0 {
                self.stats.register_moves += 1;
                jobs.push(vec![Stage::Tsv { core: c, class: TsvClass::RegisterMove, bits }]);
            }
        }
        let warp = &mut self.cores[c].warps[w];
        for (r, at, vals) in &writes {
            warp.write(*r, *at, exec_mask, vals);
            warp.pending_regs.insert(*r);
        }
        match pc_update {
            PcUpdate::Advance => {
                let e = warp.stack.last_mut().unwrap();
                e.pc = pc + 1;
                warp.reconverge();
            }
            PcUpdate::Jump(t) => {
                let e = warp.stack.last_mut().unwrap();
                e.pc = t;
                warp.reconverge();
            }
            PcUpdate::Branch { taken, fall, target, rpc } => {
                if taken == 0 {
                    warp.stack.last_mut().unwrap().pc = pc + 1;
                } else if fall == 0 {
                    warp.stack.last_mut().unwrap().pc = target;
                } else {
                    warp.stack.last_mut().unwrap().pc = rpc;
                    warp.stack.push(StackEntry { pc: pc + 1, rpc, mask: fall });
                    warp.stack.push(StackEntry { pc: target, rpc, mask: taken });
                }
                warp.reconverge();
            }
            PcUpdate::Exit(mask) => {
                warp.stack.last_mut().unwrap().pc = pc + 1;
                warp.retire_lanes(mask);
            }
            PcUpdate::Barrier => {
                warp.stack.last_mut().unwrap().pc = pc + 1;
                warp.reconverge();
                warp.at_barrier = true;
            }
        }
        warp.issued += 1;
        warp.last_issue_cycle = self.cycle;
        warp.in_flight += 1;

        if cfg.trace {
            let loc_s = match loc {
                InstrLoc::N => "N",
                InstrLoc::F => "F",
            };
            self.trace.push(format!(
                "{},{},{},{},{},{},{}",
                self.cycle,
                block,
                warp_in_block,
                pc,
                opcode.name(),
                loc_s,
                trace_event
            ));
        }

        let fl = self.new_inflight(c, w, dsts, retire_extra);
        for stages in jobs {
            self.spawn_job(fl, stages);
        }
        self.finish_inflight(fl);
        Ok(())
    }

    /// Command/data legs of a non-offloaded transaction at `tsv_core`.
    fn slow_txn_stages(&self, tsv_core: usize, bank_core: usize, t: &MemTxn, write: bool) -> Vec<Stage> {
        let cfg = self.cfg;
        let bank = self.bank_index(t.nbu, t.bank);
        let mut stages = Vec::new();
        let down = ADDR_CMD_BITS + if write { cfg.bank_io_bits } else { 0 };
        stages.push(Stage::Tsv { core: tsv_core, class: TsvClass::DramTransaction, bits: down });
        stages.push(Stage::BankReq {
            core: bank_core,
            bank,
            sub: t.subarray,
            row: t.physical_row,
            col: t.col,
            write,
        });
        if !write {
            stages.push(Stage::Tsv {
                core: tsv_core,
                class: TsvClass::DramTransaction,
                bits: cfg.bank_io_bits,
            });
        }
        stages
    }
}

#[derive(Debug, Clone, Copy)]
enum PcUpdate {
    Advance,
    Jump(usize),
    Branch { taken: u32, fall: u32, target: usize, rpc: usize },
    Exit(u32),
    Barrier,
}
