//! Warp-level state for the hybrid pipeline: the SIMT reconvergence
//! stack, the split far/near register values, and the per-register track
//! table that records which side currently holds a valid copy. Register
//! reads go through the track table, so a bookkeeping bug here produces
//! wrong answers rather than just wrong timing.

use crate::compiler::annotate::InstrLoc;
use crate::config::OffloadPolicy;
use crate::exec::LaneVal;
use crate::isa::{Instruction, LocHint, Opcode, RegClass, RegisterId, SIMT_WIDTH};
use std::collections::{BTreeMap, BTreeSet};

pub const FULL_MASK: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackEntry {
    pub fb: bool,
    pub nb: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct StackEntry {
    pub pc: usize,
    /// reconvergence pc where this entry pops (usize::MAX for the base)
    pub rpc: usize,
    pub mask: u32,
}

#[derive(Debug, Clone)]
pub struct WarpCtx {
    /// warp index within its block (subcore = this mod subcores)
    pub warp_in_block: u32,
    pub block: u32,
    pub stack: Vec<StackEntry>,
    regs_far: BTreeMap<RegisterId, [LaneVal; SIMT_WIDTH]>,
    regs_near: BTreeMap<RegisterId, [LaneVal; SIMT_WIDTH]>,
    pub track: BTreeMap<RegisterId, TrackEntry>,
    pub pending_regs: BTreeSet<RegisterId>,
    pub in_flight: u32,
    pub at_barrier: bool,
    pub done: bool,
    pub issued: u64,
    pub last_issue_cycle: u64,
}

impl WarpCtx {
    pub fn new(block: u32, warp_in_block: u32) -> Self {
        Self {
            warp_in_block,
            block,
            stack: vec![StackEntry { pc: 0, rpc: usize::MAX, mask: FULL_MASK }],
            regs_far: BTreeMap::new(),
            regs_near: BTreeMap::new(),
            track: BTreeMap::new(),
            pending_regs: BTreeSet::new(),
            in_flight: 0,
            at_barrier: false,
            done: false,
            issued: 0,
            last_issue_cycle: 0,
        }
    }

    pub fn top(&self) -> &StackEntry {
        self.stack.last().expect("live warp has a stack")
    }

    pub fn pc(&self) -> usize {
        self.top().pc
    }

    /// Pops fully reconverged entries; called after every pc update.
    pub fn reconverge(&mut self) {
        while let Some(top) = self.stack.last() {
            if top.mask == 0 || (self.stack.len() > 1 && top.pc == top.rpc) {
                self.stack.pop();
            } else {
                break;
            }
        }
        if self.stack.is_empty() {
            self.done = true;
        }
    }

    pub fn entry(&self, r: RegisterId) -> TrackEntry {
        self.track
            .get(&r)
            .copied()
            .unwrap_or(TrackEntry { fb: false, nb: false })
    }

    /// Reads register values from whichever side holds a valid copy.
    pub fn read(&self, r: RegisterId) -> &[LaneVal; SIMT_WIDTH] {
        let e = self.entry(r);
        if e.fb {
            self.regs_far.get(&r).expect("fb-valid register has far values")
        } else if e.nb {
            self.regs_near.get(&r).expect("nb-valid register has near values")
        } else {
            panic!("read of {r:?} with no valid copy on either side");
        }
    }

    /// Writes under a lane mask to exactly one side, invalidating the
    /// other copy.
    pub fn write(&mut self, r: RegisterId, loc: InstrLoc, mask: u32, vals: &[LaneVal; SIMT_WIDTH]) {
        let prior = self.entry(r);
        let mut lanes = if prior.fb {
            *self.regs_far.get(&r).unwrap()
        } else if prior.nb {
            *self.regs_near.get(&r).unwrap()
        } else {
            [0; SIMT_WIDTH]
        };
        for (l, lane) in lanes.iter_mut().enumerate() {
            if mask & (1 << l) != 0 {
                *lane = vals[l];
            }
        }
        match loc {
            InstrLoc::F => {
                self.regs_far.insert(r, lanes);
                self.regs_near.remove(&r);
                self.track.insert(r, TrackEntry { fb: true, nb: false });
            }
            InstrLoc::N => {
                self.regs_near.insert(r, lanes);
                self.regs_far.remove(&r);
                self.track.insert(r, TrackEntry { fb: false, nb: true });
            }
        }
    }

    /// Copies a register to the other side; afterwards both are valid.
    /// Returns the moved width in bits (0 when no move was needed).
    pub fn ensure_at(&mut self, r: RegisterId, loc: InstrLoc) -> u64 {
        let e = self.entry(r);
        match loc {
            InstrLoc::F if e.fb => 0,
            InstrLoc::N if e.nb => 0,
            InstrLoc::F => {
                let v = *self.regs_near.get(&r).expect("move source valid");
                self.regs_far.insert(r, v);
                self.track.insert(r, TrackEntry { fb: true, nb: true });
                move_bits(r.class)
            }
            InstrLoc::N => {
                let v = *self.regs_far.get(&r).expect("move source valid");
                self.regs_near.insert(r, v);
                self.track.insert(r, TrackEntry { fb: true, nb: true });
                move_bits(r.class)
            }
        }
    }

    /// Removes exited lanes from the whole stack.
    pub fn retire_lanes(&mut self, mask: u32) {
        for e in &mut self.stack {
            e.mask &= !mask;
        }
        self.reconverge();
    }
}

/// Bits a register move occupies on the TSV bus (all 32 lanes move).
pub fn move_bits(class: RegClass) -> u64 {
    class.bits().max(8) * SIMT_WIDTH as u64
}

/// Opcodes pinned to the far-bank (base die) pipeline: control flow,
/// predicate generation, barriers, and the global-memory LSU.
pub fn far_only(op: Opcode) -> bool {
    matches!(
        op,
        Opcode::Bra
            | Opcode::Setp
            | Opcode::BarSync
            | Opcode::Exit
            | Opcode::LdGlobal
            | Opcode::StGlobal
    )
}

/// The three-stage offload decision: far-only opcode set, then the
/// compiler hint (when the policy honors hints), then the hardware
/// track-table default (near iff every source has a valid near copy).
pub fn decide_location(instr: &Instruction, policy: OffloadPolicy, warp: &WarpCtx) -> InstrLoc {
    if far_only(instr.opcode) {
        return InstrLoc::F;
    }
    match policy {
        OffloadPolicy::AllFar | OffloadPolicy::Ponb => InstrLoc::F,
        OffloadPolicy::AllNear => InstrLoc::N,
        OffloadPolicy::Annotated => match instr.loc_hint {
            LocHint::Near => InstrLoc::N,
            LocHint::Far => InstrLoc::F,
            LocHint::None => track_default(instr, warp),
        },
        OffloadPolicy::HwDefault => track_default(instr, warp),
    }
}

fn track_default(instr: &Instruction, warp: &WarpCtx) -> InstrLoc {
    let all_near = instr.src_regs().iter().all(|r| warp.entry(*r).nb);
    if all_near {
        InstrLoc::N
    } else {
        InstrLoc::F
    }
}
