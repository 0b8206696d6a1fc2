//! Per-bank DRAM state machine: FR-FCFS scheduling, open-page policy,
//! multiple activated row buffers (one per subarray), and periodic
//! refresh. Every command is appended to a trace that the offline
//! legality checker replays.

use crate::config::{DramTiming, EnergyTable};
use crate::energy::{EnergyEvent, Stats};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DramCmd {
    Act,
    Rd,
    Wr,
    Pre,
    Ref,
}

impl DramCmd {
    pub fn name(self) -> &'static str {
        match self {
            DramCmd::Act => "ACT",
            DramCmd::Rd => "RD",
            DramCmd::Wr => "WR",
            DramCmd::Pre => "PRE",
            DramCmd::Ref => "REF",
        }
    }
}

/// One row of the command trace CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmdRecord {
    pub cycle: u64,
    pub bank_id: u32,
    pub subarray: u32,
    pub cmd: DramCmd,
    pub row: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct BankRequest {
    pub subarray: u32,
    pub physical_row: u64,
    pub col: u64,
    pub is_write: bool,
    pub tag: u64,
    pub arrival: u64,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    req: BankRequest,
    counted: bool,
}

const NEVER: u64 = u64::MAX;

#[derive(Debug, Clone)]
pub struct Bank {
    pub id: u32,
    timing: DramTiming,
    open: Vec<Option<u64>>,
    act_cycle: Vec<u64>,
    last_col_sub: Vec<u64>,
    act_allowed: Vec<u64>,
    /// bank-level tCCD gate
    last_col: u64,
    queue: VecDeque<Pending>,
    next_refresh: u64,
    refresh_end: u64,
    /// (ready_cycle, tag)
    returns: Vec<(u64, u64)>,
}

impl Bank {
    pub fn new(id: u32, subarrays: u32, timing: DramTiming) -> Self {
        // refreshes are staggered per bank to avoid whole-die stalls
        let offset = (id as u64 * 97) % timing.t_refi;
        Self {
            id,
            timing,
            open: vec![None; subarrays as usize],
            act_cycle: vec![NEVER; subarrays as usize],
            last_col_sub: vec![NEVER; subarrays as usize],
            act_allowed: vec![0; subarrays as usize],
            last_col: NEVER,
            queue: VecDeque::new(),
            next_refresh: timing.t_refi + offset,
            refresh_end: 0,
            returns: Vec::new(),
        }
    }

    pub fn enqueue(&mut self, req: BankRequest) {
        self.queue.push_back(Pending { req, counted: false });
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn busy(&self) -> bool {
        !self.queue.is_empty() || !self.returns.is_empty()
    }

    /// Completed request tags whose data is ready at `cycle`.
    pub fn drain_returns(&mut self, cycle: u64, out: &mut Vec<u64>) {
        let mut i = 0;
        while i < self.returns.len() {
            if self.returns[i].0 <= cycle {
                out.push(self.returns.remove(i).1);
            } else {
                i += 1;
            }
        }
    }

    fn col_ok(&self, cycle: u64, sub: usize) -> bool {
        let ccd_ok = self.last_col == NEVER || cycle >= self.last_col + self.timing.t_ccd;
        let rcd_ok =
            self.act_cycle[sub] != NEVER && cycle >= self.act_cycle[sub] + self.timing.t_rcd;
        ccd_ok && rcd_ok
    }

    fn pre_ok(&self, cycle: u64, sub: usize) -> bool {
        let ras_ok =
            self.act_cycle[sub] != NEVER && cycle >= self.act_cycle[sub] + self.timing.t_ras;
        let rtp_ok =
            self.last_col_sub[sub] == NEVER || cycle >= self.last_col_sub[sub] + self.timing.t_rtp;
        ras_ok && rtp_ok
    }

    /// Advance one cycle; issues at most one command.
    pub fn step(
        &mut self,
        cycle: u64,
        table: &EnergyTable,
        stats: &mut Stats,
        trace: &mut Vec<CmdRecord>,
    ) {
        if cycle < self.refresh_end {
            return;
        }

        // refresh takes priority over request service once due
        if cycle >= self.next_refresh {
            let can_ref = (0..self.open.len())
                .all(|s| self.open[s].is_none() || self.pre_ok(cycle, s));
            if can_ref {
                trace.push(CmdRecord {
                    cycle,
                    bank_id: self.id,
                    subarray: 0,
                    cmd: DramCmd::Ref,
                    row: 0,
                });
                stats.record(table, EnergyEvent::DramRefresh);
                for s in 0..self.open.len() {
                    self.open[s] = None;
                    self.act_cycle[s] = NEVER;
                    self.last_col_sub[s] = NEVER;
                    self.act_allowed[s] = cycle + self.timing.t_rfc;
                }
                self.refresh_end = cycle + self.timing.t_rfc;
                self.next_refresh += self.timing.t_refi;
                return;
            }
            // fall through: drain constraints first, commands below help
            // (a column command cannot, so only allow PRE-side progress)
        }

        // FR-FCFS: oldest issueable row hit first
        let hit_pos = self.queue.iter().position(|p| {
            let s = p.req.subarray as usize;
            self.open[s] == Some(p.req.physical_row) && self.col_ok(cycle, s)
        });
        if cycle < self.next_refresh {
            if let Some(pos) = hit_pos {
                let mut p = self.queue.remove(pos).unwrap();
                let s = p.req.subarray as usize;
                if !p.counted {
                    stats.rb_hits += 1;
                    p.counted = true;
                }
                self.issue_col(cycle, s, &p.req, table, stats, trace);
                return;
            }
        }

        // else progress the oldest request
        let Some(front) = self.queue.front().copied() else {
            return;
        };
        let s = front.req.subarray as usize;
        match self.open[s] {
            Some(row) if row == front.req.physical_row => {
                // waiting on column timing (or refresh); nothing to issue
            }
            Some(_) => {
                if self.pre_ok(cycle, s) {
                    if !self.queue[0].counted {
                        stats.rb_misses += 1;
                        self.queue[0].counted = true;
                    }
                    trace.push(CmdRecord {
                        cycle,
                        bank_id: self.id,
                        subarray: s as u32,
                        cmd: DramCmd::Pre,
                        row: 0,
                    });
                    stats.record(table, EnergyEvent::DramPrecharge);
                    self.open[s] = None;
                    self.act_cycle[s] = NEVER;
                    self.last_col_sub[s] = NEVER;
                    self.act_allowed[s] = cycle + self.timing.t_rp;
                }
            }
            None => {
                if cycle >= self.act_allowed[s] && cycle < self.next_refresh {
                    if !self.queue[0].counted {
                        stats.rb_misses += 1;
                        self.queue[0].counted = true;
                    }
                    trace.push(CmdRecord {
                        cycle,
                        bank_id: self.id,
                        subarray: s as u32,
                        cmd: DramCmd::Act,
                        row: front.req.physical_row,
                    });
                    stats.record(table, EnergyEvent::DramActivate);
                    self.open[s] = Some(front.req.physical_row);
                    self.act_cycle[s] = cycle;
                }
            }
        }
    }

    fn issue_col(
        &mut self,
        cycle: u64,
        s: usize,
        req: &BankRequest,
        table: &EnergyTable,
        stats: &mut Stats,
        trace: &mut Vec<CmdRecord>,
    ) {
        let cmd = if req.is_write { DramCmd::Wr } else { DramCmd::Rd };
        trace.push(CmdRecord {
            cycle,
            bank_id: self.id,
            subarray: s as u32,
            cmd,
            row: req.physical_row,
        });
        stats.record(
            table,
            if req.is_write {
                EnergyEvent::DramWrite
            } else {
                EnergyEvent::DramRead
            },
        );
        self.last_col = cycle;
        self.last_col_sub[s] = cycle;
        let ready = if req.is_write {
            cycle + 1
        } else {
            cycle + self.timing.t_cas + 1
        };
        self.returns.push((ready, req.tag));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimConfig;

    fn run_bank(subarrays: u32, reqs: &[(u32, u64)], cycles: u64) -> (Stats, Vec<CmdRecord>) {
        let cfg = SimConfig::desk();
        let mut bank = Bank::new(0, subarrays, cfg.timing);
        let mut stats = Stats::default();
        let mut trace = Vec::new();
        for (i, &(sub, row)) in reqs.iter().enumerate() {
            bank.enqueue(BankRequest {
                subarray: sub,
                physical_row: row,
                col: 0,
                is_write: false,
                tag: i as u64,
                arrival: 0,
            });
        }
        let mut done = Vec::new();
        for c in 0..cycles {
            bank.step(c, &cfg.energy, &mut stats, &mut trace);
            bank.drain_returns(c, &mut done);
        }
        (stats, trace)
    }

    #[test]
    fn fr_fcfs_serves_open_row_hit_first() {
        let cfg = SimConfig::desk();
        let mut bank = Bank::new(0, 1, cfg.timing);
        let mut stats = Stats::default();
        let mut trace = Vec::new();
        // open row B by serving one request first
        bank.enqueue(BankRequest {
            subarray: 0,
            physical_row: 7,
            col: 0,
            is_write: false,
            tag: 0,
            arrival: 0,
        });
        for c in 0..40 {
            bank.step(c, &cfg.energy, &mut stats, &mut trace);
        }
        // queue: [miss rowA, hit rowB(open)]
        bank.enqueue(BankRequest {
            subarray: 0,
            physical_row: 3,
            col: 0,
            is_write: false,
            tag: 1,
            arrival: 40,
        });
        bank.enqueue(BankRequest {
            subarray: 0,
            physical_row: 7,
            col: 1,
            is_write: false,
            tag: 2,
            arrival: 41,
        });
        for c in 40..200 {
            bank.step(c, &cfg.energy, &mut stats, &mut trace);
        }
        let cols: Vec<(DramCmd, u64)> = trace
            .iter()
            .filter(|r| matches!(r.cmd, DramCmd::Rd))
            .map(|r| (r.cmd, r.row))
            .collect();
        // row 7 hit served before the older row 3 miss
        assert_eq!(cols[1].1, 7);
        assert_eq!(cols[2].1, 3);
    }

    #[test]
    fn back_to_back_hits_every_tccd() {
        let (_s, trace) = run_bank(1, &[(0, 1), (0, 1), (0, 1)], 200);
        let rds: Vec<u64> = trace
            .iter()
            .filter(|r| r.cmd == DramCmd::Rd)
            .map(|r| r.cycle)
            .collect();
        assert_eq!(rds.len(), 3);
        assert_eq!(rds[1] - rds[0], 2);
        assert_eq!(rds[2] - rds[1], 2);
    }

    // Dependent ping-pong between two rows: the next request is issued
    // only after the previous one returns, so FR-FCFS cannot reorder.
    fn ping_pong(subarrays: u32) -> Stats {
        let cfg = SimConfig::desk();
        let mut bank = Bank::new(0, subarrays, cfg.timing);
        let mut stats = Stats::default();
        let mut trace = Vec::new();
        let mut done = Vec::new();
        let mut issued = 0u64;
        let mut cycle = 0u64;
        while issued < 100 {
            if !bank.busy() {
                // logical row `issued % 2` under the interleaved mapping
                let row = issued % 2;
                bank.enqueue(BankRequest {
                    subarray: (row % subarrays as u64) as u32,
                    physical_row: row / subarrays as u64,
                    col: 0,
                    is_write: false,
                    tag: issued,
                    arrival: cycle,
                });
                issued += 1;
            }
            bank.step(cycle, &cfg.energy, &mut stats, &mut trace);
            bank.drain_returns(cycle, &mut done);
            cycle += 1;
            assert!(cycle < 200_000, "ping-pong stalled");
        }
        stats
    }

    #[test]
    fn ping_pong_miss_rates_improve_with_subarrays() {
        let s1 = ping_pong(1);
        let s2 = ping_pong(2);
        assert!(s1.miss_rate() >= 0.8, "S=1 miss rate {}", s1.miss_rate());
        assert!(s2.miss_rate() <= 0.2, "S=2 miss rate {}", s2.miss_rate());
    }

    #[test]
    fn idle_bank_refreshes_on_cadence() {
        let cfg = SimConfig::desk();
        let mut bank = Bank::new(0, 1, cfg.timing);
        let mut stats = Stats::default();
        let mut trace = Vec::new();
        let span = cfg.timing.t_refi * 5 + cfg.timing.t_refi / 2;
        for c in 0..span {
            bank.step(c, &cfg.energy, &mut stats, &mut trace);
        }
        let refs = trace.iter().filter(|r| r.cmd == DramCmd::Ref).count();
        assert_eq!(refs as u64, 5);
    }

    #[test]
    fn row_closed_after_refresh() {
        let cfg = SimConfig::desk();
        let mut bank = Bank::new(0, 1, cfg.timing);
        let mut stats = Stats::default();
        let mut trace = Vec::new();
        bank.enqueue(BankRequest {
            subarray: 0,
            physical_row: 5,
            col: 0,
            is_write: false,
            tag: 0,
            arrival: 0,
        });
        // run across one refresh interval, then access the same row again
        for c in 0..cfg.timing.t_refi + cfg.timing.t_rfc + 100 {
            bank.step(c, &cfg.energy, &mut stats, &mut trace);
        }
        let miss_before = stats.rb_misses;
        bank.enqueue(BankRequest {
            subarray: 0,
            physical_row: 5,
            col: 0,
            is_write: false,
            tag: 1,
            arrival: 0,
        });
        let start = cfg.timing.t_refi + cfg.timing.t_rfc + 100;
        for c in start..start + 200 {
            bank.step(c, &cfg.energy, &mut stats, &mut trace);
        }
        assert_eq!(stats.rb_misses, miss_before + 1);
    }
}
