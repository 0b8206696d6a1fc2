//! Offline legality checker for DRAM command traces. Replays the trace
//! with an independent model of the timing constraints and reports every
//! violation; it shares no state with the bank scheduler, so a bug there
//! cannot hide here.

use crate::config::DramTiming;
use crate::mem::bank::{CmdRecord, DramCmd};
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub record: CmdRecord,
    pub rule: String,
}

#[derive(Debug, Clone, Copy, Default)]
struct SubState {
    open: Option<u64>,
    act_at: Option<u64>,
    last_col: Option<u64>,
    pre_done: u64,
}

#[derive(Debug, Clone, Default)]
struct BankState {
    subs: BTreeMap<u32, SubState>,
    last_col: Option<u64>,
    ref_end: u64,
    last_ref: Option<u64>,
}

/// Checks one trace (possibly spanning many banks). Records must be in
/// nondecreasing cycle order per bank.
pub fn check_trace(trace: &[CmdRecord], t: &DramTiming) -> Vec<Violation> {
    let mut banks: BTreeMap<u32, BankState> = BTreeMap::new();
    let mut out = Vec::new();
    let mut last_cycle: BTreeMap<u32, u64> = BTreeMap::new();
    for r in trace {
        let bank = banks.entry(r.bank_id).or_default();
        let mut fail = |rule: String| {
            out.push(Violation { record: *r, rule });
        };
        if let Some(&prev) = last_cycle.get(&r.bank_id) {
            if r.cycle < prev {
                fail(format!("out-of-order trace: cycle {} after {}", r.cycle, prev));
            }
        }
        last_cycle.insert(r.bank_id, r.cycle);
        if r.cycle < bank.ref_end && r.cmd != DramCmd::Ref {
            fail(format!("command during refresh (busy until {})", bank.ref_end));
        }
        match r.cmd {
            DramCmd::Act => {
                let s = bank.subs.entry(r.subarray).or_default();
                if s.open.is_some() {
                    fail("ACT on subarray with open row".into());
                }
                if r.cycle < s.pre_done {
                    fail(format!("ACT before tRP elapsed (ready {})", s.pre_done));
                }
                s.open = Some(r.row);
                s.act_at = Some(r.cycle);
                s.last_col = None;
            }
            DramCmd::Rd | DramCmd::Wr => {
                if let Some(lc) = bank.last_col {
                    if r.cycle < lc + t.t_ccd {
                        fail(format!("column command violates tCCD (last {})", lc));
                    }
                }
                let s = bank.subs.entry(r.subarray).or_default();
                match (s.open, s.act_at) {
                    (Some(row), Some(act)) => {
                        if row != r.row {
                            fail(format!("{} to row {} but row {} open", r.cmd.name(), r.row, row));
                        }
                        if r.cycle < act + t.t_rcd {
                            fail(format!("column command violates tRCD (ACT {})", act));
                        }
                    }
                    _ => fail(format!("{} with no open row", r.cmd.name())),
                }
                s.last_col = Some(r.cycle);
                bank.last_col = Some(r.cycle);
            }
            DramCmd::Pre => {
                let s = bank.subs.entry(r.subarray).or_default();
                match s.act_at {
                    Some(act) if s.open.is_some() => {
                        if r.cycle < act + t.t_ras {
                            fail(format!("PRE violates tRAS (ACT {})", act));
                        }
                    }
                    _ => fail("PRE on closed subarray".into()),
                }
                if let Some(lc) = s.last_col {
                    if r.cycle < lc + t.t_rtp {
                        fail(format!("PRE violates tRTP (last column {})", lc));
                    }
                }
                s.open = None;
                s.act_at = None;
                s.last_col = None;
                s.pre_done = r.cycle + t.t_rp;
            }
            DramCmd::Ref => {
                for (sub, s) in bank.subs.iter() {
                    if let Some(act) = s.act_at {
                        if s.open.is_some() && r.cycle < act + t.t_ras {
                            fail(format!("REF closes subarray {sub} before tRAS (ACT {act})"));
                        }
                        if let Some(lc) = s.last_col {
                            if r.cycle < lc + t.t_rtp {
                                fail(format!("REF closes subarray {sub} before tRTP"));
                            }
                        }
                    }
                }
                if let Some(prev) = bank.last_ref {
                    let gap = r.cycle - prev;
                    if gap > t.t_refi + 100 {
                        fail(format!("refresh interval {gap} exceeds tREFI"));
                    }
                }
                bank.last_ref = Some(r.cycle);
                bank.ref_end = r.cycle + t.t_rfc;
                for s in bank.subs.values_mut() {
                    s.open = None;
                    s.act_at = None;
                    s.last_col = None;
                    s.pre_done = bank.ref_end;
                }
            }
        }
    }
    // a long trace with no refresh at all is also a violation
    for (id, bank) in &banks {
        let end = last_cycle.get(id).copied().unwrap_or(0);
        let first_needed = t.t_refi * 2;
        if end > first_needed && bank.last_ref.is_none() {
            out.push(Violation {
                record: CmdRecord {
                    cycle: end,
                    bank_id: *id,
                    subarray: 0,
                    cmd: DramCmd::Ref,
                    row: 0,
                },
                rule: format!("no refresh issued in {end} cycles"),
            });
        }
    }
    out
}

pub fn trace_to_csv(trace: &[CmdRecord]) -> String {
    let mut s = String::from("cycle,bank,subarray,cmd,row\n");
    for r in trace {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.cycle,
            r.bank_id,
            r.subarray,
            r.cmd.name(),
            r.row
        );
    }
    s
}

pub fn trace_from_csv(text: &str) -> Result<Vec<CmdRecord>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(format!("line {}: expected 5 fields", i + 1));
        }
        let cmd = match f[3] {
            "ACT" => DramCmd::Act,
            "RD" => DramCmd::Rd,
            "WR" => DramCmd::Wr,
            "PRE" => DramCmd::Pre,
            "REF" => DramCmd::Ref,
            other => return Err(format!("line {}: unknown command {other}", i + 1)),
        };
        let num = |s: &str| s.parse::<u64>().map_err(|e| format!("line {}: {e}", i + 1));
        out.push(CmdRecord {
            cycle: num(f[0])?,
            bank_id: num(f[1])? as u32,
            subarray: num(f[2])? as u32,
            cmd,
            row: num(f[4])?,
        });
    }
    Ok(out)
}
