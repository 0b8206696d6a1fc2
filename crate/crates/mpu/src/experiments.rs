//! Experiment drivers: run a workload on the cycle model, verify its
//! memory image against the reference interpreter, and sweep offload
//! policy, row-buffer count, and scratchpad placement.

use crate::compiler::{compile_kernel, BackendError};
use crate::compiler::regalloc::AllocatedKernel;
use crate::config::{OffloadPolicy, SimConfig, SmemLocation};
use crate::energy::Stats;
use crate::interp;
use crate::mem::bank::CmdRecord;
use crate::mem::image::MemImage;
use crate::sim::machine::{run_kernel_sim, SimError};
use crate::workloads::Workload;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExpError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("interpreter: {0}")]
    Interp(#[from] interp::InterpError),
    #[error("{0}")]
    Mismatch(String),
}

pub struct SimRun {
    pub stats: Stats,
    pub mem: MemImage,
    pub cmd_trace: Vec<CmdRecord>,
    pub trace: Vec<String>,
}

pub fn compile_launches(wl: &Workload, cfg: &SimConfig) -> Result<Vec<AllocatedKernel>, BackendError> {
    wl.launches
        .iter()
        .map(|k| {
            let warps_sharing = (k.warps_per_block() as u64).div_ceil(cfg.subcores_per_core as u64);
            compile_kernel(k, cfg.far_rf_bytes, cfg.near_rf_bytes, warps_sharing.max(1))
        })
        .collect()
}

/// Runs every launch of a workload on the cycle model, accumulating
/// stats and the DRAM command trace across launches.
pub fn run_workload_sim(wl: &Workload, cfg: &SimConfig) -> Result<SimRun, ExpError> {
    let compiled = compile_launches(wl, cfg)?;
    let mut mem = wl.image.clone();
    let mut stats = Stats::default();
    let mut cmd_trace = Vec::new();
    let mut trace = Vec::new();
    for alloc in &compiled {
        let out = run_kernel_sim(alloc, cfg, &mut mem)?;
        merge_stats(&mut stats, &out.stats);
        cmd_trace.extend(out.cmd_trace);
        trace.extend(out.trace);
    }
    Ok(SimRun { stats, mem, cmd_trace, trace })
}

/// Runs the reference interpreter over all launches.
pub fn run_workload_interp(wl: &Workload) -> Result<MemImage, ExpError> {
    let mut mem = wl.image.clone();
    for k in &wl.launches {
        interp::run_kernel(k, &mut mem)?;
    }
    Ok(mem)
}

/// Simulates and checks the final image against both the interpreter
/// and the workload's precomputed expected words.
pub fn run_verified(wl: &Workload, cfg: &SimConfig) -> Result<SimRun, ExpError> {
    let run = run_workload_sim(wl, cfg)?;
    let oracle = run_workload_interp(wl)?;
    let diff = run.mem.diff(&oracle);
    if !diff.is_empty() {
        return Err(ExpError::Mismatch(format!(
            "{}: {} bytes differ from the interpreter (first at {:#x})",
            wl.name,
            diff.len(),
            diff[0]
        )));
    }
    for (addr, want) in &wl.checks {
        let got = run.mem.read_u32(*addr);
        if got != *want {
            return Err(ExpError::Mismatch(format!(
                "{}: word at {addr:#x} is {got:#x}, expected {want:#x}",
                wl.name
            )));
        }
    }
    Ok(run)
}

pub fn merge_stats(a: &mut Stats, b: &Stats) {
    a.cycles += b.cycles;
    for i in 0..4 {
        a.tsv_bits[i] += b.tsv_bits[i];
    }
    a.noc_bits_enqueued += b.noc_bits_enqueued;
    a.noc_bits_delivered += b.noc_bits_delivered;
    a.offchip_bits += b.offchip_bits;
    a.rb_hits += b.rb_hits;
    a.rb_misses += b.rb_misses;
    a.dram_reads += b.dram_reads;
    a.dram_writes += b.dram_writes;
    a.refreshes += b.refreshes;
    for i in 0..6 {
        a.energy_pj[i] += b.energy_pj[i];
    }
    a.instr_near += b.instr_near;
    a.instr_far += b.instr_far;
    a.register_moves += b.register_moves;
    a.offloaded_ldst += b.offloaded_ldst;
    a.lanes_requested += b.lanes_requested;
    a.lanes_serviced_offload += b.lanes_serviced_offload;
    a.lanes_serviced_local += b.lanes_serviced_local;
    a.lanes_serviced_remote += b.lanes_serviced_remote;
}

pub const POLICIES: [OffloadPolicy; 5] = [
    OffloadPolicy::Annotated,
    OffloadPolicy::HwDefault,
    OffloadPolicy::AllNear,
    OffloadPolicy::AllFar,
    OffloadPolicy::Ponb,
];

pub struct SweepRow {
    pub workload: String,
    pub leg: String,
    pub stats: Stats,
}

pub fn policy_sweep(wl: &Workload, base: &SimConfig) -> Result<Vec<SweepRow>, ExpError> {
    let mut rows = Vec::new();
    for p in POLICIES {
        let mut cfg = base.clone();
        cfg.offload_policy = p;
        if p == OffloadPolicy::Ponb {
            // processing on the base die: no offload hardware, and the
            // scratchpad sits beside the subcores rather than in the stack
            cfg.ldst_offload_enabled = false;
            cfg.smem_location = SmemLocation::FarBank;
        }
        let run = run_verified(wl, &cfg)?;
        rows.push(SweepRow {
            workload: wl.name.to_string(),
            leg: p.name().to_string(),
            stats: run.stats,
        });
    }
    Ok(rows)
}

pub fn rowbuf_sweep(wl: &Workload, base: &SimConfig) -> Result<Vec<SweepRow>, ExpError> {
    let mut rows = Vec::new();
    for s in [1u32, 2, 4] {
        let mut cfg = base.clone();
        cfg.row_buffers = s;
        let run = run_verified(wl, &cfg)?;
        rows.push(SweepRow {
            workload: wl.name.to_string(),
            leg: format!("rowbuf{s}"),
            stats: run.stats,
        });
    }
    Ok(rows)
}

pub fn smem_sweep(wl: &Workload, base: &SimConfig) -> Result<Vec<SweepRow>, ExpError> {
    let mut rows = Vec::new();
    for (name, loc) in [("smem-near", SmemLocation::NearBank), ("smem-far", SmemLocation::FarBank)] {
        let mut cfg = base.clone();
        cfg.smem_location = loc;
        let run = run_verified(wl, &cfg)?;
        rows.push(SweepRow {
            workload: wl.name.to_string(),
            leg: name.to_string(),
            stats: run.stats,
        });
    }
    Ok(rows)
}

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(
        "workload,leg,cycles,instr_near,instr_far,register_moves,offloaded_ldst,\
         tsv_bytes,rb_miss_rate,dram_reads,dram_writes,energy_total_pj\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{:.4},{},{},{:.1}",
            r.workload,
            r.leg,
            r.stats.cycles,
            r.stats.instr_near,
            r.stats.instr_far,
            r.stats.register_moves,
            r.stats.offloaded_ldst,
            r.stats.tsv_bytes_total(),
            r.stats.miss_rate(),
            r.stats.dram_reads,
            r.stats.dram_writes,
            r.stats.energy_total_pj(),
        );
    }
    s
}
