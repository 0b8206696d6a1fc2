//! Simulator configuration. Defaults mirror the published hardware
//! configuration table; any field can be overridden from a flat
//! `key = value` text file with dotted keys, and every override is
//! reflected in the report's config hash.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OffloadPolicy {
    /// compiler hints decide (after the hardware far-op rule)
    Annotated,
    /// hints stripped; track-table default decides
    HwDefault,
    /// force near-bank for everything outside the far-bank op set
    AllNear,
    /// force far-bank for everything
    AllFar,
    /// far-bank execution with all DRAM data routed over the TSVs
    /// (processing-on-base-logic-die baseline)
    Ponb,
}

impl OffloadPolicy {
    pub fn name(self) -> &'static str {
        match self {
            OffloadPolicy::Annotated => "annotated",
            OffloadPolicy::HwDefault => "hw-default",
            OffloadPolicy::AllNear => "all-near",
            OffloadPolicy::AllFar => "all-far",
            OffloadPolicy::Ponb => "ponb",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "annotated" => Some(Self::Annotated),
            "hw-default" => Some(Self::HwDefault),
            "all-near" => Some(Self::AllNear),
            "all-far" => Some(Self::AllFar),
            "ponb" => Some(Self::Ponb),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SmemLocation {
    NearBank,
    FarBank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchedulerPolicy {
    LooseRoundRobin,
    GreedyThenOldest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DramTiming {
    pub t_rcd: u64,
    pub t_ccd: u64,
    pub t_rtp: u64,
    pub t_rp: u64,
    pub t_ras: u64,
    pub t_rfc: u64,
    pub t_refi: u64,
    /// column command to data (not in the published table; documented
    /// companion of tRCD)
    pub t_cas: u64,
}

impl Default for DramTiming {
    fn default() -> Self {
        Self {
            t_rcd: 14,
            t_ccd: 2,
            t_rtp: 4,
            t_rp: 14,
            t_ras: 33,
            t_rfc: 350,
            t_refi: 3900,
            t_cas: 14,
        }
    }
}

/// Per-event energy costs. DRAM/RF/SMEM values are per access, buses per
/// bit. ALU costs are per lane-operation estimates seeded from published
/// instruction measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyTable {
    pub dram_rd_wr_nj: f64,
    pub dram_pre_act_nj: f64,
    pub dram_ref_nj: f64,
    pub rf_access_pj: f64,
    pub smem_access_pj: f64,
    pub operand_collector_pj: f64,
    pub lsu_extension_pj: f64,
    pub tsv_pj_per_bit: f64,
    pub onchip_pj_per_bit: f64,
    pub offchip_pj_per_bit: f64,
    /// per-lane ALU op energies (pJ), keyed by opcode name
    pub alu_pj: std::collections::BTreeMap<String, f64>,
}

impl Default for EnergyTable {
    fn default() -> Self {
        let mut alu = std::collections::BTreeMap::new();
        // estimates, not published ground truth
        for (op, pj) in [
            ("add", 0.8),
            ("sub", 0.8),
            ("mul", 1.6),
            ("mad", 2.2),
            ("div", 6.0),
            ("min", 0.8),
            ("max", 0.8),
            ("mov", 0.4),
            ("cvt", 0.6),
            ("setp", 0.8),
        ] {
            alu.insert(op.to_string(), pj);
        }
        Self {
            dram_rd_wr_nj: 0.15,
            dram_pre_act_nj: 0.27,
            dram_ref_nj: 1.13,
            rf_access_pj: 40.0,
            smem_access_pj: 22.2,
            operand_collector_pj: 41.49,
            lsu_extension_pj: 39.67,
            tsv_pj_per_bit: 4.53,
            onchip_pj_per_bit: 0.72,
            offchip_pj_per_bit: 4.50,
            alu_pj: alu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    // topology
    pub procs: u32,
    pub cores_per_proc: u32,
    pub subcores_per_core: u32,
    pub nbus_per_core: u32,
    pub banks_per_nbu: u32,
    /// independently activatable subarray row buffers per bank (1, 2 or 4)
    pub row_buffers: u32,

    // sizes (bytes)
    pub bank_bytes: u64,
    pub icache_bytes: u64,
    pub far_rf_bytes: u64,
    pub near_rf_bytes: u64,
    pub smem_bytes: u64,
    pub row_bytes: u64,

    // widths (bits)
    pub bank_io_bits: u64,
    pub tsv_data_bits_per_core: u64,
    pub onchip_link_bits: u64,
    pub offchip_link_bits: u64,

    // frequency ratios relative to the 1 GHz core clock
    pub tsv_cycles_per_core_cycle: u64,
    pub noc_bits_per_core_cycle: u64,
    pub offchip_bits_per_core_cycle: u64,
    pub noc_hop_cycles: u64,
    pub offchip_latency_cycles: u64,

    // pipeline latencies (core cycles)
    pub alu_latency: u64,
    pub div_latency: u64,
    pub issue_latency: u64,
    pub smem_cycle: u64,
    pub smem_banks: u32,

    pub timing: DramTiming,
    pub energy: EnergyTable,

    // policy switches
    pub offload_policy: OffloadPolicy,
    pub smem_location: SmemLocation,
    pub scheduler: SchedulerPolicy,
    /// hardware LSU near-bank ld/st fast path
    pub ldst_offload_enabled: bool,

    /// simulation cycle budget before a deadlock is declared
    pub max_cycles: u64,
    /// emit per-event debug trace lines
    pub trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            procs: 8,
            cores_per_proc: 16,
            subcores_per_core: 4,
            nbus_per_core: 4,
            banks_per_nbu: 4,
            row_buffers: 4,
            bank_bytes: 16 << 20,
            icache_bytes: 128 << 10,
            far_rf_bytes: 32 << 10,
            near_rf_bytes: 16 << 10,
            smem_bytes: 64 << 10,
            row_bytes: 2048,
            bank_io_bits: 256,
            tsv_data_bits_per_core: 64,
            onchip_link_bits: 256,
            offchip_link_bits: 128,
            tsv_cycles_per_core_cycle: 2,
            noc_bits_per_core_cycle: 512,
            offchip_bits_per_core_cycle: 256,
            noc_hop_cycles: 2,
            offchip_latency_cycles: 32,
            alu_latency: 4,
            div_latency: 16,
            issue_latency: 1,
            smem_cycle: 1,
            smem_banks: 32,
            timing: DramTiming::default(),
            energy: EnergyTable::default(),
            offload_policy: OffloadPolicy::Annotated,
            smem_location: SmemLocation::NearBank,
            scheduler: SchedulerPolicy::LooseRoundRobin,
            ldst_offload_enabled: true,
            max_cycles: 50_000_000,
            trace: false,
        }
    }
}

impl SimConfig {
    /// A reduced topology that keeps every data path exercised while
    /// completing full sweeps in seconds.
    pub fn desk() -> Self {
        Self {
            procs: 1,
            cores_per_proc: 4,
            ..Self::default()
        }
    }

    pub fn total_cores(&self) -> u32 {
        self.procs * self.cores_per_proc
    }

    /// Mesh side length; core count per processor must be a square.
    pub fn mesh_dim(&self) -> u32 {
        let d = (self.cores_per_proc as f64).sqrt() as u32;
        assert_eq!(d * d, self.cores_per_proc, "cores_per_proc must be square");
        d
    }

    pub fn dram_capacity(&self) -> u64 {
        self.bank_bytes
            * self.banks_per_nbu as u64
            * self.nbus_per_core as u64
            * self.cores_per_proc as u64
            * self.procs as u64
    }

    pub fn rows_per_bank(&self) -> u64 {
        self.bank_bytes / self.row_bytes
    }

    /// Stable hash over every configuration field.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        let d = h.finalize();
        d.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Apply `key = value` overrides (dotted keys, `#` comments).
    pub fn apply_kv(&mut self, text: &str) -> Result<(), String> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, val) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", lineno + 1))?;
            self.set_key(key.trim(), val.trim())
                .map_err(|e| format!("line {}: {e}", lineno + 1))?;
        }
        Ok(())
    }

    pub fn set_key(&mut self, key: &str, val: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("bad numeric value `{v}`"))
        }
        match key {
            "topology.procs" => self.procs = num(val)?,
            "topology.cores" => self.cores_per_proc = num(val)?,
            "topology.subcores" => self.subcores_per_core = num(val)?,
            "topology.nbus" => self.nbus_per_core = num(val)?,
            "topology.banks" => self.banks_per_nbu = num(val)?,
            "topology.row_buffers" => self.row_buffers = num(val)?,
            "size.bank" => self.bank_bytes = num(val)?,
            "size.far_rf" => self.far_rf_bytes = num(val)?,
            "size.near_rf" => self.near_rf_bytes = num(val)?,
            "size.smem" => self.smem_bytes = num(val)?,
            "size.row" => self.row_bytes = num(val)?,
            "timing.t_rcd" => self.timing.t_rcd = num(val)?,
            "timing.t_ccd" => self.timing.t_ccd = num(val)?,
            "timing.t_rtp" => self.timing.t_rtp = num(val)?,
            "timing.t_rp" => self.timing.t_rp = num(val)?,
            "timing.t_ras" => self.timing.t_ras = num(val)?,
            "timing.t_rfc" => self.timing.t_rfc = num(val)?,
            "timing.t_refi" => self.timing.t_refi = num(val)?,
            "timing.t_cas" => self.timing.t_cas = num(val)?,
            "policy.offload" => {
                self.offload_policy = OffloadPolicy::parse(val)
                    .ok_or_else(|| format!("unknown offload policy `{val}`"))?
            }
            "policy.smem" => {
                self.smem_location = match val {
                    "near" => SmemLocation::NearBank,
                    "far" => SmemLocation::FarBank,
                    _ => return Err(format!("unknown smem location `{val}`")),
                }
            }
            "policy.scheduler" => {
                self.scheduler = match val {
                    "round-robin" => SchedulerPolicy::LooseRoundRobin,
                    "greedy-oldest" => SchedulerPolicy::GreedyThenOldest,
                    _ => return Err(format!("unknown scheduler `{val}`")),
                }
            }
            "policy.ldst_offload" => {
                self.ldst_offload_enabled = val
                    .parse()
                    .map_err(|_| format!("bad boolean `{val}`"))?
            }
            "sim.max_cycles" => self.max_cycles = num(val)?,
            "sim.trace" => self.trace = val.parse().map_err(|_| format!("bad boolean `{val}`"))?,
            _ => return Err(format!("unknown config key `{key}`")),
        }
        Ok(())
    }
}
