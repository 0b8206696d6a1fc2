//! Event-driven energy accounting and run metrics. The model is
//! closed-world: every event type maps to a category, and an ALU opcode
//! missing from the energy table is a configuration fault at startup.

use crate::config::{EnergyTable, SimConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnergyCategory {
    Alu,
    RfOpc,
    Dram,
    Tsv,
    Network,
    Other,
}

impl EnergyCategory {
    pub const ALL: [EnergyCategory; 6] = [
        EnergyCategory::Alu,
        EnergyCategory::RfOpc,
        EnergyCategory::Dram,
        EnergyCategory::Tsv,
        EnergyCategory::Network,
        EnergyCategory::Other,
    ];
    pub fn name(self) -> &'static str {
        match self {
            EnergyCategory::Alu => "alu",
            EnergyCategory::RfOpc => "rf_opc",
            EnergyCategory::Dram => "dram",
            EnergyCategory::Tsv => "tsv",
            EnergyCategory::Network => "network",
            EnergyCategory::Other => "other",
        }
    }
}

/// TSV arbitration / accounting classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TsvClass {
    InstrOffload,
    RegisterMove,
    DramTransaction,
    SmemFarBank,
}

impl TsvClass {
    pub const ALL: [TsvClass; 4] = [
        TsvClass::InstrOffload,
        TsvClass::RegisterMove,
        TsvClass::DramTransaction,
        TsvClass::SmemFarBank,
    ];
    pub fn index(self) -> usize {
        match self {
            TsvClass::InstrOffload => 0,
            TsvClass::RegisterMove => 1,
            TsvClass::DramTransaction => 2,
            TsvClass::SmemFarBank => 3,
        }
    }
    pub fn name(self) -> &'static str {
        match self {
            TsvClass::InstrOffload => "instr_offload",
            TsvClass::RegisterMove => "register_move",
            TsvClass::DramTransaction => "dram_transaction",
            TsvClass::SmemFarBank => "smem_farbank",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnergyEvent<'a> {
    DramRead,
    DramWrite,
    DramActivate,
    DramPrecharge,
    DramRefresh,
    RfAccess,
    SmemAccess,
    OperandCollector,
    LsuExtension,
    TsvBits(u64),
    OnchipBits(u64),
    OffchipBits(u64),
    Alu { opcode: &'a str, lanes: u32 },
}

/// Validates the closed-world assumption for the ALU table.
pub fn validate_energy_table(t: &EnergyTable) -> Result<(), String> {
    for op in [
        "add", "sub", "mul", "mad", "div", "min", "max", "mov", "cvt", "setp",
    ] {
        if !t.alu_pj.contains_key(op) {
            return Err(format!("energy table missing ALU opcode `{op}`"));
        }
    }
    if t.alu_pj.values().any(|v| *v < 0.0) {
        return Err("negative ALU energy".into());
    }
    Ok(())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Stats {
    pub cycles: u64,
    /// bits moved over the TSVs, per class
    pub tsv_bits: [u64; 4],
    pub noc_bits_enqueued: u64,
    pub noc_bits_delivered: u64,
    pub offchip_bits: u64,
    pub rb_hits: u64,
    pub rb_misses: u64,
    pub dram_reads: u64,
    pub dram_writes: u64,
    pub refreshes: u64,
    /// energy in picojoules, by category index (EnergyCategory::ALL order)
    pub energy_pj: [f64; 6],
    pub instr_near: u64,
    pub instr_far: u64,
    pub register_moves: u64,
    pub offloaded_ldst: u64,
    /// lane accounting for the conservation invariant
    pub lanes_requested: u64,
    pub lanes_serviced_offload: u64,
    pub lanes_serviced_local: u64,
    pub lanes_serviced_remote: u64,
}

impl Stats {
    pub fn tsv_bytes_total(&self) -> u64 {
        self.tsv_bits.iter().sum::<u64>() / 8
    }

    pub fn energy_total_pj(&self) -> f64 {
        self.energy_pj.iter().sum()
    }

    pub fn record(&mut self, table: &EnergyTable, ev: EnergyEvent<'_>) {
        use EnergyCategory as C;
        let (cat, pj) = match ev {
            EnergyEvent::DramRead => {
                self.dram_reads += 1;
                (C::Dram, table.dram_rd_wr_nj * 1000.0)
            }
            EnergyEvent::DramWrite => {
                self.dram_writes += 1;
                (C::Dram, table.dram_rd_wr_nj * 1000.0)
            }
            EnergyEvent::DramActivate | EnergyEvent::DramPrecharge => {
                (C::Dram, table.dram_pre_act_nj * 1000.0)
            }
            EnergyEvent::DramRefresh => {
                self.refreshes += 1;
                (C::Dram, table.dram_ref_nj * 1000.0)
            }
            EnergyEvent::RfAccess => (C::RfOpc, table.rf_access_pj),
            EnergyEvent::OperandCollector => (C::RfOpc, table.operand_collector_pj),
            EnergyEvent::SmemAccess => (C::Other, table.smem_access_pj),
            EnergyEvent::LsuExtension => (C::Other, table.lsu_extension_pj),
            EnergyEvent::TsvBits(bits) => (C::Tsv, table.tsv_pj_per_bit * bits as f64),
            EnergyEvent::OnchipBits(bits) => (C::Network, table.onchip_pj_per_bit * bits as f64),
            EnergyEvent::OffchipBits(bits) => {
                self.offchip_bits += bits;
                (C::Network, table.offchip_pj_per_bit * bits as f64)
            }
            EnergyEvent::Alu { opcode, lanes } => {
                let per = table
                    .alu_pj
                    .get(opcode)
                    .unwrap_or_else(|| panic!("unknown ALU opcode `{opcode}` in energy model"));
                (C::Alu, per * lanes as f64)
            }
        };
        let idx = C::ALL.iter().position(|c| *c == cat).unwrap();
        self.energy_pj[idx] += pj;
    }

    pub fn miss_rate(&self) -> f64 {
        let total = self.rb_hits + self.rb_misses;
        if total == 0 {
            0.0
        } else {
            self.rb_misses as f64 / total as f64
        }
    }
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub kernel: String,
    pub config_hash: String,
    pub policy: String,
    pub cycles: u64,
    pub tsv_bytes_by_class: [u64; 4],
    pub tsv_bytes_total: u64,
    pub rb_hits: u64,
    pub rb_misses: u64,
    pub rb_miss_rate: f64,
    pub energy_pj_by_category: [f64; 6],
    pub energy_pj_total: f64,
    pub instr_near: u64,
    pub instr_far: u64,
    pub register_moves: u64,
    pub offloaded_ldst: u64,
    pub lanes_requested: u64,
    pub lanes_serviced: u64,
    pub noc_bits_enqueued: u64,
    pub noc_bits_delivered: u64,
}

impl RunReport {
    pub fn from_stats(kernel: &str, cfg: &SimConfig, stats: &Stats) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            kernel: kernel.to_string(),
            config_hash: cfg.config_hash(),
            policy: cfg.offload_policy.name().to_string(),
            cycles: stats.cycles,
            tsv_bytes_by_class: [
                stats.tsv_bits[0] / 8,
                stats.tsv_bits[1] / 8,
                stats.tsv_bits[2] / 8,
                stats.tsv_bits[3] / 8,
            ],
            tsv_bytes_total: stats.tsv_bytes_total(),
            rb_hits: stats.rb_hits,
            rb_misses: stats.rb_misses,
            rb_miss_rate: stats.miss_rate(),
            energy_pj_by_category: stats.energy_pj,
            energy_pj_total: stats.energy_total_pj(),
            instr_near: stats.instr_near,
            instr_far: stats.instr_far,
            register_moves: stats.register_moves,
            offloaded_ldst: stats.offloaded_ldst,
            lanes_requested: stats.lanes_requested,
            lanes_serviced: stats.lanes_serviced_offload
                + stats.lanes_serviced_local
                + stats.lanes_serviced_remote,
            noc_bits_enqueued: stats.noc_bits_enqueued,
            noc_bits_delivered: stats.noc_bits_delivered,
        }
    }

    pub fn csv_header() -> String {
        "schema,kernel,config_hash,policy,cycles,tsv_instr_offload,tsv_register_move,\
         tsv_dram_transaction,tsv_smem_farbank,tsv_total,rb_hits,rb_misses,rb_miss_rate,\
         e_alu,e_rf_opc,e_dram,e_tsv,e_network,e_other,e_total,instr_near,instr_far,\
         register_moves,offloaded_ldst"
            .to_string()
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{:.6},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{},{},{},{}",
            self.schema_version,
            self.kernel,
            self.config_hash,
            self.policy,
            self.cycles,
            self.tsv_bytes_by_class[0],
            self.tsv_bytes_by_class[1],
            self.tsv_bytes_by_class[2],
            self.tsv_bytes_by_class[3],
            self.tsv_bytes_total,
            self.rb_hits,
            self.rb_misses,
            self.rb_miss_rate,
            self.energy_pj_by_category[0],
            self.energy_pj_by_category[1],
            self.energy_pj_by_category[2],
            self.energy_pj_by_category[3],
            self.energy_pj_by_category[4],
            self.energy_pj_by_category[5],
            self.energy_pj_total,
            self.instr_near,
            self.instr_far,
            self.register_moves,
            self.offloaded_ldst,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
