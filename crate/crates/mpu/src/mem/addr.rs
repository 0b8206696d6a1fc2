//! Physical address mapping.
//!
//! Bit layout, low to high:
//!
//! ```text
//! | byte-in-column | col_lo | nbu | core | bank | col_hi | row_logical | proc |
//! ```
//!
//! The column field is split around the NBU and core fields so that a
//! warp's contiguous 128-byte access stays inside one NBU (and rotates
//! NBUs every 128 bytes, matching the warp-to-subcore assignment), while
//! thread blocks stripe across cores at 512-byte granularity. With S
//! subarray row buffers, consecutive logical rows land on interleaved
//! subarrays: `subarray = row mod S`, `physical_row = row / S`.

use crate::config::SimConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedAddr {
    pub proc: u32,
    pub core: u32,
    pub nbu: u32,
    pub bank: u32,
    pub subarray: u32,
    pub physical_row: u64,
    pub logical_row: u64,
    pub col: u64,
    pub byte: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AddressMapping {
    byte_bits: u32,
    col_lo_bits: u32,
    nbu_bits: u32,
    core_bits: u32,
    bank_bits: u32,
    col_hi_bits: u32,
    row_bits: u32,
    proc_bits: u32,
    subarrays: u32,
    capacity: u64,
}

fn log2_exact(v: u64, what: &str) -> u32 {
    assert!(v.is_power_of_two(), "{what} ({v}) must be a power of two");
    v.trailing_zeros()
}

impl AddressMapping {
    pub fn new(cfg: &SimConfig) -> Self {
        let io_bytes = cfg.bank_io_bits / 8;
        let byte_bits = log2_exact(io_bytes, "bank IO bytes");
        let cols = cfg.row_bytes / io_bytes;
        let col_bits = log2_exact(cols, "columns per row");
        let col_lo_bits = 2.min(col_bits);
        Self {
            byte_bits,
            col_lo_bits,
            nbu_bits: log2_exact(cfg.nbus_per_core as u64, "nbus"),
            core_bits: log2_exact(cfg.cores_per_proc as u64, "cores"),
            bank_bits: log2_exact(cfg.banks_per_nbu as u64, "banks"),
            col_hi_bits: col_bits - col_lo_bits,
            row_bits: log2_exact(cfg.rows_per_bank(), "rows per bank"),
            proc_bits: log2_exact(cfg.procs as u64, "procs"),
            subarrays: cfg.row_buffers,
            capacity: cfg.dram_capacity(),
        }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    /// Bytes per core stripe (the granularity at which consecutive
    /// addresses rotate over cores).
    pub fn core_stripe_bytes(&self) -> u64 {
        1 << (self.byte_bits + self.col_lo_bits + self.nbu_bits)
    }

    /// Bytes per NBU stripe.
    pub fn nbu_stripe_bytes(&self) -> u64 {
        1 << (self.byte_bits + self.col_lo_bits)
    }

    pub fn decode(&self, addr: u64) -> Result<DecodedAddr, AddrFault> {
        if addr >= self.capacity {
            return Err(AddrFault { addr, capacity: self.capacity });
        }
        let mut a = addr;
        let mut take = |bits: u32| {
            let v = a & ((1u64 << bits) - 1);
            a >>= bits;
            v
        };
        let byte = take(self.byte_bits);
        let col_lo = take(self.col_lo_bits);
        let nbu = take(self.nbu_bits) as u32;
        let core = take(self.core_bits) as u32;
        let bank = take(self.bank_bits) as u32;
        let col_hi = take(self.col_hi_bits);
        let logical_row = take(self.row_bits);
        let proc = take(self.proc_bits) as u32;
        let s = self.subarrays as u64;
        Ok(DecodedAddr {
            proc,
            core,
            nbu,
            bank,
            subarray: (logical_row % s) as u32,
            physical_row: logical_row / s,
            logical_row,
            col: (col_hi << self.col_lo_bits) | col_lo,
            byte,
        })
    }

    pub fn encode(&self, d: &DecodedAddr) -> u64 {
        let col_lo = d.col & ((1 << self.col_lo_bits) - 1);
        let col_hi = d.col >> self.col_lo_bits;
        let mut a = 0u64;
        let mut shift = 0u32;
        let mut put = |v: u64, bits: u32| {
            a |= v << shift;
            shift += bits;
        };
        put(d.byte, self.byte_bits);
        put(col_lo, self.col_lo_bits);
        put(d.nbu as u64, self.nbu_bits);
        put(d.core as u64, self.core_bits);
        put(d.bank as u64, self.bank_bits);
        put(col_hi, self.col_hi_bits);
        put(d.logical_row, self.row_bits);
        put(d.proc as u64, self.proc_bits);
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("address {addr:#x} beyond configured DRAM capacity {capacity:#x}")]
pub struct AddrFault {
    pub addr: u64,
    pub capacity: u64,
}
