//! Load/store unit helpers: lane-address coalescing into bank
//! transactions, the perfectly-coalesced test, and eligibility for the
//! offloaded fast path (where only a compact header descends the TSVs
//! and the near-bank extension unit expands it into bank commands).

use crate::isa::SIMT_WIDTH;
use crate::mem::addr::{AddrFault, AddressMapping};
use std::collections::BTreeMap;

pub const OFFLOAD_HEADER_BITS: u64 = 128;

pub type LaneAddrs = [Option<u64>; SIMT_WIDTH];

/// One bank-granularity memory transaction produced by coalescing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct MemTxn {
    pub proc: u32,
    pub core: u32,
    pub nbu: u32,
    pub bank: u32,
    pub subarray: u32,
    pub physical_row: u64,
    pub col: u64,
    pub lanes: u32,
}

/// Coalesces active lanes into one transaction per touched
/// (bank, row, column) tuple; a transaction moves one bank-IO burst.
pub fn coalesce(addrs: &LaneAddrs, map: &AddressMapping) -> Result<Vec<MemTxn>, AddrFault> {
    let mut groups: BTreeMap<MemTxn, u32> = BTreeMap::new();
    for a in addrs.iter().flatten() {
        let d = map.decode(*a)?;
        let key = MemTxn {
            proc: d.proc,
            core: d.core,
            nbu: d.nbu,
            bank: d.bank,
            subarray: d.subarray,
            physical_row: d.physical_row,
            col: d.col,
            lanes: 0,
        };
        *groups.entry(key).or_default() += 1;
    }
    Ok(groups
        .into_iter()
        .map(|(mut t, n)| {
            t.lanes = n;
            t
        })
        .collect())
}

/// All 32 lanes active, word-contiguous, and aligned to the warp chunk.
pub fn perfectly_coalesced(addrs: &LaneAddrs) -> bool {
    let Some(base) = addrs[0] else { return false };
    if base % (4 * SIMT_WIDTH as u64) != 0 {
        return false;
    }
    addrs
        .iter()
        .enumerate()
        .all(|(i, a)| *a == Some(base + 4 * i as u64))
    }

/// The fast path applies when the whole warp chunk lives in the NBU
/// that is paired with the issuing subcore, on the issuing core.
pub fn fast_path_eligible(
    addrs: &LaneAddrs,
    map: &AddressMapping,
    home: (u32, u32),
    subcore: u32,
) -> bool {
    if !perfectly_coalesced(addrs) {
        return false;
    }
    addrs.iter().all(|a| {
        map.decode(a.unwrap()).is_ok_and(|d| {
            (d.proc, d.core) == home && d.nbu == subcore
        })
    })
}

/// Splits coalesced transactions into (this core, elsewhere).
pub fn split_local_remote(txns: Vec<MemTxn>, home: (u32, u32)) -> (Vec<MemTxn>, Vec<MemTxn>) {
    txns.into_iter().partition(|t| (t.proc, t.core) == home)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimConfig;

    fn addrs(f: impl Fn(usize) -> Option<u64>) -> LaneAddrs {
        std::array::from_fn(f)
    }

    #[test]
    fn contiguous_warp_is_one_local_txn_set() {
        let cfg = SimConfig::desk();
        let map = AddressMapping::new(&cfg);
        let a = addrs(|i| Some(4096 + 4 * i as u64));
        let txns = coalesce(&a, &map).unwrap();
        // 128 bytes at 32B bank-IO bursts = 4 transactions
        assert_eq!(txns.len(), 4);
        assert_eq!(txns.iter().map(|t| t.lanes).sum::<u32>(), 32);
        // one aligned chunk touches exactly one NBU
        let nbu = txns[0].nbu;
        assert!(txns.iter().all(|t| t.nbu == nbu));
    }

    #[test]
    fn broadcast_coalesces_to_one_txn() {
        let cfg = SimConfig::desk();
        let map = AddressMapping::new(&cfg);
        let a = addrs(|_| Some(64));
        let txns = coalesce(&a, &map).unwrap();
        assert_eq!(txns.len(), 1);
        assert_eq!(txns[0].lanes, 32);
    }

    #[test]
    fn perfectly_coalesced_cases() {
        assert!(perfectly_coalesced(&addrs(|i| Some(256 + 4 * i as u64))));
        // unaligned base
        assert!(!perfectly_coalesced(&addrs(|i| Some(4 + 4 * i as u64))));
        // stride 8
        assert!(!perfectly_coalesced(&addrs(|i| Some(8 * i as u64))));
        // inactive lane
        let mut a = addrs(|i| Some(4 * i as u64));
        a[7] = None;
        assert!(!perfectly_coalesced(&a));
    }

    #[test]
    fn fast_path_requires_matching_nbu() {
        let cfg = SimConfig::desk();
        let map = AddressMapping::new(&cfg);
        let stripe = 128u64;
        for sub in 0..4u32 {
            let base = sub as u64 * stripe;
            let a = addrs(|i| Some(base + 4 * i as u64));
            assert!(fast_path_eligible(&a, &map, (0, 0), sub));
            assert!(!fast_path_eligible(&a, &map, (0, 0), (sub + 1) % 4));
        }
        // next core stripe: same subcore id but a different core
        let a = addrs(|i| Some(512 + 4 * i as u64));
        assert!(!fast_path_eligible(&a, &map, (0, 0), 0));
        assert!(fast_path_eligible(&a, &map, (0, 1), 0));
    }
}
