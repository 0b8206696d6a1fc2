//! Shared-memory bank-conflict model. The scratchpad is word-interleaved
//! across 32 banks; lanes hitting different words in the same bank
//! serialize, lanes reading the same word broadcast.

use std::collections::BTreeSet;

pub const SMEM_BANKS: u32 = 32;
pub const SMEM_WORD: u32 = 4;

/// Number of cycles a warp access occupies the scratchpad.
/// `addrs[lane]` is the byte address for active lanes, `None` for inactive.
pub fn access_cycles(addrs: &[Option<u32>]) -> u32 {
    let mut per_bank: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); SMEM_BANKS as usize];
    for a in addrs.iter().flatten() {
        let word = a / SMEM_WORD;
        per_bank[(word % SMEM_BANKS) as usize].insert(word);
    }
    per_bank.iter().map(|s| s.len() as u32).max().unwrap_or(0).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_stride_is_conflict_free() {
        let addrs: Vec<Option<u32>> = (0..32).map(|i| Some(i * 4)).collect();
        assert_eq!(access_cycles(&addrs), 1);
    }

    #[test]
    fn broadcast_is_one_cycle() {
        let addrs: Vec<Option<u32>> = (0..32).map(|_| Some(128)).collect();
        assert_eq!(access_cycles(&addrs), 1);
    }

    #[test]
    fn stride_two_halves_throughput() {
        let addrs: Vec<Option<u32>> = (0..32).map(|i| Some(i * 8)).collect();
        assert_eq!(access_cycles(&addrs), 2);
    }

    #[test]
    fn same_bank_fully_serializes() {
        let addrs: Vec<Option<u32>> = (0..32).map(|i| Some(i * 4 * SMEM_BANKS)).collect();
        assert_eq!(access_cycles(&addrs), 32);
    }

    #[test]
    fn inactive_lanes_ignored() {
        let mut addrs = vec![None; 32];
        addrs[3] = Some(0);
        assert_eq!(access_cycles(&addrs), 1);
        assert_eq!(access_cycles(&vec![None; 32]), 1);
    }
}
