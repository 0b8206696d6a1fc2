//! Interconnect model: a 2-D mesh of cores inside each processor die
//! (XY dimension-order routing) and point-to-point off-chip links between
//! processors. Each directed link tracks when it is next free; a packet
//! reserves its links hop by hop, so contention shows up as queueing
//! delay at the first busy link.

use crate::config::SimConfig;
use crate::energy::{EnergyEvent, Stats};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct LinkId {
    proc: u32,
    from: u32,
    to: u32,
}

#[derive(Debug, Clone, Default)]
pub struct Noc {
    onchip: BTreeMap<LinkId, u64>,
    offchip: BTreeMap<(u32, u32), u64>,
}

fn xy_route(dim: u32, from: u32, to: u32) -> Vec<(u32, u32)> {
    let (mut x, mut y) = (from % dim, from / dim);
    let (tx, ty) = (to % dim, to / dim);
    let mut hops = Vec::new();
    let mut cur = from;
    while x != tx {
        x = if x < tx { x + 1 } else { x - 1 };
        let next = y * dim + x;
        hops.push((cur, next));
        cur = next;
    }
    while y != ty {
        y = if y < ty { y + 1 } else { y - 1 };
        let next = y * dim + x;
        hops.push((cur, next));
        cur = next;
    }
    hops
}

impl Noc {
    /// Injects a packet at `cycle`; returns its delivery cycle.
    pub fn send(
        &mut self,
        cycle: u64,
        src: (u32, u32),
        dst: (u32, u32),
        bits: u64,
        cfg: &SimConfig,
        stats: &mut Stats,
    ) -> u64 {
        stats.noc_bits_enqueued += bits;
        let dim = cfg.mesh_dim();
        let mut t = cycle;
        let mut onchip_hops = 0u64;
        let mut traverse_mesh = |me: &mut Self, proc: u32, from: u32, to: u32, mut t: u64| {
            for (a, b) in xy_route(dim, from, to) {
                let ser = bits.div_ceil(cfg.noc_bits_per_core_cycle).max(1);
                let busy = me.onchip.entry(LinkId { proc, from: a, to: b }).or_insert(0);
                let start = t.max(*busy);
                *busy = start + ser;
                t = start + ser + cfg.noc_hop_cycles;
                onchip_hops += 1;
            }
            t
        };
        if src.0 == dst.0 {
            t = traverse_mesh(self, src.0, src.1, dst.1, t);
        } else {
            // egress through core 0 of the source die, ingress at core 0
            // of the destination die
            t = traverse_mesh(self, src.0, src.1, 0, t);
            let ser = bits.div_ceil(cfg.offchip_bits_per_core_cycle).max(1);
            let busy = self.offchip.entry((src.0, dst.0)).or_insert(0);
            let start = t.max(*busy);
            *busy = start + ser;
            t = start + ser + cfg.offchip_latency_cycles;
            stats.record(&cfg.energy, EnergyEvent::OffchipBits(bits));
            t = traverse_mesh(self, dst.0, 0, dst.1, t);
        }
        if onchip_hops > 0 {
            stats.record(&cfg.energy, EnergyEvent::OnchipBits(bits * onchip_hops));
        }
        stats.noc_bits_delivered += bits;
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xy_route_goes_x_then_y() {
        // 2x2 mesh: 0 -> 3 passes through 1
        assert_eq!(xy_route(2, 0, 3), vec![(0, 1), (1, 3)]);
        assert_eq!(xy_route(2, 1, 1), vec![]);
    }

    #[test]
    fn local_delivery_latency() {
        let cfg = SimConfig::desk();
        let mut noc = Noc::default();
        let mut stats = Stats::default();
        // neighbor hop: 1 serialization cycle (512b link) + 2 hop cycles
        let t = noc.send(10, (0, 0), (0, 1), 512, &cfg, &mut stats);
        assert_eq!(t, 13);
    }

    #[test]
    fn contention_queues_on_shared_link() {
        let cfg = SimConfig::desk();
        let mut noc = Noc::default();
        let mut stats = Stats::default();
        let t1 = noc.send(0, (0, 0), (0, 1), 512, &cfg, &mut stats);
        let t2 = noc.send(0, (0, 0), (0, 1), 512, &cfg, &mut stats);
        assert!(t2 > t1);
    }

    #[test]
    fn cross_proc_uses_offchip_latency() {
        let mut cfg = SimConfig::desk();
        cfg.procs = 2;
        let mut noc = Noc::default();
        let mut stats = Stats::default();
        let t = noc.send(0, (0, 0), (1, 0), 256, &cfg, &mut stats);
        assert!(t >= cfg.offchip_latency_cycles);
        assert_eq!(stats.offchip_bits, 256);
    }
}
