//! Control-flow graph over instruction indices and the post-dominator
//! analysis that yields branch re-convergence points.

use crate::isa::{Kernel, Opcode};
use std::collections::BTreeMap;

/// branch instruction index -> re-convergence instruction index
pub type ReconvergenceMap = BTreeMap<usize, usize>;

/// Successor instruction indices. The virtual exit node is `n` (one past
/// the last instruction); unguarded `exit` flows there.
pub fn successors(k: &Kernel, pc: usize) -> Vec<usize> {
    let n = k.instructions.len();
    let i = &k.instructions[pc];
    match i.opcode {
        Opcode::Exit => {
            if i.guard.is_some() {
                vec![n, pc + 1]
            } else {
                vec![n]
            }
        }
        Opcode::Bra => {
            let t = i.label_target.expect("validated");
            if i.guard.is_some() {
                vec![t, pc + 1]
            } else {
                vec![t]
            }
        }
        _ => vec![pc + 1],
    }
}

/// Dense bitset over node ids 0..=n.
#[derive(Clone, PartialEq)]
struct NodeSet {
    words: Vec<u64>,
}

impl NodeSet {
    fn full(n: usize) -> Self {
        let mut words = vec![u64::MAX; n / 64 + 1];
        // clear bits above n
        let last = words.len() - 1;
        let used = n % 64 + 1;
        if used < 64 {
            words[last] = (1u64 << used) - 1;
        }
        Self { words }
    }
    fn single(n: usize, bit: usize) -> Self {
        let mut words = vec![0u64; n / 64 + 1];
        words[bit / 64] |= 1 << (bit % 64);
        Self { words }
    }
    fn contains(&self, bit: usize) -> bool {
        self.words[bit / 64] & (1 << (bit % 64)) != 0
    }
    fn intersect_with(&mut self, other: &Self) -> bool {
        let mut changed = false;
        for (w, o) in self.words.iter_mut().zip(&other.words) {
            let nv = *w & *o;
            changed |= nv != *w;
            *w = nv;
        }
        changed
    }
    fn insert(&mut self, bit: usize) {
        self.words[bit / 64] |= 1 << (bit % 64);
    }
}

/// Post-dominator sets via the classic iterative dataflow:
/// `pdom(i) = {i} ∪ ⋂_{s ∈ succ(i)} pdom(s)`, virtual exit is its own
/// post-dominator set. Returns, for each node, the set of its
/// post-dominators (indices 0..=n, n = virtual exit).
fn postdominator_sets(k: &Kernel) -> Vec<NodeSet> {
    let n = k.instructions.len();
    let mut pdom: Vec<NodeSet> = (0..n).map(|_| NodeSet::full(n)).collect();
    pdom.push(NodeSet::single(n, n)); // virtual exit

    let mut changed = true;
    while changed {
        changed = false;
        for pc in (0..n).rev() {
            let succs = successors(k, pc);
            let mut acc: Option<NodeSet> = None;
            for s in succs {
                match &mut acc {
                    None => acc = Some(pdom[s].clone()),
                    Some(a) => {
                        a.intersect_with(&pdom[s]);
                    }
                }
            }
            let mut new = acc.unwrap_or_else(|| NodeSet::single(n, n));
            new.insert(pc);
            if new != pdom[pc] {
                pdom[pc] = new;
                changed = true;
            }
        }
    }
    pdom
}

/// Immediate post-dominator of each instruction (possibly the virtual
/// exit node `n`).
pub fn immediate_postdominators(k: &Kernel) -> Vec<usize> {
    let n = k.instructions.len();
    let pdom = postdominator_sets(k);
    let mut ipdom = vec![n; n];
    for i in 0..n {
        // strict post-dominators of i
        let strict: Vec<usize> = (0..=n).filter(|&p| p != i && pdom[i].contains(p)).collect();
        // the immediate one is the strict post-dominator that is
        // post-dominated by every other strict post-dominator
        'cand: for &c in &strict {
            for &p in &strict {
                if p != c && !pdom[c].contains(p) {
                    continue 'cand;
                }
            }
            ipdom[i] = c;
            break;
        }
    }
    ipdom
}

/// Re-convergence points of conditional branches: the immediate
/// post-dominator of the branch. A branch whose only common
/// post-dominator is the virtual exit maps to the first reachable exit
/// instruction.
pub fn analyze_branches(k: &Kernel) -> ReconvergenceMap {
    let n = k.instructions.len();
    let ipdom = immediate_postdominators(k);
    let mut map = ReconvergenceMap::new();
    for (pc, i) in k.instructions.iter().enumerate() {
        if i.opcode == Opcode::Bra && i.guard.is_some() {
            let mut target = ipdom[pc];
            if target == n {
                target = first_reachable_exit(k, pc);
            }
            map.insert(pc, target);
        }
    }
    map
}

fn first_reachable_exit(k: &Kernel, from: usize) -> usize {
    let n = k.instructions.len();
    let mut seen = vec![false; n];
    let mut stack = vec![from];
    let mut best = n - 1;
    let mut found = false;
    while let Some(pc) = stack.pop() {
        if pc >= n || std::mem::replace(&mut seen[pc], true) {
            continue;
        }
        if k.instructions[pc].opcode == Opcode::Exit && (!found || pc < best) {
            best = pc;
            found = true;
        }
        for s in successors(k, pc) {
            stack.push(s);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_kernel;

    fn kern(body: &str) -> Kernel {
        parse_kernel(&format!(".kernel t .smem 0 .grid 1 32\n{body}\n")).unwrap()
    }

    #[test]
    fn straight_line_has_no_branch_map() {
        let k = kern("add.s32 %r1, %r2, %r3\nexit");
        assert!(analyze_branches(&k).is_empty());
    }

    #[test]
    fn diamond_reconverges_at_join() {
        // 0: @%p1 bra else
        // 1: add       (then)
        // 2: bra join
        // 3: sub       (else)
        // 4: add       (join)
        // 5: exit
        let k = kern(
            "@%p1 bra else\n\
             add.s32 %r1, %r1, 1\n\
             bra join\n\
             else:\n\
             sub.s32 %r1, %r1, 1\n\
             join:\n\
             add.s32 %r2, %r1, 0\n\
             exit",
        );
        let m = analyze_branches(&k);
        assert_eq!(m.get(&0), Some(&4));
    }

    #[test]
    fn loop_branch_reconverges_after_loop() {
        // 0: loop: add
        // 1: setp
        // 2: @%p1 bra loop
        // 3: add   <- first instruction after loop exit
        // 4: exit
        let k = kern(
            "loop:\n\
             add.s32 %r1, %r1, 1\n\
             setp.lt.s32 %p1, %r1, 10\n\
             @%p1 bra loop\n\
             add.s32 %r2, %r1, 0\n\
             exit",
        );
        let m = analyze_branches(&k);
        assert_eq!(m.get(&2), Some(&3));
    }
}
