//! Independent oracles for the compiler analyses: a brute-force
//! reachability definition of post-dominance checked against the
//! dataflow implementation, and assembler round-trips.

use mpu::compiler::cfg::{analyze_branches, immediate_postdominators, successors};
use mpu::isa::{parse_kernel, print_kernel, validate_kernel, Kernel, Opcode};
use proptest::collection::vec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `p` post-dominates `i` iff every path from `i` to the virtual exit
/// node passes through `p` — equivalently, removing `p` makes the exit
/// unreachable from `i`.
fn postdominates_by_removal(k: &Kernel, p: usize, i: usize) -> bool {
    if p == i {
        return true;
    }
    let n = k.instructions.len();
    let mut seen = vec![false; n + 1];
    let mut stack = vec![i];
    while let Some(pc) = stack.pop() {
        if pc == p || std::mem::replace(&mut seen[pc], true) {
            continue;
        }
        if pc == n {
            return false; // reached exit while avoiding p
        }
        stack.extend(successors(k, pc));
    }
    true
}

fn brute_force_ipdom(k: &Kernel) -> Vec<usize> {
    let n = k.instructions.len();
    (0..n)
        .map(|i| {
            let strict: Vec<usize> = (0..=n)
                .filter(|&p| p != i && postdominates_by_removal(k, p, i))
                .collect();
            *strict
                .iter()
                .find(|&&c| {
                    strict
                        .iter()
                        .all(|&p| p == c || postdominates_by_removal(k, p, c))
                })
                .unwrap_or(&n)
        })
        .collect()
}

/// Random branchy kernel: labeled straight-line segments stitched with
/// guarded branches in both directions. Guarded-only branching keeps the
/// exit reachable from every node, which the brute-force oracle needs.
fn random_cfg_kernel(rng: &mut ChaCha8Rng) -> Kernel {
    let segments = rng.gen_range(2..7);
    let mut body = String::new();
    for s in 0..segments {
        body.push_str(&format!("L{s}:\n"));
        for _ in 0..rng.gen_range(0..4) {
            body.push_str(&format!(
                "add.s32 %r{}, %r{}, {}\n",
                rng.gen_range(1..4),
                rng.gen_range(1..4),
                rng.gen_range(0..16)
            ));
        }
        if rng.gen_bool(0.8) {
            body.push_str(&format!(
                "@%p1 bra L{}\n",
                rng.gen_range(0..segments)
            ));
        }
        if rng.gen_bool(0.2) {
            body.push_str("@%p2 exit\n");
        }
    }
    body.push_str("exit\n");
    let k = parse_kernel(&format!(".kernel cfg .smem 0 .grid 1 32\n{body}")).unwrap();
    assert!(validate_kernel(&k).is_empty());
    k
}

#[test]
fn postdominators_match_brute_force_on_random_cfgs() {
    let mut rng = ChaCha8Rng::seed_from_u64(mpu::test_seed() ^ 0xCF6);
    for i in 0..300 {
        let k = random_cfg_kernel(&mut rng);
        let fast = immediate_postdominators(&k);
        let slow = brute_force_ipdom(&k);
        assert_eq!(fast, slow, "kernel {i}:\n{}", print_kernel(&k));
    }
}

#[test]
fn reconvergence_points_are_branch_ipdoms() {
    let mut rng = ChaCha8Rng::seed_from_u64(mpu::test_seed() ^ 0xCF7);
    let n_kernels = 100;
    let mut branches = 0;
    for _ in 0..n_kernels {
        let k = random_cfg_kernel(&mut rng);
        let n = k.instructions.len();
        let ipdom = brute_force_ipdom(&k);
        let reconv = analyze_branches(&k);
        for (pc, instr) in k.instructions.iter().enumerate() {
            if instr.opcode == Opcode::Bra && instr.guard.is_some() {
                branches += 1;
                let r = reconv[&pc];
                if ipdom[pc] == n {
                    // falls back to a real exit instruction
                    assert_eq!(k.instructions[r].opcode, Opcode::Exit);
                } else {
                    assert_eq!(r, ipdom[pc], "branch at {pc}:\n{}", print_kernel(&k));
                }
            }
        }
    }
    assert!(branches > 50, "generator produced too few branches");
}

/// Deterministic source text from an opcode-choice vector; proptest
/// shrinks over the choices.
fn source_from_choices(choices: &[u16]) -> String {
    let mut body = String::new();
    for (i, c) in choices.iter().enumerate() {
        let r = (c % 5) + 1;
        let f = (c / 5 % 4) + 1;
        let d = (c / 23 % 3) + 1;
        let line = match c % 11 {
            0 => format!("add.s32 %r{r}, %r{}, {}\n", (c / 7 % 5) + 1, c % 100),
            1 => format!("mad.f32 %f{f}, %f{f}, 0f3F800000, %f{}\n", (c / 3 % 4) + 1),
            2 => format!("mov.u64 %rd{d}, {}\n", *c as u64 * 8),
            3 => format!("cvt.u64.u32 %rd{d}, %r{r}\n"),
            4 => format!("setp.lt.u32 %p1, %r{r}, {}\n", (c % 63) + 1),
            5 => format!("ld.global.f32 %f{f}, [%rd{d}]\n"),
            6 => format!("st.global.f32 [%rd{d}], %f{f}\n"),
            7 => format!("ld.shared.u32 %r{r}, [%r{}]\n", (c / 11 % 5) + 1),
            8 => format!("st.shared.u32 [%r{r}], %r{}\n", (c / 13 % 5) + 1),
            9 => format!("@%p1 bra L{i}\nL{i}:\n"),
            _ => format!("min.s32 %r{r}, %r{}, %r{}\n", (c / 17 % 5) + 1, (c / 19 % 5) + 1),
        };
        body.push_str(&line);
    }
    body.push_str("exit\n");
    format!(".kernel rt .smem 64 .grid 2 64\n{body}")
}

proptest! {
    #[test]
    fn print_parse_round_trip(choices in vec(any::<u16>(), 1..40)) {
        let src = source_from_choices(&choices);
        let k = parse_kernel(&src).unwrap();
        prop_assert!(validate_kernel(&k).is_empty());
        let printed = print_kernel(&k);
        let k2 = parse_kernel(&printed).unwrap();
        prop_assert_eq!(k, k2);
    }
}
