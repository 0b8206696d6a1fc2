//! Acceptance gate: every release criterion checked end to end, with one
//! pass/fail line printed per criterion. Thresholds were calibrated with
//! the (ignored) probe test; directions, not absolute numbers, are what
//! these assert.

use mpu::compiler::annotate::{annotate_locations, RegLoc};
use mpu::config::SimConfig;
use mpu::energy::{RunReport, Stats, TsvClass};
use mpu::experiments::{
    compile_launches, policy_sweep, rowbuf_sweep, run_workload_sim, smem_sweep, SweepRow,
};
use mpu::isa::{parse_kernel, validate_kernel, Kernel, Opcode, Operand, RegClass, RegisterId};
use mpu::mem::bank::{Bank, BankRequest};
use mpu::mem::check::check_trace;
use mpu::mem::image::MemImage;
use mpu::sim::machine::run_kernel_sim;
use mpu::workloads::{all_workloads, Workload};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

struct Outcome {
    name: &'static str,
    passed: bool,
}

fn report(outcomes: &mut Vec<Outcome>, name: &'static str, passed: bool, detail: String) {
    println!(
        "criterion {name}: {}{}",
        if passed { "PASS" } else { "FAIL" },
        if detail.is_empty() { String::new() } else { format!(" ({detail})") }
    );
    outcomes.push(Outcome { name, passed });
}

fn row<'a>(rows: &'a [SweepRow], wl: &str, leg: &str) -> &'a Stats {
    &rows
        .iter()
        .find(|r| r.workload == wl && r.leg == leg)
        .unwrap_or_else(|| panic!("missing sweep row {wl}/{leg}"))
        .stats
}

#[test]
fn acceptance() {
    let cfg = SimConfig::desk();
    let workloads = all_workloads();
    let mut outcomes = Vec::new();

    // Criterion 1 doubles as the data source for 3-6: every sweep leg is
    // run through run_verified (bit-exact interpreter diff + expected
    // words) inside the sweep drivers.
    let mut policy_rows = Vec::new();
    let mut rowbuf_rows = Vec::new();
    let mut smem_rows = Vec::new();
    let mut oracle_failures = Vec::new();
    for wl in &workloads {
        match policy_sweep(wl, &cfg) {
            Ok(mut r) => policy_rows.append(&mut r),
            Err(e) => oracle_failures.push(format!("{}: {e}", wl.name)),
        }
        match rowbuf_sweep(wl, &cfg) {
            Ok(mut r) => rowbuf_rows.append(&mut r),
            Err(e) => oracle_failures.push(format!("{}: {e}", wl.name)),
        }
        match smem_sweep(wl, &cfg) {
            Ok(mut r) => smem_rows.append(&mut r),
            Err(e) => oracle_failures.push(format!("{}: {e}", wl.name)),
        }
    }
    report(
        &mut outcomes,
        "1 functional oracle equivalence",
        oracle_failures.is_empty(),
        oracle_failures.join("; "),
    );

    report_c2(&mut outcomes, &cfg, &workloads);
    report_c3(&mut outcomes, &cfg, &workloads, &rowbuf_rows);
    report_c4(&mut outcomes, &policy_rows);
    report_c5(&mut outcomes, &smem_rows);
    report_c6(&mut outcomes, &policy_rows);
    report_c7(&mut outcomes);
    report_c8(&mut outcomes, &cfg);
    report_c9(&mut outcomes, &cfg, &workloads, &[&policy_rows, &rowbuf_rows, &smem_rows]);

    let failed: Vec<&Outcome> = outcomes.iter().filter(|o| !o.passed).collect();
    assert!(
        failed.is_empty(),
        "{} criteria failed: {}",
        failed.len(),
        failed.iter().map(|o| o.name).collect::<Vec<_>>().join(", ")
    );
}

/// DRAM timing legality: offline checker over the command traces of every
/// bundled launch, plus 100 randomized standalone-bank traces of >= 1e5
/// requests each.
fn report_c2(outcomes: &mut Vec<Outcome>, cfg: &SimConfig, workloads: &[Workload]) {
    let mut violations = Vec::new();
    for wl in workloads {
        let compiled = compile_launches(wl, cfg).expect("bundled kernels compile");
        let mut mem = wl.image.clone();
        for (li, alloc) in compiled.iter().enumerate() {
            let out = run_kernel_sim(alloc, cfg, &mut mem).expect("bundled run");
            for v in check_trace(&out.cmd_trace, &cfg.timing) {
                violations.push(format!("{} launch {li}: {}", wl.name, v.rule));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mpu::test_seed() ^ 0xD2A77);
    let mut total_requests = 0u64;
    for trace_i in 0..100 {
        let subs = *[1u32, 2, 4].choose(&mut rng).unwrap();
        let n_banks = 4u32;
        let per_bank = 25_000u64;
        let mut banks: Vec<Bank> = (0..n_banks).map(|b| Bank::new(b, subs, cfg.timing)).collect();
        let mut issued = vec![0u64; n_banks as usize];
        let mut trace = Vec::new();
        let mut done = Vec::new();
        let mut cycle = 0u64;
        loop {
            let mut all_issued = true;
            for (b, bank) in banks.iter_mut().enumerate() {
                if issued[b] < per_bank {
                    all_issued = false;
                    if bank.queue_len() < 16 {
                        let row = rng.gen_range(0..24u64);
                        bank.enqueue(BankRequest {
                            subarray: (row % subs as u64) as u32,
                            physical_row: row / subs as u64,
                            col: rng.gen_range(0..16),
                            is_write: rng.gen_bool(0.25),
                            tag: issued[b],
                            arrival: cycle,
                        });
                        issued[b] += 1;
                        total_requests += 1;
                    }
                }
            }
            let mut stats = Stats::default();
            for bank in banks.iter_mut() {
                bank.step(cycle, &cfg.energy, &mut stats, &mut trace);
                bank.drain_returns(cycle, &mut done);
            }
            if all_issued && banks.iter().all(|b| !b.busy()) {
                break;
            }
            cycle += 1;
            assert!(cycle < 50_000_000, "random trace {trace_i} stalled");
        }
        for v in check_trace(&trace, &cfg.timing) {
            violations.push(format!("random trace {trace_i}: {}", v.rule));
        }
    }
    assert!(total_requests >= 100 * 100_000);
    violations.truncate(5);
    report(outcomes, "2 dram timing legality", violations.is_empty(), violations.join("; "));
}

/// Row-buffer ablation: per-kernel miss-rate monotonicity over S, plus
/// the analytic two-row ping-pong microbenchmark.
fn report_c3(
    outcomes: &mut Vec<Outcome>,
    cfg: &SimConfig,
    workloads: &[Workload],
    rowbuf_rows: &[SweepRow],
) {
    let mut fails = Vec::new();
    let eps = 1e-9;
    for wl in workloads {
        let m1 = row(rowbuf_rows, wl.name, "rowbuf1").miss_rate();
        let m2 = row(rowbuf_rows, wl.name, "rowbuf2").miss_rate();
        let m4 = row(rowbuf_rows, wl.name, "rowbuf4").miss_rate();
        if !(m4 <= m2 + eps && m2 <= m1 + eps) {
            fails.push(format!("{}: S=1 {m1:.4} S=2 {m2:.4} S=4 {m4:.4}", wl.name));
        }
    }
    let ping_pong = |subarrays: u32| -> f64 {
        let mut bank = Bank::new(0, subarrays, cfg.timing);
        let mut stats = Stats::default();
        let mut trace = Vec::new();
        let mut done = Vec::new();
        let mut issued = 0u64;
        let mut cycle = 0u64;
        while issued < 200 {
            if !bank.busy() {
                // two warps alternating between logical rows 0 and 1
                let lrow = issued % 2;
                bank.enqueue(BankRequest {
                    subarray: (lrow % subarrays as u64) as u32,
                    physical_row: lrow / subarrays as u64,
                    col: 0,
                    is_write: false,
                    tag: issued,
                    arrival: cycle,
                });
                issued += 1;
            }
            bank.step(cycle, &cfg.energy, &mut stats, &mut trace);
            bank.drain_returns(cycle, &mut done);
            cycle += 1;
            assert!(cycle < 1_000_000, "ping-pong stalled");
        }
        stats.miss_rate()
    };
    let p1 = ping_pong(1);
    let p2 = ping_pong(2);
    if p1 < 0.8 {
        fails.push(format!("ping-pong S=1 miss rate {p1:.3} < 0.8"));
    }
    if p2 > 0.2 {
        fails.push(format!("ping-pong S=2 miss rate {p2:.3} > 0.2"));
    }
    report(outcomes, "3 row-buffer ablation direction", fails.is_empty(), fails.join("; "));
}

/// Offload-policy ablation on axpy / gemv / reduce (the PR kernel):
/// annotated at or below all-near and all-far in cycles and at or below
/// all-far in TSV bytes; hw-default between annotated and all-far on TSV
/// bytes for at least 2 of the 3.
fn report_c4(outcomes: &mut Vec<Outcome>, policy_rows: &[SweepRow]) {
    let mut fails = Vec::new();
    let mut between = 0;
    for wl in ["axpy", "gemv", "reduce"] {
        let ann = row(policy_rows, wl, "annotated");
        let near = row(policy_rows, wl, "all-near");
        let far = row(policy_rows, wl, "all-far");
        let hw = row(policy_rows, wl, "hw-default");
        if ann.cycles > near.cycles || ann.cycles > far.cycles {
            fails.push(format!(
                "{wl}: annotated {} vs all-near {} / all-far {}",
                ann.cycles, near.cycles, far.cycles
            ));
        }
        if ann.tsv_bytes_total() > far.tsv_bytes_total() {
            fails.push(format!(
                "{wl}: annotated tsv {} > all-far {}",
                ann.tsv_bytes_total(),
                far.tsv_bytes_total()
            ));
        }
        if ann.tsv_bytes_total() <= hw.tsv_bytes_total()
            && hw.tsv_bytes_total() <= far.tsv_bytes_total()
        {
            between += 1;
        }
    }
    if between < 2 {
        fails.push(format!("hw-default between annotated and all-far on only {between}/3"));
    }
    report(outcomes, "4 offload-policy ablation direction", fails.is_empty(), fails.join("; "));
}

/// Shared-memory location ablation: near-bank strictly cheaper on the
/// smem-heavy kernels, bit-identical on the smem-free one.
fn report_c5(outcomes: &mut Vec<Outcome>, smem_rows: &[SweepRow]) {
    let mut fails = Vec::new();
    for wl in ["reduce", "ttrans"] {
        let near = row(smem_rows, wl, "smem-near");
        let far = row(smem_rows, wl, "smem-far");
        if !(near.tsv_bytes_total() < far.tsv_bytes_total() && near.cycles < far.cycles) {
            fails.push(format!(
                "{wl}: near {} cyc / {} B vs far {} cyc / {} B",
                near.cycles,
                near.tsv_bytes_total(),
                far.cycles,
                far.tsv_bytes_total()
            ));
        }
    }
    let near = row(smem_rows, "axpy", "smem-near");
    let far = row(smem_rows, "axpy", "smem-far");
    if near.cycles != far.cycles || near.tsv_bytes_total() != far.tsv_bytes_total() {
        fails.push("axpy (no smem): legs are not identical".into());
    }
    report(outcomes, "5 shared-memory ablation direction", fails.is_empty(), fails.join("; "));
}

/// Processing-on-base-die comparison: >= 1.1x cycles vs the annotated
/// hybrid on at least 4 of the 5 kernels.
fn report_c6(outcomes: &mut Vec<Outcome>, policy_rows: &[SweepRow]) {
    let mut ratios = Vec::new();
    let mut wins = 0;
    for wl in ["axpy", "gemv", "reduce", "ttrans", "hist"] {
        let ann = row(policy_rows, wl, "annotated").cycles as f64;
        let ponb = row(policy_rows, wl, "ponb").cycles as f64;
        let ratio = ponb / ann;
        if ratio >= 1.1 {
            wins += 1;
        }
        ratios.push(format!("{wl} {ratio:.2}x"));
    }
    report(
        outcomes,
        "6 ponb comparison direction",
        wins >= 4,
        format!("{wins}/5 at >=1.1x: {}", ratios.join(", ")),
    );
}

/// Annotation algorithm properties over 1000 random kernels: fixpoint
/// within |R|+1 passes, invariance under register renaming, and the
/// memory-operand seed rules surviving propagation.
fn report_c7(outcomes: &mut Vec<Outcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(mpu::test_seed() ^ 0xA16_0001);
    let mut fails = Vec::new();
    for i in 0..1000 {
        let k = random_kernel(&mut rng);
        let t = annotate_locations(&k);
        let bound = k.registers().len() + 1;
        if t.passes > bound {
            fails.push(format!("kernel {i}: {} passes > {bound}", t.passes));
        }
        if let Some(msg) = seed_supremacy_violation(&k, &t.reg_loc) {
            fails.push(format!("kernel {i}: {msg}"));
        }
        let (renamed, map) = rename_registers(&k, &mut rng);
        let t2 = annotate_locations(&renamed);
        if t2.instr_loc != t.instr_loc
            || !t
                .reg_loc
                .iter()
                .all(|(r, l)| t2.reg_loc.get(&map[r]) == Some(l))
        {
            fails.push(format!("kernel {i}: annotation changed under renaming"));
        }
        if fails.len() > 3 {
            break;
        }
    }
    for wl in all_workloads() {
        for (li, k) in wl.launches.iter().enumerate() {
            let t = annotate_locations(k);
            if let Some(msg) = seed_supremacy_violation(k, &t.reg_loc) {
                fails.push(format!("{} launch {li}: {msg}", wl.name));
            }
        }
    }
    report(outcomes, "7 annotation algorithm properties", fails.is_empty(), fails.join("; "));
}

/// Offload fast path: a full-warp contiguous 4B ld.global moves fewer
/// than a quarter of the TSV bits of the non-offloaded path, straight
/// from the per-class counters.
fn report_c8(outcomes: &mut Vec<Outcome>, cfg: &SimConfig) {
    let src = ".kernel fastpath .smem 0 .grid 1 32\n\
               mov.u32 %r1, %tid.x\n\
               cvt.u64.u32 %rd1, %r1\n\
               mul.u64 %rd1, %rd1, 4\n\
               mov.u64 %rd2, 65536\n\
               add.u64 %rd2, %rd2, %rd1\n\
               ld.global.f32 %f1, [%rd2]\n\
               exit\n";
    let k = parse_kernel(src).unwrap();
    assert!(validate_kernel(&k).is_empty());
    let wl = Workload { name: "fastpath", launches: vec![k], image: MemImage::new(), checks: vec![] };

    let on = run_workload_sim(&wl, cfg).unwrap().stats;
    let mut cfg_off = cfg.clone();
    cfg_off.ldst_offload_enabled = false;
    let off = run_workload_sim(&wl, &cfg_off).unwrap().stats;

    let header_bits = on.tsv_bits[TsvClass::InstrOffload.index()];
    let slow_bits = off.tsv_bits[TsvClass::DramTransaction.index()];
    let ok = on.offloaded_ldst == 1
        && off.offloaded_ldst == 0
        && header_bits <= 128
        && slow_bits >= 1024
        && header_bits * 4 < slow_bits;
    report(
        outcomes,
        "8 offload fast-path tsv saving",
        ok,
        format!("header {header_bits}b vs slow-path {slow_bits}b"),
    );
}

/// Accounting identities: exact energy category sum, lane conservation
/// on every collected run, and byte-identical reports on replay.
fn report_c9(
    outcomes: &mut Vec<Outcome>,
    cfg: &SimConfig,
    workloads: &[Workload],
    row_sets: &[&Vec<SweepRow>],
) {
    let mut fails = Vec::new();
    for rows in row_sets {
        for r in rows.iter() {
            let s = &r.stats;
            let sum: f64 = s.energy_pj.iter().sum();
            if sum != s.energy_total_pj() {
                fails.push(format!("{}/{}: energy sum {sum} != total", r.workload, r.leg));
            }
            let serviced =
                s.lanes_serviced_offload + s.lanes_serviced_local + s.lanes_serviced_remote;
            if serviced != s.lanes_requested {
                fails.push(format!(
                    "{}/{}: {} lanes requested, {serviced} serviced",
                    r.workload, r.leg, s.lanes_requested
                ));
            }
        }
    }
    let mut cfg_t = cfg.clone();
    cfg_t.trace = true;
    for wl in workloads.iter().filter(|w| w.name == "axpy" || w.name == "gemv") {
        let a = run_workload_sim(wl, &cfg_t).unwrap();
        let b = run_workload_sim(wl, &cfg_t).unwrap();
        let ra = RunReport::from_stats(wl.name, &cfg_t, &a.stats);
        let rb = RunReport::from_stats(wl.name, &cfg_t, &b.stats);
        if ra.csv_row() != rb.csv_row()
            || ra.to_json() != rb.to_json()
            || a.trace != b.trace
            || a.cmd_trace != b.cmd_trace
        {
            fails.push(format!("{}: replay diverged", wl.name));
        }
    }
    report(outcomes, "9 accounting identities", fails.is_empty(), fails.join("; "));
}

// ---- criterion 7 support -------------------------------------------------

fn random_kernel(rng: &mut ChaCha8Rng) -> Kernel {
    let nr: u16 = rng.gen_range(2..=6);
    let nd: u16 = rng.gen_range(1..=4);
    let nf: u16 = rng.gen_range(1..=4);
    let np: u16 = rng.gen_range(1..=2);
    let pick = |rng: &mut ChaCha8Rng, n: u16| rng.gen_range(1..=n);
    let mut body = String::new();
    let n_instr = rng.gen_range(4..=30);
    for _ in 0..n_instr {
        let line = match rng.gen_range(0..13) {
            0 => format!("add.s32 %r{}, %r{}, %r{}\n", pick(rng, nr), pick(rng, nr), pick(rng, nr)),
            1 => format!("mul.s32 %r{}, %r{}, {}\n", pick(rng, nr), pick(rng, nr), rng.gen_range(1..64)),
            2 => format!(
                "mad.f32 %f{}, %f{}, %f{}, %f{}\n",
                pick(rng, nf), pick(rng, nf), pick(rng, nf), pick(rng, nf)
            ),
            3 => format!("mov.u32 %r{}, {}\n", pick(rng, nr), rng.gen_range(0..1024)),
            4 => format!("mov.u32 %r{}, %tid.x\n", pick(rng, nr)),
            5 => format!("cvt.u64.u32 %rd{}, %r{}\n", pick(rng, nd), pick(rng, nr)),
            6 => format!("add.u64 %rd{}, %rd{}, {}\n", pick(rng, nd), pick(rng, nd), rng.gen_range(0..4096)),
            7 => format!("setp.lt.u32 %p{}, %r{}, {}\n", pick(rng, np), pick(rng, nr), rng.gen_range(1..256)),
            8 => format!("ld.global.f32 %f{}, [%rd{}]\n", pick(rng, nf), pick(rng, nd)),
            9 => format!("st.global.f32 [%rd{}], %f{}\n", pick(rng, nd), pick(rng, nf)),
            10 => format!("ld.shared.u32 %r{}, [%r{}]\n", pick(rng, nr), pick(rng, nr)),
            11 => format!("st.shared.f32 [%r{}], %f{}\n", pick(rng, nr), pick(rng, nf)),
            _ => format!("min.f32 %f{}, %f{}, %f{}\n", pick(rng, nf), pick(rng, nf), pick(rng, nf)),
        };
        body.push_str(&line);
    }
    if rng.gen_bool(0.5) {
        body.push_str(&format!("@%p{} bra end\n", pick(rng, np)));
        body.push_str(&format!("add.s32 %r{}, %r{}, 1\n", pick(rng, nr), pick(rng, nr)));
        body.push_str("end:\n");
    }
    body.push_str("exit\n");
    let src = format!(".kernel rnd .smem 256 .grid 1 32\n{body}");
    let k = parse_kernel(&src).unwrap_or_else(|e| panic!("generated kernel: {e}\n{src}"));
    let diags = validate_kernel(&k);
    assert!(diags.is_empty(), "generated kernel invalid: {diags:?}\n{src}");
    k
}

/// Applies a random within-class register permutation, returning the
/// renamed kernel and the old->new id map.
fn rename_registers(k: &Kernel, rng: &mut ChaCha8Rng) -> (Kernel, BTreeMap<RegisterId, RegisterId>) {
    let mut map = BTreeMap::new();
    for class in [RegClass::Int32, RegClass::Int64, RegClass::Float32, RegClass::Pred] {
        let mut idxs: Vec<u16> = k
            .registers()
            .iter()
            .filter(|r| r.class == class)
            .map(|r| r.index)
            .collect();
        let mut shuffled = idxs.clone();
        shuffled.shuffle(rng);
        for (old, new) in idxs.drain(..).zip(shuffled) {
            map.insert(RegisterId::new(class, old), RegisterId::new(class, new));
        }
    }
    let mut out = k.clone();
    for i in &mut out.instructions {
        if let Some(d) = i.dst.as_mut() {
            *d = map[d];
        }
        for s in &mut i.srcs {
            if let Operand::Reg(r) = s {
                *r = map[r];
            }
        }
        if let Some((g, _)) = i.guard.as_mut() {
            *g = map[g];
        }
    }
    (out, map)
}

/// Seeds may widen to Both but never flip: global load/store value
/// registers keep a near-bank side, their addresses a far-bank side.
fn seed_supremacy_violation(k: &Kernel, reg_loc: &BTreeMap<RegisterId, RegLoc>) -> Option<String> {
    for (pc, i) in k.instructions.iter().enumerate() {
        match i.opcode {
            Opcode::LdGlobal | Opcode::StGlobal => {
                if let Some(a) = i.addr_reg() {
                    if !matches!(reg_loc[&a], RegLoc::F | RegLoc::B) {
                        return Some(format!("pc {pc}: global address {a:?} not far-bank"));
                    }
                }
                let val = if i.opcode == Opcode::LdGlobal { i.dst } else { i.store_data_reg() };
                if let Some(v) = val {
                    if !matches!(reg_loc[&v], RegLoc::N | RegLoc::B) {
                        return Some(format!("pc {pc}: global value {v:?} not near-bank"));
                    }
                }
            }
            _ => {}
        }
    }
    None
}
