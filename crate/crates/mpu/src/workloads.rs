//! Bundled benchmark kernels: assembly sources, input generation, and
//! independently computed expected results. Data layouts are chosen so
//! streaming kernels hit the warp-aligned access pattern the LSU can
//! offload, while the transpose and histogram merges exercise remote
//! and partially-masked paths.

use crate::isa::{parse_kernel, validate_kernel, Kernel};
use crate::mem::image::MemImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Workload {
    pub name: &'static str,
    pub launches: Vec<Kernel>,
    pub image: MemImage,
    /// (address, expected little-endian word) pairs over all outputs
    pub checks: Vec<(u64, u32)>,
}

pub const WORKLOAD_NAMES: [&str; 5] = ["axpy", "gemv", "reduce", "ttrans", "hist"];

pub fn workload(name: &str) -> Option<Workload> {
    match name {
        "axpy" => Some(axpy()),
        "gemv" => Some(gemv()),
        "reduce" => Some(reduce()),
        "ttrans" => Some(ttrans()),
        "hist" => Some(hist()),
        _ => None,
    }
}

pub fn all_workloads() -> Vec<Workload> {
    WORKLOAD_NAMES.iter().map(|n| workload(n).unwrap()).collect()
}

fn build(src: &str) -> Kernel {
    let k = parse_kernel(src).unwrap_or_else(|e| panic!("bundled kernel: {e}"));
    let diags = validate_kernel(&k);
    assert!(diags.is_empty(), "bundled kernel invalid: {:?}", diags);
    k
}

fn rng(salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(crate::test_seed() ^ salt)
}

fn small_f32(r: &mut ChaCha8Rng) -> f32 {
    // exact in f32 and well away from overflow
    (r.gen_range(-512i32..512) as f32) * 0.25
}

const AXPY_X: u64 = 0x1_0000;
const AXPY_Y: u64 = 0x2_0000;

fn axpy() -> Workload {
    let blocks = 8u32;
    let n = blocks as u64 * 128;
    let src = format!(
        ".kernel axpy .smem 0 .grid {blocks} 128\n\
         mov.u32 %r1, %tid.x\n\
         mov.u32 %r2, %ctaid.x\n\
         mov.u32 %r3, %ntid.x\n\
         mad.s32 %r4, %r2, %r3, %r1\n\
         cvt.u64.u32 %rd1, %r4\n\
         mul.u64 %rd1, %rd1, 4\n\
         mov.u64 %rd2, {AXPY_X}\n\
         add.u64 %rd2, %rd2, %rd1\n\
         mov.u64 %rd3, {AXPY_Y}\n\
         add.u64 %rd3, %rd3, %rd1\n\
         ld.global.f32 %f1, [%rd2]\n\
         ld.global.f32 %f2, [%rd3]\n\
         mad.f32 %f3, %f1, 0f40200000, %f2\n\
         st.global.f32 [%rd3], %f3\n\
         exit\n"
    );
    let mut r = rng(0xA1);
    let mut image = MemImage::new();
    let mut checks = Vec::new();
    for i in 0..n {
        let x = small_f32(&mut r);
        let y = small_f32(&mut r);
        image.write_f32(AXPY_X + i * 4, x);
        image.write_f32(AXPY_Y + i * 4, y);
        let expect = x * 2.5 + y;
        checks.push((AXPY_Y + i * 4, expect.to_bits()));
    }
    Workload { name: "axpy", launches: vec![build(&src)], image, checks }
}

const GEMV_A: u64 = 0x4_0000;
const GEMV_X: u64 = 0x8_0000;
const GEMV_Y: u64 = 0x9_0000;
const GEMV_M: u64 = 2048;
const GEMV_N: u64 = 32;

fn gemv() -> Workload {
    let blocks = (GEMV_M / 128) as u32;
    let col_stride = 4 * GEMV_M;
    let smem = 4 * GEMV_N;
    // x is staged through the scratchpad once per block so the inner
    // loop only streams columns of A
    let src = format!(
        ".kernel gemv .smem {smem} .grid {blocks} 128\n\
         mov.u32 %r1, %tid.x\n\
         mov.u32 %r2, %ctaid.x\n\
         mov.u32 %r3, %ntid.x\n\
         mad.s32 %r4, %r2, %r3, %r1\n\
         setp.lt.u32 %p1, %r1, {GEMV_N}\n\
         @!%p1 bra xdone\n\
         cvt.u64.u32 %rd5, %r1\n\
         mul.u64 %rd5, %rd5, 4\n\
         mov.u64 %rd6, {GEMV_X}\n\
         add.u64 %rd6, %rd6, %rd5\n\
         ld.global.f32 %f4, [%rd6]\n\
         mul.s32 %r6, %r1, 4\n\
         st.shared.f32 [%r6], %f4\n\
         xdone:\n\
         bar.sync\n\
         cvt.u64.u32 %rd1, %r4\n\
         mul.u64 %rd1, %rd1, 4\n\
         mov.u64 %rd2, {GEMV_A}\n\
         add.u64 %rd2, %rd2, %rd1\n\
         mov.f32 %f1, 0f00000000\n\
         mov.u32 %r5, 0\n\
         mov.u32 %r7, 0\n\
         jloop:\n\
         ld.global.f32 %f2, [%rd2]\n\
         ld.shared.f32 %f3, [%r7]\n\
         mad.f32 %f1, %f2, %f3, %f1\n\
         add.u64 %rd2, %rd2, {col_stride}\n\
         add.u32 %r7, %r7, 4\n\
         add.u32 %r5, %r5, 1\n\
         setp.lt.u32 %p2, %r5, {GEMV_N}\n\
         @%p2 bra jloop\n\
         mov.u64 %rd4, {GEMV_Y}\n\
         add.u64 %rd4, %rd4, %rd1\n\
         st.global.f32 [%rd4], %f1\n\
         exit\n"
    );
    let mut r = rng(0xB2);
    let mut image = MemImage::new();
    // column-major A
    let mut a = vec![0f32; (GEMV_M * GEMV_N) as usize];
    for v in a.iter_mut() {
        *v = small_f32(&mut r);
    }
    for (i, v) in a.iter().enumerate() {
        image.write_f32(GEMV_A + 4 * i as u64, *v);
    }
    let mut x = vec![0f32; GEMV_N as usize];
    for v in x.iter_mut() {
        *v = small_f32(&mut r);
    }
    for (j, v) in x.iter().enumerate() {
        image.write_f32(GEMV_X + 4 * j as u64, *v);
    }
    let mut checks = Vec::new();
    for row in 0..GEMV_M {
        let mut acc = 0f32;
        for j in 0..GEMV_N {
            // the kernel's mad: acc = a*x + acc, in ascending j
            acc = a[(j * GEMV_M + row) as usize] * x[j as usize] + acc;
        }
        checks.push((GEMV_Y + 4 * row, acc.to_bits()));
    }
    Workload { name: "gemv", launches: vec![build(&src)], image, checks }
}

const RED_DATA: u64 = 0x10_0000;
const RED_PART: u64 = 0x12_0000;
const RED_OUT: u64 = 0x13_0000;

fn reduce() -> Workload {
    let blocks = 8u32;
    let threads = blocks as u64 * 128;
    let k = 32u64;
    let n = threads * k;
    let stride = 4 * threads;
    let k1 = format!(
        ".kernel reduce1 .smem 512 .grid {blocks} 128\n\
         mov.u32 %r1, %tid.x\n\
         mov.u32 %r2, %ctaid.x\n\
         mov.u32 %r3, %ntid.x\n\
         mad.s32 %r4, %r2, %r3, %r1\n\
         cvt.u64.u32 %rd1, %r4\n\
         mul.u64 %rd1, %rd1, 4\n\
         mov.u64 %rd2, {RED_DATA}\n\
         add.u64 %rd2, %rd2, %rd1\n\
         mov.u32 %r6, 0\n\
         mov.u32 %r5, 0\n\
         kloop:\n\
         ld.global.u32 %r7, [%rd2]\n\
         add.u32 %r6, %r6, %r7\n\
         add.u64 %rd2, %rd2, {stride}\n\
         add.u32 %r5, %r5, 1\n\
         setp.lt.u32 %p1, %r5, {k}\n\
         @%p1 bra kloop\n\
         mul.s32 %r8, %r1, 4\n\
         st.shared.u32 [%r8], %r6\n\
         bar.sync\n\
         mov.u32 %r9, 64\n\
         rloop:\n\
         setp.lt.u32 %p2, %r1, %r9\n\
         @!%p2 bra skip\n\
         add.u32 %r10, %r1, %r9\n\
         mul.s32 %r11, %r10, 4\n\
         ld.shared.u32 %r12, [%r11]\n\
         ld.shared.u32 %r13, [%r8]\n\
         add.u32 %r13, %r13, %r12\n\
         st.shared.u32 [%r8], %r13\n\
         skip:\n\
         bar.sync\n\
         div.u32 %r9, %r9, 2\n\
         setp.ge.u32 %p3, %r9, 1\n\
         @%p3 bra rloop\n\
         setp.eq.u32 %p4, %r1, 0\n\
         @!%p4 bra done\n\
         ld.shared.u32 %r15, [%r8]\n\
         mov.u64 %rd3, {RED_PART}\n\
         cvt.u64.u32 %rd4, %r2\n\
         mul.u64 %rd4, %rd4, 4\n\
         add.u64 %rd3, %rd3, %rd4\n\
         st.global.u32 [%rd3], %r15\n\
         done:\n\
         exit\n"
    );
    let k2 = format!(
        ".kernel reduce2 .smem 0 .grid 1 128\n\
         mov.u32 %r1, %tid.x\n\
         setp.eq.u32 %p1, %r1, 0\n\
         @!%p1 bra done\n\
         mov.u64 %rd1, {RED_PART}\n\
         mov.u32 %r2, 0\n\
         mov.u32 %r3, 0\n\
         floop:\n\
         ld.global.u32 %r4, [%rd1]\n\
         add.u32 %r3, %r3, %r4\n\
         add.u64 %rd1, %rd1, 4\n\
         add.u32 %r2, %r2, 1\n\
         setp.lt.u32 %p2, %r2, {blocks}\n\
         @%p2 bra floop\n\
         mov.u64 %rd2, {RED_OUT}\n\
         st.global.u32 [%rd2], %r3\n\
         done:\n\
         exit\n"
    );
    let mut r = rng(0xC3);
    let mut image = MemImage::new();
    let mut total = 0u32;
    for i in 0..n {
        let v: u32 = r.gen_range(0..100_000);
        image.write_u32(RED_DATA + 4 * i, v);
        total = total.wrapping_add(v);
    }
    Workload {
        name: "reduce",
        launches: vec![build(&k1), build(&k2)],
        image,
        checks: vec![(RED_OUT, total)],
    }
}

const TT_A: u64 = 0x14_0000;
const TT_OUT: u64 = 0x16_0000;
const TT_M: u64 = 64;

fn ttrans() -> Workload {
    let tiles = TT_M / 32;
    let blocks = (tiles * tiles) as u32;
    let src = format!(
        ".kernel ttrans .smem 4096 .grid {blocks} 128\n\
         mov.u32 %r1, %tid.x\n\
         mov.u32 %r2, %ctaid.x\n\
         div.u32 %r3, %r2, {tiles}\n\
         mul.s32 %r4, %r3, {tiles}\n\
         sub.s32 %r4, %r2, %r4\n\
         div.u32 %r5, %r1, 32\n\
         mul.s32 %r6, %r5, 32\n\
         sub.s32 %r6, %r1, %r6\n\
         mov.u32 %r7, 0\n\
         ploop:\n\
         mul.s32 %r8, %r7, 4\n\
         add.s32 %r8, %r8, %r5\n\
         mul.s32 %r9, %r3, 32\n\
         add.s32 %r9, %r9, %r8\n\
         mul.s32 %r10, %r4, 32\n\
         add.s32 %r10, %r10, %r6\n\
         mad.s32 %r11, %r9, {TT_M}, %r10\n\
         cvt.u64.u32 %rd1, %r11\n\
         mul.u64 %rd1, %rd1, 4\n\
         mov.u64 %rd2, {TT_A}\n\
         add.u64 %rd2, %rd2, %rd1\n\
         ld.global.f32 %f1, [%rd2]\n\
         mad.s32 %r12, %r8, 32, %r6\n\
         mul.s32 %r12, %r12, 4\n\
         st.shared.f32 [%r12], %f1\n\
         add.u32 %r7, %r7, 1\n\
         setp.lt.u32 %p1, %r7, 8\n\
         @%p1 bra ploop\n\
         bar.sync\n\
         mov.u32 %r7, 0\n\
         sloop:\n\
         mul.s32 %r8, %r7, 4\n\
         add.s32 %r8, %r8, %r5\n\
         mad.s32 %r13, %r6, 32, %r8\n\
         mul.s32 %r13, %r13, 4\n\
         ld.shared.f32 %f2, [%r13]\n\
         mul.s32 %r14, %r4, 32\n\
         add.s32 %r14, %r14, %r8\n\
         mul.s32 %r15, %r3, 32\n\
         add.s32 %r15, %r15, %r6\n\
         mad.s32 %r16, %r14, {TT_M}, %r15\n\
         cvt.u64.u32 %rd3, %r16\n\
         mul.u64 %rd3, %rd3, 4\n\
         mov.u64 %rd4, {TT_OUT}\n\
         add.u64 %rd4, %rd4, %rd3\n\
         st.global.f32 [%rd4], %f2\n\
         add.u32 %r7, %r7, 1\n\
         setp.lt.u32 %p2, %r7, 8\n\
         @%p2 bra sloop\n\
         exit\n"
    );
    let mut r = rng(0xD4);
    let mut image = MemImage::new();
    let mut a = vec![0f32; (TT_M * TT_M) as usize];
    for v in a.iter_mut() {
        *v = small_f32(&mut r);
    }
    for (i, v) in a.iter().enumerate() {
        image.write_f32(TT_A + 4 * i as u64, *v);
    }
    let mut checks = Vec::new();
    for row in 0..TT_M {
        for col in 0..TT_M {
            let expect = a[(col * TT_M + row) as usize];
            checks.push((TT_OUT + 4 * (row * TT_M + col), expect.to_bits()));
        }
    }
    Workload { name: "ttrans", launches: vec![build(&src)], image, checks }
}

const HIST_DATA: u64 = 0x18_0000;
const HIST_PART: u64 = 0x1A_0000;
const HIST_OUT: u64 = 0x1B_0000;
const HIST_BINS: u64 = 16;

fn hist() -> Workload {
    let blocks = 8u32;
    let threads = blocks as u64 * 128;
    let k = 16u64;
    let n = threads * k;
    let stride = 4 * threads;
    let row_bytes = HIST_BINS * 4;
    let k1 = format!(
        ".kernel hist1 .smem 8192 .grid {blocks} 128\n\
         mov.u32 %r1, %tid.x\n\
         mov.u32 %r2, %ctaid.x\n\
         mov.u32 %r3, %ntid.x\n\
         mad.s32 %r4, %r2, %r3, %r1\n\
         mul.s32 %r16, %r1, {row_bytes}\n\
         mov.u32 %r6, %r16\n\
         mov.u32 %r5, 0\n\
         mov.u32 %r19, 0\n\
         zloop:\n\
         st.shared.u32 [%r6], %r19\n\
         add.u32 %r6, %r6, 4\n\
         add.u32 %r5, %r5, 1\n\
         setp.lt.u32 %p1, %r5, {HIST_BINS}\n\
         @%p1 bra zloop\n\
         cvt.u64.u32 %rd1, %r4\n\
         mul.u64 %rd1, %rd1, 4\n\
         mov.u64 %rd2, {HIST_DATA}\n\
         add.u64 %rd2, %rd2, %rd1\n\
         mov.u32 %r7, 0\n\
         eloop:\n\
         ld.global.u32 %r8, [%rd2]\n\
         mad.s32 %r9, %r8, 4, %r16\n\
         ld.shared.u32 %r10, [%r9]\n\
         add.u32 %r10, %r10, 1\n\
         st.shared.u32 [%r9], %r10\n\
         add.u64 %rd2, %rd2, {stride}\n\
         add.u32 %r7, %r7, 1\n\
         setp.lt.u32 %p2, %r7, {k}\n\
         @%p2 bra eloop\n\
         bar.sync\n\
         setp.lt.u32 %p3, %r1, {HIST_BINS}\n\
         @!%p3 bra hdone\n\
         mov.u32 %r11, 0\n\
         mov.u32 %r12, 0\n\
         mul.s32 %r13, %r1, 4\n\
         mloop:\n\
         ld.shared.u32 %r14, [%r13]\n\
         add.u32 %r12, %r12, %r14\n\
         add.u32 %r13, %r13, {row_bytes}\n\
         add.u32 %r11, %r11, 1\n\
         setp.lt.u32 %p4, %r11, 128\n\
         @%p4 bra mloop\n\
         mad.s32 %r15, %r2, {HIST_BINS}, %r1\n\
         cvt.u64.u32 %rd3, %r15\n\
         mul.u64 %rd3, %rd3, 4\n\
         mov.u64 %rd4, {HIST_PART}\n\
         add.u64 %rd4, %rd4, %rd3\n\
         st.global.u32 [%rd4], %r12\n\
         hdone:\n\
         exit\n"
    );
    let k2 = format!(
        ".kernel hist2 .smem 0 .grid 1 128\n\
         mov.u32 %r1, %tid.x\n\
         setp.lt.u32 %p1, %r1, {HIST_BINS}\n\
         @!%p1 bra done\n\
         mov.u32 %r2, 0\n\
         mov.u32 %r3, 0\n\
         floop:\n\
         mad.s32 %r4, %r2, {HIST_BINS}, %r1\n\
         cvt.u64.u32 %rd1, %r4\n\
         mul.u64 %rd1, %rd1, 4\n\
         mov.u64 %rd2, {HIST_PART}\n\
         add.u64 %rd2, %rd2, %rd1\n\
         ld.global.u32 %r5, [%rd2]\n\
         add.u32 %r3, %r3, %r5\n\
         add.u32 %r2, %r2, 1\n\
         setp.lt.u32 %p2, %r2, {blocks}\n\
         @%p2 bra floop\n\
         cvt.u64.u32 %rd3, %r1\n\
         mul.u64 %rd3, %rd3, 4\n\
         mov.u64 %rd4, {HIST_OUT}\n\
         add.u64 %rd4, %rd4, %rd3\n\
         st.global.u32 [%rd4], %r3\n\
         done:\n\
         exit\n"
    );
    let mut r = rng(0xE5);
    let mut image = MemImage::new();
    let mut counts = [0u32; HIST_BINS as usize];
    for i in 0..n {
        let v: u32 = r.gen_range(0..HIST_BINS as u32);
        image.write_u32(HIST_DATA + 4 * i, v);
        counts[v as usize] += 1;
    }
    let checks = counts
        .iter()
        .enumerate()
        .map(|(b, c)| (HIST_OUT + 4 * b as u64, *c))
        .collect();
    Workload {
        name: "hist",
        launches: vec![build(&k1), build(&k2)],
        image,
        checks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::run_kernel;

    #[test]
    fn interpreter_matches_expected_outputs() {
        for wl in all_workloads() {
            let mut mem = wl.image.clone();
            for k in &wl.launches {
                run_kernel(k, &mut mem).unwrap_or_else(|e| panic!("{}: {e}", wl.name));
            }
            for (addr, want) in &wl.checks {
                let got = mem.read_u32(*addr);
                assert_eq!(got, *want, "{} at {addr:#x}", wl.name);
            }
        }
    }
}
