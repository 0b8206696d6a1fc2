use mpu::config::SimConfig;
use mpu::experiments::*;
use mpu::workloads::all_workloads;

#[test]
#[ignore]
fn probe() {
    let cfg = SimConfig::desk();
    for wl in all_workloads() {
        let rows = policy_sweep(&wl, &cfg).unwrap_or_else(|e| panic!("{}: {e}", wl.name));
        print!("{}", rows_to_csv(&rows));
        let rows = rowbuf_sweep(&wl, &cfg).unwrap();
        print!("{}", rows_to_csv(&rows));
        let rows = smem_sweep(&wl, &cfg).unwrap();
        print!("{}", rows_to_csv(&rows));
    }
}
