use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use mpu::compiler::{compile_kernel, emit_annotated, location_report, strip_hints};
use mpu::config::{OffloadPolicy, SimConfig};
use mpu::experiments::{self, rows_to_csv, run_verified, SweepRow};
use mpu::interp;
use mpu::isa::{parse_kernel, validate_kernel, Kernel};
use mpu::mem::check::check_trace;
use mpu::mem::image::{Manifest, MemImage};
use mpu::sim::machine::run_kernel_sim;
use mpu::energy::RunReport;
use mpu::workloads::{workload, WORKLOAD_NAMES};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "mpu", about = "near-bank SIMT processor simulator and compiler backend")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile an assembly kernel: annotate locations, allocate registers,
    /// and emit the hinted kernel text
    Compile {
        /// input assembly file
        asm: PathBuf,
        /// output file (stdout if omitted)
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// config file(s) supplying register-file sizes
        #[arg(long)]
        config: Vec<PathBuf>,
    },
    /// Run a compiled kernel on the cycle model
    Run {
        /// kernel file (plain or compiler-annotated assembly)
        kernel: PathBuf,
        /// config overlay file(s), `key = value` lines
        #[arg(long)]
        config: Vec<PathBuf>,
        /// memory image manifest (JSON; raw bytes in the sibling `.bin`)
        #[arg(long)]
        mem: Option<PathBuf>,
        /// directory for report.json/report.csv and the final memory dump
        #[arg(long)]
        report: Option<PathBuf>,
        /// offload policy override
        #[arg(long)]
        policy: Option<String>,
        /// record per-instruction and DRAM command traces
        #[arg(long)]
        trace: bool,
    },
    /// Sweep a knob over the bundled workloads and print CSV
    Sweep {
        /// one of: policy, rowbuf, smem
        mode: String,
        /// workloads to sweep (default: all bundled)
        #[arg(long)]
        workload: Vec<String>,
        /// config overlay file(s)
        #[arg(long)]
        config: Vec<PathBuf>,
        /// output CSV file (stdout if omitted)
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Oracle-only checks: validate a kernel, run the reference
    /// interpreter, and audit the DRAM command trace
    Check {
        /// kernel assembly file, or a bundled workload name
        kernel: String,
        /// config overlay file(s)
        #[arg(long)]
        config: Vec<PathBuf>,
    },
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Compile { asm, out, config } => compile_cmd(&asm, out.as_deref(), &config),
        Cmd::Run { kernel, config, mem, report, policy, trace } => {
            run_cmd(&kernel, &config, mem.as_deref(), report.as_deref(), policy.as_deref(), trace)
        }
        Cmd::Sweep { mode, workload, config, out } => {
            sweep_cmd(&mode, &workload, &config, out.as_deref())
        }
        Cmd::Check { kernel, config } => check_cmd(&kernel, &config),
    }
}

fn load_config(paths: &[PathBuf]) -> Result<SimConfig> {
    let mut cfg = SimConfig::desk();
    for p in paths {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        cfg.apply_kv(&text)
            .map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?;
    }
    Ok(cfg)
}

fn load_kernel(path: &Path) -> Result<Kernel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let k = parse_kernel(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    Ok(k)
}

fn compile_cmd(asm: &Path, out: Option<&Path>, config: &[PathBuf]) -> Result<()> {
    let cfg = load_config(config)?;
    let k = strip_hints(&load_kernel(asm)?);
    let warps_sharing = (k.warps_per_block() as u64).div_ceil(cfg.subcores_per_core as u64);
    let alloc = compile_kernel(&k, cfg.far_rf_bytes, cfg.near_rf_bytes, warps_sharing.max(1))?;
    let text = emit_annotated(&alloc);
    match out {
        Some(p) => fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    let b = location_report(&alloc.loc);
    eprintln!(
        "{}: {} passes, registers {:.0}% near / {:.0}% far / {:.0}% both, \
         rf bytes per warp near {} far {}",
        asm.display(),
        alloc.loc.passes,
        b.pct_n,
        b.pct_f,
        b.pct_b,
        alloc.near_bytes_per_warp,
        alloc.far_bytes_per_warp,
    );
    Ok(())
}

fn load_image(manifest: Option<&Path>) -> Result<MemImage> {
    let Some(mpath) = manifest else { return Ok(MemImage::new()) };
    let mtext = fs::read_to_string(mpath).with_context(|| format!("reading {}", mpath.display()))?;
    let manifest: Manifest = serde_json::from_str(&mtext)
        .with_context(|| format!("parsing {}", mpath.display()))?;
    let bpath = mpath.with_extension("bin");
    let data = fs::read(&bpath).with_context(|| format!("reading {}", bpath.display()))?;
    MemImage::from_dump(&manifest, &data).map_err(|e| anyhow::anyhow!("{}: {e}", mpath.display()))
}

fn dump_image(mem: &MemImage, dir: &Path, stem: &str) -> Result<()> {
    let (manifest, data) = mem.to_dump();
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&manifest)?)?;
    fs::write(dir.join(format!("{stem}.bin")), data)?;
    Ok(())
}

fn run_cmd(
    kernel: &Path,
    config: &[PathBuf],
    mem: Option<&Path>,
    report: Option<&Path>,
    policy: Option<&str>,
    trace: bool,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(p) = policy {
        cfg.offload_policy =
            OffloadPolicy::parse(p).with_context(|| format!("unknown offload policy `{p}`"))?;
    }
    if trace {
        cfg.trace = true;
    }
    let k = strip_hints(&load_kernel(kernel)?);
    let warps_sharing = (k.warps_per_block() as u64).div_ceil(cfg.subcores_per_core as u64);
    let alloc = compile_kernel(&k, cfg.far_rf_bytes, cfg.near_rf_bytes, warps_sharing.max(1))?;
    let mut image = load_image(mem)?;
    let out = run_kernel_sim(&alloc, &cfg, &mut image)?;

    let name = kernel.file_stem().and_then(|s| s.to_str()).unwrap_or("kernel");
    let rep = RunReport::from_stats(name, &cfg, &out.stats);
    if let Some(dir) = report {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("report.json"), rep.to_json())?;
        fs::write(
            dir.join("report.csv"),
            format!("{}\n{}\n", RunReport::csv_header(), rep.csv_row()),
        )?;
        dump_image(&image, dir, "mem")?;
        if trace {
            fs::write(dir.join("trace.txt"), out.trace.join("\n"))?;
            let cmds: Vec<String> = out.cmd_trace.iter().map(|r| format!("{r:?}")).collect();
            fs::write(dir.join("dram_cmds.txt"), cmds.join("\n"))?;
        }
        eprintln!("report written to {}", dir.display());
    } else {
        println!("{}", rep.to_json());
    }
    Ok(())
}

fn pick_workloads(names: &[String]) -> Result<Vec<mpu::workloads::Workload>> {
    if names.is_empty() {
        return Ok(mpu::workloads::all_workloads());
    }
    names
        .iter()
        .map(|n| workload(n).with_context(|| format!("unknown workload `{n}` (bundled: {})", WORKLOAD_NAMES.join(", "))))
        .collect()
}

fn sweep_cmd(mode: &str, names: &[String], config: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let sweep: fn(&mpu::workloads::Workload, &SimConfig) -> Result<Vec<SweepRow>, experiments::ExpError> =
        match mode {
            "policy" => experiments::policy_sweep,
            "rowbuf" => experiments::rowbuf_sweep,
            "smem" => experiments::smem_sweep,
            other => bail!("unknown sweep mode `{other}` (expected policy, rowbuf, or smem)"),
        };
    let mut rows = Vec::new();
    for wl in pick_workloads(names)? {
        rows.extend(sweep(&wl, &cfg)?);
    }
    let csv = rows_to_csv(&rows);
    match out {
        Some(p) => fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn check_cmd(kernel: &str, config: &[PathBuf]) -> Result<()> {
    let cfg = load_config(config)?;
    // a bundled workload name checks the full launch sequence; a path
    // checks a single kernel against an initially empty image
    let wl = match workload(kernel) {
        Some(wl) => wl,
        None => {
            let k = strip_hints(&load_kernel(Path::new(kernel))?);
            let diags = validate_kernel(&k);
            if !diags.is_empty() {
                for d in &diags {
                    eprintln!("{d}");
                }
                bail!("{kernel}: {} validation error(s)", diags.len());
            }
            let mut mem = MemImage::new();
            let stats = interp::run_kernel(&k, &mut mem)?;
            println!("{kernel}: valid, interpreter retired {} instructions", stats.instructions);
            return Ok(());
        }
    };
    let run = run_verified(&wl, &cfg)?;
    let violations = check_trace(&run.cmd_trace, &cfg.timing);
    if !violations.is_empty() {
        for v in violations.iter().take(10) {
            eprintln!("{}: {:?}", v.rule, v.record);
        }
        bail!("{kernel}: {} DRAM timing violation(s)", violations.len());
    }
    println!(
        "{kernel}: image matches the interpreter, {} DRAM commands legal, {} cycles",
        run.cmd_trace.len(),
        run.stats.cycles,
    );
    Ok(())
}
