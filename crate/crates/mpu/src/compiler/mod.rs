//! Compiler backend: branch re-convergence analysis, location
//! annotation, and location-constrained register allocation.

pub mod annotate;
pub mod cfg;
pub mod regalloc;

pub use annotate::{
    annotate_locations, apply_hints, location_report, strip_hints, InstrLoc, LocationBreakdown,
    LocationTable, RegLoc,
};
pub use cfg::{analyze_branches, immediate_postdominators, ReconvergenceMap};
pub use regalloc::{allocate_registers, AllocatedKernel, CompileError};

use crate::isa::{validate_kernel, Kernel};

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("kernel failed validation:\n{0}")]
    Invalid(String),
    #[error(transparent)]
    Compile(#[from] CompileError),
}

/// Full backend pipeline over a validated kernel. The returned kernel
/// carries `@N`/`@F` hints on every instruction.
pub fn compile_kernel(
    k: &Kernel,
    far_rf_bytes: u64,
    near_rf_bytes: u64,
    warps_sharing_rf: u64,
) -> Result<AllocatedKernel, BackendError> {
    let diags = validate_kernel(k);
    if !diags.is_empty() {
        let msg = diags
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("\n");
        return Err(BackendError::Invalid(msg));
    }
    let reconv = analyze_branches(k);
    let loc = annotate_locations(k);
    let hinted = apply_hints(k, &loc);
    let mut alloc = allocate_registers(&hinted, &loc, &reconv, far_rf_bytes, near_rf_bytes, warps_sharing_rf)?;
    alloc.kernel = hinted;
    Ok(alloc)
}

/// Annotated output text: a register-location header block followed by
/// the hinted kernel body.
pub fn emit_annotated(alloc: &AllocatedKernel) -> String {
    let mut out = String::new();
    for (reg, loc) in &alloc.loc.reg_loc {
        let tag = match loc {
            RegLoc::N => "N",
            RegLoc::F => "F",
            RegLoc::B => "B",
            RegLoc::U => "U",
        };
        out.push_str(&format!(".reg {reg} {tag}\n"));
    }
    out.push_str(&crate::isa::print_kernel(&alloc.kernel));
    out
}
