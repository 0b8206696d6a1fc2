pub mod compiler;
pub mod config;
pub mod energy;
pub mod exec;
pub mod experiments;
pub mod interp;
pub mod isa;
pub mod mem;
pub mod sim;
pub mod workloads;

/// Seed for randomized tests; override with MPU_SEED for reproduction.
pub fn test_seed() -> u64 {
    std::env::var("MPU_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0x5EED_F00D_2026)
}
