pub mod tsv;
pub mod noc;
pub mod lsu;
pub mod core;
pub mod machine;
