pub mod addr;
pub mod bank;
pub mod check;
pub mod image;
pub mod smem;
