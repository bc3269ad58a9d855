//! Std companion of `gfree-core`: scenario configs, pilot-frame files,
//! the seeded Monte-Carlo harness, result tables and reports.

pub mod config;
pub mod frame_io;
pub mod harness;
pub mod report;
pub mod table;
