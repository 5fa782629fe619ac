//! Library half of the `souschef` binary, shared with the acceptance suite.

pub mod demo;
pub mod scenario;
pub mod survey;

/// Fixture directory bundled with the core crate.
pub const DEFAULT_FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/fixtures");

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    /// An invariant or scenario expectation did not hold.
    pub const FAILED: u8 = 1;
    /// Bad arguments, unreadable input, missing fixtures.
    pub const SETUP: u8 = 2;
}
