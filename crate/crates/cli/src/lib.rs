//! Library surface of the `gcttt` command-line tool; the binary in
//! `main.rs` is a thin argument-parsing wrapper so tests can drive the
//! exact command implementations.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod svg;

pub use commands::{
    cmd_ablate, cmd_eval, cmd_flops, cmd_freq_sweep, cmd_gen_data, cmd_pretrain, init_workers,
};
pub use config::RunConfig;

use gcttt_core::Error;

/// Documented process exit codes.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Shape(_) => 1,
        Error::Missing(_) => 2,
        Error::Numeric { .. } => 3,
        Error::Integrity(_) => 4,
        Error::Io(_) => 5,
    }
}
