//! Library surface of the map-construction CLI: configuration, pipeline
//! commands, and run-directory artifacts. The binary in `main.rs` is a thin
//! argument-parsing shell over these functions so integration tests can
//! drive the exact same code paths in-process.

pub mod artifacts;
pub mod commands;
pub mod config;

pub use commands::{
    cmd_baselines, cmd_export, cmd_generate, cmd_grad_check, cmd_run, cmd_sweep, ExportKind,
    METHODS,
};
pub use config::{RunConfig, SceneSpec, CONFIG_VERSION};

/// Process exit codes: 0 success, 2 usage, 3 I/O, 4 parse, 5 training.
pub fn exit_code_for(err: &rfmap_core::Error) -> i32 {
    match err {
        rfmap_core::Error::InvalidArgument(_) => 2,
        rfmap_core::Error::Io(_) => 3,
        rfmap_core::Error::Parse { .. } => 4,
        rfmap_core::Error::Training(_) => 5,
    }
}
