//! Checkpoints, config files, report emission and the experiment drivers.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod io;
pub mod report;

pub use checkpoint::{checkpoint_from_json, checkpoint_to_json, load_checkpoint, save_checkpoint, CheckpointMeta};
pub use commands::{
    affine_test, cmd_affine_test, cmd_evaluate, cmd_oracle, cmd_solve, cmd_train, solve_instance, SolveMode,
    SolveOptions,
};
pub use config::{load_train_config, parse_train_config, render_train_config};
pub use report::{AffineReport, AffineRow, RunReport, RunRow};
