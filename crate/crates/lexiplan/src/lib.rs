//! Text formats, instance generators and the `lexiplan` command line on top
//! of [`lexiplan_core`].

pub mod cli;
pub mod format;
pub mod generate;
pub mod report;
pub mod verify;

pub use format::{emit_instance, parse_instance, parse_policy, DocumentError, InstanceDocument};
pub use generate::{generate_hazard_grid, generate_random, GridParams, HazardSpec, RandomParams};
