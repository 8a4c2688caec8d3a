//! On-disk formats. Everything here is deterministic: identical inputs
//! produce byte-identical files, which the CLI determinism guarantee
//! depends on.

pub mod logs;
pub mod pfm;
pub mod ply;
pub mod ppm;
pub mod scene;

pub use logs::{
    drift_csv, metrics_csv, metrics_json, training_log_csv, write_drift_table, write_metrics,
    write_training_log, TrainingLogRow,
};
pub use pfm::{read_depth, read_pfm, write_depth, write_pfm};
pub use ply::{read_ply, write_ply};
pub use ppm::{read_ppm, write_ppm};
pub use scene::{read_scene, write_scene};
