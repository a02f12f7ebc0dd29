//! Evaluation: WER/CER with insertion/deletion/substitution decomposition,
//! blank-density and multi-step sweeps, the parallelism benchmark, and
//! aligned-diff rendering.

pub mod bench;
pub mod evaluate;
pub mod levenshtein;
pub mod report;
pub mod show_edits;
pub mod sweeps;

pub use bench::{parallelism_bench, BenchRow};
pub use evaluate::{evaluate, System};
pub use levenshtein::{
    brute_force_min_scripts, edit_distance_decompose, edit_script, EditCounts, EditOp,
};
pub use report::{EvalReport, UttRecord};
pub use show_edits::annotate_triplet;
pub use sweeps::{density_sweep, multistep_sweep, DensityRow, MultiStepRow};
