//! Simulation designs, repetition studies that tally discovery rates, and
//! longest-run classification of per-time-point prediction sequences.

mod designs;
mod eeg;
mod runs;
mod study;

pub use designs::{generate, SimData, SimDesign, SimTag, EQUICORRELATION, EX2_BINARY_INACTIVE};
pub use eeg::{generate_eeg, run_eeg_cv, EegCvOptions, EegCvResult, EegSpec, EegTensor, FoldResult};
pub use runs::{longest_run_classify, longest_run_classify_with, TieBreak};
pub use study::{
    grid, run_study, run_study_with, CellResult, GridCell, RepFailure, StudyOptions, StudyProfile, StudyResult,
};
