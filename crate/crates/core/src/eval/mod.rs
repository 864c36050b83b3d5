//! Leave-one-subject-out evaluation of the calibration schemes, report
//! assembly and paired significance testing.

mod loso;
mod report;
mod scheme;
mod task;
mod wilcoxon;

pub use loso::{
    build_pool, check_hygiene, run_loso, sweep_calibration, sweep_sources, Tracked, TrialId,
};
pub use report::{
    aggregate, emit_report, read_cells, significance, subject_means, write_run_manifest,
    Aggregate, Cell, EvaluationReport, FoldFailure, ReportFormat, Significance, CSV_COLUMNS,
};
pub use scheme::SchemeId;
pub use task::{Cohort, Member, RunOptions, TaskName, TaskSpec};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonMethod, WilcoxonResult, EXACT_MAX_N, MIN_PAIRS};
