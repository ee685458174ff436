//! Brute-force ground truth for the simplified dynamic program.

mod constructive;
mod matrices;
mod monotonicity;
mod verify;

pub use constructive::{constructive_allocation, transform_t};
pub use matrices::{brute_stage_value, build_brute_tables, enumerate_feasible_matrices, DEFAULT_MATRIX_BUDGET};
pub use monotonicity::{check_monotonicity, MonotonicityKind, MonotonicityViolation};
pub use verify::{
    random_instance, run_verification, CheckResult, CheckSummary, Fault, VerifyOptions, VerifyReport, APPENDIX_C,
    APPENDIX_F, LEMMA5, LEMMA6, LEMMA7, LEMMA8, MASTER,
};
