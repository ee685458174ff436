//! The simplified dynamic program over supply vectors.

mod cache;
mod stage;
mod tables;
mod vectors;

pub use cache::{load_tables, save_tables};
pub use stage::{stage_value, SortedReportSummary, StageDecision};
pub use tables::{
    build_value_tables, optimal_service, Backend, SolveOptions, SupplyBox, ValueTables,
    DEFAULT_ENUMERATION_BUDGET,
};
pub use vectors::{
    feasible_service_set, feasible_variety_set, fits_supply, vstar, ServiceVector, SupplyVector, VarietyVector,
};

pub(crate) use tables::{build_with_model, summary_of, ProfileSpace, StageModel};
pub(crate) use vectors::vstar_unchecked;
