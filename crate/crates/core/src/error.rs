use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed config: {0}")]
    MalformedConfig(String),

    #[error("valuation {value} is not a grid point")]
    OffGrid { value: f64 },

    #[error("period {t} outside 1..={horizon}")]
    PeriodOutOfRange { t: usize, horizon: usize },

    #[error("flexibility level {level} outside 1..={varieties}")]
    LevelOutOfRange { level: usize, varieties: usize },

    #[error("virtual valuation is negative on the whole grid (t={t}, level={level})")]
    NoNonnegativePoint { t: usize, level: usize },

    #[error("no grid point has virtual valuation >= {value} (t={t}, level={level})")]
    NoSolution { t: usize, level: usize, value: f64 },

    #[error("service vector {u:?} is infeasible for supply {y:?}")]
    InfeasibleU { u: Vec<u32>, y: Vec<u32> },

    #[error("exact enumeration needs {count} profiles per entry, budget is {budget}")]
    StateSpaceTooLarge { count: u128, budget: u64 },

    #[error("value tables were built for config {found}, expected {expected}")]
    TableMismatch { expected: String, found: String },

    #[error("consumer {consumer} is served but its threshold {threshold} exceeds its report {report}")]
    InconsistentAllocation {
        consumer: usize,
        threshold: f64,
        report: f64,
    },

    #[error("supply of variety {variety} would become negative")]
    NegativeSupply { variety: usize },

    #[error("enumeration of {count} candidates exceeds budget {budget}")]
    BudgetExceeded { count: u128, budget: u64 },

    #[error("transformation not applicable: v already equals v*")]
    NotApplicable,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("corrupt table cache: {0}")]
    CorruptCache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
