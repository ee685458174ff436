//! The two-variety, two-period instance with truncated exponential
//! valuations and its headline quantities.

use serde::Serialize;

use crate::dp::{build_value_tables, SolveOptions, SupplyVector, ValueTables};
use crate::error::{Error, Result};
use crate::market::{build_example_config, MarketConfig};
use crate::mechanism::Mechanism;

pub const EXAMPLE_ALPHA: [f64; 2] = [2.0, 3.0];
pub const EXAMPLE_ARRIVAL_PROB: f64 = 0.5;
pub const EXAMPLE_HORIZON: usize = 2;
pub const EXAMPLE_GRID: usize = 1001;

/// One reported quantity next to its published approximation.
#[derive(Debug, Clone, Serialize)]
pub struct ExampleRow {
    pub name: &'static str,
    pub value: f64,
    pub published: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WorkedExample {
    pub grid_points: usize,
    /// Reserve price of level 1 in period 2.
    pub reserve_1_2: f64,
    /// Reserve price of level 2 in period 2.
    pub reserve_2_2: f64,
    /// Opportunity cost of serving a level-1 consumer in period 1 from (1, 1).
    pub rho_1_1: f64,
    /// Opportunity cost of serving a level-2 consumer in period 1 from (1, 1).
    pub rho_2_1: f64,
    /// Price of a lone level-1 consumer in period 1.
    pub threshold_1_1: f64,
    /// Price of a lone level-2 consumer in period 1.
    pub threshold_2_1: f64,
    /// Price of a lone level-1 consumer in period 2.
    pub threshold_1_2: f64,
    pub rows: Vec<ExampleRow>,
}

pub fn example_config(grid_points: usize) -> Result<MarketConfig> {
    build_example_config(&EXAMPLE_ALPHA, EXAMPLE_ARRIVAL_PROB, EXAMPLE_HORIZON, grid_points)
}

/// Computes the example's quantities from already-solved tables.
pub fn worked_example_from(cfg: &MarketConfig, tables: &ValueTables) -> Result<WorkedExample> {
    let mech = Mechanism::new(cfg, tables)?;
    let full = SupplyVector(vec![1, 1]);
    let lone = |t: usize, level: usize| -> Result<f64> {
        mech.payment_threshold(t, &[], 1, level, &full)?
            .price()
            .ok_or(Error::NoSolution { t, level, value: f64::NAN })
    };
    let reserve_1_2 = cfg.reserve_price(2, 1)?;
    let reserve_2_2 = cfg.reserve_price(2, 2)?;
    let rho_1_1 = tables.continuation_gap(1, &full, 1)?;
    let rho_2_1 = tables.continuation_gap(1, &full, 2)?;
    let threshold_1_1 = lone(1, 1)?;
    let threshold_2_1 = lone(1, 2)?;
    let threshold_1_2 = lone(2, 1)?;
    let row = |name, value: f64, published: f64| ExampleRow { name, value, published, delta: value - published };
    let rows = vec![
        row("reserve_price(level 1, t 2)", reserve_1_2, 0.36),
        row("reserve_price(level 2, t 2)", reserve_2_2, 0.29),
        row("rho(level 1, t 1)", rho_1_1, 0.037),
        row("rho(level 2, t 1)", rho_2_1, 0.0),
        row("threshold(level 1, t 1)", threshold_1_1, 0.39),
        row("threshold(level 2, t 1)", threshold_2_1, 0.29),
    ];
    Ok(WorkedExample {
        grid_points: cfg.grid().len(),
        reserve_1_2,
        reserve_2_2,
        rho_1_1,
        rho_2_1,
        threshold_1_1,
        threshold_2_1,
        threshold_1_2,
        rows,
    })
}

/// Builds the instance on a `grid_points` grid, solves it exactly and
/// reports its quantities.
pub fn worked_example(grid_points: usize) -> Result<WorkedExample> {
    let cfg = example_config(grid_points)?;
    let tables = build_value_tables(&cfg, &SolveOptions::exact())?;
    worked_example_from(&cfg, &tables)
}
