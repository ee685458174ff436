//! JSON configuration file schema.

use serde::{Deserialize, Serialize};

/// Valuation grid as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

/// Consumer type distribution, either a named parametric family or raw
/// tables evaluated at every grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum TypeSpec {
    /// Valuations of level `j` consumers follow an exponential law with rate
    /// `alpha[j-1]` truncated to the grid interval, identical in every period.
    TruncatedExponential {
        alpha: Vec<f64>,
        /// `flexibility[t-1][j-1]` is the probability of level `j` in period `t`.
        flexibility: Vec<Vec<f64>>,
    },
    /// `pdf[t-1][j-1][i]` and `cdf[t-1][j-1][i]` at grid point `i`.
    Tabulated {
        flexibility: Vec<Vec<f64>>,
        pdf: Vec<Vec<Vec<f64>>>,
        cdf: Vec<Vec<Vec<f64>>>,
    },
}

impl TypeSpec {
    pub fn flexibility(&self) -> &[Vec<f64>] {
        match self {
            TypeSpec::TruncatedExponential { flexibility, .. } => flexibility,
            TypeSpec::Tabulated { flexibility, .. } => flexibility,
        }
    }
}

/// Top-level config document. Unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub horizon: usize,
    pub varieties: usize,
    pub grid: GridSpec,
    /// `arrivals[t-1][n]` = probability that `n` consumers arrive in period `t`.
    pub arrivals: Vec<Vec<f64>>,
    /// `supply[t-1][j-1][x]` = probability that `x` goods of variety `j` arrive in period `t`.
    pub supply: Vec<Vec<Vec<f64>>>,
    pub types: TypeSpec,
}
