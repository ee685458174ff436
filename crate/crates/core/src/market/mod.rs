//! Stochastic market primitives: the valuation grid, type, arrival and
//! supply distributions, and virtual valuations.
//!
//! Periods (`t`) and flexibility levels / varieties (`j`) are 1-based in every
//! public signature of this crate, matching how the model is usually written.

mod document;
mod regularity;

pub use document::{ConfigDocument, GridSpec, TypeSpec};
pub use regularity::{validate_config, RegularityViolation, ValidationReport};

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Probability mass functions must sum to one within this tolerance.
pub const PMF_TOLERANCE: f64 = 1e-9;
/// A tabulated CDF must reach one at the upper grid endpoint within this tolerance.
pub const CDF_END_TOLERANCE: f64 = 1e-6;
/// Slack allowed in monotonicity comparisons of tabulated quantities.
pub const MONOTONE_SLACK: f64 = 1e-12;

/// Uniform grid of `G >= 2` valuations, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct ValuationGrid {
    min: f64,
    max: f64,
    points: Vec<f64>,
}

impl ValuationGrid {
    pub fn uniform(min: f64, max: f64, len: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || min >= max {
            return Err(Error::MalformedConfig(format!(
                "grid needs finite min < max, got [{min}, {max}]"
            )));
        }
        if len < 2 {
            return Err(Error::MalformedConfig(format!(
                "grid needs at least 2 points, got {len}"
            )));
        }
        let last = (len - 1) as f64;
        let mut points: Vec<f64> = (0..len)
            .map(|i| min + (max - min) * (i as f64) / last)
            .collect();
        points[len - 1] = max;
        Ok(Self { min, max, points })
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> f64 {
        self.points[index]
    }

    /// Spacing between adjacent grid points.
    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.len() - 1) as f64
    }

    /// Index of the grid point equal to `x` (up to rounding of the grid
    /// construction itself).
    pub fn index_of(&self, x: f64) -> Result<usize> {
        if !x.is_finite() {
            return Err(Error::OffGrid { value: x });
        }
        let pos = (x - self.min) / self.step();
        let i = pos.round();
        if i < 0.0 || i > (self.len() - 1) as f64 {
            return Err(Error::OffGrid { value: x });
        }
        let i = i as usize;
        let tol = 1e-9 * (self.max - self.min);
        if (self.points[i] - x).abs() > tol {
            return Err(Error::OffGrid { value: x });
        }
        Ok(i)
    }
}

/// Conditional valuation densities and CDFs at the grid points, the
/// flexibility PMF per period, and the induced per-cell probabilities.
#[derive(Debug, Clone)]
pub struct TypeDistribution {
    flexibility: Vec<Vec<f64>>,
    pdf: Vec<Vec<Vec<f64>>>,
    cdf: Vec<Vec<Vec<f64>>>,
    cell_mass: Vec<Vec<Vec<f64>>>,
}

impl TypeDistribution {
    /// `g_t(j)`.
    pub fn flexibility(&self, t: usize, j: usize) -> f64 {
        self.flexibility[t - 1][j - 1]
    }

    /// `pi_t(x_i | j)`.
    pub fn pdf(&self, t: usize, j: usize, i: usize) -> f64 {
        self.pdf[t - 1][j - 1][i]
    }

    /// `Pi_t(x_i | j)`.
    pub fn cdf(&self, t: usize, j: usize, i: usize) -> f64 {
        self.cdf[t - 1][j - 1][i]
    }

    /// Probability that a level-`j` valuation falls in the cell of grid point `i`.
    pub fn cell_mass(&self, t: usize, j: usize, i: usize) -> f64 {
        self.cell_mass[t - 1][j - 1][i]
    }

    /// Joint probability of every type in period `t`, indexed by
    /// [`TypeId`] order (level-major, grid index minor).
    pub fn joint_masses(&self, t: usize) -> Vec<f64> {
        let g = &self.flexibility[t - 1];
        self.cell_mass[t - 1]
            .iter()
            .zip(g)
            .flat_map(|(cells, &gj)| cells.iter().map(move |&m| gj * m))
            .collect()
    }
}

/// PMF of the number of arriving consumers, per period.
#[derive(Debug, Clone)]
pub struct ArrivalDistribution {
    pmf: Vec<Vec<f64>>,
}

impl ArrivalDistribution {
    pub fn pmf(&self, t: usize) -> &[f64] {
        &self.pmf[t - 1]
    }

    /// Largest possible arrival count in period `t`.
    pub fn max_arrivals(&self, t: usize) -> usize {
        self.pmf[t - 1].len() - 1
    }
}

/// PMF of new goods per variety, per period.
#[derive(Debug, Clone)]
pub struct SupplyDistribution {
    pmf: Vec<Vec<Vec<f64>>>,
}

impl SupplyDistribution {
    pub fn pmf(&self, t: usize, j: usize) -> &[f64] {
        &self.pmf[t - 1][j - 1]
    }

    pub fn max_supply(&self, t: usize, j: usize) -> u32 {
        (self.pmf[t - 1][j - 1].len() - 1) as u32
    }

    /// Every joint supply arrival vector of period `t` with positive
    /// probability, in lexicographic order.
    pub fn outcomes(&self, t: usize) -> Vec<(Vec<u32>, f64)> {
        let mut out = vec![(Vec::new(), 1.0)];
        for pmf in &self.pmf[t - 1] {
            let mut next = Vec::with_capacity(out.len() * pmf.len());
            for (prefix, p) in &out {
                for (x, &q) in pmf.iter().enumerate() {
                    if q > 0.0 {
                        let mut v = prefix.clone();
                        v.push(x as u32);
                        next.push((v, p * q));
                    }
                }
            }
            out = next;
        }
        out
    }
}

/// A consumer type `(valuation grid index, flexibility level)` flattened
/// into one index: `(level - 1) * G + grid_index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypeId(pub usize);

/// SHA-256 of the canonical config serialization.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fingerprint(pub [u8; 32]);

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({self})")
    }
}

/// Complete, validated market description.
#[derive(Debug, Clone)]
pub struct MarketConfig {
    document: ConfigDocument,
    fingerprint: Fingerprint,
    grid: ValuationGrid,
    types: TypeDistribution,
    arrivals: ArrivalDistribution,
    supply: SupplyDistribution,
    // virtual[t-1][j-1][i]
    virtual_values: Vec<Vec<Vec<f64>>>,
    // reserve[t-1][j-1]
    reserves: Vec<Vec<Option<usize>>>,
}

fn check_pmf(what: &str, pmf: &[f64]) -> Result<()> {
    if pmf.is_empty() {
        return Err(Error::MalformedConfig(format!("{what}: empty PMF")));
    }
    if pmf.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::MalformedConfig(format!(
            "{what}: probabilities must be finite and non-negative"
        )));
    }
    let total: f64 = pmf.iter().sum();
    if (total - 1.0).abs() > PMF_TOLERANCE {
        return Err(Error::MalformedConfig(format!(
            "{what}: PMF sums to {total}, not 1"
        )));
    }
    Ok(())
}

fn check_len<T>(what: &str, v: &[T], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::MalformedConfig(format!(
            "{what}: expected {expected} entries, found {}",
            v.len()
        )));
    }
    Ok(())
}

struct Tables {
    pdf: Vec<Vec<Vec<f64>>>,
    cdf: Vec<Vec<Vec<f64>>>,
    cell_mass: Vec<Vec<Vec<f64>>>,
}

fn truncated_exponential_tables(
    grid: &ValuationGrid,
    alpha: &[f64],
    horizon: usize,
) -> Tables {
    let width = grid.max() - grid.min();
    let per_level = |a: f64| {
        // 1 - exp(-a * width), computed without cancellation
        let norm = -(-a * width).exp_m1();
        let cdf_at = |x: f64| -(-a * (x - grid.min())).exp_m1() / norm;
        let pdf: Vec<f64> = grid
            .points()
            .iter()
            .map(|&x| a * (-a * (x - grid.min())).exp() / norm)
            .collect();
        let mut cdf: Vec<f64> = grid.points().iter().map(|&x| cdf_at(x)).collect();
        *cdf.last_mut().unwrap() = 1.0;
        let mids: Vec<f64> = grid
            .points()
            .windows(2)
            .map(|w| cdf_at(0.5 * (w[0] + w[1])))
            .collect();
        (pdf, cdf, cells_from_midpoint_cdf(&mids))
    };
    let levels: Vec<_> = alpha.iter().map(|&a| per_level(a)).collect();
    type Level = (Vec<f64>, Vec<f64>, Vec<f64>);
    let pick = |f: fn(&Level) -> Vec<f64>| -> Vec<Vec<Vec<f64>>> {
        (0..horizon)
            .map(|_| levels.iter().map(f).collect())
            .collect()
    };
    Tables {
        pdf: pick(|l| l.0.clone()),
        cdf: pick(|l| l.1.clone()),
        cell_mass: pick(|l| l.2.clone()),
    }
}

/// Cell probabilities from the CDF at the `G - 1` cell boundaries; the two
/// end cells absorb everything below the first / above the last boundary.
fn cells_from_midpoint_cdf(mids: &[f64]) -> Vec<f64> {
    let mut cells = Vec::with_capacity(mids.len() + 1);
    let mut prev = 0.0;
    for &m in mids {
        cells.push(m - prev);
        prev = m;
    }
    cells.push(1.0 - prev);
    cells
}

impl MarketConfig {
    pub fn from_document(document: ConfigDocument) -> Result<Self> {
        let horizon = document.horizon;
        let k = document.varieties;
        if horizon == 0 {
            return Err(Error::MalformedConfig("horizon must be positive".into()));
        }
        if k == 0 {
            return Err(Error::MalformedConfig("varieties must be positive".into()));
        }
        let grid = ValuationGrid::uniform(document.grid.min, document.grid.max, document.grid.points)?;
        let g = grid.len();

        check_len("arrivals", &document.arrivals, horizon)?;
        for (t, pmf) in document.arrivals.iter().enumerate() {
            check_pmf(&format!("arrivals[{t}]"), pmf)?;
            if pmf.len() < 2 {
                return Err(Error::MalformedConfig(format!(
                    "arrivals[{t}]: the arrival PMF must cover at least {{0, 1}}"
                )));
            }
        }
        check_len("supply", &document.supply, horizon)?;
        for (t, per_variety) in document.supply.iter().enumerate() {
            check_len(&format!("supply[{t}]"), per_variety, k)?;
            for (j, pmf) in per_variety.iter().enumerate() {
                check_pmf(&format!("supply[{t}][{j}]"), pmf)?;
            }
        }
        let flexibility = document.types.flexibility();
        check_len("types.flexibility", flexibility, horizon)?;
        for (t, pmf) in flexibility.iter().enumerate() {
            check_len(&format!("types.flexibility[{t}]"), pmf, k)?;
            check_pmf(&format!("types.flexibility[{t}]"), pmf)?;
        }

        let tables = match &document.types {
            TypeSpec::TruncatedExponential { alpha, .. } => {
                check_len("types.alpha", alpha, k)?;
                if alpha.iter().any(|a| !a.is_finite() || *a <= 0.0) {
                    return Err(Error::MalformedConfig(
                        "types.alpha: rates must be positive and finite".into(),
                    ));
                }
                truncated_exponential_tables(&grid, alpha, horizon)
            }
            TypeSpec::Tabulated { pdf, cdf, .. } => {
                check_len("types.pdf", pdf, horizon)?;
                check_len("types.cdf", cdf, horizon)?;
                let mut cell_mass = Vec::with_capacity(horizon);
                let mut cdf_out = Vec::with_capacity(horizon);
                for t in 0..horizon {
                    check_len(&format!("types.pdf[{t}]"), &pdf[t], k)?;
                    check_len(&format!("types.cdf[{t}]"), &cdf[t], k)?;
                    let mut masses = Vec::with_capacity(k);
                    let mut cdfs = Vec::with_capacity(k);
                    for j in 0..k {
                        let (p, c) = (&pdf[t][j], &cdf[t][j]);
                        let what = format!("types[{t}][{j}]");
                        check_len(&format!("{what}.pdf"), p, g)?;
                        check_len(&format!("{what}.cdf"), c, g)?;
                        if p.iter().chain(c).any(|v| !v.is_finite()) {
                            return Err(Error::MalformedConfig(format!("{what}: non-finite entry")));
                        }
                        if p.iter().any(|&v| v < 0.0) || p[1..g - 1].iter().any(|&v| v <= 0.0) {
                            return Err(Error::MalformedConfig(format!(
                                "{what}: pdf must be non-negative and positive on the grid interior"
                            )));
                        }
                        if c[0] < 0.0 || c.windows(2).any(|w| w[1] < w[0] - MONOTONE_SLACK) {
                            return Err(Error::MalformedConfig(format!(
                                "{what}: cdf must be non-decreasing from a non-negative start"
                            )));
                        }
                        if (c[g - 1] - 1.0).abs() > CDF_END_TOLERANCE {
                            return Err(Error::MalformedConfig(format!(
                                "{what}: cdf ends at {} instead of 1",
                                c[g - 1]
                            )));
                        }
                        let mut c = c.clone();
                        c[g - 1] = 1.0;
                        // CDF at cell boundaries by linear interpolation
                        let mids: Vec<f64> = c.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
                        masses.push(cells_from_midpoint_cdf(&mids));
                        cdfs.push(c);
                    }
                    cell_mass.push(masses);
                    cdf_out.push(cdfs);
                }
                Tables { pdf: pdf.clone(), cdf: cdf_out, cell_mass }
            }
        };

        let types = TypeDistribution {
            flexibility: flexibility.to_vec(),
            pdf: tables.pdf,
            cdf: tables.cdf,
            cell_mass: tables.cell_mass,
        };
        let virtual_values: Vec<Vec<Vec<f64>>> = (0..horizon)
            .map(|t| {
                (0..k)
                    .map(|j| {
                        (0..g)
                            .map(|i| {
                                let x = grid.point(i);
                                if i == g - 1 {
                                    return x;
                                }
                                let tail = 1.0 - types.cdf[t][j][i];
                                let dens = types.pdf[t][j][i];
                                if tail <= 0.0 {
                                    x
                                } else if dens <= 0.0 {
                                    f64::NEG_INFINITY
                                } else {
                                    x - tail / dens
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let reserves = virtual_values
            .iter()
            .map(|per_t| {
                per_t
                    .iter()
                    .map(|w| w.iter().position(|&v| v >= 0.0))
                    .collect()
            })
            .collect();
        let fingerprint = Fingerprint(Sha256::digest(serde_json::to_vec(&document)?).into());
        Ok(Self {
            arrivals: ArrivalDistribution { pmf: document.arrivals.clone() },
            supply: SupplyDistribution { pmf: document.supply.clone() },
            document,
            fingerprint,
            grid,
            types,
            virtual_values,
            reserves,
        })
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        let doc: ConfigDocument = serde_json::from_str(json)
            .map_err(|e| Error::MalformedConfig(format!("config parse error: {e}")))?;
        Self::from_document(doc)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.document).expect("config document serializes")
    }

    pub fn document(&self) -> &ConfigDocument {
        &self.document
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn horizon(&self) -> usize {
        self.document.horizon
    }

    pub fn varieties(&self) -> usize {
        self.document.varieties
    }

    pub fn grid(&self) -> &ValuationGrid {
        &self.grid
    }

    pub fn types(&self) -> &TypeDistribution {
        &self.types
    }

    pub fn arrivals(&self) -> &ArrivalDistribution {
        &self.arrivals
    }

    pub fn supply(&self) -> &SupplyDistribution {
        &self.supply
    }

    pub fn check_period(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.horizon() {
            return Err(Error::PeriodOutOfRange { t, horizon: self.horizon() });
        }
        Ok(())
    }

    pub fn check_level(&self, j: usize) -> Result<()> {
        if j == 0 || j > self.varieties() {
            return Err(Error::LevelOutOfRange { level: j, varieties: self.varieties() });
        }
        Ok(())
    }

    /// Number of distinct consumer types, `k * G`.
    pub fn type_count(&self) -> usize {
        self.varieties() * self.grid.len()
    }

    pub fn type_id(&self, level: usize, index: usize) -> TypeId {
        TypeId((level - 1) * self.grid.len() + index)
    }

    /// `(level, grid index)` of a flattened type.
    pub fn type_parts(&self, id: TypeId) -> (usize, usize) {
        (id.0 / self.grid.len() + 1, id.0 % self.grid.len())
    }

    /// Largest reachable stock of each variety at the start of period `t`:
    /// the sum of the per-period supply maxima up to `t`.
    pub fn supply_caps(&self, t: usize) -> Vec<u32> {
        (1..=self.varieties())
            .map(|j| (1..=t).map(|s| self.supply.max_supply(s, j)).sum())
            .collect()
    }

    /// Virtual valuation at grid index `i` for level `j` in period `t`.
    pub fn virtual_value_at(&self, t: usize, i: usize, j: usize) -> f64 {
        self.virtual_values[t - 1][j - 1][i]
    }

    /// `w_t(x, j) = x - (1 - Pi_t(x|j)) / pi_t(x|j)` at grid value `x`.
    pub fn virtual_valuation(&self, t: usize, x: f64, j: usize) -> Result<f64> {
        self.check_period(t)?;
        self.check_level(j)?;
        let i = self.grid.index_of(x)?;
        Ok(self.virtual_value_at(t, i, j))
    }

    /// Grid index of the reserve price: the smallest grid point with a
    /// non-negative virtual valuation.
    pub fn reserve_index(&self, t: usize, j: usize) -> Result<usize> {
        self.check_period(t)?;
        self.check_level(j)?;
        self.reserves[t - 1][j - 1].ok_or(Error::NoNonnegativePoint { t, level: j })
    }

    pub fn reserve_price(&self, t: usize, j: usize) -> Result<f64> {
        Ok(self.grid.point(self.reserve_index(t, j)?))
    }

    /// Grid index of the smallest grid point whose virtual valuation is at
    /// least `value`.
    pub fn inverse_virtual_index(&self, t: usize, value: f64, j: usize) -> Result<usize> {
        self.check_period(t)?;
        self.check_level(j)?;
        self.virtual_values[t - 1][j - 1]
            .iter()
            .position(|&w| w >= value)
            .ok_or(Error::NoSolution { t, level: j, value })
    }

    pub fn inverse_virtual(&self, t: usize, value: f64, j: usize) -> Result<f64> {
        Ok(self.grid.point(self.inverse_virtual_index(t, value, j)?))
    }
}

/// The two-variety style worked instance generalized to `k = alpha.len()`
/// levels: Bernoulli(`p`) arrivals, uniform flexibility, truncated
/// exponential valuations on `[0, 1]`, one good of every variety available in
/// period 1 and no supply afterwards.
pub fn build_example_config(
    alpha: &[f64],
    p: f64,
    horizon: usize,
    grid_points: usize,
) -> Result<MarketConfig> {
    if alpha.is_empty() {
        return Err(Error::MalformedConfig("alpha must be non-empty".into()));
    }
    if alpha.iter().any(|a| !a.is_finite() || *a <= 0.0) || alpha.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::MalformedConfig(
            "alpha must be positive and strictly increasing".into(),
        ));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::MalformedConfig(format!("arrival probability {p} outside [0, 1]")));
    }
    let k = alpha.len();
    let document = ConfigDocument {
        horizon,
        varieties: k,
        grid: GridSpec { min: 0.0, max: 1.0, points: grid_points },
        arrivals: vec![vec![1.0 - p, p]; horizon],
        supply: (1..=horizon)
            .map(|t| if t == 1 { vec![vec![0.0, 1.0]; k] } else { vec![vec![1.0]; k] })
            .collect(),
        types: TypeSpec::TruncatedExponential {
            alpha: alpha.to_vec(),
            flexibility: vec![vec![1.0 / k as f64; k]; horizon],
        },
    };
    MarketConfig::from_document(document)
}
