//! Command-line front end.
//!
//! Exit codes: 0 success, 1 other failure, 2 regularity failure, 3 malformed
//! or unreadable config, 4 state space too large, 5 table cache does not
//! match the config, 6 verification failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dp::{build_value_tables, load_tables, save_tables, Backend, SolveOptions, DEFAULT_ENUMERATION_BUDGET};
use crate::error::Error;
use crate::example::{example_config, worked_example_from, EXAMPLE_GRID};
use crate::market::{validate_config, MarketConfig};
use crate::oracle::{run_verification, Fault, VerifyOptions};
use crate::simulator::{myopic_expected_surplus, write_trace_csv, AuditProbe, Simulator};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_IRREGULAR: i32 = 2;
pub const EXIT_MALFORMED: i32 = 3;
pub const EXIT_TOO_LARGE: i32 = 4;
pub const EXIT_MISMATCH: i32 = 5;
pub const EXIT_VERIFY_FAILED: i32 = 6;

/// Environment variable that overrides `--seed`.
pub const SEED_ENV: &str = "FLEXMARKET_SEED";

#[derive(Debug, Parser)]
#[command(name = "flexmarket", version, about = "Optimal dynamic auctions for flexible consumers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Exact,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    VstarOffByOne,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the regularity conditions of a config.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve the dynamic program and write the table cache.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        #[arg(long, value_enum, default_value = "exact")]
        backend: BackendArg,
        /// Report-set draws per table entry (Monte Carlo backend).
        #[arg(long, default_value_t = 10_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Profiles allowed per table entry (exact backend).
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_BUDGET)]
        budget: u64,
    },
    /// Simulate episodes, estimate revenue and audit incentives.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        replications: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Evenly spaced valuations probed by the audits; 0 skips them.
        #[arg(long, default_value_t = 21)]
        audit_points: usize,
        /// Episodes written to the trace CSV.
        #[arg(long, default_value_t = 100)]
        trace_episodes: u64,
        /// Profiles allowed per entry for the exact myopic baseline.
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_BUDGET)]
        budget: u64,
    },
    /// Check the solver against brute-force oracles on random instances.
    Verify {
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Matrices per report set and profiles per table entry.
        #[arg(long, default_value_t = 1_000_000)]
        budget: u64,
        /// Fix the number of varieties.
        #[arg(long)]
        varieties: Option<usize>,
        #[arg(long, value_enum)]
        inject_fault: Option<FaultArg>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reproduce the two-variety example.
    Example {
        #[arg(long, default_value_t = EXAMPLE_GRID)]
        grid: usize,
        /// Also write the example's config file.
        #[arg(long)]
        config_out: Option<PathBuf>,
        /// Write the results as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Everything needed to reproduce an output; embedded in every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: &'static str,
    pub config: Option<String>,
    pub cache: Option<String>,
    pub seed: Option<u64>,
    pub backend: Option<Backend>,
    pub out: Option<String>,
    pub replications: Option<u64>,
    pub budget: Option<u64>,
    pub tool_version: &'static str,
}

impl RunManifest {
    fn new(subcommand: &'static str) -> Self {
        Self {
            subcommand,
            config: None,
            cache: None,
            seed: None,
            backend: None,
            out: None,
            replications: None,
            budget: None,
            tool_version: env!("CARGO_PKG_VERSION"),
        }
    }

    fn to_json(&self) -> String {
        serde_json::to_string(self).expect("manifest serializes")
    }
}

fn display(p: &Path) -> Option<String> {
    Some(p.display().to_string())
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::MalformedConfig(_) | Error::Json(_) => EXIT_MALFORMED,
        Error::StateSpaceTooLarge { .. } => EXIT_TOO_LARGE,
        Error::TableMismatch { .. } => EXIT_MISMATCH,
        _ => EXIT_FAILURE,
    }
}

fn fail(e: Error) -> i32 {
    eprintln!("error: {e}");
    exit_code(&e)
}

fn load_config(path: &Path) -> Result<MarketConfig, i32> {
    MarketConfig::from_path(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        EXIT_MALFORMED
    })
}

/// `FLEXMARKET_SEED`, when set, wins over the flag.
fn effective_seed(flag: u64) -> Result<u64, i32> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s.trim().parse().map_err(|_| {
            eprintln!("error: {SEED_ENV}={s:?} is not an unsigned integer");
            EXIT_FAILURE
        }),
        Err(_) => Ok(flag),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> crate::error::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct WithManifest<'a, T: Serialize> {
    manifest: &'a RunManifest,
    #[serde(flatten)]
    body: T,
}

fn cmd_validate(config: &Path) -> i32 {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let mut manifest = RunManifest::new("validate");
    manifest.config = display(config);
    let report = validate_config(&cfg);
    #[derive(Serialize)]
    struct Body<'a> {
        passed: bool,
        violations: &'a [crate::market::RegularityViolation],
        scope: &'a str,
    }
    let body = Body { passed: report.passed, violations: &report.violations, scope: report.scope };
    println!("{}", serde_json::to_string_pretty(&WithManifest { manifest: &manifest, body }).unwrap());
    if report.passed {
        EXIT_OK
    } else {
        EXIT_IRREGULAR
    }
}

fn cmd_solve(config: &Path, cache: &Path, backend: BackendArg, samples: u64, seed: u64, budget: u64) -> i32 {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let seed = match effective_seed(seed) {
        Ok(s) => s,
        Err(code) => return code,
    };
    if !validate_config(&cfg).passed {
        eprintln!("warning: config fails the regularity conditions; the mechanism may not be optimal");
    }
    let options = match backend {
        BackendArg::Exact => SolveOptions { backend: Backend::Exact, budget },
        BackendArg::Mc => SolveOptions { backend: Backend::MonteCarlo { samples, seed }, budget },
    };
    let tables = match build_value_tables(&cfg, &options) {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    if let Err(e) = save_tables(&tables, cache) {
        return fail(e);
    }
    let mut manifest = RunManifest::new("solve");
    manifest.config = display(config);
    manifest.cache = display(cache);
    manifest.seed = options.backend.seed();
    manifest.backend = Some(options.backend);
    manifest.budget = Some(budget);

    #[derive(Serialize)]
    struct Entry {
        t: usize,
        y: Vec<u32>,
        value: f64,
        std_error: f64,
    }
    #[derive(Serialize)]
    struct Body {
        fingerprint: String,
        entries: usize,
        min_value: f64,
        max_value: f64,
        expected_total: f64,
        #[serde(skip_serializing_if = "Vec::is_empty")]
        values: Vec<Entry>,
    }
    let (min_value, max_value) = tables.extremes();
    let mut values = Vec::new();
    if tables.entry_count() <= 256 {
        for t in 1..=tables.horizon() {
            for y in tables.supply_box(t).iter() {
                values.push(Entry { t, value: tables.value(t, &y), std_error: tables.std_error(t, &y), y: y.0 });
            }
        }
    }
    let body = Body {
        fingerprint: tables.fingerprint().to_string(),
        entries: tables.entry_count(),
        min_value,
        max_value,
        expected_total: tables.expected_total(&cfg),
        values,
    };
    println!("{}", serde_json::to_string_pretty(&WithManifest { manifest: &manifest, body }).unwrap());
    EXIT_OK
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    config: &Path,
    cache: &Path,
    replications: u64,
    seed: u64,
    out: &Path,
    audit_points: usize,
    trace_episodes: u64,
    budget: u64,
) -> i32 {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let seed = match effective_seed(seed) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let tables = match load_tables(cache, &cfg) {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    let mut manifest = RunManifest::new("simulate");
    manifest.config = display(config);
    manifest.cache = display(cache);
    manifest.seed = Some(seed);
    manifest.backend = Some(tables.backend());
    manifest.out = display(out);
    manifest.replications = Some(replications);
    manifest.budget = Some(budget);
    let result = (|| -> crate::error::Result<()> {
        std::fs::create_dir_all(out)?;
        write_json(&out.join("manifest.json"), &manifest)?;
        let sim = Simulator::new(&cfg, &tables)?;
        let est = sim.estimate_revenue(replications, seed)?;
        let optimal = tables.expected_total(&cfg);
        let myopic = match myopic_expected_surplus(&cfg, budget) {
            Ok(v) => Some(v),
            Err(Error::StateSpaceTooLarge { .. }) => None,
            Err(e) => return Err(e),
        };
        let mut f = std::io::BufWriter::new(std::fs::File::create(out.join("revenue.csv"))?);
        writeln!(f, "# {}", manifest.to_json())?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["metric", "mean", "std_error", "samples"])?;
        for (name, m) in [("revenue", est.revenue), ("virtual_surplus", est.virtual_surplus)] {
            w.write_record([name.to_string(), m.mean.to_string(), m.std_error.to_string(), m.samples.to_string()])?;
        }
        w.write_record(["optimal_expected_virtual_surplus".into(), optimal.to_string(), "0".into(), "0".into()])?;
        if let Some(v) = myopic {
            // baseline for comparison only; not the optimal mechanism
            w.write_record(["myopic_baseline_expected_virtual_surplus".into(), v.to_string(), "0".into(), "0".into()])?;
        }
        w.flush()?;

        let traces = (0..trace_episodes.min(replications))
            .map(|r| sim.sample_episode(Simulator::episode_seed(seed, r)))
            .collect::<crate::error::Result<Vec<_>>>()?;
        write_trace_csv(out.join("trace.csv"), &manifest.to_json(), &traces)?;

        if audit_points > 0 {
            let probe = AuditProbe::uniform(&cfg, audit_points);
            let report = sim.audit(&probe, replications, seed)?;
            write_json(&out.join("audit.json"), &WithManifest { manifest: &manifest, body: &report })?;
            println!(
                "audit: worst gain {:.3e} (bic {}), min truthful utility {:.3e} (ir {})",
                report.worst_gain.map_or(0.0, |d| d.gain),
                if report.bic_passed { "pass" } else { "FAIL" },
                report.ir_min.map_or(0.0, |u| u.utility),
                if report.ir_passed { "pass" } else { "FAIL" },
            );
        }
        println!(
            "revenue {:.6} ± {:.6}, virtual surplus {:.6} ± {:.6}, optimal {:.6}",
            est.revenue.mean, est.revenue.std_error, est.virtual_surplus.mean, est.virtual_surplus.std_error, optimal
        );
        Ok(())
    })();
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => fail(e),
    }
}

fn cmd_verify(
    instances: usize,
    seed: u64,
    budget: u64,
    varieties: Option<usize>,
    fault: Option<FaultArg>,
    out: Option<&Path>,
) -> i32 {
    let seed = match effective_seed(seed) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let options = VerifyOptions {
        instances,
        seed,
        budget,
        varieties,
        fault: fault.map(|FaultArg::VstarOffByOne| Fault::VstarOffByOne),
    };
    let report = match run_verification(&options) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let mut manifest = RunManifest::new("verify");
    manifest.seed = Some(seed);
    manifest.budget = Some(budget);
    manifest.out = out.and_then(display);
    let doc = WithManifest { manifest: &manifest, body: &report };
    match out {
        Some(path) => {
            if let Err(e) = write_json(path, &doc) {
                return fail(e);
            }
        }
        None => println!("{}", serde_json::to_string_pretty(&doc).unwrap()),
    }
    for s in &report.summary {
        eprintln!("{:<26} {} ({} cases)", s.name, if s.passed { "pass" } else { "FAIL" }, s.cases);
    }
    match &report.first_failure {
        None => EXIT_OK,
        Some(f) => {
            eprintln!(
                "verification failed: {} on instance {} (seed {}): {}",
                f.name,
                f.instance,
                f.instance_seed,
                f.detail.as_deref().unwrap_or("")
            );
            EXIT_VERIFY_FAILED
        }
    }
}

fn cmd_example(grid: usize, config_out: Option<&Path>, out: Option<&Path>) -> i32 {
    let result = (|| -> crate::error::Result<()> {
        let cfg = example_config(grid)?;
        if let Some(p) = config_out {
            std::fs::write(p, cfg.to_json_pretty() + "\n")?;
        }
        let tables = build_value_tables(&cfg, &SolveOptions::exact())?;
        let ex = worked_example_from(&cfg, &tables)?;
        println!("{:<30} {:>12} {:>10} {:>12}", "quantity", "computed", "published", "delta");
        for r in &ex.rows {
            println!("{:<30} {:>12.6} {:>10.3} {:>+12.6}", r.name, r.value, r.published, r.delta);
        }
        println!("C_2((1,1)) = {:.9}, C_2((1,0)) = {:.9}", tables.value(2, &[1, 1]), tables.value(2, &[1, 0]));
        if let Some(p) = out {
            let mut manifest = RunManifest::new("example");
            manifest.backend = Some(Backend::Exact);
            manifest.out = display(p);
            write_json(p, &WithManifest { manifest: &manifest, body: &ex })?;
        }
        Ok(())
    })();
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => fail(e),
    }
}

/// Parses `args` and runs the subcommand, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_FAILURE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Validate { config } => cmd_validate(&config),
        Command::Solve { config, cache, backend, samples, seed, budget } => {
            cmd_solve(&config, &cache, backend, samples, seed, budget)
        }
        Command::Simulate { config, cache, replications, seed, out, audit_points, trace_episodes, budget } => {
            cmd_simulate(&config, &cache, replications, seed, &out, audit_points, trace_episodes, budget)
        }
        Command::Verify { instances, seed, budget, varieties, inject_fault, out } => {
            cmd_verify(instances, seed, budget, varieties, inject_fault, out.as_deref())
        }
        Command::Example { grid, config_out, out } => cmd_example(grid, config_out.as_deref(), out.as_deref()),
    }
}
