//! Command-line interface: single runs, experiment sweeps, oracle
//! comparisons, and CSV aggregation.
//!
//! Exit codes: 0 success, 1 configuration error, 2 solver failure,
//! 3 infeasible.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use rsma_cran::baselines::{build_structure, SchemeKind};
use rsma_cran::error::{ConfigError, RunError};
use rsma_cran::harness::oracle::{oracle_grid_search, OracleOptions};
use rsma_cran::harness::{
    apply_criticality_variant, plotdata, sweep, write_rows, write_series, CriticalityVariant,
    SweepParam, SweepSpec,
};
use rsma_cran::netmodel::{Scenario, SystemConfig};
use rsma_cran::qt_algo::{run, RunOptions};
use rsma_cran::report::SolutionReport;
use rsma_cran::structure::StructureParams;

const EXIT_CONFIG: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(name = "rsma-cran", about = "Downlink C-RAN resource allocation under RSMA", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Scenario config: a TOML file path, or the presets `default` /
    /// `full`.
    #[arg(long, default_value = "default")]
    config: String,
    /// Seed override (beats RSMA_CRAN_SEED and the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Private serving-cluster size (s_p).
    #[arg(long, default_value_t = 2)]
    private_cluster_size: usize,
    /// Common serving-cluster size (s_c); defaults to all BSs.
    #[arg(long)]
    common_cluster_size: Option<usize>,
    /// Cross decoders per common message (d); defaults to all users.
    #[arg(long)]
    decode_set_size: Option<usize>,
    /// Outer convergence threshold (relative objective change).
    #[arg(long, default_value_t = 1e-4)]
    eps_rel: f64,
    /// Outer iteration cap.
    #[arg(long, default_value_t = 50)]
    max_outer_iters: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one scenario and emit a solution report (TOML).
    Run {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "rsma")]
        scheme: String,
        #[arg(long, default_value = "Mixed")]
        variant: String,
        /// Report path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Iterate-log CSV path.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Dump the generated RSMA structure (TOML) for reproducibility.
        #[arg(long)]
        dump_structure: Option<PathBuf>,
    },
    /// Run a parameter sweep and emit one CSV row per (value, seed, scheme).
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Swept parameter: fronthaul | snr | target-rates | alpha.
        #[arg(long)]
        param: String,
        /// Comma-separated grid values.
        #[arg(long)]
        grid: String,
        /// Comma-separated schemes.
        #[arg(long, default_value = "rsma,tin,scm")]
        schemes: String,
        #[arg(long, default_value = "Mixed")]
        variant: String,
        /// Number of seeds (1..=N); ignored when --seed-list is given.
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        /// Explicit comma-separated seed list.
        #[arg(long)]
        seed_list: Option<String>,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Append wall-clock timing (breaks byte-for-byte reproducibility).
        #[arg(long)]
        timing: bool,
    },
    /// Compare the optimizer against the brute-force oracle on a small
    /// instance.
    Oracle {
        #[command(flatten)]
        common: CommonArgs,
        /// Scheme: tin | scm (oracle-eligible structures).
        #[arg(long, default_value = "tin")]
        scheme: String,
        /// Grid points per power dimension.
        #[arg(long, default_value_t = 33)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate a sweep CSV into per-figure series (mean/std over seeds).
    Plotdata {
        /// Input sweep CSV.
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, message: message.into() }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::config(e.to_string())
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        let code = match e {
            RunError::InitializationInfeasible => EXIT_INFEASIBLE,
            _ => EXIT_SOLVER,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::config(format!("io error: {e}"))
    }
}

fn load_config(name: &str, seed_flag: Option<u64>) -> Result<SystemConfig, CliError> {
    let mut cfg = match name {
        "default" | "desk" => SystemConfig::desk_default(),
        "full" => SystemConfig::full_scale(),
        path => SystemConfig::from_file(Path::new(path))?,
    };
    if let Ok(env_seed) = std::env::var("RSMA_CRAN_SEED") {
        cfg.seed = env_seed
            .parse()
            .map_err(|_| CliError::config(format!("RSMA_CRAN_SEED is not a u64: {env_seed}")))?;
    }
    if let Some(seed) = seed_flag {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_out(path: PathBuf) -> PathBuf {
    match std::env::var("RSMA_CRAN_OUT_DIR") {
        Ok(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path,
    }
}

fn write_or_stdout(path: Option<PathBuf>, contents: &str) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let p = resolve_out(p);
            if let Some(parent) = p.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(p, contents)?;
        }
        None => {
            std::io::stdout().write_all(contents.as_bytes())?;
        }
    }
    Ok(())
}

fn parse_list<T: FromStr>(text: &str, what: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| CliError::config(format!("bad {what} '{s}': {e}"))))
        .collect()
}

fn structure_params(common: &CommonArgs) -> StructureParams {
    StructureParams {
        private_cluster_size: common.private_cluster_size,
        common_cluster_size: common.common_cluster_size.unwrap_or(usize::MAX),
        decode_set_size: common.decode_set_size.unwrap_or(usize::MAX),
    }
}

fn run_options(common: &CommonArgs) -> RunOptions {
    RunOptions {
        eps_rel: common.eps_rel,
        max_outer_iters: common.max_outer_iters,
        ..RunOptions::default()
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { common, scheme, variant, out, log, dump_structure } => {
            let cfg = load_config(&common.config, common.seed)?;
            let scheme = SchemeKind::from_str(&scheme).map_err(CliError::config)?;
            let variant = CriticalityVariant::from_str(&variant).map_err(CliError::config)?;
            let params = structure_params(&common);
            let opts = run_options(&common);

            let opt_cfg = apply_criticality_variant(variant, &cfg)?;
            let scenario = Scenario::generate(&cfg);
            let structure = build_structure(scheme, &scenario.channel, &opt_cfg, &params);
            if let Some(p) = dump_structure {
                std::fs::write(resolve_out(p), structure.to_toml_string())?;
            }
            let solution = run(&opt_cfg, &scenario.channel, &structure, &opts)?;
            let report = SolutionReport::from_solution(&solution, &cfg, scheme);
            write_or_stdout(out, &report.to_toml_string())?;
            if let Some(p) = log {
                std::fs::write(resolve_out(p), solution.log.to_csv_string())?;
            }
            Ok(())
        }
        Command::Sweep {
            common,
            param,
            grid,
            schemes,
            variant,
            seeds,
            seed_list,
            out,
            timing,
        } => {
            let cfg = load_config(&common.config, common.seed)?;
            let param = SweepParam::from_str(&param).map_err(CliError::config)?;
            let grid: Vec<f64> = parse_list(&grid, "grid value")?;
            let schemes: Vec<SchemeKind> = parse_list(&schemes, "scheme")?;
            let variant = CriticalityVariant::from_str(&variant).map_err(CliError::config)?;
            let seeds: Vec<u64> = match seed_list {
                Some(list) => parse_list(&list, "seed")?,
                None => (1..=seeds as u64).collect(),
            };
            let spec = SweepSpec { param, grid, schemes, variant, seeds };
            let rows = sweep(&spec, &cfg, &structure_params(&common), &run_options(&common))?;
            let mut buf = Vec::new();
            write_rows(&rows, &mut buf, timing)?;
            write_or_stdout(out, &String::from_utf8(buf).expect("csv is utf-8"))?;
            Ok(())
        }
        Command::Oracle { common, scheme, points, out } => {
            let cfg = load_config(&common.config, common.seed)?;
            let scheme = SchemeKind::from_str(&scheme).map_err(CliError::config)?;
            let params = structure_params(&common);
            let opts = run_options(&common);
            let scenario = Scenario::generate(&cfg);
            let structure = build_structure(scheme, &scenario.channel, &cfg, &params);
            let oracle = oracle_grid_search(
                &cfg,
                &scenario.channel,
                &structure,
                &OracleOptions { points_per_dim: points, refine_rounds: 1 },
            )
            .map_err(|e| CliError::config(e.to_string()))?;
            let solution = run(&cfg, &scenario.channel, &structure, &opts)?;
            let report = SolutionReport::from_solution(&solution, &cfg, scheme);
            let text = format!(
                "seed = {}\nscheme = \"{}\"\npsi_algorithm = {}\npsi_oracle = {}\nratio = {}\noracle_powers = {:?}\n",
                cfg.seed,
                scheme,
                report.psi,
                oracle.psi,
                report.psi / oracle.psi.max(f64::MIN_POSITIVE),
                oracle.powers,
            );
            write_or_stdout(out, &text)?;
            Ok(())
        }
        Command::Plotdata { input, out } => {
            let file = std::fs::File::open(&input)
                .map_err(|e| CliError::config(format!("cannot open {}: {e}", input.display())))?;
            let points = plotdata(file)?;
            let mut buf = Vec::new();
            write_series(&points, &mut buf)?;
            write_or_stdout(out, &String::from_utf8(buf).expect("csv is utf-8"))?;
            Ok(())
        }
    }
}
