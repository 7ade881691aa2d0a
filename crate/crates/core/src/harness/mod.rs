//! Experiment sweeps, criticality variants, CSV emission, and aggregation.
//!
//! A sweep runs the full pipeline (scenario generation, structure build,
//! optimizer, metric evaluation) once per (grid point, seed, scheme) and
//! appends one row per run. Rows are produced in deterministic order even
//! though runs execute concurrently.

pub mod oracle;

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{build_structure, SchemeKind};
use crate::error::ConfigError;
use crate::metrics::{energy_efficiency_phi, objective_psi, rate_gap_mse};
use crate::netmodel::{Criticality, Scenario, SystemConfig};
use crate::qt_algo::{run, RunOptions, Solution};
use crate::structure::StructureParams;

/// Which scenario parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    /// Per-BS fronthaul capacity in Mbps.
    #[serde(rename = "fronthaul")]
    Fronthaul,
    /// SNR in dB; the noise floor is scaled so `10 log10(P_max / sigma^2)`
    /// matches the grid value.
    #[serde(rename = "snr")]
    Snr,
    /// LO-level target rate in Mbps; ME doubles it and HI quadruples it.
    #[serde(rename = "target-rates")]
    TargetRates,
    /// Objective weight alpha.
    #[serde(rename = "alpha")]
    Alpha,
}

impl std::fmt::Display for SweepParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepParam::Fronthaul => write!(f, "fronthaul"),
            SweepParam::Snr => write!(f, "snr"),
            SweepParam::TargetRates => write!(f, "target-rates"),
            SweepParam::Alpha => write!(f, "alpha"),
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fronthaul" => Ok(SweepParam::Fronthaul),
            "snr" => Ok(SweepParam::Snr),
            "target-rates" | "target_rates" | "rates" => Ok(SweepParam::TargetRates),
            "alpha" => Ok(SweepParam::Alpha),
            other => Err(format!("unknown sweep parameter '{other}'")),
        }
    }
}

/// How the optimizer sees the QoS demands; evaluation always uses the true
/// mixed demands and the true alpha.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriticalityVariant {
    Mixed,
    NoMixLo,
    NoMixMe,
    NoMixHi,
    NoCrit,
}

impl std::fmt::Display for CriticalityVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CriticalityVariant::Mixed => write!(f, "Mixed"),
            CriticalityVariant::NoMixLo => write!(f, "NoMixLO"),
            CriticalityVariant::NoMixMe => write!(f, "NoMixME"),
            CriticalityVariant::NoMixHi => write!(f, "NoMixHI"),
            CriticalityVariant::NoCrit => write!(f, "NoCrit"),
        }
    }
}

impl std::str::FromStr for CriticalityVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mixed" => Ok(CriticalityVariant::Mixed),
            "nomixlo" => Ok(CriticalityVariant::NoMixLo),
            "nomixme" => Ok(CriticalityVariant::NoMixMe),
            "nomixhi" => Ok(CriticalityVariant::NoMixHi),
            "nocrit" => Ok(CriticalityVariant::NoCrit),
            other => Err(format!("unknown criticality variant '{other}'")),
        }
    }
}

/// Replace the optimization-time config according to the variant: NoMixX
/// levels every demand at X's rate, NoCrit drops the QoS term (alpha = 0).
/// The returned config is what the optimizer sees; callers keep evaluating
/// against the original.
pub fn apply_criticality_variant(
    variant: CriticalityVariant,
    config: &SystemConfig,
) -> Result<SystemConfig, ConfigError> {
    let mut cfg = config.clone();
    match variant {
        CriticalityVariant::Mixed => {}
        CriticalityVariant::NoMixLo => {
            let v = cfg.level_rate(Criticality::Lo)?;
            cfg.desired_rates_mbps = vec![v; cfg.num_users];
        }
        CriticalityVariant::NoMixMe => {
            let v = cfg.level_rate(Criticality::Me)?;
            cfg.desired_rates_mbps = vec![v; cfg.num_users];
        }
        CriticalityVariant::NoMixHi => {
            let v = cfg.level_rate(Criticality::Hi)?;
            cfg.desired_rates_mbps = vec![v; cfg.num_users];
        }
        CriticalityVariant::NoCrit => {
            cfg.alpha = 0.0;
        }
    }
    Ok(cfg)
}

/// Derive the scenario config at one grid point.
pub fn apply_sweep_value(
    param: SweepParam,
    value: f64,
    config: &SystemConfig,
) -> SystemConfig {
    let mut cfg = config.clone();
    match param {
        SweepParam::Fronthaul => cfg.fronthaul_capacity_mbps = value,
        SweepParam::Snr => {
            cfg.noise_override_w = Some(cfg.max_power_w / 10f64.powf(value / 10.0));
        }
        SweepParam::TargetRates => {
            cfg.desired_rates_mbps = cfg
                .criticality_levels
                .iter()
                .map(|c| match c {
                    Criticality::Lo => value,
                    Criticality::Me => 2.0 * value,
                    Criticality::Hi => 4.0 * value,
                })
                .collect();
        }
        SweepParam::Alpha => cfg.alpha = value,
    }
    cfg
}

/// Sweep description: one run per (grid value, seed, scheme).
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub grid: Vec<f64>,
    pub schemes: Vec<SchemeKind>,
    pub variant: CriticalityVariant,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.grid.is_empty() || self.seeds.is_empty() || self.schemes.is_empty() {
            return Err(ConfigError::Invalid(
                "sweep needs a non-empty grid, seed list, and scheme list".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    #[serde(rename = "ok")]
    Ok,
    #[serde(rename = "degraded")]
    Degraded,
    #[serde(rename = "failed")]
    Failed,
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunStatus::Ok => write!(f, "ok"),
            RunStatus::Degraded => write!(f, "degraded"),
            RunStatus::Failed => write!(f, "failed"),
        }
    }
}

/// One sweep result row. Wall time is kept out of the CSV by default so
/// repeated sweeps stay byte-identical; pass `timing` to the writer to
/// include it.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub param: SweepParam,
    pub value: f64,
    pub seed: u64,
    pub scheme: SchemeKind,
    pub variant: CriticalityVariant,
    pub psi: f64,
    pub mse: f64,
    pub power_w: f64,
    pub phi: f64,
    pub iterations: usize,
    pub status: RunStatus,
    pub wall_ms: f64,
}

/// Outcome of one pipeline run, with the solution retained for callers that
/// need more than the row.
#[derive(Debug)]
pub struct RunRecord {
    pub row: ResultRow,
    pub solution: Option<Solution>,
}

/// Run the full pipeline once: generate the scenario from the true config,
/// optimize under the variant view, evaluate against the truth.
#[allow(clippy::too_many_arguments)]
pub fn run_single(
    true_config: &SystemConfig,
    scheme: SchemeKind,
    variant: CriticalityVariant,
    params: &StructureParams,
    opts: &RunOptions,
    param: SweepParam,
    value: f64,
) -> Result<RunRecord, ConfigError> {
    let opt_config = apply_criticality_variant(variant, true_config)?;
    let scenario = Scenario::generate(true_config);
    let structure = build_structure(scheme, &scenario.channel, &opt_config, params);
    let started = Instant::now();
    let outcome = run(&opt_config, &scenario.channel, &structure, opts);
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    let record = match outcome {
        Ok(solution) => {
            let row = ResultRow {
                param,
                value,
                seed: true_config.seed,
                scheme,
                variant,
                psi: objective_psi(&solution.precoders, &solution.rates, true_config),
                mse: rate_gap_mse(&solution.rates, true_config),
                power_w: solution.precoders.total_power(),
                phi: energy_efficiency_phi(&solution.precoders, &solution.rates, true_config),
                iterations: solution.outer_iterations,
                status: if solution.degraded { RunStatus::Degraded } else { RunStatus::Ok },
                wall_ms,
            };
            RunRecord { row, solution: Some(solution) }
        }
        Err(_) => RunRecord {
            row: ResultRow {
                param,
                value,
                seed: true_config.seed,
                scheme,
                variant,
                psi: f64::NAN,
                mse: f64::NAN,
                power_w: f64::NAN,
                phi: f64::NAN,
                iterations: 0,
                status: RunStatus::Failed,
                wall_ms,
            },
            solution: None,
        },
    };
    Ok(record)
}

/// Execute a sweep. Grid points, seeds, and schemes run as independent
/// parallel tasks; the returned rows follow the deterministic
/// (grid, seed, scheme) order regardless of scheduling.
pub fn sweep(
    spec: &SweepSpec,
    base: &SystemConfig,
    params: &StructureParams,
    opts: &RunOptions,
) -> Result<Vec<ResultRow>, ConfigError> {
    spec.validate()?;
    let mut tasks = Vec::new();
    for &value in &spec.grid {
        for &seed in &spec.seeds {
            for &scheme in &spec.schemes {
                tasks.push((value, seed, scheme));
            }
        }
    }
    let rows: Result<Vec<ResultRow>, ConfigError> = tasks
        .par_iter()
        .map(|&(value, seed, scheme)| {
            let cfg = SystemConfig { seed, ..apply_sweep_value(spec.param, value, base) };
            run_single(&cfg, scheme, spec.variant, params, opts, spec.param, value)
                .map(|rec| rec.row)
        })
        .collect();
    rows
}

/// Fixed sweep CSV schema (version 1). `wall_ms` is appended only on request.
pub fn write_rows<W: Write>(rows: &[ResultRow], out: &mut W, timing: bool) -> std::io::Result<()> {
    let mut header =
        String::from("param,value,seed,scheme,variant,psi,mse,power_w,phi,iterations,status");
    if timing {
        header.push_str(",wall_ms");
    }
    writeln!(out, "{header}")?;
    for r in rows {
        let mut line = format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.param,
            r.value,
            r.seed,
            r.scheme,
            r.variant,
            r.psi,
            r.mse,
            r.power_w,
            r.phi,
            r.iterations,
            r.status
        );
        if timing {
            line.push_str(&format!(",{}", r.wall_ms));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Aggregated series point: seed mean and sample standard deviation per
/// (param, value, scheme, variant) group.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub param: String,
    pub value: f64,
    pub scheme: String,
    pub variant: String,
    pub n: usize,
    pub psi_mean: f64,
    pub psi_std: f64,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub power_mean: f64,
    pub power_std: f64,
    pub phi_mean: f64,
    pub phi_std: f64,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    param: String,
    value: f64,
    #[allow(dead_code)]
    seed: u64,
    scheme: String,
    variant: String,
    psi: f64,
    mse: f64,
    power_w: f64,
    phi: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Aggregate a sweep CSV into per-figure series (mean and std over seeds).
/// Failed rows (NaN metrics) are dropped from the statistics.
pub fn plotdata<R: std::io::Read>(input: R) -> Result<Vec<SeriesPoint>, ConfigError> {
    let mut reader = csv::Reader::from_reader(input);
    let mut groups: std::collections::BTreeMap<(String, u64, String, String), Vec<CsvRow>> =
        std::collections::BTreeMap::new();
    for row in reader.deserialize::<CsvRow>() {
        let row = row.map_err(|e| ConfigError::Parse(format!("bad CSV row: {e}")))?;
        if !row.psi.is_finite() {
            continue;
        }
        groups
            .entry((row.param.clone(), row.value.to_bits(), row.scheme.clone(), row.variant.clone()))
            .or_default()
            .push(row);
    }
    if groups.is_empty() {
        return Err(ConfigError::Invalid("no usable rows in sweep CSV".into()));
    }
    let mut points: Vec<SeriesPoint> = groups
        .into_values()
        .map(|rows| {
            let collect = |f: fn(&CsvRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
            let (psi_mean, psi_std) = mean_std(&collect(|r| r.psi));
            let (mse_mean, mse_std) = mean_std(&collect(|r| r.mse));
            let (power_mean, power_std) = mean_std(&collect(|r| r.power_w));
            let (phi_mean, phi_std) = mean_std(&collect(|r| r.phi));
            let first = &rows[0];
            SeriesPoint {
                param: first.param.clone(),
                value: first.value,
                scheme: first.scheme.clone(),
                variant: first.variant.clone(),
                n: rows.len(),
                psi_mean,
                psi_std,
                mse_mean,
                mse_std,
                power_mean,
                power_std,
                phi_mean,
                phi_std,
            }
        })
        .collect();
    points.sort_by(|a, b| {
        (&a.param, &a.scheme, &a.variant)
            .cmp(&(&b.param, &b.scheme, &b.variant))
            .then(a.value.partial_cmp(&b.value).unwrap())
    });
    Ok(points)
}

/// Series CSV schema (version 1).
pub fn write_series<W: Write>(points: &[SeriesPoint], out: &mut W) -> std::io::Result<()> {
    writeln!(
        out,
        "param,value,scheme,variant,n,psi_mean,psi_std,mse_mean,mse_std,power_mean,power_std,phi_mean,phi_std"
    )?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            p.param,
            p.value,
            p.scheme,
            p.variant,
            p.n,
            p.psi_mean,
            p.psi_std,
            p.mse_mean,
            p.mse_std,
            p.power_mean,
            p.power_std,
            p.phi_mean,
            p.phi_std
        )?;
    }
    Ok(())
}
