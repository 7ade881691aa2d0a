//! The outer iterative algorithm: initialize feasible precoders, then
//! alternate closed-form auxiliary updates with conic subproblem solves
//! until the objective settles.
//!
//! Each subproblem's feasible set is contained in the true feasible set
//! (the quadratic-transform surrogate lower-bounds the SINR), and the
//! previous iterate stays feasible after the auxiliary update, so the
//! objective sequence is non-increasing up to solver tolerance.

use std::collections::BTreeMap;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use crate::conic::{
    build_subproblem, solve, GammaValues, SolveStatus, SolverSettings,
};
use crate::error::RunError;
use crate::metrics::{
    self, check_feasibility, common_interference, inner, objective_psi, private_interference,
    FeasibilityReport, PrecoderSet, RateAllocation,
};
use crate::netmodel::{noise_power, stage_rng, ChannelState, RngStage, SystemConfig};
use crate::structure::{ClusterSets, RsmaStructure};
use crate::Cx;

/// Quadratic-transform auxiliary variables: one complex scalar per private
/// stream and one per (owner, decoder) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxVariables {
    pub private: Vec<Cx>,
    pub common: BTreeMap<(usize, usize), Cx>,
}

impl AuxVariables {
    pub fn zeros(structure: &RsmaStructure, num_users: usize) -> Self {
        AuxVariables {
            private: vec![Cx::new(0.0, 0.0); num_users],
            common: structure
                .common_pairs()
                .into_iter()
                .map(|p| (p, Cx::new(0.0, 0.0)))
                .collect(),
        }
    }
}

/// Closed-form optimal auxiliaries for fixed precoders:
/// `u = (w^H h) / (sigma^2 + interference)`, with the interference sets of
/// the corresponding SINR.
pub fn update_aux(
    w: &PrecoderSet,
    h: &ChannelState,
    s: &RsmaStructure,
    noise_w: f64,
) -> AuxVariables {
    let kn = h.num_users();
    let private = (0..kn)
        .map(|k| {
            let v = inner(h.agg(k), &w.private[k]).conj();
            v / (noise_w + private_interference(k, w, h, s))
        })
        .collect();
    let common = s
        .common_pairs()
        .into_iter()
        .map(|(i, k)| {
            let v = inner(h.agg(k), &w.common[i]).conj();
            let denom = noise_w
                + common_interference(i, k, w, h, s)
                    .expect("common pair comes from the structure");
            ((i, k), v / denom)
        })
        .collect();
    AuxVariables { private, common }
}

/// Precoder initialization mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Maximum-ratio transmission toward each served user (deterministic).
    Mrt,
    /// Complex Gaussian directions, for robustness studies.
    Random,
}

/// Initialize precoders masked by the clusters, scaled so every BS transmits
/// at exactly its power budget, split uniformly across its served streams.
pub fn init_precoders(
    h: &ChannelState,
    clusters: &ClusterSets,
    config: &SystemConfig,
    mode: InitMode,
) -> PrecoderSet {
    let l = config.antennas_per_bs;
    let mut w = PrecoderSet::zeros(config.num_users, config.num_bs * l);
    let mut rng: ChaCha8Rng = stage_rng(config.seed, RngStage::Init);
    for b in 0..config.num_bs {
        let n_streams = clusters.private[b].len() + clusters.common[b].len();
        if n_streams == 0 {
            continue;
        }
        let per_stream = config.max_power_w / n_streams as f64;
        let mut fill = |target: &mut Vec<Cx>, k: usize| {
            let block: Vec<Cx> = match mode {
                InitMode::Mrt => h.link(b, k).to_vec(),
                InitMode::Random => (0..l)
                    .map(|_| crate::netmodel::standard_complex_gaussian(&mut rng))
                    .collect(),
            };
            let norm = block.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if norm > 0.0 {
                let scale = per_stream.sqrt() / norm;
                for (i, c) in block.iter().enumerate() {
                    target[b * l + i] = c * scale;
                }
            }
        };
        for &k in &clusters.private[b] {
            fill(&mut w.private[k], k);
        }
        for &k in &clusters.common[b] {
            fill(&mut w.common[k], k);
        }
    }
    w
}

/// One row of the iterate log.
#[derive(Debug, Clone)]
pub struct IterEntry {
    pub iteration: usize,
    pub psi: f64,
    pub mse: f64,
    pub power_w: f64,
    pub status: String,
    pub wall_ms: f64,
}

/// Per-iteration objective trace.
#[derive(Debug, Clone, Default)]
pub struct IterateLog {
    pub entries: Vec<IterEntry>,
}

impl IterateLog {
    /// CSV export: `iteration,psi,mse,power_w,status`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("iteration,psi,mse,power_w,status\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.iteration, e.psi, e.mse, e.power_w, e.status
            ));
        }
        out
    }

    /// Largest relative objective increase between consecutive iterations
    /// (negative when strictly descending throughout).
    pub fn max_relative_increase(&self) -> f64 {
        self.entries
            .windows(2)
            .map(|w| (w[1].psi - w[0].psi) / w[0].psi.abs().max(1.0))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Outer-loop controls.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Relative objective-change threshold for convergence.
    pub eps_rel: f64,
    /// Outer iteration cap (V_max).
    pub max_outer_iters: usize,
    pub init: InitMode,
    pub solver: SolverSettings,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            eps_rel: 1e-4,
            max_outer_iters: 50,
            init: InitMode::Mrt,
            solver: SolverSettings::default(),
        }
    }
}

/// Final iterate plus diagnostics.
#[derive(Debug, Clone)]
pub struct Solution {
    pub precoders: PrecoderSet,
    pub rates: RateAllocation,
    pub gamma: GammaValues,
    pub psi: f64,
    pub log: IterateLog,
    pub feasibility: FeasibilityReport,
    /// Set when a solver failure cut the run short; the best earlier
    /// iterate is returned instead of aborting.
    pub degraded: bool,
    /// Number of subproblem solves performed.
    pub outer_iterations: usize,
}

/// SINR auxiliaries equal to the true SINRs of the given precoders.
fn tight_gamma(w: &PrecoderSet, h: &ChannelState, s: &RsmaStructure, noise_w: f64) -> GammaValues {
    let kn = h.num_users();
    GammaValues {
        private: (0..kn).map(|k| metrics::sinr_private(k, w, h, s, noise_w)).collect(),
        common: s
            .common_pairs()
            .into_iter()
            .map(|(i, k)| ((i, k), metrics::sinr_common(i, k, w, h, s, noise_w).unwrap()))
            .collect(),
    }
}

/// Run the iterative algorithm on one scenario.
pub fn run(
    config: &SystemConfig,
    h: &ChannelState,
    structure: &RsmaStructure,
    opts: &RunOptions,
) -> Result<Solution, RunError> {
    let noise_w = noise_power(config);
    let w0 = init_precoders(h, &structure.clusters, config, opts.init);
    let r0 = RateAllocation::zeros(config.num_users);
    let psi0 = objective_psi(&w0, &r0, config);

    let mut log = IterateLog::default();
    log.entries.push(IterEntry {
        iteration: 0,
        psi: psi0,
        mse: metrics::rate_gap_mse(&r0, config),
        power_w: w0.total_power(),
        status: "init".into(),
        wall_ms: 0.0,
    });

    let mut current = (w0.clone(), r0.clone());
    let mut best = (psi0, w0.clone(), r0, tight_gamma(&w0, h, structure, noise_w));
    let mut psi_prev = psi0;
    let mut degraded = false;
    let mut iterations = 0usize;

    for t in 1..=opts.max_outer_iters {
        let started = Instant::now();
        let u = update_aux(&current.0, h, structure, noise_w);
        let program = build_subproblem(h, structure, &u, config)?;
        let result = solve(&program, &opts.solver);
        iterations = t;

        // A breakdown without a certified optimum can still hand back a
        // usable iterate: keep it when it is feasible by our own measure
        // and descends, otherwise fall back to the best solution so far.
        let salvaged = if result.status == SolveStatus::NumericalFailure {
            result.solution.as_ref().is_some_and(|m| {
                let scale = 1.0 + program.rows.iter().fold(0f64, |acc, r| acc.max(r.rhs.abs()));
                program.cone_violation(&m.raw) <= 1e-6 * scale
                    && objective_psi(&m.precoders, &m.rates, config) <= psi_prev
            })
        } else {
            false
        };

        if result.status == SolveStatus::Optimal || salvaged {
            let mapped = result.solution.expect("accepted result carries a point");
            let psi = objective_psi(&mapped.precoders, &mapped.rates, config);
            log.entries.push(IterEntry {
                iteration: t,
                psi,
                mse: metrics::rate_gap_mse(&mapped.rates, config),
                power_w: mapped.precoders.total_power(),
                status: if salvaged { "stalled-accepted".into() } else { "optimal".into() },
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            });
            if psi < best.0 {
                best = (psi, mapped.precoders.clone(), mapped.rates.clone(), mapped.gamma.clone());
            }
            current = (mapped.precoders, mapped.rates);
            let delta = (psi - psi_prev).abs();
            let converged = delta <= opts.eps_rel * psi_prev.abs().max(1.0);
            psi_prev = psi;
            if converged {
                break;
            }
        } else if result.status == SolveStatus::Infeasible {
            if t == 1 {
                return Err(RunError::InitializationInfeasible);
            }
            log.entries.push(IterEntry {
                iteration: t,
                psi: f64::NAN,
                mse: f64::NAN,
                power_w: f64::NAN,
                status: "infeasible".into(),
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            });
            degraded = true;
            break;
        } else {
            log.entries.push(IterEntry {
                iteration: t,
                psi: f64::NAN,
                mse: f64::NAN,
                power_w: f64::NAN,
                status: "numerical-failure".into(),
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            });
            degraded = true;
            break;
        }
    }

    let (psi, w, r, gamma) = best;
    let feasibility = check_feasibility(&w, &r, h, structure, config);
    Ok(Solution {
        precoders: w,
        rates: r,
        gamma,
        psi,
        log,
        feasibility,
        degraded,
        outer_iterations: iterations,
    })
}

/// Fixed-point and tightness verdicts for a candidate solution.
#[derive(Debug, Clone, Copy)]
pub struct StationarityReport {
    /// Relative objective change after one extra auxiliary update + solve.
    pub psi_delta_rel: f64,
    /// Worst relative gap between the solution's `gamma` and the true SINRs
    /// over rate-carrying streams.
    pub gamma_gap_rel: f64,
    pub fixed_point: bool,
    pub sinr_tightness: bool,
}

impl StationarityReport {
    pub fn passed(&self) -> bool {
        self.fixed_point && self.sinr_tightness
    }
}

/// Streams carrying less rate than this are skipped by the tightness check
/// (their auxiliaries are unconstrained at the optimum).
const RATE_FLOOR_MBPS: f64 = 1e-6;

/// Verify the fixed-point conditions of a converged solution: (a) one more
/// auxiliary update plus subproblem solve moves the objective by at most
/// `tol` (relative), and (b) the SINR auxiliaries match the true SINRs of
/// the returned precoders on every rate-carrying stream.
pub fn stationarity_check(
    solution: &Solution,
    h: &ChannelState,
    structure: &RsmaStructure,
    config: &SystemConfig,
    tol: f64,
    solver: &SolverSettings,
) -> Result<StationarityReport, RunError> {
    let noise_w = noise_power(config);
    let u = update_aux(&solution.precoders, h, structure, noise_w);
    let program = build_subproblem(h, structure, &u, config)?;
    let result = solve(&program, solver);
    let psi_delta_rel = match (result.status, &result.solution) {
        (SolveStatus::Optimal, Some(mapped)) => {
            let psi_new = objective_psi(&mapped.precoders, &mapped.rates, config);
            (psi_new - solution.psi).abs() / solution.psi.abs().max(1.0)
        }
        _ => f64::INFINITY,
    };

    let mut gamma_gap_rel = 0f64;
    for k in 0..config.num_users {
        if solution.rates.private[k] > RATE_FLOOR_MBPS {
            let truth = metrics::sinr_private(k, &solution.precoders, h, structure, noise_w);
            let gap = (solution.gamma.private[k] - truth).abs() / truth.abs().max(1.0);
            gamma_gap_rel = gamma_gap_rel.max(gap);
        }
    }
    for i in 0..config.num_users {
        if !structure.has_common_stream(i) {
            continue;
        }
        if solution.rates.common_stream_rate(i, structure) <= RATE_FLOOR_MBPS {
            continue;
        }
        // The rate-determining quantity is the minimum over decoders.
        let mut min_gamma = f64::INFINITY;
        let mut min_truth = f64::INFINITY;
        for &k in &structure.decode.decoders[i] {
            min_gamma = min_gamma.min(solution.gamma.common[&(i, k)]);
            min_truth = min_truth.min(
                metrics::sinr_common(i, k, &solution.precoders, h, structure, noise_w).unwrap(),
            );
        }
        let gap = (min_gamma - min_truth).abs() / min_truth.abs().max(1.0);
        gamma_gap_rel = gamma_gap_rel.max(gap);
    }

    Ok(StationarityReport {
        psi_delta_rel,
        gamma_gap_rel,
        fixed_point: psi_delta_rel <= tol,
        sinr_tightness: gamma_gap_rel <= tol,
    })
}
