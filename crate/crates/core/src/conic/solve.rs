//! Interior-point solution of assembled programs.
//!
//! The program representation maps one-to-one onto the standard conic form
//! `min q^T x  s.t.  A x + s = b, s in K`; Clarabel's primal-dual method
//! does the numerical work. The contract here is accuracy, not mechanism:
//! `Optimal` means primal feasibility and the duality gap are within the
//! configured tolerances, anything weaker is reported as a failure and the
//! caller decides what to keep.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::metrics::{PrecoderSet, RateAllocation};
use crate::Cx;

use super::program::{ConeKind, ConicProgram};

/// Accuracy knobs for the interior-point solve.
#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    /// Primal/dual feasibility tolerance.
    pub feas_tol: f64,
    /// Absolute and relative duality-gap tolerance.
    pub gap_tol: f64,
    /// Interior-point iteration cap.
    pub max_iters: u32,
    /// Accuracy actually required of a returned point: stalled terminations
    /// whose achieved residuals and relative gap beat this are still
    /// `Optimal`; anything worse is a failure.
    pub accept_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        // Targets two orders tighter than accepted; accepted two orders
        // tighter than the outer loop's 1e-4 convergence test.
        SolverSettings { feas_tol: 1e-8, gap_tol: 1e-8, max_iters: 200, accept_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

/// Primal values mapped back to domain quantities.
#[derive(Debug, Clone)]
pub struct MappedSolution {
    pub precoders: PrecoderSet,
    pub rates: RateAllocation,
    pub gamma: GammaValues,
    pub raw: Vec<f64>,
}

/// SINR auxiliaries of the subproblem solution.
#[derive(Debug, Clone)]
pub struct GammaValues {
    pub private: Vec<f64>,
    pub common: std::collections::BTreeMap<(usize, usize), f64>,
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub status: SolveStatus,
    /// Present for `Optimal` and for `NumericalFailure` (best iterate).
    pub solution: Option<MappedSolution>,
    /// Epigraph objective at the returned point (NaN when absent).
    pub objective: f64,
    pub iterations: u32,
}

/// Solve an assembled program to the prescribed accuracy.
pub fn solve(program: &ConicProgram, settings: &SolverSettings) -> SolverResult {
    let n = program.num_vars;
    let m = program.num_rows();

    // Column-wise assembly; rows are visited in order so each column stays
    // sorted by row index.
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut rhs = Vec::with_capacity(m);
    for (r, row) in program.rows.iter().enumerate() {
        for &(c, v) in &row.coeffs {
            cols[c].push((r, v));
        }
        rhs.push(row.rhs);
    }
    let mut colptr = Vec::with_capacity(n + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for col in &cols {
        for &(r, v) in col {
            rowval.push(r);
            nzval.push(v);
        }
        colptr.push(rowval.len());
    }
    let a = CscMatrix::new(m, n, colptr, rowval, nzval);
    let p = CscMatrix::zeros((n, n));

    let cones: Vec<SupportedConeT<f64>> = program
        .blocks
        .iter()
        .map(|b| match b.kind {
            ConeKind::Zero => SupportedConeT::ZeroConeT(b.len),
            ConeKind::Nonneg => SupportedConeT::NonnegativeConeT(b.len),
            ConeKind::SecondOrder => SupportedConeT::SecondOrderConeT(b.len),
            ConeKind::Exponential => SupportedConeT::ExponentialConeT(),
        })
        .collect();

    let clarabel_settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_feas(settings.feas_tol)
        .tol_gap_abs(settings.gap_tol)
        .tol_gap_rel(settings.gap_tol)
        .max_iter(settings.max_iters)
        .build()
        .expect("static solver settings are valid");

    let mut solver =
        match DefaultSolver::new(&p, &program.objective, &a, &rhs, &cones, clarabel_settings) {
            Ok(s) => s,
            Err(_) => {
                return SolverResult {
                    status: SolveStatus::NumericalFailure,
                    solution: None,
                    objective: f64::NAN,
                    iterations: 0,
                }
            }
        };
    solver.solve();

    let sol = &solver.solution;
    let status = match sol.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        SolverStatus::AlmostSolved
        | SolverStatus::InsufficientProgress
        | SolverStatus::MaxIterations
        | SolverStatus::MaxTime => {
            // The solver's scaled residual measure can stall while the
            // returned point is fine; certify it directly: our own cone
            // violation plus the solver's dual bound.
            let rhs_scale = 1.0 + rhs.iter().fold(0f64, |m, v| m.max(v.abs()));
            let violation = program.cone_violation(&sol.x);
            let gap_rel = (program.objective_value(&sol.x) - sol.obj_val_dual).abs()
                / sol.obj_val.abs().max(1.0);
            if violation <= settings.accept_tol * rhs_scale && gap_rel <= settings.accept_tol {
                SolveStatus::Optimal
            } else {
                SolveStatus::NumericalFailure
            }
        }
        _ => SolveStatus::NumericalFailure,
    };
    let keep_point = status != SolveStatus::Infeasible;
    let solution = keep_point.then(|| map_solution(program, &solver.solution.x));
    let objective = solution
        .as_ref()
        .map_or(f64::NAN, |s| program.objective_value(&s.raw));
    SolverResult { status, solution, objective, iterations: solver.solution.iterations }
}

/// Reconstruct domain quantities from the flat primal vector.
pub fn map_solution(program: &ConicProgram, x: &[f64]) -> MappedSolution {
    let layout = &program.layout;
    let kn = layout.num_users;
    let l = layout.antennas;
    let len = layout.num_bs * l;

    let mut precoders = PrecoderSet::zeros(kn, len);
    for (k, stream) in layout.private_streams.iter().enumerate() {
        fill_stream(&mut precoders.private[k], stream, l, x);
    }
    for (i, stream) in layout.common_streams.iter().enumerate() {
        if let Some(stream) = stream {
            fill_stream(&mut precoders.common[i], stream, l, x);
        }
    }

    let private_rates: Vec<f64> = layout.rate_private.iter().map(|&i| x[i].max(0.0)).collect();
    let common_rates: Vec<f64> = match &layout.shares {
        Some(shares) => shares.iter().map(|&i| x[i].max(0.0)).collect(),
        None => layout
            .rate_common
            .iter()
            .map(|rc| rc.map_or(0.0, |i| x[i].max(0.0)))
            .collect(),
    };

    let gamma = GammaValues {
        private: layout.gamma_private.iter().map(|&i| x[i]).collect(),
        common: layout.gamma_common.iter().map(|(&p, &i)| (p, x[i])).collect(),
    };

    MappedSolution {
        precoders,
        rates: RateAllocation { private: private_rates, common: common_rates },
        gamma,
        raw: x.to_vec(),
    }
}

fn fill_stream(target: &mut [Cx], stream: &super::build::StreamVars, antennas: usize, x: &[f64]) {
    for (p, &b) in stream.serving.iter().enumerate() {
        for l in 0..antennas {
            let (re, im) = stream.coeff(p, l, antennas);
            target[b * antennas + l] = Cx::new(x[re], x[im]);
        }
    }
}
