//! Per-run solution report: structured text (TOML) and CSV row forms.

use serde::{Deserialize, Serialize};

use crate::baselines::SchemeKind;
use crate::metrics::{
    energy_efficiency_phi, objective_psi, rate_gap_mse, FeasibilityReport, RateAllocation,
};
use crate::netmodel::SystemConfig;
use crate::qt_algo::Solution;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionReport {
    pub seed: u64,
    pub scheme: SchemeKind,
    pub psi: f64,
    pub mse: f64,
    pub power_w: f64,
    pub phi: f64,
    pub rates: RateAllocation,
    pub outer_iterations: usize,
    pub degraded: bool,
    pub feasibility: FeasibilityReport,
}

impl SolutionReport {
    pub fn from_solution(solution: &Solution, config: &SystemConfig, scheme: SchemeKind) -> Self {
        SolutionReport {
            seed: config.seed,
            scheme,
            psi: objective_psi(&solution.precoders, &solution.rates, config),
            mse: rate_gap_mse(&solution.rates, config),
            power_w: solution.precoders.total_power(),
            phi: energy_efficiency_phi(&solution.precoders, &solution.rates, config),
            rates: solution.rates.clone(),
            outer_iterations: solution.outer_iterations,
            degraded: solution.degraded,
            feasibility: solution.feasibility,
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("report serialization cannot fail")
    }

    /// CSV header matching [`Self::to_csv_row`].
    pub fn csv_header(num_users: usize) -> String {
        let mut cols = vec![
            "seed".to_string(),
            "scheme".to_string(),
            "psi".to_string(),
            "mse".to_string(),
            "power_w".to_string(),
            "phi".to_string(),
        ];
        for k in 0..num_users {
            cols.push(format!("rate_u{k}"));
        }
        cols.join(",")
    }

    /// One CSV row: seed, scheme, psi, mse, power, phi, per-user total rates.
    pub fn to_csv_row(&self) -> String {
        let mut cols = vec![
            self.seed.to_string(),
            self.scheme.to_string(),
            self.psi.to_string(),
            self.mse.to_string(),
            self.power_w.to_string(),
            self.phi.to_string(),
        ];
        for k in 0..self.rates.private.len() {
            cols.push(self.rates.total(k).to_string());
        }
        cols.join(",")
    }
}
