//! Brute-force verification oracle for small instances.
//!
//! Exhaustive grid search over per-stream transmit powers with an exact
//! inner rate assignment. Eligible instances have L = 1 and every stream
//! served by exactly one BS, so only `|h|^2 p` enters any SINR and precoder
//! phases drop out; the structure must be TIN or the single shared common
//! stream. The oracle shares no code with the conic path: SINRs are formed
//! directly and the inner rate problem is solved by active-set enumeration
//! over a tiny ridge-regularized quadratic program.

use crate::error::DomainError;
use crate::metrics::rate_bound;
use crate::netmodel::{noise_power, ChannelState, SystemConfig};
use crate::structure::RsmaStructure;

/// Oracle controls: coarse grid resolution and local refinement rounds.
#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    pub points_per_dim: usize,
    pub refine_rounds: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { points_per_dim: 33, refine_rounds: 1 }
    }
}

/// Best grid point found.
#[derive(Debug, Clone)]
pub struct OracleResult {
    /// Global grid minimum of the objective.
    pub psi: f64,
    /// Per-stream powers in watts: K private entries, plus the shared
    /// common stream last when present.
    pub powers: Vec<f64>,
    /// Private rates at the optimum (Mbps).
    pub private_rates: Vec<f64>,
    /// Per-user common shares at the optimum (Mbps); empty for TIN.
    pub shares: Vec<f64>,
    /// Power-grid spacing of the final (finest) scan, in watts. The true
    /// optimum can undercut `psi` by about the power weight times this
    /// spacing per stream.
    pub final_spacing_w: f64,
}

/// Instance description after eligibility checks.
struct Instance {
    num_users: usize,
    /// Serving BS per stream: K private streams, optional common last.
    stream_bs: Vec<usize>,
    has_common: bool,
    /// `gain[j][k]`: received power gain of stream `j` at user `k`.
    gain: Vec<Vec<f64>>,
    noise_w: f64,
    tau: f64,
    num_bs: usize,
}

const MAX_USERS: usize = 3;
const MAX_BS: usize = 2;

fn eligibility(
    config: &SystemConfig,
    h: &ChannelState,
    structure: &RsmaStructure,
) -> Result<Instance, DomainError> {
    if config.antennas_per_bs != 1 {
        return Err(DomainError("oracle needs L = 1".into()));
    }
    if config.num_users > MAX_USERS || config.num_bs > MAX_BS {
        return Err(DomainError(format!(
            "instance too large for the oracle (K <= {MAX_USERS}, B <= {MAX_BS})"
        )));
    }
    let single_bs = |serving: Vec<usize>, what: &str| -> Result<usize, DomainError> {
        if serving.len() != 1 {
            return Err(DomainError(format!(
                "oracle needs single-BS streams, {what} served by {}",
                serving.len()
            )));
        }
        Ok(serving[0])
    };
    let mut stream_bs = Vec::new();
    for k in 0..config.num_users {
        stream_bs.push(single_bs(structure.clusters.serving_private(k), "a private stream")?);
    }
    let has_common = match structure.shared_common {
        None => {
            if !structure.is_tin() {
                return Err(DomainError(
                    "oracle handles TIN or single-common structures only".into(),
                ));
            }
            false
        }
        Some(owner) => {
            if structure.decode.decoders[owner].len() != config.num_users {
                return Err(DomainError("shared stream must be decoded by all users".into()));
            }
            stream_bs.push(single_bs(structure.clusters.serving_common(owner), "the shared stream")?);
            true
        }
    };
    let gain = stream_bs
        .iter()
        .map(|&b| (0..config.num_users).map(|k| h.link(b, k)[0].norm_sqr()).collect())
        .collect();
    Ok(Instance {
        num_users: config.num_users,
        stream_bs,
        has_common,
        gain,
        noise_w: noise_power(config),
        tau: config.bandwidth_mhz,
        num_bs: config.num_bs,
    })
}

impl Instance {
    /// Achievable bounds at a power vector: per-user private bounds plus the
    /// common-stream cap (minimum over users).
    fn bounds(&self, p: &[f64]) -> (Vec<f64>, f64) {
        let kn = self.num_users;
        let private: Vec<f64> = (0..kn)
            .map(|k| {
                let interference: f64 =
                    (0..kn).filter(|&j| j != k).map(|j| self.gain[j][k] * p[j]).sum();
                let sinr = self.gain[k][k] * p[k] / (self.noise_w + interference);
                rate_bound(self.tau, sinr)
            })
            .collect();
        let common_cap = if self.has_common {
            (0..kn)
                .map(|k| {
                    let interference: f64 = (0..kn).map(|j| self.gain[j][k] * p[j]).sum();
                    let sinr = self.gain[kn][k] * p[kn] / (self.noise_w + interference);
                    rate_bound(self.tau, sinr)
                })
                .fold(f64::INFINITY, f64::min)
        } else {
            0.0
        };
        (private, common_cap)
    }
}

/// Dense linear solve via Gaussian elimination with partial pivoting.
/// Returns `None` on (near-)singular systems.
#[allow(clippy::needless_range_loop)]
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[row][j] -= factor * a[col][j];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in row + 1..n {
            acc -= a[row][j] * x[j];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Exact minimizer of `sum_k (e_k^T y - d_k)^2` over `G y <= g` via
/// enumeration of active sets on the ridge-regularized problem. `e` holds
/// one selector row per user; the ridge (1e-9) only breaks degeneracy and
/// the reported objective is the unregularized one.
fn min_rate_qp(e: &[Vec<f64>], d: &[f64], g_rows: &[Vec<f64>], g_rhs: &[f64]) -> (f64, Vec<f64>) {
    let n = e[0].len();
    let m = g_rows.len();
    const RIDGE: f64 = 1e-9;
    const FEAS_TOL: f64 = 1e-7;

    // H = sum e e^T + ridge, q = sum d e.
    let mut h = vec![vec![0.0; n]; n];
    let mut q = vec![0.0; n];
    for (row, &dk) in e.iter().zip(d) {
        for i in 0..n {
            q[i] += dk * row[i];
            for j in 0..n {
                h[i][j] += row[i] * row[j];
            }
        }
    }
    for (i, hrow) in h.iter_mut().enumerate() {
        hrow[i] += RIDGE;
    }

    let objective = |y: &[f64]| -> f64 {
        e.iter()
            .zip(d)
            .map(|(row, &dk)| {
                let t: f64 = row.iter().zip(y).map(|(c, v)| c * v).sum();
                (t - dk) * (t - dk)
            })
            .sum()
    };
    let feasible = |y: &[f64]| -> bool {
        g_rows.iter().zip(g_rhs).all(|(row, &rhs)| {
            let lhs: f64 = row.iter().zip(y).map(|(c, v)| c * v).sum();
            lhs <= rhs + FEAS_TOL
        })
    };

    let mut best = (f64::INFINITY, vec![0.0; n]);
    let mut consider = |y: Vec<f64>| {
        if y.iter().all(|v| v.is_finite()) && feasible(&y) {
            let obj = objective(&y);
            if obj < best.0 {
                best = (obj, y);
            }
        }
    };

    // Unconstrained minimizer first: when it is feasible the enumeration is
    // settled (the problem is convex).
    {
        let mut kkt: Vec<Vec<f64>> = h.iter().map(|row| row.iter().map(|v| 2.0 * v).collect()).collect();
        let mut rhs: Vec<f64> = q.iter().map(|v| 2.0 * v).collect();
        if let Some(y) = solve_dense(&mut kkt, &mut rhs) {
            if y.iter().all(|v| v.is_finite()) && feasible(&y) {
                return (objective(&y), y);
            }
        }
    }

    // Subsets of constraints taken as equalities, sizes 1..=n.
    for mask in 1u32..(1 << m) {
        let active: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if active.len() > n {
            continue;
        }
        let dim = n + active.len();
        let mut kkt = vec![vec![0.0; dim]; dim];
        let mut rhs = vec![0.0; dim];
        for i in 0..n {
            for j in 0..n {
                kkt[i][j] = 2.0 * h[i][j];
            }
            rhs[i] = 2.0 * q[i];
        }
        for (s, &c) in active.iter().enumerate() {
            for j in 0..n {
                kkt[j][n + s] = g_rows[c][j];
                kkt[n + s][j] = g_rows[c][j];
            }
            rhs[n + s] = g_rhs[c];
        }
        if let Some(sol) = solve_dense(&mut kkt, &mut rhs) {
            consider(sol[..n].to_vec());
        }
    }
    best
}

/// Inner step: the exact best objective attainable at a fixed power vector.
fn psi_at_powers(inst: &Instance, config: &SystemConfig, p: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let kn = inst.num_users;
    let alpha = config.alpha;
    let power_term: f64 = p.iter().sum();
    if alpha == 0.0 {
        return ((1.0 - alpha) * power_term, vec![0.0; kn], vec![0.0; kn]);
    }
    let (bp, bc) = inst.bounds(p);

    // Variables: r^p (K), then shares c (K) when the common stream exists.
    let nv = if inst.has_common { 2 * kn } else { kn };
    let mut e = vec![vec![0.0; nv]; kn];
    for k in 0..kn {
        e[k][k] = 1.0;
        if inst.has_common {
            e[k][kn + k] = 1.0;
        }
    }

    let mut g_rows: Vec<Vec<f64>> = Vec::new();
    let mut g_rhs: Vec<f64> = Vec::new();
    let mut push = |row: Vec<f64>, rhs: f64| {
        g_rows.push(row);
        g_rhs.push(rhs);
    };
    for v in 0..nv {
        let mut row = vec![0.0; nv];
        row[v] = -1.0;
        push(row, 0.0); // y >= 0
    }

    for k in 0..kn {
        let mut row = vec![0.0; nv];
        row[k] = 1.0;
        push(row, bp[k]); // r^p_k <= bound
    }
    if inst.has_common {
        let mut row = vec![0.0; nv];
        for k in 0..kn {
            row[kn + k] = 1.0;
        }
        push(row, bc); // sum shares <= common cap
    }
    for b in 0..inst.num_bs {
        let mut row = vec![0.0; nv];
        for (k, cell) in row.iter_mut().enumerate().take(kn) {
            if inst.stream_bs[k] == b {
                *cell = 1.0;
            }
        }
        if inst.has_common && inst.stream_bs[kn] == b {
            for k in 0..kn {
                row[kn + k] = 1.0;
            }
        }
        push(row, config.fronthaul_capacity_mbps);
    }

    let (mse_sum, y) = min_rate_qp(&e, &config.desired_rates_mbps, &g_rows, &g_rhs);
    let psi = alpha * mse_sum / kn as f64 + (1.0 - alpha) * power_term;
    let private = y[..kn].to_vec();
    let shares = if inst.has_common { y[kn..].to_vec() } else { vec![0.0; kn] };
    (psi, private, shares)
}

/// Ascending per-stream power grids.
fn linear_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let n = points.max(2);
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// `{0}` plus a geometric ladder up to the budget; resolves optima that sit
/// orders of magnitude below the power cap.
fn log_grid(pmax: f64, points: usize) -> Vec<f64> {
    let n = points.max(3);
    let pmin = pmax * 1e-6;
    let ratio = (pmax / pmin).powf(1.0 / (n - 2) as f64);
    let mut grid = vec![0.0];
    let mut p = pmin;
    for _ in 0..n - 1 {
        grid.push(p.min(pmax));
        p *= ratio;
    }
    grid
}

/// Enumerate per-stream power combinations while respecting per-BS budgets.
fn enumerate_powers(
    inst: &Instance,
    config: &SystemConfig,
    grids: &[Vec<f64>],
    mut visit: impl FnMut(&[f64]),
) {
    let n = grids.len();
    let mut p = vec![0.0; n];
    fn recurse(
        inst: &Instance,
        budget: f64,
        grids: &[Vec<f64>],
        idx: usize,
        p: &mut Vec<f64>,
        visit: &mut impl FnMut(&[f64]),
    ) {
        if idx == grids.len() {
            visit(p);
            return;
        }
        for &value in &grids[idx] {
            p[idx] = value;
            // Grids ascend, so prune once this BS's running sum overflows.
            let bs = inst.stream_bs[idx];
            let used: f64 = (0..=idx).filter(|&j| inst.stream_bs[j] == bs).map(|j| p[j]).sum();
            if used > budget * (1.0 + 1e-12) {
                break;
            }
            recurse(inst, budget, grids, idx + 1, p, visit);
        }
    }
    recurse(inst, config.max_power_w, grids, 0, &mut p, &mut visit);
}

/// Exact inner evaluation at a fixed per-stream power vector: the best
/// objective attainable with those powers (rates assigned optimally). Used
/// to cross-check optimizer iterates point-by-point.
pub fn evaluate_at_powers(
    config: &SystemConfig,
    h: &ChannelState,
    structure: &RsmaStructure,
    powers: &[f64],
) -> Result<f64, DomainError> {
    let inst = eligibility(config, h, structure)?;
    if powers.len() != inst.stream_bs.len() {
        return Err(DomainError(format!(
            "expected {} stream powers, got {}",
            inst.stream_bs.len(),
            powers.len()
        )));
    }
    Ok(psi_at_powers(&inst, config, powers).0)
}

/// Exhaustive grid search over per-stream powers with the exact inner rate
/// assignment; returns the global best objective on the grid.
pub fn oracle_grid_search(
    config: &SystemConfig,
    h: &ChannelState,
    structure: &RsmaStructure,
    opts: &OracleOptions,
) -> Result<OracleResult, DomainError> {
    let inst = eligibility(config, h, structure)?;
    let n_streams = inst.stream_bs.len();
    let points = opts.points_per_dim.max(3);

    let mut best_psi = f64::INFINITY;
    let mut best_p = vec![0.0; n_streams];
    let mut best_rates = (vec![0.0; inst.num_users], vec![0.0; inst.num_users]);

    // Coarse pass on a logarithmic ladder, then linear zooms around the
    // best cell. The local zoom width is one geometric step of the point it
    // brackets.
    let mut grids: Vec<Vec<f64>> = vec![log_grid(config.max_power_w, points); n_streams];
    let mut final_spacing = config.max_power_w;
    for round in 0..=opts.refine_rounds {
        enumerate_powers(&inst, config, &grids, |p| {
            let (psi, private, shares) = psi_at_powers(&inst, config, p);
            if psi < best_psi {
                best_psi = psi;
                best_p = p.to_vec();
                best_rates = (private, shares);
            }
        });
        // Width of the cell around the current best in each dimension.
        let widths: Vec<f64> = best_p
            .iter()
            .zip(&grids)
            .map(|(&bp, grid)| {
                grid.windows(2)
                    .find(|w| bp >= w[0] - 1e-300 && bp <= w[1] + 1e-300)
                    .map(|w| w[1] - w[0])
                    .unwrap_or(config.max_power_w / (points - 1) as f64)
            })
            .collect();
        final_spacing = widths.iter().cloned().fold(0.0f64, f64::max) / (points - 1) as f64;
        if round == opts.refine_rounds {
            break;
        }
        grids = best_p
            .iter()
            .zip(&widths)
            .map(|(&bp, &w)| {
                linear_grid((bp - w).max(0.0), (bp + w).min(config.max_power_w), points)
            })
            .collect();
    }

    Ok(OracleResult {
        psi: best_psi,
        powers: best_p,
        private_rates: best_rates.0,
        shares: best_rates.1,
        final_spacing_w: final_spacing,
    })
}
