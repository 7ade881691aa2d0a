//! Evaluation of SINRs, achievable rates, fronthaul usage, transmit power,
//! the rate-gap/power objective, the energy-efficiency metric, and
//! constraint feasibility for any candidate solution.
//!
//! All functions here are pure and reentrant; they are the ground truth the
//! optimizer's conic encoding is tested against.

use std::collections::BTreeSet;

use crate::error::DomainError;
use crate::netmodel::{noise_power, ChannelState, SystemConfig};
use crate::structure::{ClusterSets, RsmaStructure};
use crate::Cx;

/// Aggregate precoding vectors (length L*B) per user and stream type.
/// Blocks at non-serving BSs are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    pub private: Vec<Vec<Cx>>,
    pub common: Vec<Vec<Cx>>,
}

impl PrecoderSet {
    pub fn zeros(num_users: usize, len: usize) -> Self {
        PrecoderSet {
            private: vec![vec![Cx::new(0.0, 0.0); len]; num_users],
            common: vec![vec![Cx::new(0.0, 0.0); len]; num_users],
        }
    }

    /// Squared norm of user `k`'s private plus common precoder.
    pub fn stream_power(&self, k: usize) -> f64 {
        norm_sqr(&self.private[k]) + norm_sqr(&self.common[k])
    }

    /// Sum of all precoder squared norms.
    pub fn total_power(&self) -> f64 {
        (0..self.private.len()).map(|k| self.stream_power(k)).sum()
    }
}

/// Per-user rate allocation in Mbps. For the shared-common (SCM) accounting
/// `common[k]` is user `k`'s portion of the single shared stream; otherwise
/// it is the rate of user `k`'s own common stream.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RateAllocation {
    pub private: Vec<f64>,
    pub common: Vec<f64>,
}

impl RateAllocation {
    pub fn zeros(num_users: usize) -> Self {
        RateAllocation { private: vec![0.0; num_users], common: vec![0.0; num_users] }
    }

    /// Total rate of user `k`.
    pub fn total(&self, k: usize) -> f64 {
        self.private[k] + self.common[k]
    }

    pub fn sum_total(&self) -> f64 {
        (0..self.private.len()).map(|k| self.total(k)).sum()
    }

    /// Rate carried by owner `i`'s common stream under the structure's
    /// accounting: the owner's rate, or the sum of shares when shared.
    pub fn common_stream_rate(&self, i: usize, structure: &RsmaStructure) -> f64 {
        match structure.shared_common {
            Some(owner) if owner == i => self.common.iter().sum(),
            Some(_) => 0.0,
            None => self.common[i],
        }
    }
}

/// Inner product `h^H w`.
pub fn inner(h: &[Cx], w: &[Cx]) -> Cx {
    h.iter().zip(w).map(|(hi, wi)| hi.conj() * wi).sum()
}

fn norm_sqr(v: &[Cx]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

/// Received power of stream vector `w` at user `k`.
fn rx_power(h: &ChannelState, k: usize, w: &[Cx]) -> f64 {
    inner(h.agg(k), w).norm_sqr()
}

/// Interference seen when user `k` decodes its private message: all other
/// private streams plus the common streams `k` never decodes.
pub fn private_interference(
    k: usize,
    w: &PrecoderSet,
    h: &ChannelState,
    s: &RsmaStructure,
) -> f64 {
    let kn = h.num_users();
    let mut acc = 0.0;
    for j in 0..kn {
        if j != k {
            acc += rx_power(h, k, &w.private[j]);
        }
    }
    for l in 0..kn {
        if !s.decode.decoded[k].contains(&l) {
            acc += rx_power(h, k, &w.common[l]);
        }
    }
    acc
}

/// Interference seen when user `k` decodes owner `i`'s common message: every
/// private stream plus the common messages not yet removed at that point of
/// the successive decoding (everything outside the decoded-at-or-before-`i`
/// prefix of the order).
pub fn common_interference(
    i: usize,
    k: usize,
    w: &PrecoderSet,
    h: &ChannelState,
    s: &RsmaStructure,
) -> Result<f64, DomainError> {
    let pos = s.decode.order[k]
        .iter()
        .position(|&m| m == i)
        .ok_or_else(|| DomainError(format!("owner {i} is not decoded at user {k}")))?;
    let removed: BTreeSet<usize> = s.decode.order[k][..=pos].iter().copied().collect();
    let kn = h.num_users();
    let mut acc = 0.0;
    for j in 0..kn {
        acc += rx_power(h, k, &w.private[j]);
    }
    for l in 0..kn {
        if !removed.contains(&l) {
            acc += rx_power(h, k, &w.common[l]);
        }
    }
    Ok(acc)
}

/// SINR of user `k`'s private message.
pub fn sinr_private(
    k: usize,
    w: &PrecoderSet,
    h: &ChannelState,
    s: &RsmaStructure,
    noise_w: f64,
) -> f64 {
    rx_power(h, k, &w.private[k]) / (private_interference(k, w, h, s) + noise_w)
}

/// SINR of owner `i`'s common message decoded at user `k`.
pub fn sinr_common(
    i: usize,
    k: usize,
    w: &PrecoderSet,
    h: &ChannelState,
    s: &RsmaStructure,
    noise_w: f64,
) -> Result<f64, DomainError> {
    let denom = common_interference(i, k, w, h, s)? + noise_w;
    Ok(rx_power(h, k, &w.common[i]) / denom)
}

/// Shannon rate bound in Mbps for a given SINR.
pub fn rate_bound(tau_mhz: f64, sinr: f64) -> f64 {
    tau_mhz * (1.0 + sinr).log2()
}

/// Achievable-rate bounds for all streams.
#[derive(Debug, Clone)]
pub struct RateBounds {
    /// Private bound per user: `tau * log2(1 + sinr_private)`.
    pub private: Vec<f64>,
    /// Per-owner list of `(decoder, bound)` over M_i, ascending decoder.
    pub common_per_decoder: Vec<Vec<(usize, f64)>>,
    /// Per-owner common bound: the minimum over its decoders (0 when the
    /// stream does not exist).
    pub common: Vec<f64>,
}

/// Evaluate every stream's achievable-rate bound under the current
/// precoders. The common bound of owner `i` is the minimum over all of its
/// decoders, since the weakest decoder limits the multiple-access rate.
pub fn achievable_rates(
    w: &PrecoderSet,
    h: &ChannelState,
    s: &RsmaStructure,
    config: &SystemConfig,
) -> RateBounds {
    let noise_w = noise_power(config);
    let tau = config.bandwidth_mhz;
    let kn = h.num_users();
    let private = (0..kn).map(|k| rate_bound(tau, sinr_private(k, w, h, s, noise_w))).collect();
    let mut common_per_decoder = vec![Vec::new(); kn];
    let mut common = vec![0.0; kn];
    for i in 0..kn {
        for &k in &s.decode.decoders[i] {
            let bound = rate_bound(tau, sinr_common(i, k, w, h, s, noise_w).unwrap());
            common_per_decoder[i].push((k, bound));
        }
        if !common_per_decoder[i].is_empty() {
            common[i] =
                common_per_decoder[i].iter().map(|(_, b)| *b).fold(f64::INFINITY, f64::min);
        }
    }
    RateBounds { private, common_per_decoder, common }
}

/// Fronthaul usage at BS `b` in Mbps: the private rates of its private
/// cluster plus the common stream rates of its common cluster.
pub fn fronthaul_usage(b: usize, r: &RateAllocation, s: &RsmaStructure) -> f64 {
    let private: f64 = s.clusters.private[b].iter().map(|&k| r.private[k]).sum();
    let common: f64 =
        s.clusters.common[b].iter().map(|&i| r.common_stream_rate(i, s)).sum();
    private + common
}

/// Transmit power of BS `b` in watts: squared norms of the per-BS blocks of
/// every stream it serves.
pub fn transmit_power(b: usize, w: &PrecoderSet, clusters: &ClusterSets, antennas: usize) -> f64 {
    let block = |v: &[Cx]| -> f64 { v[b * antennas..(b + 1) * antennas].iter().map(|c| c.norm_sqr()).sum() };
    let private: f64 = clusters.private[b].iter().map(|&k| block(&w.private[k])).sum();
    let common: f64 = clusters.common[b].iter().map(|&k| block(&w.common[k])).sum();
    private + common
}

/// Mean squared rate gap in Mbps^2: `(1/K) * sum_k |r_k - r_k_des|^2`.
pub fn rate_gap_mse(r: &RateAllocation, config: &SystemConfig) -> f64 {
    let kn = config.num_users;
    let sum: f64 = (0..kn)
        .map(|k| {
            let gap = r.total(k) - config.desired_rates_mbps[k];
            gap * gap
        })
        .sum();
    sum / kn as f64
}

/// The optimization objective: `alpha * MSE + (1 - alpha) * total power`,
/// mixing Mbps^2 and watts as configured (no normalization constant).
pub fn objective_psi(w: &PrecoderSet, r: &RateAllocation, config: &SystemConfig) -> f64 {
    config.alpha * rate_gap_mse(r, config) + (1.0 - config.alpha) * w.total_power()
}

/// Energy efficiency in Mbps/W: sum rate over transmit plus circuit power.
pub fn energy_efficiency_phi(
    w: &PrecoderSet,
    r: &RateAllocation,
    config: &SystemConfig,
) -> f64 {
    r.sum_total() / (w.total_power() + config.circuit_power_w)
}

/// Worst signed slack per constraint family; negative means violated.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct FeasibilityReport {
    /// min over BSs of `C_b - usage_b` (Mbps).
    pub fronthaul_slack: f64,
    /// min over BSs of `P_b - power_b` (watts).
    pub power_slack: f64,
    /// min over users of `bound_k - r_k^p` (Mbps).
    pub private_rate_slack: f64,
    /// min over (owner, decoder) pairs of `bound_{i,k} - stream rate_i` (Mbps).
    pub common_rate_slack: f64,
    /// Worst slack normalized by its constraint scale.
    pub min_relative_slack: f64,
}

impl FeasibilityReport {
    pub fn feasible(&self, tol_rel: f64) -> bool {
        self.min_relative_slack >= -tol_rel
    }
}

/// Evaluate the slacks of the fronthaul, per-BS power, private-rate, and
/// common-rate constraints. Relative slacks are scaled by the capacity,
/// power budget, or `max(1, bound)` respectively.
pub fn check_feasibility(
    w: &PrecoderSet,
    r: &RateAllocation,
    h: &ChannelState,
    s: &RsmaStructure,
    config: &SystemConfig,
) -> FeasibilityReport {
    let bounds = achievable_rates(w, h, s, config);
    let mut min_rel = f64::INFINITY;

    let mut fronthaul_slack = f64::INFINITY;
    for b in 0..config.num_bs {
        let slack = config.fronthaul_capacity_mbps - fronthaul_usage(b, r, s);
        fronthaul_slack = fronthaul_slack.min(slack);
        min_rel = min_rel.min(slack / config.fronthaul_capacity_mbps);
    }

    let mut power_slack = f64::INFINITY;
    for b in 0..config.num_bs {
        let slack = config.max_power_w - transmit_power(b, w, &s.clusters, config.antennas_per_bs);
        power_slack = power_slack.min(slack);
        min_rel = min_rel.min(slack / config.max_power_w);
    }

    let mut private_rate_slack = f64::INFINITY;
    for k in 0..config.num_users {
        let slack = bounds.private[k] - r.private[k];
        private_rate_slack = private_rate_slack.min(slack);
        min_rel = min_rel.min(slack / bounds.private[k].max(1.0));
    }

    let mut common_rate_slack = f64::INFINITY;
    for (i, per_dec) in bounds.common_per_decoder.iter().enumerate() {
        let stream_rate = r.common_stream_rate(i, s);
        for &(_, bound) in per_dec {
            let slack = bound - stream_rate;
            common_rate_slack = common_rate_slack.min(slack);
            min_rel = min_rel.min(slack / bound.max(1.0));
        }
    }

    FeasibilityReport {
        fronthaul_slack,
        power_slack,
        private_rate_slack,
        common_rate_slack,
        min_relative_slack: if min_rel.is_finite() { min_rel } else { f64::INFINITY },
    }
}

/// Direct evaluation of the private quadratic-transform surrogate
/// `g^p = gamma - 2 Re{u* (w_k^p)^H h_k} + |u|^2 (sigma^2 + interference)`.
/// Independent of the conic encoding; used to cross-check it.
#[allow(clippy::too_many_arguments)]
pub fn qt_private_gap(
    k: usize,
    w: &PrecoderSet,
    h: &ChannelState,
    s: &RsmaStructure,
    noise_w: f64,
    u: Cx,
    gamma: f64,
) -> f64 {
    // (w^H h) = conj(h^H w)
    let v = inner(h.agg(k), &w.private[k]).conj();
    let quad = noise_w + private_interference(k, w, h, s);
    gamma - 2.0 * (u.conj() * v).re + u.norm_sqr() * quad
}

/// Direct evaluation of the common quadratic-transform surrogate for owner
/// `i` decoded at user `k`.
#[allow(clippy::too_many_arguments)]
pub fn qt_common_gap(
    i: usize,
    k: usize,
    w: &PrecoderSet,
    h: &ChannelState,
    s: &RsmaStructure,
    noise_w: f64,
    u: Cx,
    gamma: f64,
) -> Result<f64, DomainError> {
    let v = inner(h.agg(k), &w.common[i]).conj();
    let quad = noise_w + common_interference(i, k, w, h, s)?;
    Ok(gamma - 2.0 * (u.conj() * v).re + u.norm_sqr() * quad)
}
