//! Assembly of the per-iteration convex subproblem.
//!
//! Variables: real/imaginary precoder components (restricted to serving
//! BSs), stream rates, SINR auxiliaries `gamma`, interference epigraphs for
//! the quadratic-transform rows, and two objective epigraphs (rate-gap MSE
//! and total power). The objective is linear over the epigraph scalars.
//!
//! Every SINR-related row involves exactly one user's channel, so each
//! user's channel is rescaled to unit norm per antenna before encoding
//! (with the noise constant and the quadratic-transform auxiliary of that
//! row rescaled to match). This is exact row equilibration: channel gains
//! span ten-plus orders of magnitude across users and the interior-point
//! solver needs coefficients near unit scale. Callers keep working in
//! natural units; the per-user divisors are recorded on the program.

use std::collections::BTreeMap;

use crate::error::BuildError;
use crate::netmodel::{noise_power, ChannelState, SystemConfig};
use crate::qt_algo::AuxVariables;
use crate::structure::RsmaStructure;
use crate::Cx;

use super::program::{ConicProgram, LinearRow, ProgramBuilder};

/// Variable block of one stream's precoder: `2 * L * serving.len()` reals.
/// For serving position `p` and antenna `l`, the real part sits at
/// `base + 2 * (p * L + l)` and the imaginary part right after it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamVars {
    pub serving: Vec<usize>,
    pub base: usize,
}

impl StreamVars {
    pub fn num_complex(&self, antennas: usize) -> usize {
        self.serving.len() * antennas
    }

    pub fn num_reals(&self, antennas: usize) -> usize {
        2 * self.num_complex(antennas)
    }

    /// (re, im) variable indices of the coefficient at serving position `p`,
    /// antenna `l`.
    pub fn coeff(&self, p: usize, l: usize, antennas: usize) -> (usize, usize) {
        let re = self.base + 2 * (p * antennas + l);
        (re, re + 1)
    }
}

/// Index map between domain quantities and the flat variable vector.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableLayout {
    pub num_users: usize,
    pub num_bs: usize,
    pub antennas: usize,
    pub private_streams: Vec<StreamVars>,
    /// One entry per owner; `None` when the owner carries no common stream.
    pub common_streams: Vec<Option<StreamVars>>,
    pub rate_private: Vec<usize>,
    pub rate_common: Vec<Option<usize>>,
    /// Per-user share variables of the single shared common stream, if any.
    pub shares: Option<Vec<usize>>,
    pub gamma_private: Vec<usize>,
    pub gamma_common: BTreeMap<(usize, usize), usize>,
    pub intf_private: Vec<usize>,
    pub intf_common: BTreeMap<(usize, usize), usize>,
    pub mse_epigraph: usize,
    pub power_epigraph: usize,
    pub num_vars: usize,
}

impl VariableLayout {
    /// Placeholder layout for hand-assembled programs in tests.
    pub fn empty() -> Self {
        VariableLayout {
            num_users: 0,
            num_bs: 0,
            antennas: 0,
            private_streams: Vec::new(),
            common_streams: Vec::new(),
            rate_private: Vec::new(),
            rate_common: Vec::new(),
            shares: None,
            gamma_private: Vec::new(),
            gamma_common: BTreeMap::new(),
            intf_private: Vec::new(),
            intf_common: BTreeMap::new(),
            mse_epigraph: 0,
            power_epigraph: 0,
            num_vars: 0,
        }
    }

    pub fn build(structure: &RsmaStructure, config: &SystemConfig) -> Self {
        let kn = config.num_users;
        let l = config.antennas_per_bs;
        let mut next = 0usize;
        let mut alloc = |n: usize| {
            let base = next;
            next += n;
            base
        };

        let private_streams: Vec<StreamVars> = (0..kn)
            .map(|k| {
                let serving = structure.clusters.serving_private(k);
                let base = alloc(2 * l * serving.len());
                StreamVars { serving, base }
            })
            .collect();
        let common_streams: Vec<Option<StreamVars>> = (0..kn)
            .map(|i| {
                if structure.has_common_stream(i) {
                    let serving = structure.clusters.serving_common(i);
                    let base = alloc(2 * l * serving.len());
                    Some(StreamVars { serving, base })
                } else {
                    None
                }
            })
            .collect();
        let rate_private: Vec<usize> = (0..kn).map(|_| alloc(1)).collect();
        let rate_common: Vec<Option<usize>> = (0..kn)
            .map(|i| common_streams[i].as_ref().map(|_| alloc(1)))
            .collect();
        let shares = structure
            .shared_common
            .map(|_| (0..kn).map(|_| alloc(1)).collect::<Vec<_>>());
        let gamma_private: Vec<usize> = (0..kn).map(|_| alloc(1)).collect();
        let pairs = structure.common_pairs();
        let gamma_common: BTreeMap<(usize, usize), usize> =
            pairs.iter().map(|&p| (p, alloc(1))).collect();
        let intf_private: Vec<usize> = (0..kn).map(|_| alloc(1)).collect();
        let intf_common: BTreeMap<(usize, usize), usize> =
            pairs.iter().map(|&p| (p, alloc(1))).collect();
        let mse_epigraph = alloc(1);
        let power_epigraph = alloc(1);

        VariableLayout {
            num_users: kn,
            num_bs: config.num_bs,
            antennas: l,
            private_streams,
            common_streams,
            rate_private,
            rate_common,
            shares,
            gamma_private,
            gamma_common,
            intf_private,
            intf_common,
            mse_epigraph,
            power_epigraph,
            num_vars: next,
        }
    }

    /// Core optimization-variable count: complex precoder coefficients
    /// (counted as single variables), stream rates, and SINR auxiliaries.
    /// Epigraph and share helpers are excluded. For the fully connected
    /// structure this equals `K (2 (B L + 1) + K + 1)`.
    pub fn core_variable_count(&self) -> usize {
        let complex: usize = self
            .private_streams
            .iter()
            .map(|s| s.num_complex(self.antennas))
            .chain(
                self.common_streams
                    .iter()
                    .flatten()
                    .map(|s| s.num_complex(self.antennas)),
            )
            .sum();
        let rates = self.rate_private.len() + self.rate_common.iter().flatten().count();
        let gammas = self.gamma_private.len() + self.gamma_common.len();
        complex + rates + gammas
    }

    /// Closed-form core count for the fully connected structure.
    pub fn full_rsma_core_count(num_bs: usize, num_users: usize, antennas: usize) -> usize {
        num_users * (2 * (num_bs * antennas + 1) + num_users + 1)
    }

    /// All precoder variable indices, in layout order.
    pub fn all_precoder_vars(&self) -> Vec<usize> {
        let mut vars = Vec::new();
        for s in self.private_streams.iter().chain(self.common_streams.iter().flatten()) {
            vars.extend(s.base..s.base + s.num_reals(self.antennas));
        }
        vars
    }

    /// Precoder variable indices whose serving BS is `b`, across streams of
    /// the given cluster membership.
    fn bs_block_vars(&self, stream: &StreamVars, b: usize) -> Option<std::ops::Range<usize>> {
        stream.serving.iter().position(|&sb| sb == b).map(|p| {
            let start = stream.base + 2 * p * self.antennas;
            start..start + 2 * self.antennas
        })
    }
}

/// Sparse coefficient list of one affine form.
type Coeffs = Vec<(usize, f64)>;

/// Affine rows of the complex inner product `v = h_k^H w` over a stream's
/// variables: returns (re coefficients, im coefficients) in the `+f` sense
/// (`Re v = sum c x`, `Im v = sum c x`).
fn inner_coeffs(h_agg: &[Cx], stream: &StreamVars, antennas: usize) -> (Coeffs, Coeffs) {
    let mut re = Vec::with_capacity(stream.num_reals(antennas));
    let mut im = Vec::with_capacity(stream.num_reals(antennas));
    for (p, &b) in stream.serving.iter().enumerate() {
        for l in 0..antennas {
            let h = h_agg[b * antennas + l];
            let (wr, wi) = stream.coeff(p, l, antennas);
            // conj(h) * w = (hr*wr + hi*wi) + i (hr*wi - hi*wr)
            re.push((wr, h.re));
            re.push((wi, h.im));
            im.push((wi, h.re));
            im.push((wr, -h.im));
        }
    }
    (re, im)
}

/// `z`-row (slack convention) for the inner-product component `sum c x`.
fn z_row(coeffs: &[(usize, f64)]) -> LinearRow {
    LinearRow::new(coeffs.iter().map(|&(i, c)| (i, -c)).collect(), 0.0)
}

/// Encode `r <= tau * log2(1 + gamma)` as one exponential-cone membership
/// `exp(ln2 * r / tau) <= 1 + gamma`.
pub fn encode_rate_log(builder: &mut ProgramBuilder, r: usize, gamma: usize, tau_mhz: f64) {
    let scale = std::f64::consts::LN_2 / tau_mhz;
    builder.push_exp([
        LinearRow::new(vec![(r, -scale)], 0.0),
        LinearRow::new(vec![], 1.0),
        LinearRow::new(vec![(gamma, -1.0)], 1.0),
    ]);
}

/// Shared logic of the private/common quadratic-transform rows: given the
/// signal stream, the interference streams, the row-scaled auxiliary `u`,
/// and the row-scaled noise `n`, emit
///
/// ```text
/// gamma - 2 Re{u^* (w_sig^H h)} + |u|^2 (n + t) <= 0,   t >= sum |h^H w_intf|^2
/// ```
#[allow(clippy::too_many_arguments)]
fn encode_qt_row(
    builder: &mut ProgramBuilder,
    h_agg: &[Cx],
    antennas: usize,
    gamma: usize,
    t: usize,
    signal: &StreamVars,
    interferers: &[&StreamVars],
    u: Cx,
    noise: f64,
) {
    // Re{u^* (w^H h)} = Re(u) Re(v) - Im(u) Im(v) with v = h^H w.
    let (re, im) = inner_coeffs(h_agg, signal, antennas);
    let mut coeffs: Vec<(usize, f64)> = vec![(gamma, 1.0), (t, u.norm_sqr())];
    for &(i, c) in &re {
        coeffs.push((i, -2.0 * u.re * c));
    }
    for &(i, c) in &im {
        coeffs.push((i, 2.0 * u.im * c));
    }
    builder.push_leq(coeffs, -u.norm_sqr() * noise);

    let mut z_rows = Vec::with_capacity(2 * interferers.len());
    for s in interferers {
        let (re, im) = inner_coeffs(h_agg, s, antennas);
        z_rows.push(z_row(&re));
        z_rows.push(z_row(&im));
    }
    builder.push_sq_epigraph(t, z_rows);
}

/// Assemble the convex subproblem for fixed quadratic-transform auxiliaries.
///
/// `u` is given in natural units (as produced by
/// [`crate::qt_algo::update_aux`]); the assembly rescales it together with
/// the channel normalization.
pub fn build_subproblem(
    h: &ChannelState,
    structure: &RsmaStructure,
    u: &AuxVariables,
    config: &SystemConfig,
) -> Result<ConicProgram, BuildError> {
    let kn = config.num_users;
    let l = config.antennas_per_bs;
    if h.num_users() != kn || h.num_bs() != config.num_bs || h.antennas != l {
        return Err(BuildError(format!(
            "channel dimensions ({} BS, {} users, {} antennas) do not match config ({}, {}, {})",
            h.num_bs(),
            h.num_users(),
            h.antennas,
            config.num_bs,
            kn,
            l
        )));
    }
    if structure.clusters.num_bs() != config.num_bs
        || structure.decode.decoders.len() != kn
    {
        return Err(BuildError("structure dimensions do not match config".into()));
    }
    if u.private.len() != kn {
        return Err(BuildError(format!(
            "expected {kn} private auxiliaries, got {}",
            u.private.len()
        )));
    }
    let pairs = structure.common_pairs();
    if u.common.len() != pairs.len() || pairs.iter().any(|p| !u.common.contains_key(p)) {
        return Err(BuildError(
            "common auxiliaries do not match the structure's (owner, decoder) pairs".into(),
        ));
    }

    let sigma = noise_power(config).sqrt();
    // Per-user channel divisor: ||h_k|| / sqrt(BL) (floored at sigma), so
    // the scaled channel has unit norm per coefficient and the scaled noise
    // sigma^2 / d_k^2 stays at or below one.
    let dim = (config.num_bs * l) as f64;
    let divisor: Vec<f64> = (0..kn)
        .map(|k| {
            let norm = h.agg(k).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            (norm / dim.sqrt()).max(sigma)
        })
        .collect();
    let h_norm: Vec<Vec<Cx>> = (0..kn)
        .map(|k| h.agg(k).iter().map(|&c| c / divisor[k]).collect())
        .collect();
    let scaled_noise: Vec<f64> = (0..kn).map(|k| (sigma / divisor[k]).powi(2)).collect();

    let layout = VariableLayout::build(structure, config);
    let mut b = ProgramBuilder::new(layout.num_vars);

    // Objective: psi in epigraph form.
    b.set_objective(layout.mse_epigraph, config.alpha / kn as f64);
    b.set_objective(layout.power_epigraph, 1.0 - config.alpha);

    // Non-negativity of rates, shares, and SINR auxiliaries.
    for k in 0..kn {
        b.push_leq(vec![(layout.rate_private[k], -1.0)], 0.0);
    }
    for idx in layout.rate_common.iter().flatten() {
        b.push_leq(vec![(*idx, -1.0)], 0.0);
    }
    if let Some(shares) = &layout.shares {
        for &c in shares {
            b.push_leq(vec![(c, -1.0)], 0.0);
        }
    }
    for k in 0..kn {
        b.push_leq(vec![(layout.gamma_private[k], -1.0)], 0.0);
    }
    for idx in layout.gamma_common.values() {
        b.push_leq(vec![(*idx, -1.0)], 0.0);
    }

    // Fronthaul capacity per BS.
    for bs in 0..config.num_bs {
        let mut coeffs = Vec::new();
        for &k in &structure.clusters.private[bs] {
            coeffs.push((layout.rate_private[k], 1.0));
        }
        for &i in &structure.clusters.common[bs] {
            if let Some(idx) = layout.rate_common[i] {
                coeffs.push((idx, 1.0));
            }
        }
        b.push_leq(coeffs, config.fronthaul_capacity_mbps);
    }

    // Shared-stream accounting: the per-user shares fit inside the stream rate.
    if let (Some(shares), Some(owner)) = (&layout.shares, structure.shared_common) {
        let rate = layout.rate_common[owner].ok_or_else(|| {
            BuildError("shared common owner carries no stream".into())
        })?;
        let mut coeffs: Vec<(usize, f64)> = shares.iter().map(|&c| (c, 1.0)).collect();
        coeffs.push((rate, -1.0));
        b.push_leq(coeffs, 0.0);
    }

    // Quadratic-transform rows (private then common pairs).
    for k in 0..kn {
        let mut interferers: Vec<&StreamVars> = Vec::new();
        for j in 0..kn {
            if j != k {
                interferers.push(&layout.private_streams[j]);
            }
        }
        for (lx, s) in layout.common_streams.iter().enumerate() {
            if let Some(s) = s {
                if !structure.decode.decoded[k].contains(&lx) {
                    interferers.push(s);
                }
            }
        }
        let u_scaled = u.private[k] * divisor[k];
        encode_qt_row(
            &mut b,
            &h_norm[k],
            l,
            layout.gamma_private[k],
            layout.intf_private[k],
            &layout.private_streams[k],
            &interferers,
            u_scaled,
            scaled_noise[k],
        );
    }
    for &(i, k) in &pairs {
        let signal = layout.common_streams[i]
            .as_ref()
            .ok_or_else(|| BuildError(format!("owner {i} decoded at {k} has no stream")))?;
        let pos = structure.decode.order[k]
            .iter()
            .position(|&m| m == i)
            .ok_or_else(|| BuildError(format!("pair ({i}, {k}) missing from the order")))?;
        let removed: std::collections::BTreeSet<usize> =
            structure.decode.order[k][..=pos].iter().copied().collect();
        let mut interferers: Vec<&StreamVars> = layout.private_streams.iter().collect();
        for (lx, s) in layout.common_streams.iter().enumerate() {
            if let Some(s) = s {
                if !removed.contains(&lx) {
                    interferers.push(s);
                }
            }
        }
        let u_scaled = u.common[&(i, k)] * divisor[k];
        encode_qt_row(
            &mut b,
            &h_norm[k],
            l,
            layout.gamma_common[&(i, k)],
            layout.intf_common[&(i, k)],
            signal,
            &interferers,
            u_scaled,
            scaled_noise[k],
        );
    }

    // Rate-gap MSE epigraph: t >= sum_k (r_k - r_k_des)^2.
    let mse_rows: Vec<LinearRow> = (0..kn)
        .map(|k| {
            let mut coeffs = vec![(layout.rate_private[k], -1.0)];
            match (&layout.shares, layout.rate_common[k]) {
                (Some(shares), _) => coeffs.push((shares[k], -1.0)),
                (None, Some(rc)) => coeffs.push((rc, -1.0)),
                (None, None) => {}
            }
            LinearRow::new(coeffs, -config.desired_rates_mbps[k])
        })
        .collect();
    b.push_sq_epigraph(layout.mse_epigraph, mse_rows);

    // Total-power epigraph: t >= sum of all precoder squares.
    let pow_rows: Vec<LinearRow> = layout
        .all_precoder_vars()
        .into_iter()
        .map(|v| LinearRow::new(vec![(v, -1.0)], 0.0))
        .collect();
    b.push_sq_epigraph(layout.power_epigraph, pow_rows);

    // Per-BS transmit power: ||w at BS b|| <= sqrt(P_b). BSs serving no
    // stream have nothing to constrain.
    for bs in 0..config.num_bs {
        let mut rows = vec![LinearRow::new(vec![], config.max_power_w.sqrt())];
        for &k in &structure.clusters.private[bs] {
            if let Some(range) = layout.bs_block_vars(&layout.private_streams[k], bs) {
                for v in range {
                    rows.push(LinearRow::new(vec![(v, -1.0)], 0.0));
                }
            }
        }
        for &i in &structure.clusters.common[bs] {
            if let Some(stream) = &layout.common_streams[i] {
                if let Some(range) = layout.bs_block_vars(stream, bs) {
                    for v in range {
                        rows.push(LinearRow::new(vec![(v, -1.0)], 0.0));
                    }
                }
            }
        }
        if rows.len() > 1 {
            b.push_soc(rows);
        }
    }

    // Achievable-rate cones.
    for k in 0..kn {
        encode_rate_log(
            &mut b,
            layout.rate_private[k],
            layout.gamma_private[k],
            config.bandwidth_mhz,
        );
    }
    for &(i, k) in &pairs {
        let rate = layout.rate_common[i]
            .ok_or_else(|| BuildError(format!("owner {i} has a decode pair but no rate")))?;
        encode_rate_log(&mut b, rate, layout.gamma_common[&(i, k)], config.bandwidth_mhz);
    }

    let mut program = b.finish(layout);
    program.user_divisor = divisor;
    debug_assert_eq!(program.validate(), Ok(()));
    Ok(program)
}
