//! Scenario configuration, random topology placement, and stochastic channel
//! generation for one transmission block.
//!
//! All stochastic outputs are pure functions of `(config, seed)`. The seed
//! feeds a splittable ChaCha generator with one sub-stream per generation
//! stage (placement, shadowing, fading), so adding draws to one stage does
//! not perturb the others.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, DomainError};
use crate::units::dbm_to_watts;
use crate::Cx;

/// Links closer than this are evaluated at this distance in the path-loss
/// model to avoid singular gains.
pub const MIN_LINK_DISTANCE_M: f64 = 10.0;

/// Default log-normal shadowing standard deviation in dB.
pub const DEFAULT_SHADOWING_STD_DB: f64 = 8.0;

/// Per-user criticality level of the QoS demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criticality {
    #[serde(rename = "LO")]
    Lo,
    #[serde(rename = "ME")]
    Me,
    #[serde(rename = "HI")]
    Hi,
}

impl std::fmt::Display for Criticality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Criticality::Lo => write!(f, "LO"),
            Criticality::Me => write!(f, "ME"),
            Criticality::Hi => write!(f, "HI"),
        }
    }
}

/// All scenario parameters, in internal units (watts, Mbps, MHz).
///
/// Config files declare powers in dBm; [`SystemConfig::from_toml_str`]
/// converts at the boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Number of base stations B.
    pub num_bs: usize,
    /// Number of single-antenna users K.
    pub num_users: usize,
    /// Antennas per BS, L.
    pub antennas_per_bs: usize,
    /// Per-BS fronthaul capacity in Mbps.
    pub fronthaul_capacity_mbps: f64,
    /// Per-BS maximum transmit power in watts.
    pub max_power_w: f64,
    /// Transmission bandwidth tau in MHz.
    pub bandwidth_mhz: f64,
    /// Noise power spectral density in dBm/Hz (e.g. -168).
    pub noise_psd_dbm_per_hz: f64,
    /// Optional direct noise-power override in watts; used by SNR sweeps
    /// that scale the noise floor instead of the PSD.
    #[serde(default)]
    pub noise_override_w: Option<f64>,
    /// Side of the square deployment area in meters.
    pub area_side_m: f64,
    /// Objective weight in [0, 1]: rate-gap MSE vs transmit power.
    pub alpha: f64,
    /// Per-user desired rates in Mbps.
    pub desired_rates_mbps: Vec<f64>,
    /// Per-user criticality tags; must be rate-consistent (HI >= ME >= LO).
    pub criticality_levels: Vec<Criticality>,
    /// Constant circuit power in watts (energy-efficiency denominator).
    pub circuit_power_w: f64,
    /// Master seed; all randomness derives from it.
    pub seed: u64,
}

impl SystemConfig {
    /// Desk-scale default: B=4, K=6, L=2, mixed HI/ME/LO demands.
    pub fn desk_default() -> Self {
        SystemConfig {
            num_bs: 4,
            num_users: 6,
            antennas_per_bs: 2,
            fronthaul_capacity_mbps: 28.0,
            max_power_w: dbm_to_watts(28.0),
            bandwidth_mhz: 10.0,
            noise_psd_dbm_per_hz: -168.0,
            noise_override_w: None,
            area_side_m: 800.0,
            alpha: 0.5,
            desired_rates_mbps: vec![14.0, 14.0, 7.0, 7.0, 3.0, 3.0],
            criticality_levels: vec![
                Criticality::Hi,
                Criticality::Hi,
                Criticality::Me,
                Criticality::Me,
                Criticality::Lo,
                Criticality::Lo,
            ],
            circuit_power_w: dbm_to_watts(38.0),
            seed: 1,
        }
    }

    /// Full-scale preset: B=10, K=16, L=2, demands 14/7/3 Mbps for 4/6/6
    /// users. Slow; intended for full-size experiments.
    pub fn full_scale() -> Self {
        let mut rates = Vec::with_capacity(16);
        let mut levels = Vec::with_capacity(16);
        for _ in 0..4 {
            rates.push(14.0);
            levels.push(Criticality::Hi);
        }
        for _ in 0..6 {
            rates.push(7.0);
            levels.push(Criticality::Me);
        }
        for _ in 0..6 {
            rates.push(3.0);
            levels.push(Criticality::Lo);
        }
        SystemConfig {
            num_bs: 10,
            num_users: 16,
            desired_rates_mbps: rates,
            criticality_levels: levels,
            ..Self::desk_default()
        }
    }

    /// Check all field invariants; returns the first violation found.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError::Invalid(m));
        if self.num_bs == 0 || self.num_users == 0 || self.antennas_per_bs == 0 {
            return err("num_bs, num_users, antennas_per_bs must be positive".into());
        }
        if self.alpha.is_nan() || self.alpha < 0.0 || self.alpha > 1.0 {
            return err(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        for (name, v) in [
            ("fronthaul_capacity_mbps", self.fronthaul_capacity_mbps),
            ("max_power_w", self.max_power_w),
            ("bandwidth_mhz", self.bandwidth_mhz),
            ("area_side_m", self.area_side_m),
            ("circuit_power_w", self.circuit_power_w),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return err(format!("{name} must be strictly positive, got {v}"));
            }
        }
        if let Some(n) = self.noise_override_w {
            if !n.is_finite() || n <= 0.0 {
                return err(format!("noise_override_w must be strictly positive, got {n}"));
            }
        }
        if self.desired_rates_mbps.len() != self.num_users
            || self.criticality_levels.len() != self.num_users
        {
            return err(format!(
                "desired_rates_mbps and criticality_levels must have num_users = {} entries",
                self.num_users
            ));
        }
        if self.desired_rates_mbps.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return err("desired rates must be finite and non-negative".into());
        }
        // Rate consistency across levels: every HI rate >= every ME rate >=
        // every LO rate.
        let mut lo: BTreeMap<Criticality, f64> = BTreeMap::new();
        let mut hi: BTreeMap<Criticality, f64> = BTreeMap::new();
        for (r, c) in self.desired_rates_mbps.iter().zip(&self.criticality_levels) {
            let e = lo.entry(*c).or_insert(f64::INFINITY);
            *e = e.min(*r);
            let e = hi.entry(*c).or_insert(f64::NEG_INFINITY);
            *e = e.max(*r);
        }
        let pairs = [(Criticality::Hi, Criticality::Me), (Criticality::Me, Criticality::Lo)];
        for (upper, lower) in pairs {
            if let (Some(&u_min), Some(&l_max)) = (lo.get(&upper), hi.get(&lower)) {
                if u_min < l_max {
                    return err(format!(
                        "desired rates inconsistent with criticality: min({upper}) = {u_min} < max({lower}) = {l_max}"
                    ));
                }
            }
        }
        Ok(())
    }

    /// Desired-rate value of one criticality level, taken from the users at
    /// that level. Errors if no user carries the level.
    pub fn level_rate(&self, level: Criticality) -> Result<f64, ConfigError> {
        self.criticality_levels
            .iter()
            .position(|c| *c == level)
            .map(|k| self.desired_rates_mbps[k])
            .ok_or_else(|| ConfigError::Invalid(format!("no user with criticality {level}")))
    }

    /// Parse from the TOML config schema (powers in dBm).
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: ConfigFile =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let cfg = raw.into_config();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read and parse a TOML config file.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Render this config in the file schema (powers converted to dBm).
    pub fn to_toml_string(&self) -> String {
        let raw = ConfigFile::from_config(self);
        toml::to_string(&raw).expect("config serialization cannot fail")
    }
}

/// On-disk config schema. Keys mirror [`SystemConfig`] field names; power
/// fields are declared in dBm as documented in the README.
#[derive(Debug, Serialize, Deserialize)]
struct ConfigFile {
    num_bs: usize,
    num_users: usize,
    antennas_per_bs: usize,
    fronthaul_capacity_mbps: f64,
    max_power_dbm: f64,
    bandwidth_mhz: f64,
    noise_psd_dbm_per_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_override_dbm: Option<f64>,
    area_side_m: f64,
    alpha: f64,
    desired_rates_mbps: Vec<f64>,
    criticality_levels: Vec<Criticality>,
    circuit_power_dbm: f64,
    seed: u64,
}

impl ConfigFile {
    fn into_config(self) -> SystemConfig {
        SystemConfig {
            num_bs: self.num_bs,
            num_users: self.num_users,
            antennas_per_bs: self.antennas_per_bs,
            fronthaul_capacity_mbps: self.fronthaul_capacity_mbps,
            max_power_w: dbm_to_watts(self.max_power_dbm),
            bandwidth_mhz: self.bandwidth_mhz,
            noise_psd_dbm_per_hz: self.noise_psd_dbm_per_hz,
            noise_override_w: self.noise_override_dbm.map(dbm_to_watts),
            area_side_m: self.area_side_m,
            alpha: self.alpha,
            desired_rates_mbps: self.desired_rates_mbps,
            criticality_levels: self.criticality_levels,
            circuit_power_w: dbm_to_watts(self.circuit_power_dbm),
            seed: self.seed,
        }
    }

    fn from_config(cfg: &SystemConfig) -> Self {
        ConfigFile {
            num_bs: cfg.num_bs,
            num_users: cfg.num_users,
            antennas_per_bs: cfg.antennas_per_bs,
            fronthaul_capacity_mbps: cfg.fronthaul_capacity_mbps,
            max_power_dbm: crate::units::watts_to_dbm(cfg.max_power_w),
            bandwidth_mhz: cfg.bandwidth_mhz,
            noise_psd_dbm_per_hz: cfg.noise_psd_dbm_per_hz,
            noise_override_dbm: cfg.noise_override_w.map(crate::units::watts_to_dbm),
            area_side_m: cfg.area_side_m,
            alpha: cfg.alpha,
            desired_rates_mbps: cfg.desired_rates_mbps.clone(),
            criticality_levels: cfg.criticality_levels.clone(),
            circuit_power_dbm: crate::units::watts_to_dbm(cfg.circuit_power_w),
            seed: cfg.seed,
        }
    }
}

/// Independent random stream per generation stage.
#[derive(Debug, Clone, Copy)]
pub enum RngStage {
    Placement = 0,
    Shadowing = 1,
    Fading = 2,
    /// Reserved for random precoder initialization.
    Init = 3,
}

/// Derive the deterministic sub-stream generator for one stage.
pub fn stage_rng(seed: u64, stage: RngStage) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage as u64);
    rng
}

/// Node placements and the BS-user distance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    /// BS coordinates in meters, B x 2.
    pub bs_positions: Vec<[f64; 2]>,
    /// User coordinates in meters, K x 2.
    pub user_positions: Vec<[f64; 2]>,
    /// Euclidean distances in meters, indexed `[b][k]`.
    pub distances: Vec<Vec<f64>>,
}

/// Place BSs and users i.i.d. uniformly over the configured square.
pub fn place_nodes(config: &SystemConfig, rng: &mut ChaCha8Rng) -> Topology {
    let side = config.area_side_m;
    let mut draw = |n: usize| -> Vec<[f64; 2]> {
        (0..n)
            .map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side])
            .collect()
    };
    let bs_positions = draw(config.num_bs);
    let user_positions = draw(config.num_users);
    let distances = bs_positions
        .iter()
        .map(|bp| {
            user_positions
                .iter()
                .map(|up| ((bp[0] - up[0]).powi(2) + (bp[1] - up[1]).powi(2)).sqrt())
                .collect()
        })
        .collect();
    Topology { bs_positions, user_positions, distances }
}

/// Urban macro path loss in dB: `128.1 + 37.6 * log10(d_km)`, with the
/// distance in kilometers per the usual convention for this model.
pub fn path_loss_db(distance_m: f64) -> Result<f64, DomainError> {
    if !distance_m.is_finite() || distance_m <= 0.0 {
        return Err(DomainError(format!(
            "path loss needs a positive distance, got {distance_m}"
        )));
    }
    Ok(128.1 + 37.6 * (distance_m / 1000.0).log10())
}

/// Channel-draw options. The defaults give 8 dB log-normal shadowing and
/// unit-variance Rayleigh fading; tests may disable either to expose the
/// deterministic path-loss backbone.
#[derive(Debug, Clone, Copy)]
pub struct ChannelModel {
    pub shadowing_std_db: f64,
    /// When false, the per-antenna fading factor is 1 instead of CN(0,1).
    pub rayleigh_fading: bool,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel { shadowing_std_db: DEFAULT_SHADOWING_STD_DB, rayleigh_fading: true }
    }
}

/// Complex channel vectors for all BS-user pairs over one block.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    /// Antennas per BS.
    pub antennas: usize,
    /// Per-link vectors `h[b][k]` of length L.
    pub links: Vec<Vec<Vec<Cx>>>,
    /// Aggregate vectors of length L*B per user, stacked in BS-index order.
    pub aggregate: Vec<Vec<Cx>>,
}

impl ChannelState {
    /// The aggregate channel of user `k` (length L*B).
    pub fn agg(&self, k: usize) -> &[Cx] {
        &self.aggregate[k]
    }

    /// The per-link channel between BS `b` and user `k` (length L).
    pub fn link(&self, b: usize, k: usize) -> &[Cx] {
        &self.links[b][k]
    }

    /// Euclidean norm of the link vector.
    pub fn link_norm(&self, b: usize, k: usize) -> f64 {
        self.links[b][k].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn num_bs(&self) -> usize {
        self.links.len()
    }

    pub fn num_users(&self) -> usize {
        self.aggregate.len()
    }

    fn from_links(links: Vec<Vec<Vec<Cx>>>, antennas: usize) -> Self {
        let num_users = links[0].len();
        let aggregate = (0..num_users)
            .map(|k| links.iter().flat_map(|per_bs| per_bs[k].iter().copied()).collect())
            .collect();
        ChannelState { antennas, links, aggregate }
    }
}

/// One draw of CN(0, 1): independent real and imaginary parts of variance
/// one half each.
pub fn standard_complex_gaussian(rng: &mut ChaCha8Rng) -> Cx {
    let normal = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).unwrap();
    Cx::new(normal.sample(rng), normal.sample(rng))
}

/// Draw the fading channel for one block with the default model.
pub fn draw_channel(
    config: &SystemConfig,
    topology: &Topology,
    shadowing_rng: &mut ChaCha8Rng,
    fading_rng: &mut ChaCha8Rng,
) -> ChannelState {
    draw_channel_with(config, topology, &ChannelModel::default(), shadowing_rng, fading_rng)
}

/// Draw the channel under explicit model options.
///
/// Each entry of `h[b][k]` is `sqrt(gain) * g`, where the linear gain
/// combines the path loss at the (clamped) link distance with one log-normal
/// shadowing draw shared across the L antennas of the link, and `g` is
/// i.i.d. CN(0,1) per antenna.
pub fn draw_channel_with(
    config: &SystemConfig,
    topology: &Topology,
    model: &ChannelModel,
    shadowing_rng: &mut ChaCha8Rng,
    fading_rng: &mut ChaCha8Rng,
) -> ChannelState {
    let l = config.antennas_per_bs;
    let shadow = if model.shadowing_std_db > 0.0 {
        Some(Normal::new(0.0, model.shadowing_std_db).unwrap())
    } else {
        None
    };
    let links: Vec<Vec<Vec<Cx>>> = (0..config.num_bs)
        .map(|b| {
            (0..config.num_users)
                .map(|k| {
                    let d = topology.distances[b][k].max(MIN_LINK_DISTANCE_M);
                    let pl_db = path_loss_db(d).expect("clamped distance is positive");
                    let shadow_db = shadow.as_ref().map_or(0.0, |n| n.sample(shadowing_rng));
                    let amplitude = 10f64.powf((-pl_db + shadow_db) / 20.0);
                    (0..l)
                        .map(|_| {
                            let g = if model.rayleigh_fading {
                                standard_complex_gaussian(fading_rng)
                            } else {
                                Cx::new(1.0, 0.0)
                            };
                            g * amplitude
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    ChannelState::from_links(links, l)
}

/// Noise power sigma^2 in watts over the configured bandwidth, or the
/// explicit override when set.
pub fn noise_power(config: &SystemConfig) -> f64 {
    if let Some(w) = config.noise_override_w {
        return w;
    }
    let psd_mw_per_hz = 10f64.powf(config.noise_psd_dbm_per_hz / 10.0);
    psd_mw_per_hz * config.bandwidth_mhz * 1e6 / 1e3
}

/// A fully generated scenario: topology plus channel for one block.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: SystemConfig,
    pub topology: Topology,
    pub channel: ChannelState,
}

impl Scenario {
    pub fn generate(config: &SystemConfig) -> Self {
        Self::generate_with(config, &ChannelModel::default())
    }

    pub fn generate_with(config: &SystemConfig, model: &ChannelModel) -> Self {
        let mut placement = stage_rng(config.seed, RngStage::Placement);
        let mut shadowing = stage_rng(config.seed, RngStage::Shadowing);
        let mut fading = stage_rng(config.seed, RngStage::Fading);
        let topology = place_nodes(config, &mut placement);
        let channel =
            draw_channel_with(config, &topology, model, &mut shadowing, &mut fading);
        Scenario { config: config.clone(), topology, channel }
    }
}
