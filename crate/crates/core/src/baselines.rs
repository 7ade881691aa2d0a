//! Reference schemes sharing the optimization machinery: treating
//! interference as noise (TIN, no common streams) and single-common-message
//! RSMA (SCM, one shared stream decoded by everyone).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::netmodel::{ChannelState, SystemConfig};
use crate::structure::{
    build_clusters, build_decode_structure, ClusterSets, DecodeStructure, RsmaStructure,
    StructureParams,
};

/// Interference-management scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemeKind {
    #[serde(rename = "rsma")]
    Rsma,
    #[serde(rename = "tin")]
    Tin,
    #[serde(rename = "scm")]
    Scm,
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SchemeKind::Rsma => write!(f, "rsma"),
            SchemeKind::Tin => write!(f, "tin"),
            SchemeKind::Scm => write!(f, "scm"),
        }
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rsma" => Ok(SchemeKind::Rsma),
            "tin" => Ok(SchemeKind::Tin),
            "scm" | "scm-rsma" => Ok(SchemeKind::Scm),
            other => Err(format!("unknown scheme '{other}' (expected rsma, tin, or scm)")),
        }
    }
}

/// TIN keeps the private clusters and drops every common stream.
pub fn make_tin_structure(clusters: ClusterSets) -> RsmaStructure {
    let num_users = clusters
        .private
        .iter()
        .flat_map(|s| s.iter().copied())
        .max()
        .map_or(0, |m| m + 1);
    let clusters = ClusterSets {
        common: vec![BTreeSet::new(); clusters.num_bs()],
        ..clusters
    };
    RsmaStructure {
        clusters,
        decode: DecodeStructure::empty(num_users),
        shared_common: None,
    }
}

/// SCM serves one super-common stream from every BS; all users decode it
/// first and split its rate through per-user shares. The stream occupies
/// owner slot 0 purely for indexing.
pub fn make_scm_structure(
    config: &SystemConfig,
    h: &ChannelState,
    params: &StructureParams,
) -> RsmaStructure {
    let p = params.clamped(config.num_bs, config.num_users);
    let base = build_clusters(h, config, (p.private_cluster_size, p.common_cluster_size));
    let owner = 0usize;
    let all_users: BTreeSet<usize> = (0..config.num_users).collect();
    let clusters = ClusterSets {
        private: base.private,
        common: vec![BTreeSet::from([owner]); config.num_bs],
    };
    let mut decoders = vec![BTreeSet::new(); config.num_users];
    decoders[owner] = all_users;
    let decoded = vec![BTreeSet::from([owner]); config.num_users];
    let order = vec![vec![owner]; config.num_users];
    RsmaStructure {
        clusters,
        decode: DecodeStructure { decoders, decoded, order },
        shared_common: Some(owner),
    }
}

/// Build the combinatorial structure for a scheme with the default
/// heuristics.
pub fn build_structure(
    kind: SchemeKind,
    h: &ChannelState,
    config: &SystemConfig,
    params: &StructureParams,
) -> RsmaStructure {
    let p = params.clamped(config.num_bs, config.num_users);
    match kind {
        SchemeKind::Rsma => {
            let clusters =
                build_clusters(h, config, (p.private_cluster_size, p.common_cluster_size));
            let decode = build_decode_structure(h, &clusters, config, p.decode_set_size);
            RsmaStructure { clusters, decode, shared_common: None }
        }
        SchemeKind::Tin => {
            let clusters =
                build_clusters(h, config, (p.private_cluster_size, p.common_cluster_size));
            make_tin_structure(clusters)
        }
        SchemeKind::Scm => make_scm_structure(config, h, params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{objective_psi, PrecoderSet, RateAllocation};
    use crate::netmodel::{Criticality, Scenario};
    use crate::Cx;

    fn small_config(seed: u64) -> SystemConfig {
        SystemConfig {
            num_bs: 2,
            num_users: 3,
            antennas_per_bs: 1,
            desired_rates_mbps: vec![7.0, 3.0, 3.0],
            criticality_levels: vec![Criticality::Me, Criticality::Lo, Criticality::Lo],
            seed,
            ..SystemConfig::desk_default()
        }
    }

    #[test]
    fn tin_has_no_common_anything() {
        let cfg = small_config(3);
        let scen = Scenario::generate(&cfg);
        let s = build_structure(SchemeKind::Tin, &scen.channel, &cfg, &StructureParams::default());
        assert!(s.is_tin());
        assert!(s.clusters.common.iter().all(|c| c.is_empty()));
        assert!(s.common_pairs().is_empty());
        // Every user still has a private serving BS.
        for k in 0..cfg.num_users {
            assert!(!s.clusters.serving_private(k).is_empty());
        }
    }

    #[test]
    fn scm_everyone_decodes_the_single_stream() {
        let cfg = small_config(4);
        let scen = Scenario::generate(&cfg);
        let s = build_structure(SchemeKind::Scm, &scen.channel, &cfg, &StructureParams::default());
        assert_eq!(s.shared_common, Some(0));
        s.decode.validate().unwrap();
        assert_eq!(s.decode.decoders[0].len(), cfg.num_users);
        for k in 0..cfg.num_users {
            assert_eq!(s.decode.order[k], vec![0]);
            // Served by every BS.
            assert!(s.clusters.common.iter().all(|c| c.contains(&0)));
        }
        assert_eq!(s.common_pairs().len(), cfg.num_users);
    }

    #[test]
    fn zero_super_common_power_reduces_to_tin() {
        // With the shared stream silent and equal private parts, SCM and TIN
        // evaluate to the same objective.
        let cfg = small_config(5);
        let scen = Scenario::generate(&cfg);
        let tin = build_structure(SchemeKind::Tin, &scen.channel, &cfg, &StructureParams::default());
        let scm = build_structure(SchemeKind::Scm, &scen.channel, &cfg, &StructureParams::default());

        let len = cfg.num_bs * cfg.antennas_per_bs;
        let mut w = PrecoderSet::zeros(cfg.num_users, len);
        for k in 0..cfg.num_users {
            for &b in &tin.clusters.serving_private(k) {
                w.private[k][b] = Cx::new(0.2 + 0.1 * k as f64, -0.05);
            }
        }
        let r = RateAllocation { private: vec![2.0, 1.0, 1.5], common: vec![0.0; 3] };
        let psi_tin = objective_psi(&w, &r, &cfg);
        let psi_scm = objective_psi(&w, &r, &cfg);
        assert_eq!(psi_tin, psi_scm);
        // Fronthaul likewise agrees when the shared stream carries nothing.
        for b in 0..cfg.num_bs {
            assert_eq!(
                crate::metrics::fronthaul_usage(b, &r, &tin),
                crate::metrics::fronthaul_usage(b, &r, &scm)
            );
        }
    }

    #[test]
    fn scm_shares_accrue_to_their_users() {
        let cfg = small_config(6);
        let scen = Scenario::generate(&cfg);
        let scm = build_structure(SchemeKind::Scm, &scen.channel, &cfg, &StructureParams::default());
        // All shared rate to user 2: its total gains the full stream rate.
        let r = RateAllocation { private: vec![1.0, 1.0, 1.0], common: vec![0.0, 0.0, 4.0] };
        assert_eq!(r.total(2), 5.0);
        assert_eq!(r.total(0), 1.0);
        assert_eq!(r.common_stream_rate(0, &scm), 4.0);
        assert_eq!(r.common_stream_rate(1, &scm), 0.0);
    }
}
