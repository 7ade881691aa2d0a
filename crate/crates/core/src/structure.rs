//! RSMA combinatorial structure: per-BS serving clusters and per-user
//! common-message decode sets with decoding orders.
//!
//! Clusters and decode sets are fixed before optimization. The heuristics
//! here pick the strongest serving BSs per stream and the strongest cross
//! channels per decode set; both are deterministic with index tie-breaks.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, DomainError};
use crate::netmodel::{ChannelState, SystemConfig};

/// Per-BS serving sets for private and common streams.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSets {
    /// `private[b]` holds the users whose private stream BS `b` serves.
    pub private: Vec<BTreeSet<usize>>,
    /// `common[b]` holds the users whose common stream BS `b` serves.
    pub common: Vec<BTreeSet<usize>>,
}

impl ClusterSets {
    pub fn num_bs(&self) -> usize {
        self.private.len()
    }

    /// BS indices serving user `k`'s private stream, ascending.
    pub fn serving_private(&self, k: usize) -> Vec<usize> {
        (0..self.num_bs()).filter(|&b| self.private[b].contains(&k)).collect()
    }

    /// BS indices serving user `k`'s common stream, ascending.
    pub fn serving_common(&self, k: usize) -> Vec<usize> {
        (0..self.num_bs()).filter(|&b| self.common[b].contains(&k)).collect()
    }
}

/// Who decodes which common message, and in which order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeStructure {
    /// `decoders[k]` is M_k: the users that decode user `k`'s common message
    /// (including `k` itself whenever the stream exists).
    pub decoders: Vec<BTreeSet<usize>>,
    /// `decoded[k]` is I_k: the owners of common messages user `k` decodes.
    pub decoded: Vec<BTreeSet<usize>>,
    /// `order[k]` lists I_k in decoding sequence, first decoded first.
    pub order: Vec<Vec<usize>>,
}

impl DecodeStructure {
    pub fn empty(num_users: usize) -> Self {
        DecodeStructure {
            decoders: vec![BTreeSet::new(); num_users],
            decoded: vec![BTreeSet::new(); num_users],
            order: vec![Vec::new(); num_users],
        }
    }

    /// Decoding rank of owner `i` at user `k` (1-based; larger = later).
    pub fn rank(&self, i: usize, k: usize) -> Option<usize> {
        self.order[k].iter().position(|&m| m == i).map(|p| p + 1)
    }

    /// Check duality, self-membership, and order consistency.
    pub fn validate(&self) -> Result<(), DomainError> {
        let n = self.decoders.len();
        for k in 0..n {
            if !self.decoders[k].is_empty() && !self.decoders[k].contains(&k) {
                return Err(DomainError(format!("user {k} does not decode its own common message")));
            }
            let from_order: BTreeSet<usize> = self.order[k].iter().copied().collect();
            if from_order != self.decoded[k] || from_order.len() != self.order[k].len() {
                return Err(DomainError(format!("order[{k}] is not a bijection over I_{k}")));
            }
            for &i in &self.decoded[k] {
                if !self.decoders[i].contains(&k) {
                    return Err(DomainError(format!("duality broken: {i} in I_{k} but {k} not in M_{i}")));
                }
            }
            for (i, ms) in self.decoders.iter().enumerate() {
                if ms.contains(&k) && !self.decoded[k].contains(&i) {
                    return Err(DomainError(format!("duality broken: {k} in M_{i} but {i} not in I_{k}")));
                }
            }
        }
        Ok(())
    }
}

/// The full combinatorial structure handed to the optimizer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsmaStructure {
    pub clusters: ClusterSets,
    pub decode: DecodeStructure,
    /// When set, the single common stream at this owner slot is shared: its
    /// rate splits into per-user portions and each serving BS forwards the
    /// whole stream once (SCM accounting).
    pub shared_common: Option<usize>,
}

impl RsmaStructure {
    /// True when no common streams exist at all.
    pub fn is_tin(&self) -> bool {
        self.decode.decoders.iter().all(|m| m.is_empty())
    }

    /// Owner `i` carries a common stream iff someone decodes it.
    pub fn has_common_stream(&self, i: usize) -> bool {
        !self.decode.decoders[i].is_empty()
    }

    /// All `(owner, decoder)` pairs with `owner in I_decoder`, sorted.
    pub fn common_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for (k, set) in self.decode.decoded.iter().enumerate() {
            for &i in set {
                pairs.push((i, k));
            }
        }
        pairs.sort_unstable();
        pairs
    }

    /// Fully connected structure: every BS serves every user's both streams
    /// and every user decodes every common message in index order.
    pub fn full(num_bs: usize, num_users: usize) -> Self {
        let all: BTreeSet<usize> = (0..num_users).collect();
        let clusters = ClusterSets {
            private: vec![all.clone(); num_bs],
            common: vec![all.clone(); num_bs],
        };
        let decode = DecodeStructure {
            decoders: vec![all.clone(); num_users],
            decoded: vec![all.clone(); num_users],
            order: vec![(0..num_users).collect(); num_users],
        };
        RsmaStructure { clusters, decode, shared_common: None }
    }

    /// Serialize to the reproducibility dump format (TOML).
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("structure serialization cannot fail")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_file(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_toml_string())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}

/// Rank BS indices for user `k` by descending channel norm, ties toward the
/// lower BS index.
fn ranked_bs(channel: &ChannelState, k: usize) -> Vec<usize> {
    let mut bs: Vec<usize> = (0..channel.num_bs()).collect();
    bs.sort_by(|&a, &b| {
        channel
            .link_norm(b, k)
            .partial_cmp(&channel.link_norm(a, k))
            .unwrap()
            .then(a.cmp(&b))
    });
    bs
}

/// Serve each user's private (common) stream from its `s_p` (`s_c`)
/// strongest BSs by channel norm; clusters are the inverted sets.
pub fn build_clusters(
    channel: &ChannelState,
    config: &SystemConfig,
    sizes: (usize, usize),
) -> ClusterSets {
    let (s_p, s_c) = sizes;
    let mut private = vec![BTreeSet::new(); config.num_bs];
    let mut common = vec![BTreeSet::new(); config.num_bs];
    for k in 0..config.num_users {
        let ranked = ranked_bs(channel, k);
        for &b in ranked.iter().take(s_p) {
            private[b].insert(k);
        }
        for &b in ranked.iter().take(s_c) {
            common[b].insert(k);
        }
    }
    ClusterSets { private, common }
}

/// Aggregate cross-channel gain of user `j` over a BS subset.
fn gain_over(channel: &ChannelState, j: usize, bs: &[usize]) -> f64 {
    bs.iter().map(|&b| channel.link_norm(b, j).powi(2)).sum::<f64>().sqrt()
}

/// Build decode sets: `M_k` is `k` plus the `d` users with the largest
/// cross-channel gain onto `k`'s common-serving BSs; `I_k` follows by
/// duality; the order at `k` decodes stronger owners first.
pub fn build_decode_structure(
    channel: &ChannelState,
    clusters: &ClusterSets,
    config: &SystemConfig,
    d: usize,
) -> DecodeStructure {
    let kn = config.num_users;
    let d = d.min(kn.saturating_sub(1));
    let mut decoders: Vec<BTreeSet<usize>> = Vec::with_capacity(kn);
    for k in 0..kn {
        let serving = clusters.serving_common(k);
        let mut others: Vec<usize> = (0..kn).filter(|&j| j != k).collect();
        others.sort_by(|&a, &b| {
            gain_over(channel, b, &serving)
                .partial_cmp(&gain_over(channel, a, &serving))
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut m: BTreeSet<usize> = others.into_iter().take(d).collect();
        m.insert(k);
        decoders.push(m);
    }
    let mut decoded = vec![BTreeSet::new(); kn];
    for (i, m) in decoders.iter().enumerate() {
        for &k in m {
            decoded[k].insert(i);
        }
    }
    let order = decoded
        .iter()
        .enumerate()
        .map(|(k, set)| {
            let mut owners: Vec<usize> = set.iter().copied().collect();
            // Stronger owner clusters are decoded (and removed) first.
            owners.sort_by(|&a, &b| {
                let ga = gain_over(channel, k, &clusters.serving_common(a));
                let gb = gain_over(channel, k, &clusters.serving_common(b));
                gb.partial_cmp(&ga).unwrap().then(a.cmp(&b))
            });
            owners
        })
        .collect();
    DecodeStructure { decoders, decoded, order }
}

/// The owners whose common messages are still undecoded after message `i`
/// at user `k`: `I'_{i,k} = { m in I_k | pi_k(m) > pi_k(i) }`.
pub fn residual_set(
    decode: &DecodeStructure,
    i: usize,
    k: usize,
) -> Result<BTreeSet<usize>, DomainError> {
    let pos = decode.order[k]
        .iter()
        .position(|&m| m == i)
        .ok_or_else(|| DomainError(format!("owner {i} is not in I_{k}")))?;
    Ok(decode.order[k][pos + 1..].iter().copied().collect())
}

/// Structural knobs for the default heuristics. Values beyond the network
/// size clamp to it, so `usize::MAX` means "all BSs" / "all users".
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StructureParams {
    /// Serving-cluster size for private streams (s_p).
    pub private_cluster_size: usize,
    /// Serving-cluster size for common streams (s_c).
    pub common_cluster_size: usize,
    /// Number of cross decoders per common message (d).
    pub decode_set_size: usize,
}

impl Default for StructureParams {
    fn default() -> Self {
        // Full cooperation for common streams: small common clusters strand
        // the iteration in stationary points worse than plain TIN, while
        // serving every common stream from all BSs (and letting every user
        // decode every common message) keeps the descent path clean.
        StructureParams {
            private_cluster_size: 2,
            common_cluster_size: usize::MAX,
            decode_set_size: usize::MAX,
        }
    }
}

impl StructureParams {
    /// Clamp cluster sizes into `[1, B]` and the decode size into `[0, K-1]`.
    pub fn clamped(&self, num_bs: usize, num_users: usize) -> Self {
        StructureParams {
            private_cluster_size: self.private_cluster_size.clamp(1, num_bs),
            common_cluster_size: self.common_cluster_size.clamp(1, num_bs),
            decode_set_size: self.decode_set_size.min(num_users.saturating_sub(1)),
        }
    }
}

/// Convenience map from owner to its decode rank at each user, for tests.
pub fn rank_table(decode: &DecodeStructure) -> BTreeMap<(usize, usize), usize> {
    let mut table = BTreeMap::new();
    for (k, order) in decode.order.iter().enumerate() {
        for (pos, &i) in order.iter().enumerate() {
            table.insert((i, k), pos + 1);
        }
    }
    table
}
