//! Seeded synthetic knowledge graphs with one relation per structural
//! pattern.
//!
//! The generated graph has a predictable low-rank structure, so embedding
//! models that can represent a pattern recover held-out triples of it:
//!
//! * `similar` — symmetric: both directions of near neighbors inside
//!   fixed-size entity clusters.
//! * `precedes` — anti-symmetric: forward edges along the global entity
//!   order within a small window, never reversed.
//! * `has_part` / `part_of` — an inverse pair between the lower and upper
//!   halves of the entity range.
//! * `points_to` — general asymmetric: every non-anchor entity points at the
//!   anchor of the next cluster.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::kgdata::TripleStore;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub entities: usize,
    /// Entities per cluster.
    pub cluster: usize,
    /// Maximum forward distance of `precedes` edges.
    pub window: usize,
    pub seed: u64,
    pub valid_frac: f64,
    pub test_frac: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            entities: 200,
            cluster: 8,
            window: 3,
            seed: 0,
            valid_frac: 0.1,
            test_frac: 0.1,
        }
    }
}

/// Relation names in generation order.
pub const SYMMETRIC: &str = "similar";
pub const ANTI_SYMMETRIC: &str = "precedes";
pub const INVERSE_A: &str = "has_part";
pub const INVERSE_B: &str = "part_of";
pub const GENERAL: &str = "points_to";

/// Generate the graph and split it into train/valid/test by a seeded
/// shuffle.
pub fn synthetic_kg(config: &SynthConfig) -> TripleStore {
    let n = config.entities;
    assert!(n >= 2 * config.cluster, "need at least two clusters");
    let name = |e: usize| format!("e{e}");
    let mut rows: Vec<(String, String, String)> = Vec::new();

    let clusters = n.div_ceil(config.cluster);
    let cluster_of = |e: usize| e / config.cluster;

    // Symmetric: near neighbors within a cluster, both directions.
    for u in 0..n {
        for dist in 1..=2usize {
            let v = u + dist;
            if v < n && cluster_of(v) == cluster_of(u) {
                rows.push((name(u), SYMMETRIC.into(), name(v)));
                rows.push((name(v), SYMMETRIC.into(), name(u)));
            }
        }
    }

    // Anti-symmetric: forward window edges, never reversed.
    for u in 0..n {
        for dist in 1..=config.window {
            let v = u + dist;
            if v < n {
                rows.push((name(u), ANTI_SYMMETRIC.into(), name(v)));
            }
        }
    }

    // Inverse pair: lower-half parents own upper-half children.
    let half = n / 2;
    for child in half..n {
        let parent = (child - half) / 2;
        rows.push((name(parent), INVERSE_A.into(), name(child)));
        rows.push((name(child), INVERSE_B.into(), name(parent)));
    }

    // General asymmetric: non-anchors point at the next cluster's anchor.
    // Heads and tails are disjoint, so no symmetry rule can fire.
    for u in 0..n {
        let c = cluster_of(u);
        if u == c * config.cluster {
            continue; // anchors have no outgoing edge
        }
        let target_cluster = (c + 1) % clusters;
        rows.push((name(u), GENERAL.into(), name(target_cluster * config.cluster)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rows.shuffle(&mut rng);
    let n_test = (rows.len() as f64 * config.test_frac).round() as usize;
    let n_valid = (rows.len() as f64 * config.valid_frac).round() as usize;
    let test: Vec<_> = rows[..n_test].to_vec();
    let valid: Vec<_> = rows[n_test..n_test + n_valid].to_vec();
    let train: Vec<_> = rows[n_test + n_valid..].to_vec();
    TripleStore::from_named_triples([&train, &valid, &test])
}
