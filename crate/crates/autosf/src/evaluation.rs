//! Filtered link prediction and triplet classification.

use ndarray::Array1;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blm::{relation_col_vector, relation_row_vector, score, BlockSF, EmbeddingTable};
use crate::error::{Error, Result};
use crate::kgdata::{Query, Split, Triple, TripleStore};
use crate::scalar::Scalar;

/// Link-prediction metrics plus the raw per-triple ranks.
///
/// `ranks[i]` holds the head-side and tail-side rank of the i-th triple of
/// the evaluated split, in split order. Serialization keeps only the
/// aggregate metrics: `{"mrr", "hits1", "hits10", "n"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankReport {
    pub mrr: f64,
    pub hits1: f64,
    pub hits10: f64,
    /// Number of ranks aggregated (two per triple).
    pub n: usize,
    #[serde(skip)]
    pub ranks: Vec<[usize; 2]>,
}

impl RankReport {
    pub fn from_ranks(ranks: Vec<[usize; 2]>) -> Self {
        let n = 2 * ranks.len();
        let flat = ranks.iter().flatten().copied();
        let mrr = flat.clone().map(|r| 1.0 / r as f64).sum::<f64>() / n.max(1) as f64;
        let hits = |k: usize| {
            flat.clone().filter(|&r| r <= k).count() as f64 / n.max(1) as f64
        };
        RankReport {
            mrr,
            hits1: hits(1),
            hits10: hits(10),
            n,
            ranks,
        }
    }

    /// Metrics restricted to a subset of triples (indices into the split).
    pub fn restricted_to(&self, indices: &[usize]) -> RankReport {
        RankReport::from_ranks(indices.iter().map(|&i| self.ranks[i]).collect())
    }
}

/// Filtered rank of the true candidate among all entities: 1 plus the
/// number of unfiltered competitors scoring at least as high (ties count
/// ahead, so constant scoring functions cannot look good).
fn filtered_rank(scores: &Array1<f64>, true_entity: usize, filtered: &[usize], mask: &mut [bool]) -> usize {
    for &e in filtered {
        mask[e] = true;
    }
    let s_true = scores[true_entity];
    let mut rank = 1;
    for (e, &s) in scores.iter().enumerate() {
        if mask[e] || e == true_entity {
            continue;
        }
        if s >= s_true {
            rank += 1;
        }
    }
    for &e in filtered {
        mask[e] = false;
    }
    rank
}

/// Rank every triple of a split in both directions under the filtered
/// protocol: the candidate list excludes all other entities known to
/// complete the query in any split.
pub fn link_prediction<S: Scalar>(
    store: &TripleStore,
    sf: &BlockSF,
    table: &EmbeddingTable<S>,
    split: Split,
) -> Result<RankReport> {
    if table.num_entities() != store.num_entities() || table.num_relations() != store.num_relations()
    {
        return Err(Error::argument(format!(
            "table shape ({} entities, {} relations) does not match store ({}, {})",
            table.num_entities(),
            table.num_relations(),
            store.num_entities(),
            store.num_relations()
        )));
    }
    let triples = store.split(split);
    let ranks: Vec<[usize; 2]> = triples
        .par_iter()
        .map_init(
            || vec![false; store.num_entities()],
            |mask, triple| -> Result<[usize; 2]> {
                let r = table.relation_row(triple.relation);

                let q = relation_row_vector(sf, table.entity_row(triple.head), r)?;
                let tail_scores = dense_scores(&q, table);
                let tail_filtered = store.filtered_candidates(Query::Tails {
                    head: triple.head,
                    relation: triple.relation,
                })?;
                let tail_rank = filtered_rank(&tail_scores, triple.tail, tail_filtered, mask);

                let p = relation_col_vector(sf, table.entity_row(triple.tail), r)?;
                let head_scores = dense_scores(&p, table);
                let head_filtered = store.filtered_candidates(Query::Heads {
                    tail: triple.tail,
                    relation: triple.relation,
                })?;
                let head_rank = filtered_rank(&head_scores, triple.head, head_filtered, mask);

                Ok([head_rank, tail_rank])
            },
        )
        .collect::<Result<_>>()?;
    Ok(RankReport::from_ranks(ranks))
}

fn dense_scores<S: Scalar>(q: &Array1<f64>, table: &EmbeddingTable<S>) -> Array1<f64> {
    let mut out = Array1::zeros(table.num_entities());
    for (e, row) in table.entity.rows().into_iter().enumerate() {
        let mut acc = 0.0;
        for (a, b) in q.iter().zip(row.iter()) {
            acc += a * b.as_f64();
        }
        out[e] = acc;
    }
    out
}

/// A triple with a truth label.
pub type LabeledTriple = (Triple, bool);

/// Per-relation decision thresholds for triplet classification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Thresholds {
    /// One threshold per relation index.
    pub sigma: Vec<f64>,
    /// Relations whose threshold fell back to the train-score median
    /// because the labeled set never mentions them.
    pub fallback_relations: Vec<usize>,
}

/// Fit per-relation thresholds on a labeled validation set by exhaustive
/// search over the midpoints of consecutive distinct scores (with infinite
/// sentinels); ties in accuracy resolve to the smallest threshold.
///
/// Relations absent from the labeled set get the median score of their
/// train-split triples (or of the whole train split when they have none).
pub fn classification_thresholds<S: Scalar>(
    store: &TripleStore,
    labeled_valid: &[LabeledTriple],
    sf: &BlockSF,
    table: &EmbeddingTable<S>,
) -> Result<Thresholds> {
    let nr = store.num_relations();
    let mut by_relation: Vec<Vec<(f64, bool)>> = vec![Vec::new(); nr];
    for &(triple, label) in labeled_valid {
        let s = score(
            sf,
            table.entity_row(triple.head),
            table.relation_row(triple.relation),
            table.entity_row(triple.tail),
        )?;
        by_relation[triple.relation].push((s, label));
    }

    let mut train_scores: Vec<Vec<f64>> = vec![Vec::new(); nr];
    for triple in &store.train {
        let s = score(
            sf,
            table.entity_row(triple.head),
            table.relation_row(triple.relation),
            table.entity_row(triple.tail),
        )?;
        train_scores[triple.relation].push(s);
    }
    let mut all_train: Vec<f64> = train_scores.iter().flatten().copied().collect();
    let global_fallback = median(&mut all_train).unwrap_or(0.0);

    let mut sigma = vec![0.0; nr];
    let mut fallback_relations = Vec::new();
    for r in 0..nr {
        if by_relation[r].is_empty() {
            sigma[r] = median(&mut train_scores[r]).unwrap_or(global_fallback);
            fallback_relations.push(r);
        } else {
            sigma[r] = best_threshold(&by_relation[r]);
        }
    }
    Ok(Thresholds { sigma, fallback_relations })
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Candidate thresholds are -inf, midpoints of consecutive distinct sorted
/// scores, and +inf; accuracy of `score > sigma` is maximized, smallest
/// winner kept.
fn best_threshold(samples: &[(f64, bool)]) -> f64 {
    let mut scores: Vec<f64> = samples.iter().map(|&(s, _)| s).collect();
    scores.sort_by(f64::total_cmp);
    scores.dedup();
    let mut candidates = vec![f64::NEG_INFINITY];
    for pair in scores.windows(2) {
        candidates.push(0.5 * (pair[0] + pair[1]));
    }
    candidates.push(f64::INFINITY);

    let mut best = (f64::NEG_INFINITY, -1i64);
    for &sigma in &candidates {
        let correct = samples
            .iter()
            .filter(|&&(s, label)| (s > sigma) == label)
            .count() as i64;
        if correct > best.1 {
            best = (sigma, correct);
        }
    }
    best.0
}

/// Accuracy of `score > sigma_r` against the labels of a test set.
/// Relations never seen by the threshold fitter use their fallback value.
pub fn triplet_classification<S: Scalar>(
    labeled_test: &[LabeledTriple],
    thresholds: &Thresholds,
    sf: &BlockSF,
    table: &EmbeddingTable<S>,
) -> Result<f64> {
    if labeled_test.is_empty() {
        return Err(Error::argument("labeled test set must be non-empty"));
    }
    let mut correct = 0usize;
    for &(triple, label) in labeled_test {
        let s = score(
            sf,
            table.entity_row(triple.head),
            table.relation_row(triple.relation),
            table.entity_row(triple.tail),
        )?;
        if (s > thresholds.sigma[triple.relation]) == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / labeled_test.len() as f64)
}

/// Labeled valid/test sets for classification benchmarks that ship only
/// positives.
#[derive(Debug, Clone)]
pub struct LabeledSets {
    pub valid: Vec<LabeledTriple>,
    pub test: Vec<LabeledTriple>,
}

/// Pair every valid/test positive with one negative obtained by corrupting
/// its head or tail (fair coin) with a uniform entity until the corrupted
/// triple is absent from all splits. Deterministic per seed.
pub fn negative_sampling_for_classification(
    store: &TripleStore,
    seed: u64,
) -> Result<LabeledSets> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = |split: &[Triple]| -> Result<Vec<LabeledTriple>> {
        let mut out = Vec::with_capacity(2 * split.len());
        for &triple in split {
            out.push((triple, true));
            let corrupt_head = rng.gen_bool(0.5);
            let mut tries = 0;
            let negative = loop {
                let e = rng.gen_range(0..store.num_entities());
                let candidate = if corrupt_head {
                    Triple { head: e, ..triple }
                } else {
                    Triple { tail: e, ..triple }
                };
                if !store.contains(candidate) {
                    break candidate;
                }
                tries += 1;
                if tries >= 1000 {
                    return Err(Error::numeric(format!(
                        "could not corrupt triple ({}, {}, {}) after 1000 tries",
                        triple.head, triple.relation, triple.tail
                    )));
                }
            };
            out.push((negative, false));
        }
        Ok(out)
    };
    Ok(LabeledSets {
        valid: sample(&store.valid)?,
        test: sample(&store.test)?,
    })
}
