//! Progressive greedy search over block scoring functions, plus a random
//! baseline.
//!
//! The search walks block counts b = 4, 6, ..., B. The 4-block stage trains
//! every inequivalent candidate (there are only five). Every later stage
//! repeatedly: grows a pool of `pool_size` candidates by adding two signed
//! terms to a uniformly chosen top-`parent_top_k` survivor of the previous
//! stage, filtering out untrainable or equivalent grids; ranks the pool with
//! the symmetry-feature predictor; trains the best `predictor_top_k` on a
//! worker pool; then refits the predictor on everything recorded so far.
//! Records commit in candidate order, so a run is reproducible for any
//! worker count.

use std::collections::HashSet;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blm::{BlockSF, CHUNKS};
use crate::equivalence::{canonical_form, check_c2, enumerate_b4, filter_accept};
use crate::error::{Error, Result};
use crate::evaluation::link_prediction;
use crate::kgdata::{Split, TripleStore};
use crate::scalar::Scalar;
use crate::srf::{srf, Predictor, PredictorConfig, SrfVector};
use crate::training::{train, TrainConfig};
use crate::util::derive_seed;

/// Settings of one search run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Final number of nonzero blocks (B); even, at least 4.
    pub target_blocks: usize,
    /// Parents sampled from the best K1 records of the previous stage.
    pub parent_top_k: usize,
    /// Candidates trained per inner iteration (K2).
    pub predictor_top_k: usize,
    /// Candidate pool size per inner iteration (N).
    pub pool_size: usize,
    /// Evaluations per stage for every b > 4.
    pub stage_budget: usize,
    /// Generation stalls after `stall_factor * pool_size` consecutive
    /// rejections.
    pub stall_factor: usize,
    /// Worker-pool width for candidate evaluation.
    pub workers: usize,
    pub seed: u64,
    pub train: TrainConfig,
    pub predictor: PredictorConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            target_blocks: 6,
            parent_top_k: 8,
            predictor_top_k: 8,
            pool_size: 256,
            stage_budget: 256,
            stall_factor: 10,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            seed: 0,
            train: TrainConfig::default(),
            predictor: PredictorConfig::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_blocks < 4 || self.target_blocks % 2 != 0 {
            return Err(Error::config(format!(
                "target block count {} must be even and at least 4",
                self.target_blocks
            )));
        }
        if self.target_blocks > 16 {
            return Err(Error::config("target block count cannot exceed 16"));
        }
        if self.predictor_top_k == 0 || self.parent_top_k == 0 {
            return Err(Error::config("top-k settings must be positive"));
        }
        if self.predictor_top_k > self.pool_size {
            return Err(Error::config(format!(
                "predictor_top_k {} larger than pool_size {}",
                self.predictor_top_k, self.pool_size
            )));
        }
        if self.stage_budget == 0 || self.pool_size == 0 {
            return Err(Error::config("budgets must be positive"));
        }
        if self.workers == 0 {
            return Err(Error::config("worker count must be positive"));
        }
        self.train.validate()
    }
}

/// One trained candidate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchRecord {
    /// Canonical form of the evaluated grid.
    pub sf: BlockSF,
    /// Its block count.
    pub b: usize,
    /// Validation MRR (0 when training failed; see `error`).
    pub val_mrr: f64,
    pub srf: SrfVector,
    /// Seconds spent training and evaluating.
    pub wall_time: f64,
    /// Stage (block count) during which the record was made.
    pub stage: usize,
    /// Seed the embeddings were trained with.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Train and evaluate one candidate: embeddings on the train split,
/// validation MRR as the figure of merit. Training failures degrade to a
/// zero-MRR record instead of aborting the search.
pub fn evaluate_sf<S: Scalar>(
    store: &TripleStore,
    sf: &BlockSF,
    train_config: &TrainConfig,
) -> SearchRecord {
    let started = Instant::now();
    let canonical = canonical_form(sf);
    let features = srf(sf);
    let b = sf.block_count();
    let outcome = train::<S>(store, sf, train_config)
        .and_then(|result| link_prediction(store, sf, &result.table, Split::Valid));
    match outcome {
        Ok(report) => SearchRecord {
            sf: canonical,
            b,
            val_mrr: report.mrr,
            srf: features,
            wall_time: started.elapsed().as_secs_f64(),
            stage: b,
            seed: train_config.seed,
            error: None,
        },
        Err(err) => SearchRecord {
            sf: canonical,
            b,
            val_mrr: 0.0,
            srf: features,
            wall_time: started.elapsed().as_secs_f64(),
            stage: b,
            seed: train_config.seed,
            error: Some(err.to_string()),
        },
    }
}

/// Grow a pool of candidates by adding two signed terms to random parents.
///
/// Every accepted candidate lands on two distinct empty blocks of its
/// parent, passes C2 and is inequivalent to everything in `pending` and
/// `history`; its canonical form is inserted into `pending`. Returns early
/// with a warning once `stall_limit` consecutive draws were rejected.
pub fn generate_candidates(
    parents: &[BlockSF],
    pool_size: usize,
    pending: &mut HashSet<BlockSF>,
    history: &HashSet<BlockSF>,
    rng: &mut ChaCha8Rng,
    stall_limit: usize,
) -> Result<Vec<BlockSF>> {
    if parents.is_empty() {
        return Err(Error::argument("candidate generation needs at least one parent"));
    }
    let mut out = Vec::with_capacity(pool_size);
    let mut rejections = 0usize;
    while out.len() < pool_size {
        let parent = parents[rng.gen_range(0..parents.len())];
        let empty: Vec<(usize, usize)> = (0..CHUNKS)
            .flat_map(|i| (0..CHUNKS).map(move |j| (i, j)))
            .filter(|&(i, j)| parent.get(i, j) == 0)
            .collect();
        if empty.len() < 2 {
            return Err(Error::argument(format!("parent {parent} has no room for two more blocks")));
        }
        let a = rng.gen_range(0..empty.len());
        let b = loop {
            let b = rng.gen_range(0..empty.len());
            if b != a {
                break b;
            }
        };
        let mut candidate = parent;
        for &cell in [empty[a], empty[b]].iter() {
            let label = rng.gen_range(1..=CHUNKS as i8);
            let sign = if rng.gen_bool(0.5) { 1 } else { -1 };
            candidate.set(cell.0, cell.1, sign * label).unwrap();
        }
        // Same acceptance rule as `filter_accept`, canonicalizing once.
        let accepted = check_c2(&candidate) && {
            let canon = canonical_form(&candidate);
            !history.contains(&canon) && pending.insert(canon)
        };
        if accepted {
            out.push(candidate);
            rejections = 0;
        } else {
            rejections += 1;
            if rejections >= stall_limit {
                log::warn!(
                    "candidate generation stalled after {rejections} consecutive rejections; returning {} of {pool_size}",
                    out.len()
                );
                break;
            }
        }
    }
    Ok(out)
}

fn evaluate_batch<S: Scalar>(
    store: &TripleStore,
    candidates: &[BlockSF],
    config: &SearchConfig,
    eval_counter: &mut u64,
    stage: usize,
) -> Vec<SearchRecord> {
    let seeds: Vec<u64> = candidates
        .iter()
        .map(|_| {
            let seed = derive_seed(config.seed, *eval_counter);
            *eval_counter += 1;
            seed
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .expect("worker pool");
    let mut records: Vec<SearchRecord> = pool.install(|| {
        use rayon::prelude::*;
        candidates
            .par_iter()
            .zip(&seeds)
            .map(|(sf, &seed)| {
                let train_config = TrainConfig { seed, ..config.train.clone() };
                evaluate_sf::<S>(store, sf, &train_config)
            })
            .collect()
    });
    for record in &mut records {
        record.stage = stage;
    }
    records
}

/// Records usable as parents or predictor targets (training succeeded).
fn usable(records: &[SearchRecord]) -> Vec<&SearchRecord> {
    records.iter().filter(|r| r.error.is_none()).collect()
}

fn fit_predictor(records: &[SearchRecord], config: &PredictorConfig) -> Result<Predictor> {
    let data: Vec<(SrfVector, f64)> = usable(records)
        .iter()
        .map(|r| (r.srf, r.val_mrr))
        .collect();
    Predictor::fit(&data, config)
}

fn sort_best_first(mut records: Vec<SearchRecord>) -> Vec<SearchRecord> {
    records.sort_by(|a, b| b.val_mrr.partial_cmp(&a.val_mrr).unwrap_or(std::cmp::Ordering::Equal));
    records
}

/// The progressive greedy search. `initial_history` replays records from an
/// interrupted run (they count against their stages' budgets and are not
/// re-evaluated or re-emitted); `on_record` observes each new record as it
/// commits. Returns the full history sorted best-first.
pub fn greedy_search<S: Scalar>(
    store: &TripleStore,
    config: &SearchConfig,
    initial_history: Vec<SearchRecord>,
    mut on_record: impl FnMut(&SearchRecord),
) -> Result<Vec<SearchRecord>> {
    config.validate()?;
    let mut history = initial_history;
    let mut seen: HashSet<BlockSF> = history.iter().map(|r| r.sf).collect();
    let mut eval_counter = history.len() as u64;

    // Exception stage: every 4-block class is trained, no predictor needed.
    let four_block = enumerate_b4();
    let missing: Vec<BlockSF> = four_block
        .iter()
        .filter(|sf| !seen.contains(*sf))
        .copied()
        .collect();
    for record in evaluate_batch::<S>(store, &missing, config, &mut eval_counter, 4) {
        seen.insert(record.sf);
        on_record(&record);
        history.push(record);
    }

    let mut stage = 6;
    while stage <= config.target_blocks {
        let done = history.iter().filter(|r| r.stage == stage).count();
        let mut remaining = config.stage_budget.saturating_sub(done);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1000 + stage as u64));

        while remaining > 0 {
            let mut parent_records: Vec<&SearchRecord> = usable(&history)
                .into_iter()
                .filter(|r| r.b == stage - 2)
                .collect();
            parent_records.sort_by(|a, b| {
                b.val_mrr.partial_cmp(&a.val_mrr).unwrap_or(std::cmp::Ordering::Equal)
            });
            let parents: Vec<BlockSF> = parent_records
                .iter()
                .take(config.parent_top_k)
                .map(|r| r.sf)
                .collect();
            if parents.is_empty() {
                return Err(Error::numeric(format!(
                    "no usable {}-block parents to grow {stage}-block candidates from",
                    stage - 2
                )));
            }

            let mut pending = HashSet::new();
            let pool = generate_candidates(
                &parents,
                config.pool_size,
                &mut pending,
                &seen,
                &mut rng,
                config.stall_factor * config.pool_size,
            )?;
            if pool.is_empty() {
                log::warn!("stage {stage}: candidate space exhausted with {remaining} evaluations unspent");
                break;
            }

            let predictor = fit_predictor(&history, &config.predictor)?;
            let mut ranked: Vec<(usize, f64)> = pool
                .iter()
                .map(|sf| predictor.score(sf))
                .enumerate()
                .collect();
            // Stable sort keeps generation order among ties.
            ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
            let selected: Vec<BlockSF> = ranked
                .iter()
                .take(config.predictor_top_k.min(remaining))
                .map(|&(idx, _)| pool[idx])
                .collect();

            for record in evaluate_batch::<S>(store, &selected, config, &mut eval_counter, stage) {
                seen.insert(record.sf);
                on_record(&record);
                history.push(record);
                remaining -= 1;
            }
        }
        stage += 2;
    }
    Ok(sort_best_first(history))
}

/// Random baseline: uniform rejection sampling of C2-passing, inequivalent
/// grids with exactly `target_blocks` blocks, evaluated under the same
/// budget (`stage_budget` evaluations in total).
pub fn random_search<S: Scalar>(
    store: &TripleStore,
    config: &SearchConfig,
    initial_history: Vec<SearchRecord>,
    mut on_record: impl FnMut(&SearchRecord),
) -> Result<Vec<SearchRecord>> {
    config.validate()?;
    let mut history = initial_history;
    let mut seen: HashSet<BlockSF> = history.iter().map(|r| r.sf).collect();
    let mut eval_counter = history.len() as u64;
    let mut remaining = config.stage_budget.saturating_sub(history.len());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 2000));
    let stall_limit = config.stall_factor * config.pool_size;

    let cells: Vec<(usize, usize)> = (0..CHUNKS)
        .flat_map(|i| (0..CHUNKS).map(move |j| (i, j)))
        .collect();

    while remaining > 0 {
        let batch_target = config.predictor_top_k.min(remaining);
        let mut pending = HashSet::new();
        let mut batch = Vec::with_capacity(batch_target);
        let mut rejections = 0usize;
        while batch.len() < batch_target {
            let mut support = cells.clone();
            support.partial_shuffle(&mut rng, config.target_blocks);
            let mut candidate = BlockSF::zero();
            for &(i, j) in support.iter().take(config.target_blocks) {
                let label = rng.gen_range(1..=CHUNKS as i8);
                let sign = if rng.gen_bool(0.5) { 1 } else { -1 };
                candidate.set(i, j, sign * label).unwrap();
            }
            if filter_accept(&candidate, &pending, &seen) {
                pending.insert(canonical_form(&candidate));
                batch.push(candidate);
                rejections = 0;
            } else {
                rejections += 1;
                if rejections >= stall_limit {
                    log::warn!("random search stalled with {remaining} evaluations unspent");
                    break;
                }
            }
        }
        if batch.is_empty() {
            break;
        }
        for record in
            evaluate_batch::<S>(store, &batch, config, &mut eval_counter, config.target_blocks)
        {
            seen.insert(record.sf);
            on_record(&record);
            history.push(record);
            remaining -= 1;
        }
    }
    Ok(sort_best_first(history))
}
