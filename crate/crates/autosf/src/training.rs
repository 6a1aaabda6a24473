//! Embedding training with the multi-class loss and Adagrad.
//!
//! Each batch triple contributes a cross-entropy term in both directions:
//! its tail against all entities and its head against all entities, so no
//! negative sampling is involved. Optimization is plain Adagrad with a
//! per-epoch multiplicative learning-rate decay; a single run is
//! single-threaded and fully determined by its seed.
//!
//! All arithmetic runs in `f64` irrespective of the table's storage scalar;
//! storage precision only affects the initial values and the returned table.

use std::collections::HashSet;
use std::time::Instant;

use ndarray::{Array2, ArrayView1, ArrayView2, s};
use ndarray::linalg::general_mat_mul;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blm::{BlockSF, EmbeddingTable, CHUNKS};
use crate::equivalence::check_c2;
use crate::error::{Error, Result};
use crate::kgdata::{Triple, TripleStore};
use crate::scalar::Scalar;
use crate::util::derive_seed;

/// Rows scored per matrix multiplication; bounds the working set to a few
/// megabytes per worker on the benchmark graphs.
const SCORE_CHUNK: usize = 64;

/// Hyperparameters of one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Embedding dimension, divisible by 4.
    pub d: usize,
    /// Adagrad learning rate.
    pub lr: f64,
    /// L2 penalty on batch-touched embedding rows.
    pub l2: f64,
    /// Mini-batch size.
    pub batch: usize,
    /// Per-epoch learning-rate decay, in `[0.99, 1.0]`.
    pub decay: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Half-width of the uniform initialization interval.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 64,
            lr: 0.1,
            l2: 1e-3,
            batch: 512,
            decay: 0.995,
            epochs: 100,
            seed: 0,
            init_scale: 1e-2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d % CHUNKS != 0 {
            return Err(Error::config(format!("dimension {} must be a positive multiple of 4", self.d)));
        }
        if !(self.lr > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        if self.l2 < 0.0 {
            return Err(Error::config("l2 penalty must be non-negative"));
        }
        if self.batch == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if !(0.99..=1.0).contains(&self.decay) {
            return Err(Error::config(format!("decay {} outside [0.99, 1.0]", self.decay)));
        }
        if self.init_scale < 0.0 {
            return Err(Error::config("init_scale must be non-negative"));
        }
        Ok(())
    }
}

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainResult<S: Scalar> {
    pub table: EmbeddingTable<S>,
    /// Triple-weighted mean loss per epoch.
    pub loss_history: Vec<f64>,
    /// Seconds spent inside [`train`].
    pub wall_time: f64,
}

/// Gradients of one batch with respect to both embedding matrices.
///
/// The multi-class loss sums over all entities in each softmax, so every
/// entity row carries gradient; relation rows are nonzero only where the
/// batch touches them. Both come back dense in `f64`.
#[derive(Debug, Clone)]
pub struct BatchGradients {
    pub entity: Array2<f64>,
    pub relation: Array2<f64>,
}

/// Fresh embedding tables with entries uniform in
/// `[-init_scale, init_scale]`, deterministic in the seed.
pub fn init_embeddings<S: Scalar>(
    store: &TripleStore,
    config: &TrainConfig,
) -> Result<EmbeddingTable<S>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scale = config.init_scale;
    let mut draw = |n: usize| -> Array2<S> {
        Array2::from_shape_fn((n, config.d), |_| {
            if scale == 0.0 {
                S::from_f64(0.0)
            } else {
                S::from_f64(rng.gen_range(-scale..scale))
            }
        })
    };
    let entity = draw(store.num_entities());
    let relation = draw(store.num_relations());
    EmbeddingTable::new(entity, relation)
}

fn to_f64<S: Scalar>(m: &Array2<S>) -> Array2<f64> {
    m.mapv(Scalar::as_f64)
}

/// Compute the per-chunk combination of `h` and `r` into `out` (all `f64`).
fn fill_row_vector(sf: &BlockSF, h: ArrayView1<f64>, r: ArrayView1<f64>, out: &mut [f64]) {
    out.fill(0.0);
    let c = h.len() / CHUNKS;
    for (i, j, cell) in sf.nonzero_cells() {
        let k = cell.unsigned_abs() as usize - 1;
        let sign = f64::from(cell.signum());
        for m in 0..c {
            out[j * c + m] += sign * h[i * c + m] * r[k * c + m];
        }
    }
}

fn fill_col_vector(sf: &BlockSF, t: ArrayView1<f64>, r: ArrayView1<f64>, out: &mut [f64]) {
    out.fill(0.0);
    let c = t.len() / CHUNKS;
    for (i, j, cell) in sf.nonzero_cells() {
        let k = cell.unsigned_abs() as usize - 1;
        let sign = f64::from(cell.signum());
        for m in 0..c {
            out[i * c + m] += sign * t[j * c + m] * r[k * c + m];
        }
    }
}

/// Direction of one cross-entropy pass.
#[derive(Clone, Copy, PartialEq)]
enum Side {
    Tail,
    Head,
}

/// Reusable working state for batched loss/gradient evaluation over fixed
/// `f64` master matrices.
struct Workspace {
    grad_entity: Array2<f64>,
    grad_relation: Array2<f64>,
    combo: Array2<f64>,      // SCORE_CHUNK x d query vectors
    scores: Array2<f64>,     // SCORE_CHUNK x |E|, reused as coefficients
    grad_combo: Array2<f64>, // SCORE_CHUNK x d
}

impl Workspace {
    fn new(num_entities: usize, num_relations: usize, d: usize) -> Self {
        Workspace {
            grad_entity: Array2::zeros((num_entities, d)),
            grad_relation: Array2::zeros((num_relations, d)),
            combo: Array2::zeros((SCORE_CHUNK, d)),
            scores: Array2::zeros((SCORE_CHUNK, num_entities)),
            grad_combo: Array2::zeros((SCORE_CHUNK, d)),
        }
    }

    /// One cross-entropy direction over the whole batch. Scores are computed
    /// chunk-wise as `combo · entityᵀ`; the same buffer then holds the
    /// softmax coefficients that drive both gradient products. Returns the
    /// unnormalized cross-entropy sum.
    fn direction_pass(
        &mut self,
        sf: &BlockSF,
        entity: &Array2<f64>,
        relation: &Array2<f64>,
        batch: &[Triple],
        side: Side,
        inv_two_m: f64,
    ) -> Result<f64> {
        let d = entity.ncols();
        let c = d / CHUNKS;
        let mut ce_sum = 0.0;

        for chunk in batch.chunks(SCORE_CHUNK) {
            let rows = chunk.len();
            let mut combo = self.combo.slice_mut(s![..rows, ..]);
            for (b, triple) in chunk.iter().enumerate() {
                let r = relation.row(triple.relation);
                let mut out = combo.row_mut(b);
                match side {
                    Side::Tail => fill_row_vector(sf, entity.row(triple.head), r, out.as_slice_mut().unwrap()),
                    Side::Head => fill_col_vector(sf, entity.row(triple.tail), r, out.as_slice_mut().unwrap()),
                }
            }
            let combo = self.combo.slice(s![..rows, ..]);
            let mut scores = self.scores.slice_mut(s![..rows, ..]);
            general_mat_mul(1.0, &combo, &entity.t(), 0.0, &mut scores);

            // Log-softmax per row with max subtraction, then turn the score
            // buffer into gradient coefficients (p_e - one_hot) / (2m).
            for (b, triple) in chunk.iter().enumerate() {
                let target = match side {
                    Side::Tail => triple.tail,
                    Side::Head => triple.head,
                };
                let mut row = scores.row_mut(b);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if !max.is_finite() {
                    return Err(Error::numeric(format!(
                        "non-finite score for triple ({}, {}, {}) on the {} side",
                        triple.head,
                        triple.relation,
                        triple.tail,
                        if side == Side::Tail { "tail" } else { "head" },
                    )));
                }
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                let lse = max + sum.ln();
                ce_sum += lse
                    - match side {
                        Side::Tail => {
                            // row now holds exp(s - max); recover s_target.
                            max + row[target].ln()
                        }
                        Side::Head => max + row[target].ln(),
                    };
                let inv_sum = 1.0 / sum;
                for v in row.iter_mut() {
                    *v *= inv_sum * inv_two_m;
                }
                row[target] -= inv_two_m;
            }

            let scores = self.scores.slice(s![..rows, ..]);
            let mut grad_combo = self.grad_combo.slice_mut(s![..rows, ..]);
            general_mat_mul(1.0, &scores, entity, 0.0, &mut grad_combo);
            general_mat_mul(1.0, &scores.t(), &combo, 1.0, &mut self.grad_entity);

            // Map the combination-vector gradient back onto the embeddings
            // that built it.
            let grad_combo = self.grad_combo.slice(s![..rows, ..]);
            for (b, triple) in chunk.iter().enumerate() {
                let gq = grad_combo.row(b);
                let r_row = relation.row(triple.relation);
                let (own, own_idx) = match side {
                    Side::Tail => (triple.head, triple.head),
                    Side::Head => (triple.tail, triple.tail),
                };
                let own_row = entity.row(own);
                for (i, j, cell) in sf.nonzero_cells() {
                    let k = cell.unsigned_abs() as usize - 1;
                    let sign = f64::from(cell.signum());
                    // Tail side: combo chunk j built from h_i ∘ r_k.
                    // Head side: combo chunk i built from t_j ∘ r_k.
                    let (combo_chunk, emb_chunk) = match side {
                        Side::Tail => (j, i),
                        Side::Head => (i, j),
                    };
                    let mut ge = self.grad_entity.row_mut(own_idx);
                    for m in 0..c {
                        let g = sign * gq[combo_chunk * c + m];
                        ge[emb_chunk * c + m] += g * r_row[k * c + m];
                    }
                    let mut gr = self.grad_relation.row_mut(triple.relation);
                    for m in 0..c {
                        let g = sign * gq[combo_chunk * c + m];
                        gr[k * c + m] += g * own_row[emb_chunk * c + m];
                    }
                }
            }
        }
        Ok(ce_sum)
    }

    /// Full loss and gradients of one batch; the regularizer touches the
    /// rows of each batch triple, weighted by how often they occur.
    fn batch_pass(
        &mut self,
        sf: &BlockSF,
        entity: &Array2<f64>,
        relation: &Array2<f64>,
        batch: &[Triple],
        l2: f64,
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::argument("batch must be non-empty"));
        }
        self.grad_entity.fill(0.0);
        self.grad_relation.fill(0.0);
        let m = batch.len() as f64;
        let inv_two_m = 1.0 / (2.0 * m);

        let mut ce = 0.0;
        ce += self.direction_pass(sf, entity, relation, batch, Side::Tail, inv_two_m)?;
        ce += self.direction_pass(sf, entity, relation, batch, Side::Head, inv_two_m)?;
        let mut loss = ce * inv_two_m;

        if l2 > 0.0 {
            // Mean squared norm over the 3m embedding touches of the batch.
            let w = l2 / (3.0 * m);
            let mut reg = 0.0;
            for triple in batch {
                for (is_entity, idx) in [
                    (true, triple.head),
                    (false, triple.relation),
                    (true, triple.tail),
                ] {
                    let (row, mut grad) = if is_entity {
                        (entity.row(idx), self.grad_entity.row_mut(idx))
                    } else {
                        (relation.row(idx), self.grad_relation.row_mut(idx))
                    };
                    for (g, &v) in grad.iter_mut().zip(row.iter()) {
                        reg += v * v;
                        *g += 2.0 * w * v;
                    }
                }
            }
            loss += w * reg;
        }
        if !loss.is_finite() {
            return Err(Error::numeric(format!("non-finite batch loss {loss}")));
        }
        Ok(loss)
    }
}

/// Loss and gradients of one batch against the given table.
///
/// The loss is the two-direction cross-entropy averaged over `2m` softmax
/// terms plus `l2` times the mean squared norm of the embeddings the batch
/// touches.
pub fn batch_loss_grad<S: Scalar>(
    sf: &BlockSF,
    table: &EmbeddingTable<S>,
    batch: &[Triple],
    l2: f64,
) -> Result<(f64, BatchGradients)> {
    let entity = to_f64(&table.entity);
    let relation = to_f64(&table.relation);
    let mut ws = Workspace::new(entity.nrows(), relation.nrows(), entity.ncols());
    let loss = ws.batch_pass(sf, &entity, &relation, batch, l2)?;
    Ok((
        loss,
        BatchGradients {
            entity: ws.grad_entity,
            relation: ws.grad_relation,
        },
    ))
}

/// Adagrad state over one matrix.
struct Adagrad {
    accumulator: Array2<f64>,
}

const ADAGRAD_EPS: f64 = 1e-10;

impl Adagrad {
    fn new(rows: usize, cols: usize) -> Self {
        Adagrad {
            accumulator: Array2::zeros((rows, cols)),
        }
    }

    /// `w -= lr * g / (sqrt(acc) + eps)` with `acc += g^2`, skipping
    /// zero-gradient coordinates (their state does not change).
    fn step(&mut self, weights: &mut Array2<f64>, grads: &ArrayView2<f64>, lr: f64) {
        for ((w, g), acc) in weights
            .iter_mut()
            .zip(grads.iter())
            .zip(self.accumulator.iter_mut())
        {
            if *g == 0.0 {
                continue;
            }
            *acc += g * g;
            *w -= lr * g / (acc.sqrt() + ADAGRAD_EPS);
        }
    }
}

/// Train embeddings for a scoring function on the store's train split.
pub fn train<S: Scalar>(
    store: &TripleStore,
    sf: &BlockSF,
    config: &TrainConfig,
) -> Result<TrainResult<S>> {
    let start = Instant::now();
    config.validate()?;
    if !check_c2(sf) {
        log::warn!("scoring function {sf} violates C2; training anyway");
    }

    let init: EmbeddingTable<S> = init_embeddings(store, config)?;
    let mut entity = to_f64(&init.entity);
    let mut relation = to_f64(&init.relation);
    let mut ws = Workspace::new(entity.nrows(), relation.nrows(), config.d);
    let mut ada_entity = Adagrad::new(entity.nrows(), config.d);
    let mut ada_relation = Adagrad::new(relation.nrows(), config.d);

    let mut order: Vec<usize> = (0..store.train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1));
    let mut loss_history = Vec::with_capacity(config.epochs);
    let mut batch = Vec::with_capacity(config.batch);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let lr = config.lr * config.decay.powi(epoch as i32);
        let mut weighted_loss = 0.0;
        let mut triples = 0usize;
        for (batch_no, indices) in order.chunks(config.batch).enumerate() {
            batch.clear();
            batch.extend(indices.iter().map(|&i| store.train[i]));
            let loss = ws
                .batch_pass(sf, &entity, &relation, &batch, config.l2)
                .map_err(|e| Error::numeric(format!("epoch {epoch} batch {batch_no}: {e}")))?;
            ada_entity.step(&mut entity, &ws.grad_entity.view(), lr);
            ada_relation.step(&mut relation, &ws.grad_relation.view(), lr);
            weighted_loss += loss * batch.len() as f64;
            triples += batch.len();
        }
        if triples > 0 {
            loss_history.push(weighted_loss / triples as f64);
        }
    }

    let table = EmbeddingTable::new(
        entity.mapv(S::from_f64),
        relation.mapv(S::from_f64),
    )?;
    Ok(TrainResult {
        table,
        loss_history,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Distinct entity and relation rows a batch touches (used by tests to pin
/// the regularizer's support).
pub fn touched_rows(batch: &[Triple]) -> (HashSet<usize>, HashSet<usize>) {
    let mut entities = HashSet::new();
    let mut relations = HashSet::new();
    for triple in batch {
        entities.insert(triple.head);
        entities.insert(triple.tail);
        relations.insert(triple.relation);
    }
    (entities, relations)
}
