//! Symmetry-related features and the tiny performance predictor.
//!
//! Whether a grid can instantiate a symmetric or a skew-symmetric relation
//! matrix depends only on which scalar values the four relation chunks may
//! take relative to each other. Eleven assignment patterns cover the
//! possibilities (four distinct magnitudes, two equal pairs, ..., one single
//! nonzero); probing each for symmetry and skew-symmetry gives 22 binary
//! features that are invariant under the whole equivalence group. A 22-2-1
//! network regressed on recorded validation MRRs ranks unseen candidates.

use std::fmt;
use std::sync::OnceLock;

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blm::{BlockSF, CHUNKS};
use crate::error::{Error, Result};

/// Number of assignment patterns.
pub const CASES: usize = 11;
/// Length of the feature vector: a (symmetric, skew-symmetric) bit per case.
pub const SRF_LEN: usize = 2 * CASES;

/// The example vector of each assignment pattern S1..S11 (magnitudes only;
/// signs and positions are explored by [`assignments`]).
pub fn base_patterns() -> [[i8; CHUNKS]; CASES] {
    [
        [1, 2, 3, 4], // S1: four distinct magnitudes
        [1, 1, 2, 2], // S2: two equal pairs
        [1, 1, 2, 3], // S3: one equal pair, two singletons
        [1, 1, 1, 2], // S4: three equal, one different
        [1, 1, 1, 1], // S5: all equal
        [0, 1, 2, 3], // S6: three nonzero, all distinct
        [0, 1, 1, 2], // S7: three nonzero, one equal pair
        [0, 1, 1, 1], // S8: three nonzero, all equal
        [0, 0, 1, 2], // S9: two nonzero, distinct
        [0, 0, 1, 1], // S10: two nonzero, equal
        [0, 0, 0, 1], // S11: one nonzero
    ]
}

/// All distinct scalar 4-vectors reachable from the pattern's example by
/// permuting entries and flipping signs of nonzero entries.
///
/// `case_index` is 1-based (S1..S11).
pub fn assignments(case_index: usize) -> Result<&'static [[i8; CHUNKS]]> {
    if !(1..=CASES).contains(&case_index) {
        return Err(Error::argument(format!("case index {case_index} outside 1..11")));
    }
    static TABLE: OnceLock<Vec<Vec<[i8; CHUNKS]>>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        base_patterns()
            .iter()
            .map(|base| {
                let mut out: Vec<[i8; CHUNKS]> = Vec::new();
                let mut seen = std::collections::HashSet::new();
                permute_all(base, &mut |perm| {
                    let nonzero: Vec<usize> =
                        (0..CHUNKS).filter(|&m| perm[m] != 0).collect();
                    for mask in 0u8..(1 << nonzero.len()) {
                        let mut v = perm;
                        for (bit, &m) in nonzero.iter().enumerate() {
                            if mask & (1 << bit) != 0 {
                                v[m] = -v[m];
                            }
                        }
                        if seen.insert(v) {
                            out.push(v);
                        }
                    }
                });
                out
            })
            .collect()
    });
    Ok(&table[case_index - 1])
}

fn permute_all(base: &[i8; CHUNKS], visit: &mut impl FnMut([i8; CHUNKS])) {
    let mut v = *base;
    heap_permute(CHUNKS, &mut v, visit);
}

fn heap_permute(k: usize, v: &mut [i8; CHUNKS], visit: &mut impl FnMut([i8; CHUNKS])) {
    if k == 1 {
        visit(*v);
        return;
    }
    heap_permute(k - 1, v, visit);
    for i in 0..k - 1 {
        if k % 2 == 0 {
            v.swap(i, k - 1);
        } else {
            v.swap(0, k - 1);
        }
        heap_permute(k - 1, v, visit);
    }
}

/// Substitute scalars for the relation chunks: entry `(i, j)` becomes
/// `sign(a_ij) * v[|a_ij|]`, zero cells stay zero.
fn substitute(sf: &BlockSF, v: &[i8; CHUNKS]) -> [[i32; CHUNKS]; CHUNKS] {
    let mut g = [[0i32; CHUNKS]; CHUNKS];
    for (i, j, c) in sf.nonzero_cells() {
        g[i][j] = i32::from(c.signum()) * i32::from(v[c.unsigned_abs() as usize - 1]);
    }
    g
}

fn is_symmetric(g: &[[i32; CHUNKS]; CHUNKS]) -> bool {
    (0..CHUNKS).all(|i| (i..CHUNKS).all(|j| g[i][j] == g[j][i]))
}

fn is_skew(g: &[[i32; CHUNKS]; CHUNKS]) -> bool {
    (0..CHUNKS).all(|i| (i..CHUNKS).all(|j| g[i][j] == -g[j][i]))
}

/// The 22 symmetry bits of a grid, ordered
/// `(S1.sym, S1.skew, S2.sym, S2.skew, ..., S11.sym, S11.skew)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SrfVector {
    bits: [bool; SRF_LEN],
}

impl SrfVector {
    pub fn bits(&self) -> &[bool; SRF_LEN] {
        &self.bits
    }

    pub fn sym(&self, case_index: usize) -> bool {
        self.bits[2 * (case_index - 1)]
    }

    pub fn skew(&self, case_index: usize) -> bool {
        self.bits[2 * (case_index - 1) + 1]
    }

    /// Feature vector as 0/1 floats for the predictor.
    pub fn as_features(&self) -> Array1<f64> {
        Array1::from_iter(self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }))
    }
}

impl fmt::Display for SrfVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl std::str::FromStr for SrfVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() != SRF_LEN {
            return Err(Error::argument(format!("SRF string must have {SRF_LEN} characters")));
        }
        let mut bits = [false; SRF_LEN];
        for (m, ch) in s.chars().enumerate() {
            bits[m] = match ch {
                '0' => false,
                '1' => true,
                other => return Err(Error::argument(format!("bad SRF character `{other}`"))),
            };
        }
        Ok(SrfVector { bits })
    }
}

impl Serialize for SrfVector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SrfVector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Compute the feature vector: for each pattern, search its assignments for
/// one making the substituted matrix symmetric, and one making it
/// skew-symmetric.
pub fn srf(sf: &BlockSF) -> SrfVector {
    let mut bits = [false; SRF_LEN];
    for case in 1..=CASES {
        let mut sym = false;
        let mut skew = false;
        for v in assignments(case).expect("case in range") {
            let g = substitute(sf, v);
            sym |= is_symmetric(&g);
            skew |= is_skew(&g);
            if sym && skew {
                break;
            }
        }
        bits[2 * (case - 1)] = sym;
        bits[2 * (case - 1) + 1] = skew;
    }
    SrfVector { bits }
}

/// Expressiveness verdict: can the grid's relation matrix be made symmetric,
/// and can it be made skew-symmetric, under some chunk assignment.
/// `(true, true)` certifies that the scoring function can model symmetric,
/// anti-symmetric, general asymmetric and inverse relations.
pub fn check_c1(sf: &BlockSF) -> (bool, bool) {
    let features = srf(sf);
    let can_sym = (1..=CASES).any(|case| features.sym(case));
    let can_skew = (1..=CASES).any(|case| features.skew(case));
    (can_sym, can_skew)
}

/// Training settings for the predictor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            learning_rate: 0.5,
            epochs: 2000,
            seed: 0,
        }
    }
}

/// A 22-2-1 network (sigmoid hidden layer, linear output) fitted by
/// full-batch gradient descent on squared error.
#[derive(Debug, Clone)]
pub struct Predictor {
    w1: Array2<f64>, // 2 x 22
    b1: Array1<f64>, // 2
    w2: Array1<f64>, // 2
    b2: f64,
}

const HIDDEN: usize = 2;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Predictor {
    /// Fit from scratch on `(features, target)` records; deterministic for a
    /// fixed config. Targets are used raw (validation MRR already lies in
    /// `[0, 1]`).
    pub fn fit(records: &[(SrfVector, f64)], config: &PredictorConfig) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::argument("predictor needs at least one record"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut w1 = Array2::from_shape_fn((HIDDEN, SRF_LEN), |_| rng.gen_range(-0.5..0.5));
        let mut b1 = Array1::from_shape_fn(HIDDEN, |_| rng.gen_range(-0.5..0.5));
        let mut w2 = Array1::from_shape_fn(HIDDEN, |_| rng.gen_range(-0.5..0.5));
        let mut b2 = rng.gen_range(-0.5..0.5);

        let inputs: Vec<Array1<f64>> = records.iter().map(|(s, _)| s.as_features()).collect();
        let targets: Vec<f64> = records.iter().map(|&(_, y)| y).collect();
        let n = records.len() as f64;

        for _ in 0..config.epochs {
            let mut gw1 = Array2::<f64>::zeros((HIDDEN, SRF_LEN));
            let mut gb1 = Array1::<f64>::zeros(HIDDEN);
            let mut gw2 = Array1::<f64>::zeros(HIDDEN);
            let mut gb2 = 0.0;
            for (x, &y) in inputs.iter().zip(&targets) {
                let pre = w1.dot(x) + &b1;
                let hidden = pre.mapv(sigmoid);
                let out = w2.dot(&hidden) + b2;
                // d/d_out of (out - y)^2 / n
                let delta = 2.0 * (out - y) / n;
                gb2 += delta;
                for u in 0..HIDDEN {
                    gw2[u] += delta * hidden[u];
                    let dh = delta * w2[u] * hidden[u] * (1.0 - hidden[u]);
                    gb1[u] += dh;
                    for m in 0..SRF_LEN {
                        gw1[(u, m)] += dh * x[m];
                    }
                }
            }
            let lr = config.learning_rate;
            w1.zip_mut_with(&gw1, |w, g| *w -= lr * g);
            b1.zip_mut_with(&gb1, |w, g| *w -= lr * g);
            w2.zip_mut_with(&gw2, |w, g| *w -= lr * g);
            b2 -= lr * gb2;
        }
        Ok(Predictor { w1, b1, w2, b2 })
    }

    /// Forward pass on a feature vector.
    pub fn forward(&self, features: &SrfVector) -> f64 {
        let x = features.as_features();
        let hidden = (self.w1.dot(&x) + &self.b1).mapv(sigmoid);
        self.w2.dot(&hidden) + self.b2
    }

    /// Predicted quality of a grid; meaningful only for ranking candidates
    /// against each other.
    pub fn score(&self, sf: &BlockSF) -> f64 {
        self.forward(&srf(sf))
    }
}
