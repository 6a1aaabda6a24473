//! Knowledge-graph embedding with a unified bilinear scoring-function space.
//!
//! Every bilinear scoring function handled here is encoded as a signed 4x4
//! block pattern ([`BlockSF`]) that tells which diagonal relation chunk fills
//! each block of the relation matrix. The classics (DistMult, ComplEx,
//! Analogy, SimplE) are fixed points of that space; new ones are found by a
//! progressive greedy search over block patterns, pruned by an invariance
//! filter and ranked by a tiny symmetry-feature predictor before any
//! embedding is trained.
//!
//! Modules follow the pipeline:
//!
//! * [`kgdata`] — dataset loading, vocabularies, filtered-candidate index,
//!   relation-type statistics.
//! * [`blm`] — the block scoring function, its text encoding and all scoring
//!   kernels.
//! * [`equivalence`] — the permutation/sign-flip invariance group, canonical
//!   forms and the search filter.
//! * [`srf`] — symmetry-related features and the 22-2-1 performance
//!   predictor.
//! * [`training`] — multi-class-loss training with Adagrad.
//! * [`evaluation`] — filtered link prediction and triplet classification.
//! * [`search`] — progressive greedy search and the random baseline.
//! * [`synth`] — seeded synthetic graphs used for smoke tests and demos.
//!
//! Embedding storage is generic over the scalar type (any [`Scalar`], i.e.
//! `f32` or `f64`); score accumulation always happens in `f64`.

pub mod blm;
pub mod equivalence;
pub mod error;
pub mod evaluation;
pub mod kgdata;
pub mod scalar;
pub mod search;
pub mod srf;
pub mod synth;
pub mod training;
pub mod util;

pub use blm::{BlockSF, EmbeddingTable, KnownSf};
pub use error::{Error, Result};
pub use scalar::Scalar;

/// Single-precision embedding table.
pub type EmbeddingTableF32 = EmbeddingTable<f32>;
/// Double-precision embedding table (the default everywhere).
pub type EmbeddingTableF64 = EmbeddingTable<f64>;
