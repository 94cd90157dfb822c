//! Similarity-aware LCS frame-phoneme alignment and constrained CTC training.
//!
//! The crate provides, end to end:
//!
//! - the CMU/ARPAbet phoneme inventory with articulatory-feature similarity
//!   ([`phoneme`]),
//! - target cost-matrix construction from frame-level segmentations, with
//!   Gaussian edge attenuation and optional time-axis normalization
//!   ([`cost`]),
//! - valid-match detection under a similarity-adjusted threshold and the
//!   maximum-cardinality monotone matching that turns matches into a binary
//!   alignment mask ([`align`]),
//! - a numerically stable CTC loss with analytic gradients, the masked
//!   emission transform, the hybrid anchored-CE + masked-CTC objective,
//!   CTC Viterbi forced alignment, and greedy decoding ([`ctc`]),
//! - phoneme error rate, similarity-weighted PER, boundary loss, and
//!   emission peakiness statistics ([`metrics`]),
//! - a desk-scale synthetic data generator and linear-softmax trainer for
//!   comparing the objectives ([`toy`]),
//! - JSON/JSONL file formats for matrices, masks, segmentations, datasets,
//!   and models ([`io`]).
//!
//! Everything is deterministic: random operations take explicit seeds, and
//! all loss/decode/alignment operations are pure.

pub mod align;
pub mod cost;
pub mod ctc;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod phoneme;
pub mod toy;

pub use error::{Error, Result};
pub use phoneme::{Inventory, PhonemeId, SimilarityTable};
