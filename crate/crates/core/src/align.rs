//! Similarity-adjusted valid-match detection and the modified-LCS dynamic
//! program that turns valid frame-phoneme pairs into a binary alignment mask.
//!
//! The matching semantics: among all assignments of frames to label positions
//! such that every assigned pair is a valid match, assigned frames are
//! strictly increasing, and label positions are non-decreasing (one label may
//! absorb several, not necessarily contiguous, frames), pick one of maximum
//! cardinality. Ties are broken by a fixed traceback order so identical
//! inputs always produce bit-identical masks.

use std::collections::BTreeSet;

use crate::cost::{CostMatrix, Segmentation};
use crate::error::{Error, Result};
use crate::phoneme::{Inventory, PhonemeId, SimilarityTable};

/// Default global tolerance for the similarity-adjusted threshold.
pub const DEFAULT_TOL: f64 = 1.0;

/// Default acceptance cost for a pair whose label equals the column's
/// best-matching phoneme (where the similarity-adjusted threshold
/// degenerates to zero).
pub const DEFAULT_COST_FLOOR: f64 = 0.05;

/// The set of frame-phoneme pairs that passed the threshold test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidMatchSet {
    num_labels: usize,
    num_frames: usize,
    pairs: BTreeSet<(usize, usize)>,
}

impl ValidMatchSet {
    /// Build from explicit `(label_index, frame_index)` pairs.
    pub fn from_pairs(
        num_labels: usize,
        num_frames: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<ValidMatchSet> {
        let pairs: BTreeSet<(usize, usize)> = pairs.into_iter().collect();
        for &(i, j) in &pairs {
            if i >= num_labels || j >= num_frames {
                return Err(Error::ShapeMismatch(format!(
                    "pair ({i}, {j}) outside {num_labels} x {num_frames} grid"
                )));
            }
        }
        Ok(ValidMatchSet {
            num_labels,
            num_frames,
            pairs,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, label_idx: usize, frame: usize) -> bool {
        self.pairs.contains(&(label_idx, frame))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    /// True if `other` contains every pair of `self`.
    pub fn is_subset_of(&self, other: &ValidMatchSet) -> bool {
        self.pairs.is_subset(&other.pairs)
    }
}

/// Binary n x T mask over label positions: `bits[i, j]` anchors frame `j` to
/// label position `i`. At most one bit per frame column; set bits are
/// monotone in (frame, label) order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentMask {
    labels: Vec<PhonemeId>,
    num_frames: usize,
    bits: Vec<bool>,
}

impl AlignmentMask {
    pub fn labels(&self) -> &[PhonemeId] {
        &self.labels
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn get(&self, label_idx: usize, frame: usize) -> bool {
        self.bits[label_idx * self.num_frames + frame]
    }

    /// Number of anchored frames (set bits).
    pub fn cardinality(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// The anchored label position for a frame, if any.
    pub fn anchor(&self, frame: usize) -> Option<usize> {
        (0..self.labels.len()).find(|&i| self.get(i, frame))
    }

    pub fn set_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.labels.len() {
            for j in 0..self.num_frames {
                if self.get(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Binary V x T mask over the whole vocabulary (blank row always zero).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabMask {
    vocab_size: usize,
    num_frames: usize,
    bits: Vec<bool>,
}

impl VocabMask {
    /// An all-zero mask (no frame constrained).
    pub fn empty(vocab_size: usize, num_frames: usize) -> VocabMask {
        VocabMask {
            vocab_size,
            num_frames,
            bits: vec![false; vocab_size * num_frames],
        }
    }

    /// Build from explicit `(vocab_id, frame)` anchors; at most one per frame.
    pub fn from_anchors(
        vocab_size: usize,
        num_frames: usize,
        anchors: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<VocabMask> {
        let mut mask = VocabMask::empty(vocab_size, num_frames);
        for (v, j) in anchors {
            if v >= vocab_size || j >= num_frames {
                return Err(Error::ShapeMismatch(format!(
                    "anchor ({v}, {j}) outside {vocab_size} x {num_frames} grid"
                )));
            }
            if mask.anchor(j).is_some() {
                return Err(Error::InvalidMatrix(format!(
                    "frame {j} anchored more than once"
                )));
            }
            mask.bits[v * num_frames + j] = true;
        }
        Ok(mask)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn get(&self, vocab_id: usize, frame: usize) -> bool {
        self.bits[vocab_id * self.num_frames + frame]
    }

    /// The anchored vocabulary id for a frame, if any.
    pub fn anchor(&self, frame: usize) -> Option<usize> {
        (0..self.vocab_size).find(|&v| self.get(v, frame))
    }

    pub fn num_anchored_frames(&self) -> usize {
        (0..self.num_frames).filter(|&j| self.anchor(j).is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|b| !b)
    }
}

/// Detect valid frame-phoneme pairs under the similarity-adjusted threshold.
///
/// For each frame, the best-matching label `k` is the row argmin of that
/// column (ties to the smallest index). Pair `(i, j)` is valid when
/// `C[i, j] <= (1 - s(p_i, p_k)) * tol`; when `p_i` and `p_k` are the same
/// phoneme the threshold degenerates to zero and the pair is accepted iff
/// `C[i, j] <= cost_floor`.
pub fn find_valid_matches(
    c: &CostMatrix,
    sim: &SimilarityTable,
    tol: f64,
    cost_floor: f64,
) -> Result<ValidMatchSet> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::InvalidParam {
            name: "tol",
            msg: format!("must be > 0, got {tol}"),
        });
    }
    if !cost_floor.is_finite() {
        return Err(Error::InvalidParam {
            name: "cost_floor",
            msg: format!("must be finite, got {cost_floor}"),
        });
    }
    let n = c.num_labels();
    let t = c.num_frames();
    let labels = c.labels();
    let mut pairs = BTreeSet::new();
    for j in 0..t {
        let mut best = 0usize;
        for i in 1..n {
            if c.get(i, j) < c.get(best, j) {
                best = i;
            }
        }
        let best_phoneme = labels[best];
        for i in 0..n {
            let accepted = if labels[i] == best_phoneme {
                c.get(i, j) <= cost_floor
            } else {
                c.get(i, j) <= (1.0 - sim.get(labels[i], best_phoneme)?) * tol
            };
            if accepted {
                pairs.insert((i, j));
            }
        }
    }
    Ok(ValidMatchSet {
        num_labels: n,
        num_frames: t,
        pairs,
    })
}

/// Maximum-cardinality monotone matching over the valid pairs, returned as
/// an alignment mask.
///
/// DP over (label prefix, frame prefix):
/// `dp[i][j] = max(dp[i-1][j], dp[i][j-1] + valid(i-1, j-1))`,
/// where the `+1` move keeps the same label row, so one label can absorb any
/// set of its later valid frames. Traceback prefers match, then advancing the
/// label, then skipping the frame, which pins the tie-break.
pub fn lcs_align(valid: &ValidMatchSet, labels: &[PhonemeId]) -> Result<AlignmentMask> {
    if labels.len() != valid.num_labels() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels but valid set covers {} label positions",
            labels.len(),
            valid.num_labels()
        )));
    }
    let n = valid.num_labels();
    let t = valid.num_frames();
    let mut dp = vec![0u32; (n + 1) * (t + 1)];
    let idx = |i: usize, j: usize| i * (t + 1) + j;
    for i in 1..=n {
        for j in 1..=t {
            let up = dp[idx(i - 1, j)];
            let left = dp[idx(i, j - 1)] + u32::from(valid.contains(i - 1, j - 1));
            dp[idx(i, j)] = up.max(left);
        }
    }

    let mut bits = vec![false; n * t];
    let (mut i, mut j) = (n, t);
    while i > 0 && j > 0 {
        let here = dp[idx(i, j)];
        if valid.contains(i - 1, j - 1) && dp[idx(i, j - 1)] + 1 == here {
            bits[(i - 1) * t + (j - 1)] = true;
            j -= 1;
        } else if dp[idx(i - 1, j)] == here {
            i -= 1;
        } else {
            j -= 1;
        }
    }

    Ok(AlignmentMask {
        labels: labels.to_vec(),
        num_frames: t,
        bits,
    })
}

/// Exhaustive search over all monotone assignments; the test oracle for
/// [`lcs_align`]. Guarded to desk-scale grids.
pub fn brute_force_align(valid: &ValidMatchSet) -> Result<(usize, Vec<(usize, usize)>)> {
    let n = valid.num_labels();
    let t = valid.num_frames();
    if n > 6 || t > 8 {
        return Err(Error::SizeGuard(format!(
            "brute force accepts n <= 6, T <= 8, got {n} x {t}"
        )));
    }
    let mut best: Vec<(usize, usize)> = Vec::new();
    let mut current: Vec<(usize, usize)> = Vec::new();
    fn recurse(
        valid: &ValidMatchSet,
        frame: usize,
        min_label: usize,
        current: &mut Vec<(usize, usize)>,
        best: &mut Vec<(usize, usize)>,
    ) {
        let t = valid.num_frames();
        if current.len() + (t - frame) <= best.len() {
            return; // cannot beat the incumbent
        }
        if frame == t {
            if current.len() > best.len() {
                *best = current.clone();
            }
            return;
        }
        for i in min_label..valid.num_labels() {
            if valid.contains(i, frame) {
                current.push((i, frame));
                recurse(valid, frame + 1, i, current, best);
                current.pop();
            }
        }
        recurse(valid, frame + 1, min_label, current, best);
    }
    recurse(valid, 0, 0, &mut current, &mut best);
    let len = best.len();
    Ok((len, best))
}

/// Re-index a label-space mask into the vocabulary space: bit `(i, j)` moves
/// to row `id(label_i)`. The blank row is never set.
pub fn expand_mask(mask: &AlignmentMask, inv: &Inventory) -> Result<VocabMask> {
    let vocab_size = inv.vocab_size();
    for &l in mask.labels() {
        if l.0 >= inv.len() {
            return Err(Error::UnknownSymbol(format!("label id {}", l.0)));
        }
    }
    let t = mask.num_frames();
    let mut out = VocabMask::empty(vocab_size, t);
    for (i, j) in mask.set_pairs() {
        out.bits[mask.labels()[i].0 * t + j] = true;
    }
    Ok(out)
}

/// One point of the tolerance sweep: how much of the time axis gets anchored
/// and how often anchors agree with the ground-truth segmentation.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepPoint {
    pub tol: f64,
    pub constrained_ratio: f64,
    pub precision: f64,
}

/// Sweep `tol` over cost matrices with known segmentations, micro-averaging
/// anchored-frame ratio and anchor precision across utterances.
pub fn sweep_tol(
    items: &[(CostMatrix, Segmentation)],
    sim: &SimilarityTable,
    tols: &[f64],
    cost_floor: f64,
) -> Result<Vec<SweepPoint>> {
    let mut out = Vec::with_capacity(tols.len());
    for &tol in tols {
        let mut anchored = 0usize;
        let mut correct = 0usize;
        let mut total_frames = 0usize;
        for (cost, seg) in items {
            let valid = find_valid_matches(cost, sim, tol, cost_floor)?;
            let mask = lcs_align(&valid, cost.labels())?;
            total_frames += cost.num_frames();
            for (i, j) in mask.set_pairs() {
                anchored += 1;
                if seg.frame_phoneme(j) == Some(cost.labels()[i]) {
                    correct += 1;
                }
            }
        }
        out.push(SweepPoint {
            tol,
            constrained_ratio: anchored as f64 / total_frames.max(1) as f64,
            precision: if anchored == 0 {
                1.0
            } else {
                correct as f64 / anchored as f64
            },
        });
    }
    Ok(out)
}
