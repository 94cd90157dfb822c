//! CTC loss with analytic gradients, the masked-emission transform, the
//! hybrid anchored-CE + masked-CTC objective, CTC Viterbi forced alignment,
//! and greedy collapse decoding.
//!
//! Conventions used throughout:
//!
//! - An emission matrix holds per-frame probabilities (columns sum to 1) over
//!   the vocabulary, blank last. Entries are floored at [`PROB_FLOOR`] before
//!   any logarithm.
//! - All returned gradients are with respect to log-probabilities in the
//!   "logits followed by a column softmax" sense: perturbing entry `(v, t)`
//!   of the logits by `h` and re-normalizing the column via softmax changes
//!   the loss by `grad[v, t] * h + O(h^2)`. This is exactly what a finite
//!   difference with column renormalization measures, and what a trainer
//!   producing emissions through a softmax needs.
//! - The forward-backward recursions run in the log domain over the extended
//!   label sequence (blanks interleaved), so losses stay finite for any
//!   feasible target.

use serde::{Deserialize, Serialize};

use crate::align::VocabMask;
use crate::cost::{Segmentation, Span};
use crate::error::{Error, Result};
use crate::phoneme::PhonemeId;

/// Lower clamp applied to emission probabilities before logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Default smoothing constant for the masked-emission transform.
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Default mixing weight between the anchored-CE and masked-CTC terms.
pub const DEFAULT_LAMBDA: f64 = 0.5;

/// Frame-wise posteriors over the vocabulary (blank last), columns summing
/// to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionMatrix {
    vocab_size: usize,
    num_frames: usize,
    probs: Vec<f64>, // row-major: v * num_frames + t
}

impl EmissionMatrix {
    /// Wrap per-frame probabilities. Columns must sum to 1 within 1e-9;
    /// entries are floored at [`PROB_FLOOR`].
    pub fn from_probs(vocab_size: usize, num_frames: usize, probs: Vec<f64>) -> Result<EmissionMatrix> {
        if vocab_size < 2 {
            return Err(Error::InvalidParam {
                name: "vocab_size",
                msg: "need at least one phoneme plus blank".into(),
            });
        }
        if num_frames == 0 {
            return Err(Error::InvalidParam {
                name: "num_frames",
                msg: "must be >= 1".into(),
            });
        }
        if probs.len() != vocab_size * num_frames {
            return Err(Error::ShapeMismatch(format!(
                "{vocab_size} x {num_frames} emissions need {} values, got {}",
                vocab_size * num_frames,
                probs.len()
            )));
        }
        for t in 0..num_frames {
            let mut sum = 0.0;
            for v in 0..vocab_size {
                let p = probs[v * num_frames + t];
                if !p.is_finite() || p < 0.0 || p > 1.0 + 1e-9 {
                    return Err(Error::InvalidMatrix(format!(
                        "emission ({v}, {t}) = {p} outside [0, 1]"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidMatrix(format!(
                    "emission column {t} sums to {sum}, expected 1"
                )));
            }
        }
        let probs = probs
            .into_iter()
            .map(|p| p.clamp(PROB_FLOOR, 1.0))
            .collect();
        Ok(EmissionMatrix {
            vocab_size,
            num_frames,
            probs,
        })
    }

    /// Column-wise softmax of arbitrary logits.
    pub fn from_logits(vocab_size: usize, num_frames: usize, logits: &[f64]) -> Result<EmissionMatrix> {
        if logits.len() != vocab_size * num_frames {
            return Err(Error::ShapeMismatch(format!(
                "{vocab_size} x {num_frames} logits need {} values, got {}",
                vocab_size * num_frames,
                logits.len()
            )));
        }
        let mut probs = vec![0.0; logits.len()];
        for t in 0..num_frames {
            let max = (0..vocab_size)
                .map(|v| logits[v * num_frames + t])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in 0..vocab_size {
                let e = (logits[v * num_frames + t] - max).exp();
                probs[v * num_frames + t] = e;
                sum += e;
            }
            for v in 0..vocab_size {
                probs[v * num_frames + t] =
                    (probs[v * num_frames + t] / sum).clamp(PROB_FLOOR, 1.0);
            }
        }
        Ok(EmissionMatrix {
            vocab_size,
            num_frames,
            probs,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    /// The blank id: last vocabulary row.
    pub fn blank(&self) -> usize {
        self.vocab_size - 1
    }

    pub fn prob(&self, vocab_id: usize, frame: usize) -> f64 {
        self.probs[vocab_id * self.num_frames + frame]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Per-frame argmax, ties to the smallest id.
    pub fn argmax(&self, frame: usize) -> usize {
        let mut best = 0usize;
        for v in 1..self.vocab_size {
            if self.prob(v, frame) > self.prob(best, frame) {
                best = v;
            }
        }
        best
    }
}

/// Hybrid objective value split into its parts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ctc_loss: f64,
    pub ce_loss: f64,
    pub total: f64,
    pub lambda: f64,
    pub num_anchored_frames: usize,
}

fn validate_target(em: &EmissionMatrix, target: &[PhonemeId]) -> Result<usize> {
    if target.is_empty() {
        return Err(Error::EmptyLabels);
    }
    for &y in target {
        if y.0 >= em.vocab_size() || y.0 == em.blank() {
            return Err(Error::UnknownSymbol(format!("target id {}", y.0)));
        }
    }
    let required = required_frames(target);
    if required > em.num_frames() {
        return Err(Error::InfeasibleTarget {
            required,
            available: em.num_frames(),
        });
    }
    Ok(required)
}

/// Minimum number of frames a CTC path needs for `target`: one per label
/// plus a separating blank between equal neighbours.
pub fn required_frames(target: &[PhonemeId]) -> usize {
    let repeats = target.windows(2).filter(|w| w[0] == w[1]).count();
    target.len() + repeats
}

fn log_sum_exp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn log_sum_exp3(a: f64, b: f64, c: f64) -> f64 {
    log_sum_exp2(log_sum_exp2(a, b), c)
}

/// Extended-sequence label for state `s`: blanks at even states, target
/// labels at odd ones.
fn ext_label(target: &[PhonemeId], blank: usize, s: usize) -> usize {
    if s % 2 == 0 {
        blank
    } else {
        target[(s - 1) / 2].0
    }
}

struct ForwardBackward {
    log_z: f64,
    /// Posterior occupancy gamma[v * T + t]: probability that a path emits
    /// vocabulary entry v at frame t, given it collapses to the target.
    gamma: Vec<f64>,
}

fn forward_backward(em: &EmissionMatrix, target: &[PhonemeId]) -> Result<ForwardBackward> {
    validate_target(em, target)?;
    let t_len = em.num_frames();
    let blank = em.blank();
    let s_len = 2 * target.len() + 1;
    let lab = |s: usize| ext_label(target, blank, s);
    let lp = |s: usize, t: usize| em.prob(lab(s), t).ln();
    let allows_skip = |s: usize| s >= 2 && s % 2 == 1 && lab(s) != lab(s - 2);

    let neg = f64::NEG_INFINITY;
    let mut alpha = vec![neg; t_len * s_len];
    alpha[0] = lp(0, 0);
    if s_len > 1 {
        alpha[1] = lp(1, 0);
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let stay = alpha[(t - 1) * s_len + s];
            let prev = if s >= 1 { alpha[(t - 1) * s_len + s - 1] } else { neg };
            let skip = if allows_skip(s) { alpha[(t - 1) * s_len + s - 2] } else { neg };
            let acc = log_sum_exp3(stay, prev, skip);
            alpha[t * s_len + s] = if acc == neg { neg } else { acc + lp(s, t) };
        }
    }
    let log_z = log_sum_exp2(
        alpha[(t_len - 1) * s_len + s_len - 1],
        if s_len >= 2 { alpha[(t_len - 1) * s_len + s_len - 2] } else { neg },
    );
    if log_z == neg || !log_z.is_finite() {
        return Err(Error::InvalidMatrix(
            "no feasible CTC path has positive probability".into(),
        ));
    }

    // beta[t][s]: suffix mass from (s, t) exclusive of the emission at t, so
    // alpha * beta counts each path's emission at t exactly once.
    let mut beta = vec![neg; t_len * s_len];
    beta[(t_len - 1) * s_len + s_len - 1] = 0.0;
    if s_len >= 2 {
        beta[(t_len - 1) * s_len + s_len - 2] = 0.0;
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let mut acc = beta[(t + 1) * s_len + s] + lp(s, t + 1);
            if s + 1 < s_len {
                acc = log_sum_exp2(acc, beta[(t + 1) * s_len + s + 1] + lp(s + 1, t + 1));
            }
            if s + 2 < s_len && allows_skip(s + 2) {
                acc = log_sum_exp2(acc, beta[(t + 1) * s_len + s + 2] + lp(s + 2, t + 1));
            }
            beta[t * s_len + s] = acc;
        }
    }

    let mut gamma = vec![0.0; em.vocab_size() * t_len];
    for t in 0..t_len {
        for s in 0..s_len {
            let occ = alpha[t * s_len + s] + beta[t * s_len + s] - log_z;
            if occ > neg {
                gamma[lab(s) * t_len + t] += occ.exp();
            }
        }
    }
    Ok(ForwardBackward { log_z, gamma })
}

/// Loss value and gradient (with respect to log-probabilities, see module
/// docs) of one loss evaluation.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>, // vocab_size x num_frames
}

/// Vanilla CTC: negative log marginal probability of all paths collapsing to
/// `target`, with the textbook gradient `p - gamma`.
pub fn ctc_loss(em: &EmissionMatrix, target: &[PhonemeId]) -> Result<LossGrad> {
    let fb = forward_backward(em, target)?;
    let grad = em
        .probs()
        .iter()
        .zip(&fb.gamma)
        .map(|(p, g)| p - g)
        .collect();
    Ok(LossGrad {
        loss: -fb.log_z,
        grad,
    })
}

/// Renormalize constrained columns around their anchored entries:
/// `(p * m + eps) / (sum_l p_l * m_l + V * eps)` per column, which is the
/// printed mask formula followed by an exact column renormalization.
/// Unconstrained columns pass through unchanged, bit for bit.
pub fn mask_emissions(em: &EmissionMatrix, mask: &VocabMask, epsilon: f64) -> Result<EmissionMatrix> {
    check_mask_shape(em, mask)?;
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParam {
            name: "epsilon",
            msg: format!("must be > 0, got {epsilon}"),
        });
    }
    let v_len = em.vocab_size();
    let t_len = em.num_frames();
    let mut probs = em.probs().to_vec();
    for t in 0..t_len {
        if mask.anchor(t).is_none() {
            continue;
        }
        let masked_sum: f64 = (0..v_len)
            .map(|v| if mask.get(v, t) { em.prob(v, t) } else { 0.0 })
            .sum();
        let denom = masked_sum + v_len as f64 * epsilon;
        for v in 0..v_len {
            let kept = if mask.get(v, t) { em.prob(v, t) } else { 0.0 };
            probs[v * t_len + t] = (kept + epsilon) / denom;
        }
    }
    Ok(EmissionMatrix {
        vocab_size: v_len,
        num_frames: t_len,
        probs,
    })
}

fn check_mask_shape(em: &EmissionMatrix, mask: &VocabMask) -> Result<()> {
    if mask.vocab_size() != em.vocab_size() || mask.num_frames() != em.num_frames() {
        return Err(Error::ShapeMismatch(format!(
            "mask is {} x {} but emissions are {} x {}",
            mask.vocab_size(),
            mask.num_frames(),
            em.vocab_size(),
            em.num_frames()
        )));
    }
    Ok(())
}

/// Cross-entropy on anchored frames only, averaged over the anchored count.
/// No anchors gives loss 0 and a zero gradient.
pub fn ce_anchored(em: &EmissionMatrix, mask: &VocabMask) -> Result<LossGrad> {
    check_mask_shape(em, mask)?;
    let t_len = em.num_frames();
    let mut grad = vec![0.0; em.probs().len()];
    let anchors: Vec<(usize, usize)> = (0..t_len)
        .filter_map(|t| mask.anchor(t).map(|v| (v, t)))
        .collect();
    if anchors.is_empty() {
        return Ok(LossGrad { loss: 0.0, grad });
    }
    let k = anchors.len() as f64;
    let mut loss = 0.0;
    for &(c, t) in &anchors {
        loss -= em.prob(c, t).ln();
        for v in 0..em.vocab_size() {
            let delta = f64::from(u8::from(v == c));
            grad[v * t_len + t] = (em.prob(v, t) - delta) / k;
        }
    }
    Ok(LossGrad {
        loss: loss / k,
        grad,
    })
}

/// The hybrid objective: `lambda * CE(anchored) + (1 - lambda) * CTC(masked)`.
///
/// A weight of exactly 0 or 1 skips the zero-weighted term entirely (value
/// and gradient), so with `lambda = 0` and an empty mask the result is
/// bit-identical to [`ctc_loss`].
pub fn lcs_ctc_loss(
    em: &EmissionMatrix,
    mask: &VocabMask,
    target: &[PhonemeId],
    lambda: f64,
    epsilon: f64,
) -> Result<(LossBreakdown, Vec<f64>)> {
    if !(0.0..=1.0).contains(&lambda) || !lambda.is_finite() {
        return Err(Error::InvalidParam {
            name: "lambda",
            msg: format!("must be in [0, 1], got {lambda}"),
        });
    }
    check_mask_shape(em, mask)?;
    let v_len = em.vocab_size();
    let t_len = em.num_frames();
    let num_anchored = mask.num_anchored_frames();

    let ce = if lambda > 0.0 {
        Some(ce_anchored(em, mask)?)
    } else {
        None
    };
    let ctc = if lambda < 1.0 {
        let masked = mask_emissions(em, mask, epsilon)?;
        let fb = forward_backward(&masked, target)?;
        let mut grad = vec![0.0; v_len * t_len];
        for t in 0..t_len {
            match mask.anchor(t) {
                None => {
                    // Identity transform on this column: same simplification
                    // as the vanilla gradient.
                    for v in 0..v_len {
                        grad[v * t_len + t] =
                            masked.prob(v, t) - fb.gamma[v * t_len + t];
                    }
                }
                Some(_) => {
                    // Chain rule through the mask renormalization, then
                    // through the column softmax.
                    let masked_sum: f64 = (0..v_len)
                        .map(|v| if mask.get(v, t) { em.prob(v, t) } else { 0.0 })
                        .sum();
                    let denom = masked_sum + v_len as f64 * epsilon;
                    // dL/d p_tilde
                    let dtilde: Vec<f64> = (0..v_len)
                        .map(|v| -fb.gamma[v * t_len + t] / masked.prob(v, t))
                        .collect();
                    let s1: f64 = (0..v_len).map(|v| dtilde[v] * masked.prob(v, t)).sum();
                    // dL/d p
                    let dp: Vec<f64> = (0..v_len)
                        .map(|v| {
                            if mask.get(v, t) {
                                (dtilde[v] - s1) / denom
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    let s2: f64 = (0..v_len).map(|v| dp[v] * em.prob(v, t)).sum();
                    for v in 0..v_len {
                        grad[v * t_len + t] = em.prob(v, t) * (dp[v] - s2);
                    }
                }
            }
        }
        Some(LossGrad {
            loss: -fb.log_z,
            grad,
        })
    } else {
        None
    };

    let ce_loss = ce.as_ref().map_or(0.0, |c| c.loss);
    let ctc_val = ctc.as_ref().map_or(0.0, |c| c.loss);
    let total = match (&ce, &ctc) {
        (Some(c), None) => lambda * c.loss,
        (None, Some(c)) => (1.0 - lambda) * c.loss,
        (Some(a), Some(b)) => lambda * a.loss + (1.0 - lambda) * b.loss,
        (None, None) => unreachable!("lambda is in [0, 1]"),
    };

    let mut grad = vec![0.0; v_len * t_len];
    match (&ce, &ctc) {
        (Some(c), None) => {
            for (g, s) in grad.iter_mut().zip(&c.grad) {
                *g = lambda * s;
            }
        }
        (None, Some(c)) => {
            for (g, s) in grad.iter_mut().zip(&c.grad) {
                *g = (1.0 - lambda) * s;
            }
        }
        (Some(a), Some(b)) => {
            for ((g, x), y) in grad.iter_mut().zip(&a.grad).zip(&b.grad) {
                *g = lambda * x + (1.0 - lambda) * y;
            }
        }
        (None, None) => unreachable!(),
    }

    Ok((
        LossBreakdown {
            ctc_loss: ctc_val,
            ce_loss,
            total,
            lambda,
            num_anchored_frames: num_anchored,
        },
        grad,
    ))
}

/// Best CTC path for `target`, collapsed into phoneme spans.
///
/// Ties prefer the larger extended-state index at every choice, which emits
/// each label as early as possible and returns to blank as early as possible.
pub fn viterbi_align(em: &EmissionMatrix, target: &[PhonemeId]) -> Result<Segmentation> {
    validate_target(em, target)?;
    let t_len = em.num_frames();
    let blank = em.blank();
    let s_len = 2 * target.len() + 1;
    let lab = |s: usize| ext_label(target, blank, s);
    let lp = |s: usize, t: usize| em.prob(lab(s), t).ln();
    let allows_skip = |s: usize| s >= 2 && s % 2 == 1 && lab(s) != lab(s - 2);

    let neg = f64::NEG_INFINITY;
    let mut score = vec![neg; t_len * s_len];
    let mut back: Vec<usize> = vec![usize::MAX; t_len * s_len];
    score[0] = lp(0, 0);
    if s_len > 1 {
        score[1] = lp(1, 0);
    }
    for t in 1..t_len {
        for s in 0..s_len {
            // Candidates in descending predecessor index; strict improvement
            // required, so the larger index wins ties.
            let mut best = score[(t - 1) * s_len + s];
            let mut best_prev = s;
            if s >= 1 && score[(t - 1) * s_len + s - 1] > best {
                best = score[(t - 1) * s_len + s - 1];
                best_prev = s - 1;
            }
            if allows_skip(s) && score[(t - 1) * s_len + s - 2] > best {
                best = score[(t - 1) * s_len + s - 2];
                best_prev = s - 2;
            }
            if best > neg {
                score[t * s_len + s] = best + lp(s, t);
                back[t * s_len + s] = best_prev;
            }
        }
    }

    let mut end = s_len - 1;
    if s_len >= 2 && score[(t_len - 1) * s_len + s_len - 2] > score[(t_len - 1) * s_len + end] {
        end = s_len - 2;
    }
    if score[(t_len - 1) * s_len + end] == neg {
        return Err(Error::InvalidMatrix(
            "no feasible CTC path has positive probability".into(),
        ));
    }

    let mut states = vec![0usize; t_len];
    let mut s = end;
    for t in (0..t_len).rev() {
        states[t] = s;
        if t > 0 {
            s = back[t * s_len + s];
        }
    }

    // Collapse the state path into spans of the emitted (non-blank) labels.
    let mut spans: Vec<Span> = Vec::new();
    let mut t = 0;
    while t < t_len {
        let label = lab(states[t]);
        if label == blank {
            t += 1;
            continue;
        }
        let onset = t;
        let state = states[t];
        while t < t_len && states[t] == state {
            t += 1;
        }
        spans.push(Span {
            phoneme: PhonemeId(label),
            onset,
            offset: t,
        });
    }
    Segmentation::new(spans)
}

/// Best-path decoding: per-frame argmax, collapse repeats, drop blanks.
pub fn greedy_decode(em: &EmissionMatrix) -> Vec<PhonemeId> {
    let blank = em.blank();
    let mut out = Vec::new();
    let mut prev = usize::MAX;
    for t in 0..em.num_frames() {
        let v = em.argmax(t);
        if v != blank && v != prev {
            out.push(PhonemeId(v));
        }
        prev = v;
    }
    out
}

/// Log-probability of the single best path (for oracle comparisons).
pub fn viterbi_log_prob(em: &EmissionMatrix, target: &[PhonemeId]) -> Result<f64> {
    let seg = viterbi_align(em, target)?;
    let blank = em.blank();
    let mut lp = 0.0;
    for t in 0..em.num_frames() {
        let v = seg.frame_phoneme(t).map_or(blank, |p| p.0);
        lp += em.prob(v, t).ln();
    }
    Ok(lp)
}
