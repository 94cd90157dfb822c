//! Evaluation metrics: phoneme error rate, similarity-weighted PER, boundary
//! loss over matched spans, and emission peakiness statistics.

use serde::Serialize;

use crate::cost::Segmentation;
use crate::ctc::EmissionMatrix;
use crate::error::{Error, Result};
use crate::phoneme::{PhonemeId, SimilarityTable};

/// One step of an edit alignment between a reference and a hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    Match { r: usize, h: usize },
    Substitute { r: usize, h: usize },
    Delete { r: usize },
    Insert { h: usize },
}

/// An optimal edit alignment under the active cost scheme.
#[derive(Debug, Clone)]
pub struct EditOps {
    pub ops: Vec<EditOp>,
    pub substitutions: Vec<(PhonemeId, PhonemeId)>,
    pub deletions: usize,
    pub insertions: usize,
    pub matches: usize,
    pub cost: f64,
}

/// Optimal alignment with substitution cost from `sub_cost` and unit
/// insertion/deletion costs. Traceback prefers diagonal, then deletion, then
/// insertion, so the returned op list is deterministic.
fn edit_alignment(
    reference: &[PhonemeId],
    hypothesis: &[PhonemeId],
    mut sub_cost: impl FnMut(PhonemeId, PhonemeId) -> Result<f64>,
) -> Result<EditOps> {
    let n = reference.len();
    let m = hypothesis.len();
    let idx = |i: usize, j: usize| i * (m + 1) + j;
    let mut dp = vec![0.0f64; (n + 1) * (m + 1)];
    for i in 1..=n {
        dp[idx(i, 0)] = i as f64;
    }
    for j in 1..=m {
        dp[idx(0, j)] = j as f64;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = dp[idx(i - 1, j - 1)] + sub_cost(reference[i - 1], hypothesis[j - 1])?;
            let del = dp[idx(i - 1, j)] + 1.0;
            let ins = dp[idx(i, j - 1)] + 1.0;
            dp[idx(i, j)] = diag.min(del).min(ins);
        }
    }

    let mut ops_rev = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[idx(i, j)];
        if i > 0 && j > 0 {
            let sub = sub_cost(reference[i - 1], hypothesis[j - 1])?;
            if dp[idx(i - 1, j - 1)] + sub == here {
                ops_rev.push(if sub == 0.0 && reference[i - 1] == hypothesis[j - 1] {
                    EditOp::Match { r: i - 1, h: j - 1 }
                } else {
                    EditOp::Substitute { r: i - 1, h: j - 1 }
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[idx(i - 1, j)] + 1.0 == here {
            ops_rev.push(EditOp::Delete { r: i - 1 });
            i -= 1;
        } else {
            ops_rev.push(EditOp::Insert { h: j - 1 });
            j -= 1;
        }
    }
    ops_rev.reverse();

    let mut substitutions = Vec::new();
    let (mut deletions, mut insertions, mut matches) = (0, 0, 0);
    for op in &ops_rev {
        match *op {
            EditOp::Match { .. } => matches += 1,
            EditOp::Substitute { r, h } => substitutions.push((reference[r], hypothesis[h])),
            EditOp::Delete { .. } => deletions += 1,
            EditOp::Insert { .. } => insertions += 1,
        }
    }
    Ok(EditOps {
        ops: ops_rev,
        substitutions,
        deletions,
        insertions,
        matches,
        cost: dp[idx(n, m)],
    })
}

/// Unit-cost edit alignment (classic Levenshtein).
pub fn align_unit(reference: &[PhonemeId], hypothesis: &[PhonemeId]) -> EditOps {
    edit_alignment(reference, hypothesis, |r, h| {
        Ok(if r == h { 0.0 } else { 1.0 })
    })
    .expect("unit costs cannot fail")
}

/// Alignment under similarity-weighted substitution costs `1 - s`.
pub fn align_weighted(
    reference: &[PhonemeId],
    hypothesis: &[PhonemeId],
    sim: &SimilarityTable,
) -> Result<EditOps> {
    edit_alignment(reference, hypothesis, |r, h| {
        if r == h {
            Ok(0.0)
        } else {
            Ok(1.0 - sim.get(r, h)?)
        }
    })
}

/// Phoneme error rate: unit edit distance over the reference length.
pub fn per(reference: &[PhonemeId], hypothesis: &[PhonemeId]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    Ok(align_unit(reference, hypothesis).cost / reference.len() as f64)
}

/// Weighted phoneme error rate: substitutions cost `1 - s`, insertions and
/// deletions cost 1, and the alignment itself is optimal under those
/// weighted costs. Always at most [`per`] on the same pair.
pub fn wper(
    reference: &[PhonemeId],
    hypothesis: &[PhonemeId],
    sim: &SimilarityTable,
) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    Ok(align_weighted(reference, hypothesis, sim)?.cost / reference.len() as f64)
}

/// Boundary deviation over matched spans, plus counts of spans the matching
/// left out.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryReport {
    /// Mean of |onset delta| and |offset delta| over matched span pairs, in
    /// milliseconds. Zero when nothing matched.
    pub mean_ms: f64,
    pub matched: usize,
    pub unmatched_pred: usize,
    pub unmatched_ref: usize,
}

/// Match predicted to reference spans by unit-cost edit alignment on the
/// span labels; average absolute onset/offset deviations over equal-label
/// pairs. Substituted, deleted, and inserted spans are excluded from the
/// mean and reported in the unmatched counts.
pub fn boundary_loss(
    pred: &Segmentation,
    reference: &Segmentation,
    frame_ms: f64,
) -> Result<BoundaryReport> {
    if !(frame_ms > 0.0) || !frame_ms.is_finite() {
        return Err(Error::InvalidParam {
            name: "frame_ms",
            msg: format!("must be > 0, got {frame_ms}"),
        });
    }
    if pred.is_empty() && reference.is_empty() {
        return Err(Error::InvalidSegmentation(
            "both segmentations are empty".into(),
        ));
    }
    let ref_labels = reference.phoneme_sequence();
    let pred_labels = pred.phoneme_sequence();
    let ops = align_unit(&ref_labels, &pred_labels);

    let mut deviations: Vec<f64> = Vec::new();
    let mut matched = 0usize;
    for op in &ops.ops {
        if let EditOp::Match { r, h } = *op {
            let rs = reference.spans()[r];
            let ps = pred.spans()[h];
            deviations.push((rs.onset as f64 - ps.onset as f64).abs() * frame_ms);
            deviations.push((rs.offset as f64 - ps.offset as f64).abs() * frame_ms);
            matched += 1;
        }
    }
    let mean_ms = if deviations.is_empty() {
        0.0
    } else {
        deviations.iter().sum::<f64>() / deviations.len() as f64
    };
    Ok(BoundaryReport {
        mean_ms,
        matched,
        unmatched_pred: pred_labels.len() - matched,
        unmatched_ref: ref_labels.len() - matched,
    })
}

/// Summary of how peaky an emission matrix is.
#[derive(Debug, Clone, Serialize)]
pub struct PeakinessStats {
    /// Fraction of frames whose argmax is the blank.
    pub blank_frame_fraction: f64,
    /// Mean length of maximal constant non-blank runs in the argmax
    /// sequence; 0 when no frame is non-blank.
    pub mean_nonblank_run_length: f64,
    /// Mean over frames of the column maximum probability.
    pub mean_max_prob: f64,
}

pub fn peakiness_stats(em: &EmissionMatrix) -> PeakinessStats {
    let t_len = em.num_frames();
    let blank = em.blank();
    let argmax: Vec<usize> = (0..t_len).map(|t| em.argmax(t)).collect();

    let blank_frames = argmax.iter().filter(|&&v| v == blank).count();

    let mut runs: Vec<usize> = Vec::new();
    let mut t = 0;
    while t < t_len {
        if argmax[t] == blank {
            t += 1;
            continue;
        }
        let v = argmax[t];
        let start = t;
        while t < t_len && argmax[t] == v {
            t += 1;
        }
        runs.push(t - start);
    }

    let mean_max_prob = (0..t_len)
        .map(|t| em.prob(argmax[t], t))
        .sum::<f64>()
        / t_len as f64;

    PeakinessStats {
        blank_frame_fraction: blank_frames as f64 / t_len as f64,
        mean_nonblank_run_length: if runs.is_empty() {
            0.0
        } else {
            runs.iter().sum::<usize>() as f64 / runs.len() as f64
        },
        mean_max_prob,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::Span;
    use crate::phoneme::Inventory;

    fn setup() -> (Inventory, SimilarityTable) {
        let inv = Inventory::default_inventory();
        let sim = inv.similarity_table();
        (inv, sim)
    }

    #[test]
    fn identical_sequences_have_zero_per() {
        let (inv, _) = setup();
        let s = inv.parse_sequence("IH N S ER T").unwrap();
        assert_eq!(per(&s, &s).unwrap(), 0.0);
    }

    #[test]
    fn dysfluent_insertion_example_is_two_fifths() {
        // "IH N S ER T" spoken as "IH S N S ER AH T": two insertions.
        let (inv, _) = setup();
        let reference = inv.parse_sequence("IH N S ER T").unwrap();
        let hypothesis = inv.parse_sequence("IH S N S ER AH T").unwrap();
        let ops = align_unit(&reference, &hypothesis);
        assert_eq!(ops.cost, 2.0);
        assert_eq!(ops.insertions, 2);
        assert_eq!(per(&reference, &hypothesis).unwrap(), 0.4);
    }

    #[test]
    fn deletion_to_empty_is_one() {
        let (inv, _) = setup();
        let reference = inv.parse_sequence("IH").unwrap();
        assert_eq!(per(&reference, &[]).unwrap(), 1.0);
    }

    #[test]
    fn empty_reference_is_an_error() {
        let (inv, _) = setup();
        let hyp = inv.parse_sequence("IH").unwrap();
        assert!(matches!(per(&[], &hyp), Err(Error::EmptyReference)));
        let sim = inv.similarity_table();
        assert!(matches!(wper(&[], &hyp, &sim), Err(Error::EmptyReference)));
    }

    #[test]
    fn wper_single_substitution_uses_similarity() {
        let (inv, sim) = setup();
        let reference = inv.parse_sequence("S").unwrap();
        let hypothesis = inv.parse_sequence("Z").unwrap();
        assert_eq!(wper(&reference, &hypothesis, &sim).unwrap(), 0.125);
        assert_eq!(wper(&reference, &reference, &sim).unwrap(), 0.0);
    }

    #[test]
    fn wper_never_exceeds_per() {
        use rand::{Rng, SeedableRng};
        let (inv, sim) = setup();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let rn = rng.random_range(1..8);
            let hn = rng.random_range(0..8);
            let reference: Vec<PhonemeId> =
                (0..rn).map(|_| PhonemeId(rng.random_range(0..inv.len()))).collect();
            let hypothesis: Vec<PhonemeId> =
                (0..hn).map(|_| PhonemeId(rng.random_range(0..inv.len()))).collect();
            let w = wper(&reference, &hypothesis, &sim).unwrap();
            let u = per(&reference, &hypothesis).unwrap();
            assert!(w <= u + 1e-12, "wper {w} > per {u}");
        }
    }

    #[test]
    fn wper_equals_per_when_similarities_are_zero() {
        // Vowel/consonant substitutions have similarity 0 under the shipped
        // profiles.
        let (inv, sim) = setup();
        let reference = inv.parse_sequence("IH EH AA").unwrap();
        let hypothesis = inv.parse_sequence("B D K").unwrap();
        assert_eq!(
            wper(&reference, &hypothesis, &sim).unwrap(),
            per(&reference, &hypothesis).unwrap()
        );
    }

    #[test]
    fn per_distance_is_symmetric() {
        let (inv, _) = setup();
        let a = inv.parse_sequence("IH N S ER T").unwrap();
        let b = inv.parse_sequence("IH S N S ER AH T").unwrap();
        assert_eq!(align_unit(&a, &b).cost, align_unit(&b, &a).cost);
    }

    fn seg(inv: &Inventory, spans: &[(&str, usize, usize)]) -> Segmentation {
        Segmentation::new(
            spans
                .iter()
                .map(|&(p, a, b)| Span {
                    phoneme: inv.id(p).unwrap(),
                    onset: a,
                    offset: b,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn boundary_loss_zero_for_identical_segmentations() {
        let (inv, _) = setup();
        let s = seg(&inv, &[("IH", 0, 3), ("N", 3, 6)]);
        let report = boundary_loss(&s, &s, 20.0).unwrap();
        assert_eq!(report.mean_ms, 0.0);
        assert_eq!(report.matched, 2);
    }

    #[test]
    fn boundary_loss_two_frame_shift_at_20ms_is_40ms() {
        let (inv, _) = setup();
        let reference = seg(&inv, &[("IH", 0, 5)]);
        let pred = seg(&inv, &[("IH", 2, 7)]);
        let report = boundary_loss(&pred, &reference, 20.0).unwrap();
        assert_eq!(report.mean_ms, 40.0);
    }

    #[test]
    fn boundary_loss_excludes_unmatched_spans() {
        let (inv, _) = setup();
        let reference = seg(&inv, &[("IH", 0, 3), ("N", 3, 6)]);
        let pred = seg(&inv, &[("IH", 1, 4)]);
        let report = boundary_loss(&pred, &reference, 20.0).unwrap();
        assert_eq!(report.matched, 1);
        assert_eq!(report.unmatched_ref, 1);
        assert_eq!(report.unmatched_pred, 0);
        assert_eq!(report.mean_ms, 20.0);
    }

    #[test]
    fn boundary_loss_symmetric_for_equal_label_sequences() {
        let (inv, _) = setup();
        let a = seg(&inv, &[("IH", 0, 3), ("N", 3, 6)]);
        let b = seg(&inv, &[("IH", 1, 4), ("N", 4, 8)]);
        let ab = boundary_loss(&a, &b, 20.0).unwrap();
        let ba = boundary_loss(&b, &a, 20.0).unwrap();
        assert_eq!(ab.mean_ms, ba.mean_ms);
    }

    #[test]
    fn boundary_loss_rejects_two_empty_segmentations() {
        let empty = Segmentation::default();
        assert!(boundary_loss(&empty, &empty, 20.0).is_err());
    }

    #[test]
    fn peakiness_of_uniform_emissions() {
        let v = 4;
        let t = 6;
        let em = EmissionMatrix::from_probs(v, t, vec![0.25; v * t]).unwrap();
        let stats = peakiness_stats(&em);
        assert!((stats.mean_max_prob - 0.25).abs() < 1e-12);
    }

    #[test]
    fn peakiness_of_all_blank() {
        let t = 5;
        let mut probs = vec![0.0; 3 * t];
        for j in 0..t {
            probs[2 * t + j] = 1.0; // blank row
        }
        let em = EmissionMatrix::from_probs(3, t, probs).unwrap();
        let stats = peakiness_stats(&em);
        assert_eq!(stats.blank_frame_fraction, 1.0);
        assert_eq!(stats.mean_nonblank_run_length, 0.0);
    }

    #[test]
    fn peakiness_of_alternating_blank_nonblank() {
        let t = 6;
        let mut probs = vec![0.0; 2 * t];
        for j in 0..t {
            if j % 2 == 0 {
                probs[j] = 1.0; // label row
            } else {
                probs[t + j] = 1.0; // blank row
            }
        }
        let em = EmissionMatrix::from_probs(2, t, probs).unwrap();
        let stats = peakiness_stats(&em);
        assert_eq!(stats.mean_nonblank_run_length, 1.0);
        assert_eq!(stats.blank_frame_fraction, 0.5);
    }
}
