//! Cost-matrix construction: the supervision target built from a ground-truth
//! segmentation, Gaussian edge attenuation near span boundaries, time-axis
//! softmax normalization, and a synthetic noisy predictor stand-in.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::phoneme::{PhonemeId, SimilarityTable};

/// One aligned span: `phoneme` occupies frames `[onset, offset)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub phoneme: PhonemeId,
    pub onset: usize,
    pub offset: usize,
}

/// An ordered, non-overlapping frame-level alignment. Gaps between spans are
/// allowed and treated as silence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Segmentation {
    spans: Vec<Span>,
}

impl Segmentation {
    pub fn new(spans: Vec<Span>) -> Result<Segmentation> {
        let mut prev_end = 0usize;
        for (i, s) in spans.iter().enumerate() {
            if s.onset >= s.offset {
                return Err(Error::InvalidSegmentation(format!(
                    "span {i} has onset {} >= offset {}",
                    s.onset, s.offset
                )));
            }
            if i > 0 && s.onset < prev_end {
                return Err(Error::InvalidSegmentation(format!(
                    "span {i} starts at {} before previous span ends at {prev_end}",
                    s.onset
                )));
            }
            prev_end = s.offset;
        }
        Ok(Segmentation { spans })
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// Smallest frame count that contains every span.
    pub fn extent(&self) -> usize {
        self.spans.last().map_or(0, |s| s.offset)
    }

    /// The phoneme aligned to frame `j`, or `None` for silence.
    pub fn frame_phoneme(&self, j: usize) -> Option<PhonemeId> {
        self.spans
            .iter()
            .find(|s| s.onset <= j && j < s.offset)
            .map(|s| s.phoneme)
    }

    /// The span phonemes in order (what the segmentation collapses to).
    pub fn phoneme_sequence(&self) -> Vec<PhonemeId> {
        self.spans.iter().map(|s| s.phoneme).collect()
    }
}

/// An `n`-label by `T`-frame matrix of non-negative alignment costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    labels: Vec<PhonemeId>,
    num_frames: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    pub fn new(labels: Vec<PhonemeId>, num_frames: usize, values: Vec<f64>) -> Result<CostMatrix> {
        if labels.is_empty() {
            return Err(Error::EmptyLabels);
        }
        if num_frames == 0 {
            return Err(Error::InvalidParam {
                name: "num_frames",
                msg: "must be >= 1".into(),
            });
        }
        if values.len() != labels.len() * num_frames {
            return Err(Error::ShapeMismatch(format!(
                "{} labels x {} frames needs {} values, got {}",
                labels.len(),
                num_frames,
                labels.len() * num_frames,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidMatrix(format!(
                "cost values must be finite and non-negative, got {v}"
            )));
        }
        Ok(CostMatrix {
            labels,
            num_frames,
            values,
        })
    }

    pub fn labels(&self) -> &[PhonemeId] {
        &self.labels
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn get(&self, label_idx: usize, frame: usize) -> f64 {
        self.values[label_idx * self.num_frames + frame]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, label_idx: usize) -> &[f64] {
        let t = self.num_frames;
        &self.values[label_idx * t..(label_idx + 1) * t]
    }
}

/// Width of the Gaussian used for edge attenuation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeSigma {
    /// Per span: `max(1, 0.1 * span_length)` frames.
    Auto,
    /// One fixed width for every span, in frames. Must be > 0.
    Fixed(f64),
    /// Skip attenuation entirely (sharp span boundaries).
    None,
}

impl EdgeSigma {
    fn for_span(self, span_len: usize) -> Option<f64> {
        match self {
            EdgeSigma::Auto => Some((0.1 * span_len as f64).max(1.0)),
            EdgeSigma::Fixed(sigma) => Some(sigma),
            EdgeSigma::None => None,
        }
    }

    fn validate(self) -> Result<()> {
        if let EdgeSigma::Fixed(sigma) = self {
            if !(sigma > 0.0) || !sigma.is_finite() {
                return Err(Error::InvalidParam {
                    name: "edge_sigma",
                    msg: format!("must be > 0, got {sigma}"),
                });
            }
        }
        Ok(())
    }
}

fn validate_ids(seg: &Segmentation, labels: &[PhonemeId], sim: &SimilarityTable) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::EmptyLabels);
    }
    for &l in labels {
        if l.0 >= sim.len() {
            return Err(Error::UnknownSymbol(format!("label id {}", l.0)));
        }
    }
    for s in seg.spans() {
        if s.phoneme.0 >= sim.len() {
            return Err(Error::UnknownSymbol(format!("segment phoneme id {}", s.phoneme.0)));
        }
    }
    Ok(())
}

/// The raw two-case target: cost 0 where the label matches the aligned
/// phoneme, `1 - s(label, aligned)` elsewhere, and 1 against silence frames.
pub fn build_raw_cost(
    seg: &Segmentation,
    labels: &[PhonemeId],
    sim: &SimilarityTable,
    num_frames: usize,
) -> Result<CostMatrix> {
    validate_ids(seg, labels, sim)?;
    if num_frames < seg.extent() || num_frames == 0 {
        return Err(Error::InvalidParam {
            name: "num_frames",
            msg: format!(
                "segmentation extends to {} but num_frames is {num_frames}",
                seg.extent()
            ),
        });
    }
    let n = labels.len();
    let mut values = vec![0.0; n * num_frames];
    for (i, &label) in labels.iter().enumerate() {
        for j in 0..num_frames {
            values[i * num_frames + j] = match seg.frame_phoneme(j) {
                Some(p) if p == label => 0.0,
                Some(p) => 1.0 - sim.get(label, p)?,
                None => 1.0,
            };
        }
    }
    CostMatrix::new(labels.to_vec(), num_frames, values)
}

/// Raise costs toward the row mean near span edges.
///
/// Inside each span `[a, b)` whose phoneme equals a label row, every frame
/// `j` is replaced by `raw * (1 - g) + row_mean * g` with
/// `g = exp(-d^2 / (2 sigma^2))` and `d = min(j - a, b - 1 - j)`, so edge
/// frames move to the row mean while interior frames (`d >> sigma`) are left
/// essentially untouched. Row means are taken over the whole unattenuated
/// row.
pub fn apply_edge_attenuation(
    raw: &CostMatrix,
    seg: &Segmentation,
    edge_sigma: EdgeSigma,
) -> Result<CostMatrix> {
    edge_sigma.validate()?;
    let t = raw.num_frames();
    let row_means: Vec<f64> = (0..raw.num_labels())
        .map(|i| raw.row(i).iter().sum::<f64>() / t as f64)
        .collect();

    let mut values = raw.values().to_vec();
    for span in seg.spans() {
        if span.offset > t {
            return Err(Error::ShapeMismatch(format!(
                "span ends at {} but matrix has {t} frames",
                span.offset
            )));
        }
        let Some(sigma) = edge_sigma.for_span(span.offset - span.onset) else {
            continue;
        };
        for (i, &label) in raw.labels().iter().enumerate() {
            if label != span.phoneme {
                continue;
            }
            for j in span.onset..span.offset {
                let d = (j - span.onset).min(span.offset - 1 - j) as f64;
                let g = (-d * d / (2.0 * sigma * sigma)).exp();
                let idx = i * t + j;
                values[idx] = values[idx] * (1.0 - g) + row_means[i] * g;
            }
        }
    }
    CostMatrix::new(raw.labels().to_vec(), t, values)
}

/// The full supervision target: raw two-case costs plus edge attenuation.
///
/// The result is intentionally unnormalized (the similarity-adjusted
/// thresholds of the aligner operate on the raw cost scale); apply
/// [`normalize_time_axis`] explicitly where row distributions are wanted.
pub fn build_target_cost(
    seg: &Segmentation,
    labels: &[PhonemeId],
    sim: &SimilarityTable,
    edge_sigma: EdgeSigma,
    num_frames: usize,
) -> Result<CostMatrix> {
    let raw = build_raw_cost(seg, labels, sim, num_frames)?;
    apply_edge_attenuation(&raw, seg, edge_sigma)
}

/// Softmax of the negated costs along each row, so low cost maps to high
/// weight and every row sums to 1. Preserves within-row ordering.
pub fn normalize_time_axis(c: &CostMatrix) -> CostMatrix {
    let t = c.num_frames();
    let mut values = Vec::with_capacity(c.values().len());
    for i in 0..c.num_labels() {
        let row = c.row(i);
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        let exps: Vec<f64> = row.iter().map(|&v| (min - v).exp()).collect();
        let sum: f64 = exps.iter().sum();
        values.extend(exps.iter().map(|e| e / sum));
    }
    CostMatrix::new(c.labels().to_vec(), t, values).expect("normalized rows stay finite")
}

/// Target cost plus clamped noise, standing in for a predicted cost matrix.
/// Deterministic for a fixed seed; every entry moves by at most
/// `noise_level` and stays non-negative.
///
/// The noise is one-sided (costs only rise), modelling a conservative
/// predictor. The clean target sits exactly on the similarity-adjusted
/// threshold at tol = 1, so symmetric noise would turn half of all
/// mismatched cells into valid matches no matter how small the noise;
/// upward noise keeps spurious matches out until tol exceeds 1.
pub fn synthesize_predicted_cost(
    seg: &Segmentation,
    labels: &[PhonemeId],
    sim: &SimilarityTable,
    edge_sigma: EdgeSigma,
    num_frames: usize,
    noise_level: f64,
    rng_seed: u64,
) -> Result<CostMatrix> {
    if noise_level < 0.0 || !noise_level.is_finite() {
        return Err(Error::InvalidParam {
            name: "noise_level",
            msg: format!("must be >= 0, got {noise_level}"),
        });
    }
    let target = build_target_cost(seg, labels, sim, edge_sigma, num_frames)?;
    if noise_level == 0.0 {
        return Ok(target);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let values: Vec<f64> = target
        .values()
        .iter()
        .map(|&v| {
            let delta = rng.random_range(0.0..=noise_level);
            (v + delta).max(0.0)
        })
        .collect();
    CostMatrix::new(target.labels().to_vec(), num_frames, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phoneme::Inventory;

    fn setup() -> (Inventory, SimilarityTable) {
        let inv = Inventory::default_inventory();
        let sim = inv.similarity_table();
        (inv, sim)
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
    fn own_span_raw_cost_is_zero() {
        let (inv, sim) = setup();
        let s = seg(&inv, &[("IH", 0, 4)]);
        let labels = vec![inv.id("IH").unwrap()];
        let c = build_raw_cost(&s, &labels, &sim, 4).unwrap();
        assert_eq!(c.row(0), &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn mismatched_raw_cost_is_one_minus_similarity() {
        let (inv, sim) = setup();
        let s = seg(&inv, &[("Z", 0, 2)]);
        let labels = vec![inv.id("S").unwrap()];
        let c = build_raw_cost(&s, &labels, &sim, 2).unwrap();
        let expected = 1.0 - sim.get(inv.id("S").unwrap(), inv.id("Z").unwrap()).unwrap();
        assert_eq!(c.row(0), &[expected, expected]);
        assert_eq!(expected, 0.125);
    }

    #[test]
    fn two_phoneme_block_structure() {
        let (inv, sim) = setup();
        let ih = inv.id("IH").unwrap();
        let n = inv.id("N").unwrap();
        let s = seg(&inv, &[("IH", 0, 3), ("N", 3, 6)]);
        let c = build_raw_cost(&s, &[ih, n], &sim, 6).unwrap();
        let off = 1.0 - sim.get(ih, n).unwrap();
        for j in 0..6 {
            let (row_ih, row_n) = (c.get(0, j), c.get(1, j));
            if j < 3 {
                assert_eq!(row_ih, 0.0);
                assert_eq!(row_n, off);
            } else {
                assert_eq!(row_ih, off);
                assert_eq!(row_n, 0.0);
            }
        }
    }

    #[test]
    fn silence_frames_cost_one_for_all_labels() {
        let (inv, sim) = setup();
        let s = seg(&inv, &[("IH", 0, 2)]);
        let labels = vec![inv.id("IH").unwrap(), inv.id("S").unwrap()];
        let c = build_raw_cost(&s, &labels, &sim, 4).unwrap();
        for i in 0..2 {
            assert_eq!(c.get(i, 2), 1.0);
            assert_eq!(c.get(i, 3), 1.0);
        }
    }

    #[test]
    fn empty_labels_rejected() {
        let (inv, sim) = setup();
        let s = seg(&inv, &[("IH", 0, 2)]);
        assert!(matches!(
            build_raw_cost(&s, &[], &sim, 2),
            Err(Error::EmptyLabels)
        ));
    }

    #[test]
    fn attenuation_length_one_span_on_zero_row_is_identity() {
        let (inv, sim) = setup();
        let s = seg(&inv, &[("IH", 0, 1)]);
        let labels = vec![inv.id("IH").unwrap()];
        let raw = build_raw_cost(&s, &labels, &sim, 1).unwrap();
        let out = apply_edge_attenuation(&raw, &s, EdgeSigma::Fixed(1.0)).unwrap();
        assert_eq!(out.get(0, 0), raw.get(0, 0));
        assert_eq!(out.get(0, 0), 0.0);
    }

    #[test]
    fn attenuation_interior_weight_matches_gaussian() {
        // Span of 10 frames, sigma 1: frame 5 sits d = 4 from the nearer
        // edge, so its interpolation weight is exp(-16/2) = exp(-8).
        let (inv, sim) = setup();
        let s = seg(&inv, &[("IH", 0, 10)]);
        let labels = vec![inv.id("IH").unwrap(), inv.id("S").unwrap()];
        let raw = build_raw_cost(&s, &labels, &sim, 10).unwrap();
        let out = apply_edge_attenuation(&raw, &s, EdgeSigma::Fixed(1.0)).unwrap();
        let mean = raw.row(0).iter().sum::<f64>() / 10.0;
        let g = (-8.0f64).exp();
        let expected = raw.get(0, 5) * (1.0 - g) + mean * g;
        assert_eq!(out.get(0, 5), expected);
        // Interior change is bounded by the weight itself.
        assert!((out.get(0, 5) - raw.get(0, 5)).abs() <= g * mean.max(1.0));
        // Edge frame moves all the way to the row mean.
        assert_eq!(out.get(0, 0), mean);
        // Rows whose label does not own the span are untouched.
        assert_eq!(out.row(1), raw.row(1));
    }

    #[test]
    fn attenuation_sigma_to_zero_touches_only_edge_frames() {
        let (inv, sim) = setup();
        let s = seg(&inv, &[("IH", 0, 6)]);
        let labels = vec![inv.id("IH").unwrap(), inv.id("S").unwrap()];
        let raw = build_raw_cost(&s, &labels, &sim, 6).unwrap();
        let out = apply_edge_attenuation(&raw, &s, EdgeSigma::Fixed(1e-9)).unwrap();
        let mean = raw.row(0).iter().sum::<f64>() / 6.0;
        assert_eq!(out.get(0, 0), mean);
        assert_eq!(out.get(0, 5), mean);
        for j in 1..5 {
            assert_eq!(out.get(0, j), raw.get(0, j), "frame {j}");
        }
    }

    #[test]
    fn attenuation_rejects_nonpositive_sigma() {
        let (inv, sim) = setup();
        let s = seg(&inv, &[("IH", 0, 2)]);
        let labels = vec![inv.id("IH").unwrap()];
        let raw = build_raw_cost(&s, &labels, &sim, 2).unwrap();
        assert!(apply_edge_attenuation(&raw, &s, EdgeSigma::Fixed(0.0)).is_err());
        assert!(apply_edge_attenuation(&raw, &s, EdgeSigma::Fixed(-1.0)).is_err());
    }

    #[test]
    fn normalize_constant_row_is_uniform() {
        let (inv, _) = setup();
        let c = CostMatrix::new(vec![inv.id("IH").unwrap()], 4, vec![0.7; 4]).unwrap();
        let out = normalize_time_axis(&c);
        for j in 0..4 {
            assert!((out.get(0, j) - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_two_frame_row_matches_hand_softmax() {
        let (inv, _) = setup();
        let c = CostMatrix::new(vec![inv.id("IH").unwrap()], 2, vec![0.0, 1.0]).unwrap();
        let out = normalize_time_axis(&c);
        let e0 = 1.0;
        let e1 = (-1.0f64).exp();
        assert!((out.get(0, 0) - e0 / (e0 + e1)).abs() < 1e-15);
        assert!((out.get(0, 1) - e1 / (e0 + e1)).abs() < 1e-15);
    }

    #[test]
    fn normalize_rows_sum_to_one_and_preserve_order() {
        let (inv, sim) = setup();
        let s = seg(&inv, &[("IH", 0, 3), ("N", 3, 7)]);
        let labels = inv.parse_sequence("IH N S").unwrap();
        let c = synthesize_predicted_cost(&s, &labels, &sim, EdgeSigma::Auto, 8, 0.3, 7).unwrap();
        let out = normalize_time_axis(&c);
        for i in 0..out.num_labels() {
            let sum: f64 = out.row(i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            for j in 0..8 {
                for k in 0..8 {
                    if c.get(i, j) < c.get(i, k) {
                        assert!(out.get(i, j) > out.get(i, k));
                    }
                }
            }
        }
    }

    #[test]
    fn synthesize_zero_noise_equals_target() {
        let (inv, sim) = setup();
        let s = seg(&inv, &[("IH", 0, 3), ("N", 3, 6)]);
        let labels = inv.parse_sequence("IH N").unwrap();
        let target = build_target_cost(&s, &labels, &sim, EdgeSigma::Auto, 6).unwrap();
        let synth =
            synthesize_predicted_cost(&s, &labels, &sim, EdgeSigma::Auto, 6, 0.0, 42).unwrap();
        assert_eq!(target, synth);
    }

    #[test]
    fn synthesize_is_deterministic_and_clamped() {
        let (inv, sim) = setup();
        let s = seg(&inv, &[("IH", 0, 3), ("N", 3, 6)]);
        let labels = inv.parse_sequence("IH N").unwrap();
        let target = build_target_cost(&s, &labels, &sim, EdgeSigma::Auto, 6).unwrap();
        let a = synthesize_predicted_cost(&s, &labels, &sim, EdgeSigma::Auto, 6, 0.1, 9).unwrap();
        let b = synthesize_predicted_cost(&s, &labels, &sim, EdgeSigma::Auto, 6, 0.1, 9).unwrap();
        assert_eq!(a, b);
        for (x, y) in a.values().iter().zip(target.values()) {
            assert!((x - y).abs() <= 0.1 + 1e-15);
            assert!(*x >= 0.0);
        }
    }

    #[test]
    fn segmentation_rejects_overlap_and_empty_spans() {
        let (inv, _) = setup();
        let ih = inv.id("IH").unwrap();
        assert!(Segmentation::new(vec![Span {
            phoneme: ih,
            onset: 3,
            offset: 3
        }])
        .is_err());
        assert!(Segmentation::new(vec![
            Span {
                phoneme: ih,
                onset: 0,
                offset: 4
            },
            Span {
                phoneme: ih,
                onset: 3,
                offset: 6
            },
        ])
        .is_err());
    }
}
