//! Desk-scale end-to-end demonstration: a linear-softmax frame classifier
//! trained on synthetic utterances with vanilla CTC, the anchored LCS-CTC
//! objective, or the full-frame CE + CTC baseline.
//!
//! The generator plants per-phoneme feature prototypes, optionally injects
//! one extraneous phoneme span per utterance (present in the audio and the
//! segmentation, absent from the target), and synthesizes a noisy cost
//! matrix per utterance in place of a learned cost predictor. Everything is
//! deterministic for a fixed seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::align::{expand_mask, find_valid_matches, lcs_align, VocabMask};
use crate::cost::{synthesize_predicted_cost, CostMatrix, EdgeSigma, Segmentation, Span};
use crate::ctc::{ctc_loss, lcs_ctc_loss, viterbi_align, EmissionMatrix};
use crate::error::{Error, Result};
use crate::metrics::{align_unit, align_weighted, boundary_loss, peakiness_stats, PeakinessStats};
use crate::phoneme::{Inventory, PhonemeId, SimilarityTable};

/// Synthetic data generation parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenConfig {
    pub num_utts: usize,
    /// Symbols the targets are drawn from.
    pub vocab_subset: Vec<String>,
    pub mean_span_frames: usize,
    /// Standard deviation of the Gaussian feature noise.
    pub feature_noise: f64,
    /// Magnitude of the uniform noise added to the synthesized cost matrix.
    pub cost_noise: f64,
    /// Per-utterance probability of inserting one extraneous span.
    pub dysfluency_rate: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            num_utts: 200,
            vocab_subset: ["IH", "N", "S", "ER", "T", "AH"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            mean_span_frames: 6,
            feature_noise: 0.3,
            cost_noise: 0.25,
            dysfluency_rate: 0.3,
            seed: 0,
        }
    }
}

/// One synthetic utterance: frame features, the intended target, the spoken
/// segmentation (it may contain the inserted dysfluency), and a noisy cost
/// matrix standing in for a predicted one.
#[derive(Debug, Clone)]
pub struct SyntheticUtterance {
    /// Row-major `num_frames x feature_dim`.
    pub features: Vec<f64>,
    pub num_frames: usize,
    pub target: Vec<PhonemeId>,
    pub segmentation: Segmentation,
    pub cost: CostMatrix,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub feature_dim: usize,
    pub subset: Vec<PhonemeId>,
    pub utterances: Vec<SyntheticUtterance>,
    pub config: GenConfig,
}

/// Generate a deterministic synthetic dataset.
pub fn gen_synthetic(
    cfg: &GenConfig,
    inv: &Inventory,
    sim: &SimilarityTable,
) -> Result<Dataset> {
    if cfg.num_utts == 0 {
        return Err(Error::InvalidParam {
            name: "num_utts",
            msg: "must be >= 1".into(),
        });
    }
    if cfg.vocab_subset.len() < 2 {
        return Err(Error::InvalidParam {
            name: "vocab_subset",
            msg: "need at least two phonemes".into(),
        });
    }
    if !(0.0..=1.0).contains(&cfg.dysfluency_rate) {
        return Err(Error::InvalidParam {
            name: "dysfluency_rate",
            msg: format!("must be in [0, 1], got {}", cfg.dysfluency_rate),
        });
    }
    if cfg.mean_span_frames < 3 {
        return Err(Error::InvalidParam {
            name: "mean_span_frames",
            msg: "must be >= 3".into(),
        });
    }
    let subset: Vec<PhonemeId> = cfg
        .vocab_subset
        .iter()
        .map(|s| inv.id(s))
        .collect::<Result<_>>()?;
    let feature_dim = subset.len() + 2;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.feature_noise.max(0.0)).map_err(|_| Error::InvalidParam {
        name: "feature_noise",
        msg: format!("must be finite and >= 0, got {}", cfg.feature_noise),
    })?;

    let mut utterances = Vec::with_capacity(cfg.num_utts);
    for _ in 0..cfg.num_utts {
        // Target: 4-6 phonemes, no adjacent repeats.
        let target_len = rng.random_range(4..=6);
        let mut target: Vec<PhonemeId> = Vec::with_capacity(target_len);
        while target.len() < target_len {
            let cand = subset[rng.random_range(0..subset.len())];
            if target.last() != Some(&cand) {
                target.push(cand);
            }
        }

        // Spoken spans = target, optionally with one extraneous phoneme.
        let mut spoken: Vec<(PhonemeId, bool)> = target.iter().map(|&p| (p, true)).collect();
        if rng.random_bool(cfg.dysfluency_rate) {
            let pos = rng.random_range(0..=spoken.len());
            let before = pos.checked_sub(1).map(|i| spoken[i].0);
            let after = spoken.get(pos).map(|x| x.0);
            let extraneous = loop {
                let cand = subset[rng.random_range(0..subset.len())];
                if Some(cand) != before && Some(cand) != after {
                    break cand;
                }
            };
            spoken.insert(pos, (extraneous, false));
        }

        // Frame layout: leading silence, spans, trailing silence.
        let span_min = cfg.mean_span_frames - 2;
        let span_max = cfg.mean_span_frames + 2;
        let lead = rng.random_range(2..=4);
        let trail = rng.random_range(2..=4);
        let mut spans = Vec::with_capacity(spoken.len());
        let mut cursor = lead;
        for &(p, _) in &spoken {
            let len = rng.random_range(span_min..=span_max);
            spans.push(Span {
                phoneme: p,
                onset: cursor,
                offset: cursor + len,
            });
            cursor += len;
        }
        let num_frames = cursor + trail;
        let segmentation = Segmentation::new(spans)?;

        // Features: per-phoneme one-hot prototype, a constant component
        // (the linear model's bias channel, needed so near-zero silence
        // frames can still prefer blank), and Gaussian noise everywhere.
        let mut features = vec![0.0; num_frames * feature_dim];
        for t in 0..num_frames {
            if let Some(p) = segmentation.frame_phoneme(t) {
                let k = subset.iter().position(|&s| s == p).expect("span is in subset");
                features[t * feature_dim + k] = 2.0;
            }
            features[t * feature_dim + subset.len()] = 1.0;
            for f in 0..feature_dim {
                features[t * feature_dim + f] += noise.sample(&mut rng);
            }
        }

        // Sharp span boundaries for the stand-in predictor: with edge
        // attenuation the lifted own-row cost loses the column argmin to a
        // similar phoneme near boundaries, which floods the masks with
        // wrong-phoneme anchors.
        let cost_seed = rng.random::<u64>();
        let cost = synthesize_predicted_cost(
            &segmentation,
            &target,
            sim,
            EdgeSigma::None,
            num_frames,
            cfg.cost_noise,
            cost_seed,
        )?;

        utterances.push(SyntheticUtterance {
            features,
            num_frames,
            target,
            segmentation,
            cost,
        });
    }

    Ok(Dataset {
        feature_dim,
        subset,
        utterances,
        config: cfg.clone(),
    })
}

/// Training objective selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    VanillaCtc,
    LcsCtc,
    CeCtc,
}

impl std::str::FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Objective> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "vanilla-ctc" | "ctc" => Ok(Objective::VanillaCtc),
            "lcs-ctc" => Ok(Objective::LcsCtc),
            "ce-ctc" => Ok(Objective::CeCtc),
            other => Err(Error::InvalidParam {
                name: "objective",
                msg: format!("expected vanilla-ctc, lcs-ctc, or ce-ctc, got '{other}'"),
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub objective: Objective,
    pub epochs: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub tol: f64,
    pub cost_floor: f64,
    pub epsilon: f64,
    /// Recompute masks from the model's own emissions each epoch instead of
    /// the static cost-matrix masks.
    pub refresh_masks: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: Objective::LcsCtc,
            epochs: 30,
            learning_rate: 0.5,
            lambda: crate::ctc::DEFAULT_LAMBDA,
            tol: crate::align::DEFAULT_TOL,
            cost_floor: crate::align::DEFAULT_COST_FLOOR,
            epsilon: crate::ctc::DEFAULT_EPSILON,
            refresh_masks: false,
        }
    }
}

/// A linear frame classifier: `logit[v, t] = sum_f features[t, f] * w[f, v]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub feature_dim: usize,
    pub vocab_size: usize,
    /// Row-major `feature_dim x vocab_size`.
    pub weights: Vec<f64>,
}

impl Model {
    pub fn zeros(feature_dim: usize, vocab_size: usize) -> Model {
        Model {
            feature_dim,
            vocab_size,
            weights: vec![0.0; feature_dim * vocab_size],
        }
    }

    /// Frame-wise softmax emissions for one utterance.
    pub fn emissions(&self, features: &[f64], num_frames: usize) -> Result<EmissionMatrix> {
        if features.len() != num_frames * self.feature_dim {
            return Err(Error::ShapeMismatch(format!(
                "{num_frames} frames x {} features needs {} values, got {}",
                self.feature_dim,
                num_frames * self.feature_dim,
                features.len()
            )));
        }
        let v_len = self.vocab_size;
        let mut logits = vec![0.0; v_len * num_frames];
        for t in 0..num_frames {
            for f in 0..self.feature_dim {
                let x = features[t * self.feature_dim + f];
                if x == 0.0 {
                    continue;
                }
                for v in 0..v_len {
                    logits[v * num_frames + t] += x * self.weights[f * v_len + v];
                }
            }
        }
        EmissionMatrix::from_logits(v_len, num_frames, &logits)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean loss over the dataset at the start of each epoch.
    pub epoch_mean_loss: Vec<f64>,
}

/// Static per-utterance vocabulary masks from the synthesized cost matrices.
pub fn dataset_masks(ds: &Dataset, inv: &Inventory, sim: &SimilarityTable, tol: f64, cost_floor: f64) -> Result<Vec<VocabMask>> {
    ds.utterances
        .iter()
        .map(|u| {
            let valid = find_valid_matches(&u.cost, sim, tol, cost_floor)?;
            let mask = lcs_align(&valid, u.cost.labels())?;
            expand_mask(&mask, inv)
        })
        .collect()
}

fn emission_cost(em: &EmissionMatrix, target: &[PhonemeId]) -> Result<CostMatrix> {
    let t_len = em.num_frames();
    let mut values = vec![0.0; target.len() * t_len];
    for (i, &p) in target.iter().enumerate() {
        for t in 0..t_len {
            values[i * t_len + t] = 1.0 - em.prob(p.0, t);
        }
    }
    CostMatrix::new(target.to_vec(), t_len, values)
}

/// Full-batch gradient descent on the linear model.
pub fn train(
    ds: &Dataset,
    cfg: &TrainConfig,
    inv: &Inventory,
    sim: &SimilarityTable,
) -> Result<(Model, TrainLog)> {
    if ds.utterances.is_empty() {
        return Err(Error::InvalidParam {
            name: "dataset",
            msg: "no utterances".into(),
        });
    }
    if !cfg.learning_rate.is_finite() || cfg.learning_rate < 0.0 {
        return Err(Error::InvalidParam {
            name: "learning_rate",
            msg: format!("must be finite and >= 0, got {}", cfg.learning_rate),
        });
    }
    let vocab_size = inv.vocab_size();
    let mut model = Model::zeros(ds.feature_dim, vocab_size);
    let mut log = TrainLog {
        epoch_mean_loss: Vec::with_capacity(cfg.epochs),
    };

    let static_masks = if cfg.objective == Objective::LcsCtc && !cfg.refresh_masks {
        Some(dataset_masks(ds, inv, sim, cfg.tol, cfg.cost_floor)?)
    } else {
        None
    };

    // Frame labels for the CE-CTC baseline come from the spoken
    // segmentation; silence frames carry no label.
    let frame_labels: Vec<Vec<Option<usize>>> = ds
        .utterances
        .iter()
        .map(|u| {
            (0..u.num_frames)
                .map(|t| u.segmentation.frame_phoneme(t).map(|p| p.0))
                .collect()
        })
        .collect();

    for epoch in 0..cfg.epochs {
        let mut grad_w = vec![0.0; model.weights.len()];
        let mut loss_sum = 0.0;
        for (ui, utt) in ds.utterances.iter().enumerate() {
            let em = model.emissions(&utt.features, utt.num_frames)?;
            let (loss, grad_z) = match cfg.objective {
                Objective::VanillaCtc => {
                    let out = ctc_loss(&em, &utt.target)?;
                    (out.loss, out.grad)
                }
                Objective::LcsCtc => {
                    let mask = match &static_masks {
                        Some(masks) => masks[ui].clone(),
                        None => {
                            let cost = emission_cost(&em, &utt.target)?;
                            let valid = find_valid_matches(&cost, sim, cfg.tol, cfg.cost_floor)?;
                            expand_mask(&lcs_align(&valid, &utt.target)?, inv)?
                        }
                    };
                    let (bd, grad) =
                        lcs_ctc_loss(&em, &mask, &utt.target, cfg.lambda, cfg.epsilon)?;
                    (bd.total, grad)
                }
                Objective::CeCtc => {
                    let ctc = ctc_loss(&em, &utt.target)?;
                    let labels = &frame_labels[ui];
                    let k = labels.iter().flatten().count();
                    let mut ce = 0.0;
                    let mut grad = vec![0.0; vocab_size * utt.num_frames];
                    if k > 0 {
                        for (t, lab) in labels.iter().enumerate() {
                            if let Some(c) = lab {
                                ce -= em.prob(*c, t).ln();
                                for v in 0..vocab_size {
                                    let delta = f64::from(u8::from(v == *c));
                                    grad[v * utt.num_frames + t] =
                                        (em.prob(v, t) - delta) / k as f64;
                                }
                            }
                        }
                        ce /= k as f64;
                    }
                    let total = cfg.lambda * ce + (1.0 - cfg.lambda) * ctc.loss;
                    for (g, c) in grad.iter_mut().zip(&ctc.grad) {
                        *g = cfg.lambda * *g + (1.0 - cfg.lambda) * c;
                    }
                    (total, grad)
                }
            };
            loss_sum += loss;
            // grad_w[f, v] += sum_t x[t, f] * grad_z[v, t]
            for t in 0..utt.num_frames {
                for f in 0..ds.feature_dim {
                    let x = utt.features[t * ds.feature_dim + f];
                    if x == 0.0 {
                        continue;
                    }
                    for v in 0..vocab_size {
                        grad_w[f * vocab_size + v] += x * grad_z[v * utt.num_frames + t];
                    }
                }
            }
        }
        let mean_loss = loss_sum / ds.utterances.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: mean_loss,
            });
        }
        log.epoch_mean_loss.push(mean_loss);
        let scale = cfg.learning_rate / ds.utterances.len() as f64;
        for (w, g) in model.weights.iter_mut().zip(&grad_w) {
            *w -= scale * g;
        }
    }

    Ok((model, log))
}

/// Held-out evaluation summary. PER and WPER are micro-averaged (total edit
/// cost over total reference length); boundary deviations are pooled over
/// all matched spans; peakiness statistics are averaged per utterance.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub per: f64,
    pub wper: f64,
    /// Mean absolute onset/offset deviation of matched spans, in frames.
    pub bl_frames: f64,
    pub bl_matched: usize,
    pub bl_unmatched_pred: usize,
    pub bl_unmatched_ref: usize,
    pub peakiness: PeakinessStats,
}

pub fn evaluate(
    model: &Model,
    ds: &Dataset,
    sim: &SimilarityTable,
) -> Result<EvalReport> {
    if ds.utterances.is_empty() {
        return Err(Error::InvalidParam {
            name: "dataset",
            msg: "no utterances".into(),
        });
    }
    let mut unit_cost = 0.0;
    let mut weighted_cost = 0.0;
    let mut ref_len = 0usize;
    let mut dev_sum = 0.0;
    let mut dev_count = 0usize;
    let mut matched = 0usize;
    let mut unmatched_pred = 0usize;
    let mut unmatched_ref = 0usize;
    let mut blank_frac = 0.0;
    let mut run_len = 0.0;
    let mut max_prob = 0.0;

    for utt in &ds.utterances {
        let em = model.emissions(&utt.features, utt.num_frames)?;
        let hyp = crate::ctc::greedy_decode(&em);
        unit_cost += align_unit(&utt.target, &hyp).cost;
        weighted_cost += align_weighted(&utt.target, &hyp, sim)?.cost;
        ref_len += utt.target.len();

        let pred_seg = viterbi_align(&em, &utt.target)?;
        let report = boundary_loss(&pred_seg, &utt.segmentation, 1.0)?;
        dev_sum += report.mean_ms * (2 * report.matched) as f64;
        dev_count += 2 * report.matched;
        matched += report.matched;
        unmatched_pred += report.unmatched_pred;
        unmatched_ref += report.unmatched_ref;

        let stats = peakiness_stats(&em);
        blank_frac += stats.blank_frame_fraction;
        run_len += stats.mean_nonblank_run_length;
        max_prob += stats.mean_max_prob;
    }

    let n = ds.utterances.len() as f64;
    Ok(EvalReport {
        per: unit_cost / ref_len as f64,
        wper: weighted_cost / ref_len as f64,
        bl_frames: if dev_count == 0 {
            0.0
        } else {
            dev_sum / dev_count as f64
        },
        bl_matched: matched,
        bl_unmatched_pred: unmatched_pred,
        bl_unmatched_ref: unmatched_ref,
        peakiness: PeakinessStats {
            blank_frame_fraction: blank_frac / n,
            mean_nonblank_run_length: run_len / n,
            mean_max_prob: max_prob / n,
        },
    })
}

/// Anchored-frame agreement: fraction of mask-anchored frames whose emission
/// argmax equals the anchored phoneme.
pub fn anchor_agreement(model: &Model, ds: &Dataset, masks: &[VocabMask]) -> Result<f64> {
    let mut anchored = 0usize;
    let mut agree = 0usize;
    for (utt, mask) in ds.utterances.iter().zip(masks) {
        let em = model.emissions(&utt.features, utt.num_frames)?;
        for t in 0..utt.num_frames {
            if let Some(c) = mask.anchor(t) {
                anchored += 1;
                if em.argmax(t) == c {
                    agree += 1;
                }
            }
        }
    }
    Ok(if anchored == 0 {
        1.0
    } else {
        agree as f64 / anchored as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Inventory, SimilarityTable) {
        let inv = Inventory::default_inventory();
        let sim = inv.similarity_table();
        (inv, sim)
    }

    fn small_cfg(dys: f64, seed: u64) -> GenConfig {
        GenConfig {
            num_utts: 20,
            dysfluency_rate: dys,
            seed,
            ..GenConfig::default()
        }
    }

    #[test]
    fn clean_generation_collapses_to_target() {
        let (inv, sim) = setup();
        let ds = gen_synthetic(&small_cfg(0.0, 1), &inv, &sim).unwrap();
        for utt in &ds.utterances {
            assert_eq!(utt.segmentation.phoneme_sequence(), utt.target);
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let (inv, sim) = setup();
        let a = gen_synthetic(&small_cfg(0.5, 7), &inv, &sim).unwrap();
        let b = gen_synthetic(&small_cfg(0.5, 7), &inv, &sim).unwrap();
        assert_eq!(a.utterances.len(), b.utterances.len());
        for (x, y) in a.utterances.iter().zip(&b.utterances) {
            assert_eq!(x.features, y.features);
            assert_eq!(x.target, y.target);
            assert_eq!(x.segmentation, y.segmentation);
            assert_eq!(x.cost, y.cost);
        }
    }

    #[test]
    fn full_dysfluency_rate_inserts_into_every_utterance() {
        let (inv, sim) = setup();
        let ds = gen_synthetic(&small_cfg(1.0, 3), &inv, &sim).unwrap();
        for utt in &ds.utterances {
            let spoken = utt.segmentation.phoneme_sequence();
            assert_eq!(spoken.len(), utt.target.len() + 1);
            // Removing the inserted span recovers the target.
            let ops = align_unit(&utt.target, &spoken);
            assert_eq!(ops.insertions, 1);
            assert_eq!(ops.cost, 1.0);
        }
    }

    #[test]
    fn zero_learning_rate_keeps_weights_and_loss_constant() {
        let (inv, sim) = setup();
        let ds = gen_synthetic(&small_cfg(0.0, 2), &inv, &sim).unwrap();
        let cfg = TrainConfig {
            objective: Objective::VanillaCtc,
            epochs: 3,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let (model, log) = train(&ds, &cfg, &inv, &sim).unwrap();
        assert!(model.weights.iter().all(|w| *w == 0.0));
        assert_eq!(log.epoch_mean_loss.len(), 3);
        assert_eq!(log.epoch_mean_loss[0], log.epoch_mean_loss[1]);
        assert_eq!(log.epoch_mean_loss[1], log.epoch_mean_loss[2]);
    }

    #[test]
    fn lcs_with_lambda_zero_and_impossible_threshold_matches_vanilla() {
        let (inv, sim) = setup();
        // Cost noise below the smallest off-span target cost keeps every
        // non-own-span cell strictly positive, so a tiny tol rejects them
        // all; a negative floor rejects the zero-cost self matches. Every
        // mask is then empty and lambda = 0 reduces the objective to
        // vanilla CTC.
        let gen = GenConfig {
            num_utts: 20,
            dysfluency_rate: 0.3,
            cost_noise: 0.1,
            seed: 4,
            ..GenConfig::default()
        };
        let ds = gen_synthetic(&gen, &inv, &sim).unwrap();
        let lcs_cfg = TrainConfig {
            objective: Objective::LcsCtc,
            epochs: 4,
            lambda: 0.0,
            tol: 1e-9,
            cost_floor: -1.0,
            ..TrainConfig::default()
        };
        let masks = dataset_masks(&ds, &inv, &sim, lcs_cfg.tol, lcs_cfg.cost_floor).unwrap();
        assert!(masks.iter().all(|m| m.is_empty()));
        let vanilla_cfg = TrainConfig {
            objective: Objective::VanillaCtc,
            epochs: 4,
            ..TrainConfig::default()
        };
        let (m1, l1) = train(&ds, &lcs_cfg, &inv, &sim).unwrap();
        let (m2, l2) = train(&ds, &vanilla_cfg, &inv, &sim).unwrap();
        for (a, b) in l1.epoch_mean_loss.iter().zip(&l2.epoch_mean_loss) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in m1.weights.iter().zip(&m2.weights) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn training_reduces_loss_for_all_objectives() {
        let (inv, sim) = setup();
        let cfg = GenConfig {
            num_utts: 30,
            ..GenConfig::default()
        };
        let ds = gen_synthetic(&cfg, &inv, &sim).unwrap();
        for objective in [Objective::VanillaCtc, Objective::LcsCtc, Objective::CeCtc] {
            let tc = TrainConfig {
                objective,
                epochs: 10,
                ..TrainConfig::default()
            };
            let (_, log) = train(&ds, &tc, &inv, &sim).unwrap();
            let first = log.epoch_mean_loss[0];
            let last = *log.epoch_mean_loss.last().unwrap();
            assert!(
                last < first,
                "{objective:?}: loss went {first} -> {last}"
            );
        }
    }

    #[test]
    fn anchored_frames_mostly_agree_after_lcs_training() {
        let (inv, sim) = setup();
        let gen = GenConfig {
            num_utts: 40,
            dysfluency_rate: 0.0,
            feature_noise: 0.15,
            cost_noise: 0.05,
            seed: 11,
            ..GenConfig::default()
        };
        let ds = gen_synthetic(&gen, &inv, &sim).unwrap();
        let tc = TrainConfig {
            objective: Objective::LcsCtc,
            epochs: 30,
            ..TrainConfig::default()
        };
        let (model, _) = train(&ds, &tc, &inv, &sim).unwrap();
        let masks = dataset_masks(&ds, &inv, &sim, tc.tol, tc.cost_floor).unwrap();
        let agreement = anchor_agreement(&model, &ds, &masks).unwrap();
        assert!(agreement >= 0.9, "anchored agreement {agreement}");
    }

    #[test]
    fn refresh_masks_mode_trains() {
        let (inv, sim) = setup();
        let ds = gen_synthetic(&small_cfg(0.2, 6), &inv, &sim).unwrap();
        let tc = TrainConfig {
            objective: Objective::LcsCtc,
            epochs: 3,
            refresh_masks: true,
            ..TrainConfig::default()
        };
        let (_, log) = train(&ds, &tc, &inv, &sim).unwrap();
        assert_eq!(log.epoch_mean_loss.len(), 3);
        assert!(log.epoch_mean_loss.iter().all(|l| l.is_finite()));
    }
}
