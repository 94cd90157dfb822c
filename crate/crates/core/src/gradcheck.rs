//! Central finite-difference checking of the analytic loss gradients.
//!
//! Gradients are defined with respect to log-probabilities behind a column
//! softmax, so the check perturbs one logit entry, re-normalizes the column,
//! and re-evaluates the loss. Relative error uses an absolute floor so that
//! near-zero gradient components are compared against the differencing
//! noise floor rather than against themselves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::align::VocabMask;
use crate::ctc::{ce_anchored, ctc_loss, lcs_ctc_loss, EmissionMatrix};
use crate::error::Result;
use crate::phoneme::PhonemeId;

/// Step size on log-probabilities.
pub const FD_STEP: f64 = 1e-5;

const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub instances: usize,
    pub entries_checked: usize,
    pub max_rel_err_ctc: f64,
    pub max_rel_err_ce: f64,
    pub max_rel_err_lcs_ctc: f64,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.max_rel_err_ctc
            .max(self.max_rel_err_ce)
            .max(self.max_rel_err_lcs_ctc)
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compare an analytic gradient against central differences on every logit
/// entry. `eval` must return the loss for the given emissions.
fn check_one(
    logits: &[f64],
    v_len: usize,
    t_len: usize,
    analytic: &[f64],
    mut eval: impl FnMut(&EmissionMatrix) -> Result<f64>,
) -> Result<f64> {
    let mut worst = 0.0f64;
    let mut perturbed = logits.to_vec();
    for idx in 0..logits.len() {
        perturbed[idx] = logits[idx] + FD_STEP;
        let up = eval(&EmissionMatrix::from_logits(v_len, t_len, &perturbed)?)?;
        perturbed[idx] = logits[idx] - FD_STEP;
        let down = eval(&EmissionMatrix::from_logits(v_len, t_len, &perturbed)?)?;
        perturbed[idx] = logits[idx];
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(analytic[idx], numeric));
    }
    Ok(worst)
}

/// Run the finite-difference suite over random small instances of all three
/// loss operations.
pub fn run_gradcheck(num_instances: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let mut report = GradCheckReport {
        instances: num_instances,
        entries_checked: 0,
        max_rel_err_ctc: 0.0,
        max_rel_err_ce: 0.0,
        max_rel_err_lcs_ctc: 0.0,
    };

    for _ in 0..num_instances {
        let v_len = rng.random_range(3..=5);
        let t_len = rng.random_range(2..=6);
        let logits: Vec<f64> = (0..v_len * t_len)
            .map(|_| {
                let x: f64 = normal.sample(&mut rng);
                x
            })
            .collect();
        let em = EmissionMatrix::from_logits(v_len, t_len, &logits)?;

        // Feasible target over the non-blank vocabulary.
        let target: Vec<PhonemeId> = loop {
            let len = rng.random_range(1..=3.min(t_len));
            let y: Vec<PhonemeId> = (0..len)
                .map(|_| PhonemeId(rng.random_range(0..v_len - 1)))
                .collect();
            if crate::ctc::required_frames(&y) <= t_len {
                break y;
            }
        };

        // Random single-anchor-per-frame mask over non-blank rows.
        let mut anchors: Vec<(usize, usize)> = Vec::new();
        for t in 0..t_len {
            if rng.random_bool(0.4) {
                anchors.push((rng.random_range(0..v_len - 1), t));
            }
        }
        let mask = VocabMask::from_anchors(v_len, t_len, anchors)?;
        let lambda: f64 = rng.random_range(0.05..0.95);
        let epsilon = 1e-6;

        let ctc = ctc_loss(&em, &target)?;
        let err = check_one(&logits, v_len, t_len, &ctc.grad, |e| {
            Ok(ctc_loss(e, &target)?.loss)
        })?;
        report.max_rel_err_ctc = report.max_rel_err_ctc.max(err);

        let ce = ce_anchored(&em, &mask)?;
        let err = check_one(&logits, v_len, t_len, &ce.grad, |e| {
            Ok(ce_anchored(e, &mask)?.loss)
        })?;
        report.max_rel_err_ce = report.max_rel_err_ce.max(err);

        let (_, grad) = lcs_ctc_loss(&em, &mask, &target, lambda, epsilon)?;
        let err = check_one(&logits, v_len, t_len, &grad, |e| {
            Ok(lcs_ctc_loss(e, &mask, &target, lambda, epsilon)?.0.total)
        })?;
        report.max_rel_err_lcs_ctc = report.max_rel_err_lcs_ctc.max(err);

        report.entries_checked += 3 * v_len * t_len;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let report = run_gradcheck(25, 42).unwrap();
        assert!(
            report.max_rel_err() < 1e-5,
            "max relative error {:?}",
            report
        );
    }
}
