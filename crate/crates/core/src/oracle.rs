//! Exhaustive reference implementations used by the test suites.
//!
//! Everything here enumerates the full search space directly and shares no
//! recursion with the production code, so it can serve as an independent
//! check of the dynamic programs. Sizes are guarded to desk scale.

use crate::ctc::EmissionMatrix;
use crate::error::{Error, Result};
use crate::phoneme::PhonemeId;

/// Collapse a frame-level path: merge adjacent repeats, then drop blanks.
pub fn collapse_path(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = usize::MAX;
    for &v in path {
        if v != prev && v != blank {
            out.push(v);
        }
        prev = v;
    }
    out
}

fn guard(em: &EmissionMatrix) -> Result<()> {
    let paths = (em.vocab_size() as f64).powi(em.num_frames() as i32);
    if paths > 2e7 {
        return Err(Error::SizeGuard(format!(
            "{} x {} emission grid has {paths:.0} paths",
            em.vocab_size(),
            em.num_frames()
        )));
    }
    Ok(())
}

/// Sum of path probabilities over every path collapsing to `target`,
/// as a negative log. Enumerates all `V^T` paths.
pub fn enumerate_ctc_loss(em: &EmissionMatrix, target: &[PhonemeId]) -> Result<f64> {
    guard(em)?;
    let target: Vec<usize> = target.iter().map(|p| p.0).collect();
    let mut total = 0.0f64;
    let mut path = vec![0usize; em.num_frames()];
    enumerate(em, 0, 1.0, &mut path, &mut |path, prob| {
        if collapse_path(path, em.blank()) == target {
            total += prob;
        }
    });
    if total <= 0.0 {
        return Err(Error::InvalidMatrix("no path mass on target".into()));
    }
    Ok(-total.ln())
}

/// The most probable single path collapsing to `target`, with its
/// log-probability. Ties keep the first path in lexicographic frame-major
/// order, so callers comparing paths should only do so on unique maxima.
pub fn enumerate_best_path(
    em: &EmissionMatrix,
    target: &[PhonemeId],
) -> Result<(Vec<usize>, f64)> {
    guard(em)?;
    let target: Vec<usize> = target.iter().map(|p| p.0).collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut path = vec![0usize; em.num_frames()];
    enumerate(em, 0, 1.0, &mut path, &mut |path, prob| {
        if collapse_path(path, em.blank()) == target
            && best.as_ref().is_none_or(|(_, p)| prob > *p)
        {
            best = Some((path.to_vec(), prob));
        }
    });
    let (path, prob) = best.ok_or_else(|| Error::InvalidMatrix("no path mass on target".into()))?;
    Ok((path, prob.ln()))
}

/// Log-probability of the second-best path collapsing to `target` (ties
/// with the best count), or `None` when only one path exists.
pub fn enumerate_runner_up(em: &EmissionMatrix, target: &[PhonemeId]) -> Result<Option<f64>> {
    guard(em)?;
    let target: Vec<usize> = target.iter().map(|p| p.0).collect();
    let mut best = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    let mut path = vec![0usize; em.num_frames()];
    enumerate(em, 0, 1.0, &mut path, &mut |path, prob| {
        if collapse_path(path, em.blank()) == target {
            if prob > best {
                second = best;
                best = prob;
            } else if prob > second {
                second = prob;
            }
        }
    });
    Ok(if second == f64::NEG_INFINITY {
        None
    } else {
        Some(second.ln())
    })
}

/// Total probability mass of paths that collapse to `target` but disagree
/// with `anchors` (frame, class) at one or more anchored frames.
pub fn enumerate_contradicting_mass(
    em: &EmissionMatrix,
    target: &[PhonemeId],
    anchors: &[(usize, usize)],
) -> Result<f64> {
    guard(em)?;
    let target: Vec<usize> = target.iter().map(|p| p.0).collect();
    let mut mass = 0.0f64;
    let mut path = vec![0usize; em.num_frames()];
    enumerate(em, 0, 1.0, &mut path, &mut |path, prob| {
        if collapse_path(path, em.blank()) == target
            && anchors.iter().any(|&(t, c)| path[t] != c)
        {
            mass += prob;
        }
    });
    Ok(mass)
}

fn enumerate(
    em: &EmissionMatrix,
    frame: usize,
    prob: f64,
    path: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize], f64),
) {
    if frame == em.num_frames() {
        visit(path, prob);
        return;
    }
    for v in 0..em.vocab_size() {
        path[frame] = v;
        enumerate(em, frame + 1, prob * em.prob(v, frame), path, visit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collapse_merges_repeats_then_drops_blanks() {
        // blank = 9
        assert_eq!(collapse_path(&[1, 1, 9, 1], 9), vec![1, 1]);
        assert_eq!(collapse_path(&[9, 1, 1, 2], 9), vec![1, 2]);
        assert_eq!(collapse_path(&[9, 9, 9], 9), Vec::<usize>::new());
    }

    #[test]
    fn size_guard_triggers() {
        let probs = vec![1.0 / 6.0; 6 * 12];
        let em = EmissionMatrix::from_probs(6, 12, probs).unwrap();
        assert!(matches!(
            enumerate_ctc_loss(&em, &[PhonemeId(0)]),
            Err(Error::SizeGuard(_))
        ));
    }
}
