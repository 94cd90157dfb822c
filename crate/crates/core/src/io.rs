//! File formats: matrix JSON (cost / emission / mask), segmentation JSON,
//! JSONL evaluation records, and the dataset/model files of the toy trainer.
//!
//! Matrices share one envelope:
//! `{"kind": ..., "row_labels": [...], "num_frames": T, "data": [[...], ...]}`
//! with row-major values. Cost and emission data are binary64 written as
//! shortest round-trip decimals, so write-then-read is bit-exact; mask data
//! is integer 0/1. Writes go through a temporary file in the target
//! directory and a rename.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::align::{AlignmentMask, ValidMatchSet, VocabMask};
use crate::cost::{CostMatrix, Segmentation, Span};
use crate::ctc::EmissionMatrix;
use crate::error::{Error, Result};
use crate::phoneme::{Inventory, PhonemeId};
use crate::toy::{Dataset, GenConfig, Model, SyntheticUtterance, TrainConfig, TrainLog};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Serialize to pretty JSON and write atomically (temp file + rename).
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = match dir {
        Some(d) => d.join(format!(
            ".{}.tmp",
            path.file_name().map_or_else(|| "out".into(), |n| n.to_string_lossy())
        )),
        None => Path::new(&format!(
            ".{}.tmp",
            path.file_name().map_or_else(|| "out".into(), |n| n.to_string_lossy())
        ))
        .to_path_buf(),
    };
    std::fs::write(&tmp, text).map_err(io_err)?;
    std::fs::rename(&tmp, path).map_err(io_err)
}

/// Envelope for cost and emission matrices (real-valued data).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixFile {
    pub kind: String,
    pub row_labels: Vec<String>,
    pub num_frames: usize,
    pub data: Vec<Vec<f64>>,
}

/// Envelope for binary masks (integer 0/1 data).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskFile {
    pub kind: String,
    pub row_labels: Vec<String>,
    pub num_frames: usize,
    pub data: Vec<Vec<u8>>,
}

fn check_dims<T>(rows: &[Vec<T>], row_labels: &[String], num_frames: usize) -> Result<()> {
    if rows.len() != row_labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} row labels but {} data rows",
            row_labels.len(),
            rows.len()
        )));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != num_frames {
            return Err(Error::ShapeMismatch(format!(
                "row {i} has {} values, declared num_frames is {num_frames}",
                row.len()
            )));
        }
    }
    Ok(())
}

pub fn cost_to_file(c: &CostMatrix, inv: &Inventory) -> MatrixFile {
    MatrixFile {
        kind: "cost".into(),
        row_labels: inv.render_sequence(c.labels()),
        num_frames: c.num_frames(),
        data: (0..c.num_labels()).map(|i| c.row(i).to_vec()).collect(),
    }
}

pub fn cost_from_file(file: &MatrixFile, inv: &Inventory) -> Result<CostMatrix> {
    if file.kind != "cost" {
        return Err(Error::InvalidMatrix(format!(
            "expected kind 'cost', got '{}'",
            file.kind
        )));
    }
    check_dims(&file.data, &file.row_labels, file.num_frames)?;
    let labels: Vec<PhonemeId> = file
        .row_labels
        .iter()
        .map(|s| inv.id(s))
        .collect::<Result<_>>()?;
    let values: Vec<f64> = file.data.iter().flatten().copied().collect();
    CostMatrix::new(labels, file.num_frames, values)
}

pub fn emission_to_file(em: &EmissionMatrix, inv: &Inventory) -> Result<MatrixFile> {
    if em.vocab_size() != inv.vocab_size() {
        return Err(Error::ShapeMismatch(format!(
            "emissions cover {} entries but the inventory has {}",
            em.vocab_size(),
            inv.vocab_size()
        )));
    }
    let mut data = Vec::with_capacity(em.vocab_size());
    for v in 0..em.vocab_size() {
        data.push((0..em.num_frames()).map(|t| em.prob(v, t)).collect());
    }
    Ok(MatrixFile {
        kind: "emission".into(),
        row_labels: (0..em.vocab_size())
            .map(|v| inv.symbol(PhonemeId(v)).to_string())
            .collect(),
        num_frames: em.num_frames(),
        data,
    })
}

/// Rows may appear in any order but must cover the whole vocabulary exactly
/// once (blank included).
pub fn emission_from_file(file: &MatrixFile, inv: &Inventory) -> Result<EmissionMatrix> {
    if file.kind != "emission" {
        return Err(Error::InvalidMatrix(format!(
            "expected kind 'emission', got '{}'",
            file.kind
        )));
    }
    check_dims(&file.data, &file.row_labels, file.num_frames)?;
    let v_len = inv.vocab_size();
    if file.row_labels.len() != v_len {
        return Err(Error::ShapeMismatch(format!(
            "emission file has {} rows, vocabulary needs {v_len}",
            file.row_labels.len()
        )));
    }
    let t_len = file.num_frames;
    let mut probs = vec![f64::NAN; v_len * t_len];
    let mut seen = vec![false; v_len];
    for (label, row) in file.row_labels.iter().zip(&file.data) {
        let id = inv.id(label)?;
        if seen[id.0] {
            return Err(Error::InvalidMatrix(format!("duplicate emission row '{label}'")));
        }
        seen[id.0] = true;
        probs[id.0 * t_len..(id.0 + 1) * t_len].copy_from_slice(row);
    }
    EmissionMatrix::from_probs(v_len, t_len, probs)
}

pub fn label_mask_to_file(mask: &AlignmentMask, inv: &Inventory) -> MaskFile {
    MaskFile {
        kind: "mask".into(),
        row_labels: inv.render_sequence(mask.labels()),
        num_frames: mask.num_frames(),
        data: (0..mask.num_labels())
            .map(|i| {
                (0..mask.num_frames())
                    .map(|j| u8::from(mask.get(i, j)))
                    .collect()
            })
            .collect(),
    }
}

pub fn vocab_mask_to_file(mask: &VocabMask, inv: &Inventory) -> Result<MaskFile> {
    if mask.vocab_size() != inv.vocab_size() {
        return Err(Error::ShapeMismatch(format!(
            "mask covers {} rows but the vocabulary has {}",
            mask.vocab_size(),
            inv.vocab_size()
        )));
    }
    Ok(MaskFile {
        kind: "mask".into(),
        row_labels: (0..mask.vocab_size())
            .map(|v| inv.symbol(PhonemeId(v)).to_string())
            .collect(),
        num_frames: mask.num_frames(),
        data: (0..mask.vocab_size())
            .map(|v| {
                (0..mask.num_frames())
                    .map(|j| u8::from(mask.get(v, j)))
                    .collect()
            })
            .collect(),
    })
}

fn mask_bits(file: &MaskFile) -> Result<Vec<(usize, usize)>> {
    if file.kind != "mask" {
        return Err(Error::InvalidMatrix(format!(
            "expected kind 'mask', got '{}'",
            file.kind
        )));
    }
    check_dims(&file.data, &file.row_labels, file.num_frames)?;
    let mut pairs = Vec::new();
    for (i, row) in file.data.iter().enumerate() {
        for (j, &bit) in row.iter().enumerate() {
            match bit {
                0 => {}
                1 => pairs.push((i, j)),
                other => {
                    return Err(Error::InvalidMatrix(format!(
                        "mask entry ({i}, {j}) is {other}, expected 0 or 1"
                    )))
                }
            }
        }
    }
    Ok(pairs)
}

/// A mask file interpreted against the label sequence it was written with.
pub fn label_mask_from_file(file: &MaskFile, inv: &Inventory) -> Result<AlignmentMask> {
    let pairs = mask_bits(file)?;
    let labels: Vec<PhonemeId> = file
        .row_labels
        .iter()
        .map(|s| inv.id(s))
        .collect::<Result<_>>()?;
    let valid = ValidMatchSet::from_pairs(labels.len(), file.num_frames, pairs.iter().copied())?;
    // Re-run the matching over exactly the stored bits; a stored mask is
    // already monotone with one bit per column, so this reproduces it.
    let mask = crate::align::lcs_align(&valid, &labels)?;
    if mask.set_pairs() != pairs {
        return Err(Error::InvalidMatrix(
            "mask file is not a monotone single-anchor-per-frame mask".into(),
        ));
    }
    Ok(mask)
}

/// A mask file whose rows span the whole vocabulary.
pub fn vocab_mask_from_file(file: &MaskFile, inv: &Inventory) -> Result<VocabMask> {
    let pairs = mask_bits(file)?;
    let ids: Vec<PhonemeId> = file
        .row_labels
        .iter()
        .map(|s| inv.id(s))
        .collect::<Result<_>>()?;
    VocabMask::from_anchors(
        inv.vocab_size(),
        file.num_frames,
        pairs.into_iter().map(|(i, j)| (ids[i].0, j)),
    )
}

/// True when a mask file's rows cover the whole vocabulary (rather than one
/// utterance's label sequence).
pub fn mask_file_is_vocab_space(file: &MaskFile, inv: &Inventory) -> bool {
    file.row_labels.len() == inv.vocab_size()
        && file.row_labels.iter().any(|s| s == crate::phoneme::BLANK_SYMBOL)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpanFile {
    pub phoneme: String,
    pub onset: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentationFile {
    pub spans: Vec<SpanFile>,
}

pub fn segmentation_to_file(seg: &Segmentation, inv: &Inventory) -> SegmentationFile {
    SegmentationFile {
        spans: seg
            .spans()
            .iter()
            .map(|s| SpanFile {
                phoneme: inv.symbol(s.phoneme).to_string(),
                onset: s.onset,
                offset: s.offset,
            })
            .collect(),
    }
}

pub fn segmentation_from_file(file: &SegmentationFile, inv: &Inventory) -> Result<Segmentation> {
    let spans: Vec<Span> = file
        .spans
        .iter()
        .map(|s| {
            Ok(Span {
                phoneme: inv.id(&s.phoneme)?,
                onset: s.onset,
                offset: s.offset,
            })
        })
        .collect::<Result<_>>()?;
    Segmentation::new(spans)
}

/// One line of the evaluation JSONL inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub phonemes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spans: Option<Vec<SpanFile>>,
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|source| Error::Json {
                path: path.to_path_buf(),
                source,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtteranceFile {
    /// Row-major `num_frames x feature_dim`.
    pub features: Vec<Vec<f64>>,
    pub target: Vec<String>,
    pub spans: Vec<SpanFile>,
    pub cost: MatrixFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetFile {
    pub feature_dim: usize,
    pub config: GenConfig,
    pub utterances: Vec<UtteranceFile>,
}

pub fn dataset_to_file(ds: &Dataset, inv: &Inventory) -> DatasetFile {
    DatasetFile {
        feature_dim: ds.feature_dim,
        config: ds.config.clone(),
        utterances: ds
            .utterances
            .iter()
            .map(|u| UtteranceFile {
                features: (0..u.num_frames)
                    .map(|t| u.features[t * ds.feature_dim..(t + 1) * ds.feature_dim].to_vec())
                    .collect(),
                target: inv.render_sequence(&u.target),
                spans: segmentation_to_file(&u.segmentation, inv).spans,
                cost: cost_to_file(&u.cost, inv),
            })
            .collect(),
    }
}

pub fn dataset_from_file(file: &DatasetFile, inv: &Inventory) -> Result<Dataset> {
    let subset: Vec<PhonemeId> = file
        .config
        .vocab_subset
        .iter()
        .map(|s| inv.id(s))
        .collect::<Result<_>>()?;
    let utterances: Vec<SyntheticUtterance> = file
        .utterances
        .iter()
        .map(|u| {
            let num_frames = u.features.len();
            let mut features = Vec::with_capacity(num_frames * file.feature_dim);
            for row in &u.features {
                if row.len() != file.feature_dim {
                    return Err(Error::ShapeMismatch(format!(
                        "feature row has {} values, expected {}",
                        row.len(),
                        file.feature_dim
                    )));
                }
                features.extend_from_slice(row);
            }
            Ok(SyntheticUtterance {
                features,
                num_frames,
                target: u
                    .target
                    .iter()
                    .map(|s| inv.id(s))
                    .collect::<Result<_>>()?,
                segmentation: segmentation_from_file(
                    &SegmentationFile {
                        spans: u.spans.clone(),
                    },
                    inv,
                )?,
                cost: cost_from_file(&u.cost, inv)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Dataset {
        feature_dim: file.feature_dim,
        subset,
        utterances,
        config: file.config.clone(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub model: Model,
    pub objective: String,
    pub train_config: TrainConfig,
    pub log: TrainLog,
}
