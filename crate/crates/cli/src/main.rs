//! `lcsctc`: file-based pipeline tooling around the alignment and loss
//! library. Every subcommand is a thin shell over library operations;
//! identical inputs and seeds produce identical outputs.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use lcs_ctc::align::{expand_mask, find_valid_matches, lcs_align, sweep_tol};
use lcs_ctc::cost::{
    apply_edge_attenuation, build_raw_cost, normalize_time_axis, CostMatrix, EdgeSigma,
    Segmentation,
};
use lcs_ctc::ctc::{greedy_decode, lcs_ctc_loss, viterbi_align};
use lcs_ctc::error::Error;
use lcs_ctc::io;
use lcs_ctc::metrics::{align_unit, align_weighted, boundary_loss, per, wper};
use lcs_ctc::phoneme::{Inventory, PhonemeId};
use lcs_ctc::toy;

#[derive(Parser)]
#[command(
    name = "lcsctc",
    version,
    about = "Similarity-aware LCS frame-phoneme alignment and constrained CTC tooling"
)]
struct Cli {
    /// Phoneme table file overriding the built-in inventory.
    #[arg(long, global = true)]
    table: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct LabelArgs {
    /// Inline space-separated ARPAbet labels ("IH N S ER T").
    #[arg(long)]
    labels: Option<String>,
    /// File containing the labels (same format, whitespace separated).
    #[arg(long, conflicts_with = "labels")]
    labels_file: Option<PathBuf>,
}

impl LabelArgs {
    fn resolve(&self, inv: &Inventory) -> Result<Vec<PhonemeId>, Error> {
        let text = match (&self.labels, &self.labels_file) {
            (Some(inline), _) => inline.clone(),
            (None, Some(path)) => {
                std::fs::read_to_string(path).map_err(|source| Error::Io {
                    path: path.clone(),
                    source,
                })?
            }
            (None, None) => {
                return Err(Error::InvalidParam {
                    name: "labels",
                    msg: "provide --labels or --labels-file".into(),
                })
            }
        };
        let ids = inv.parse_sequence(&text)?;
        if ids.is_empty() {
            return Err(Error::EmptyLabels);
        }
        Ok(ids)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build a target cost matrix from a ground-truth segmentation.
    Target {
        /// Segmentation JSON ({"spans": [{"phoneme", "onset", "offset"}]}).
        #[arg(long)]
        seg: PathBuf,
        #[command(flatten)]
        labels: LabelArgs,
        /// Total frame count (default: the segmentation extent).
        #[arg(long)]
        frames: Option<usize>,
        /// Gaussian edge width in frames: a number, "auto", or "none".
        #[arg(long, default_value = "auto")]
        edge_sigma: String,
        /// Apply the softmax normalization across the time axis.
        #[arg(long)]
        normalize: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Threshold a cost matrix and emit the LCS alignment mask.
    Align {
        /// Cost-matrix JSON.
        #[arg(long)]
        cost: PathBuf,
        #[command(flatten)]
        labels: LabelArgs,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        tol: f64,
        #[arg(long, default_value_t = 0.05, allow_hyphen_values = true)]
        cost_floor: f64,
        /// Write the vocabulary-space mask instead of the label-space one.
        #[arg(long)]
        expand: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the hybrid loss for an emission matrix, mask, and target.
    Loss {
        /// Emission-matrix JSON (full vocabulary, blank last).
        #[arg(long)]
        emissions: PathBuf,
        /// Mask JSON in label or vocabulary space.
        #[arg(long)]
        mask: PathBuf,
        #[command(flatten)]
        labels: LabelArgs,
        #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
        lambda: f64,
        #[arg(long, default_value_t = 1e-8, allow_hyphen_values = true)]
        epsilon: f64,
    },
    /// Check analytic gradients against central finite differences.
    GradCheck {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Greedy decode an emission matrix; with labels, also forced-align.
    Decode {
        #[arg(long)]
        emissions: PathBuf,
        #[command(flatten)]
        labels: LabelArgs,
    },
    /// Score hypothesis phoneme sequences (and spans) against references.
    Eval {
        /// Reference JSONL ({"id", "phonemes", "spans"?} per line).
        #[arg(long, name = "ref")]
        reference: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
        frame_ms: f64,
    },
    /// Generate a synthetic dataset.
    GenSynth {
        #[arg(long, default_value_t = 200)]
        num_utts: usize,
        /// Space-separated phoneme subset the targets are drawn from.
        #[arg(long, default_value = "IH N S ER T AH")]
        vocab: String,
        #[arg(long, default_value_t = 6)]
        mean_span_frames: usize,
        #[arg(long, default_value_t = 0.3, allow_hyphen_values = true)]
        feature_noise: f64,
        #[arg(long, default_value_t = 0.25, allow_hyphen_values = true)]
        cost_noise: f64,
        #[arg(long, default_value_t = 0.3, allow_hyphen_values = true)]
        dysfluency_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the linear toy model on a generated dataset.
    TrainToy {
        #[arg(long)]
        data: PathBuf,
        /// vanilla-ctc, lcs-ctc, or ce-ctc.
        #[arg(long, default_value = "lcs-ctc")]
        objective: String,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
        lr: f64,
        #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
        lambda: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        tol: f64,
        #[arg(long, default_value_t = 0.05, allow_hyphen_values = true)]
        cost_floor: f64,
        #[arg(long, default_value_t = 1e-8, allow_hyphen_values = true)]
        epsilon: f64,
        /// Recompute masks from model emissions each epoch.
        #[arg(long)]
        refresh_masks: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved toy model on a dataset.
    EvalToy {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Sweep the alignment tolerance and report the coverage/precision curve.
    TolSweep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.9, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, default_value_t = 1.3, allow_hyphen_values = true)]
        to: f64,
        #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
        step: f64,
        #[arg(long, default_value_t = 0.05, allow_hyphen_values = true)]
        cost_floor: f64,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump per-frame emission probabilities as CSV.
    EmissionsDump {
        /// Emission-matrix JSON to dump directly.
        #[arg(long, conflicts_with_all = ["model", "data"])]
        emissions: Option<PathBuf>,
        /// Saved model whose emissions to dump (needs --data).
        #[arg(long, requires = "data")]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Utterance index within --data.
        #[arg(long, default_value_t = 0)]
        utt: usize,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Usage errors (bad flag values) exit 1; data and validation errors exit 2.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParam { .. } | Error::EmptyLabels => 1,
        _ => 2,
    }
}

fn load_inventory(table: &Option<PathBuf>) -> Result<Inventory, Error> {
    match table {
        Some(path) => Inventory::from_table_file(path),
        None => Ok(Inventory::default_inventory()),
    }
}

fn parse_edge_sigma(text: &str) -> Result<EdgeSigma, Error> {
    match text.to_ascii_lowercase().as_str() {
        "auto" => Ok(EdgeSigma::Auto),
        "none" => Ok(EdgeSigma::None),
        other => {
            let sigma: f64 = other.parse().map_err(|_| Error::InvalidParam {
                name: "edge_sigma",
                msg: format!("expected a number, 'auto', or 'none', got '{other}'"),
            })?;
            if !(sigma > 0.0) || !sigma.is_finite() {
                return Err(Error::InvalidParam {
                    name: "edge_sigma",
                    msg: format!("must be > 0, got {sigma}"),
                });
            }
            Ok(EdgeSigma::Fixed(sigma))
        }
    }
}

fn write_text_atomic(path: &Path, text: &str) -> Result<(), Error> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file_name = path
        .file_name()
        .map_or_else(|| "out".into(), |n| n.to_string_lossy().into_owned());
    let tmp = match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(dir) => dir.join(format!(".{file_name}.tmp")),
        None => PathBuf::from(format!(".{file_name}.tmp")),
    };
    std::fs::write(&tmp, text).map_err(io_err)?;
    std::fs::rename(&tmp, path).map_err(io_err)
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => write_text_atomic(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let inv = load_inventory(&cli.table)?;
    let sim = inv.similarity_table();

    match cli.command {
        Command::Target {
            seg,
            labels,
            frames,
            edge_sigma,
            normalize,
            out,
        } => {
            let sigma = parse_edge_sigma(&edge_sigma)?;
            let seg_file: io::SegmentationFile = io::read_json(&seg)?;
            let segmentation = io::segmentation_from_file(&seg_file, &inv)?;
            let label_ids = labels.resolve(&inv)?;
            let num_frames = frames.unwrap_or_else(|| segmentation.extent());
            let raw = build_raw_cost(&segmentation, &label_ids, &sim, num_frames)?;
            let mut cost = apply_edge_attenuation(&raw, &segmentation, sigma)?;
            if normalize {
                cost = normalize_time_axis(&cost);
            }
            io::write_json(&out, &io::cost_to_file(&cost, &inv))
        }

        Command::Align {
            cost,
            labels,
            tol,
            cost_floor,
            expand,
            out,
        } => {
            let file: io::MatrixFile = io::read_json(&cost)?;
            let cost = io::cost_from_file(&file, &inv)?;
            if labels.labels.is_some() || labels.labels_file.is_some() {
                let given = labels.resolve(&inv)?;
                if given != cost.labels() {
                    return Err(Error::ShapeMismatch(
                        "--labels disagree with the cost file's row labels".into(),
                    ));
                }
            }
            let valid = find_valid_matches(&cost, &sim, tol, cost_floor)?;
            let mask = lcs_align(&valid, cost.labels())?;
            if expand {
                let vm = expand_mask(&mask, &inv)?;
                io::write_json(&out, &io::vocab_mask_to_file(&vm, &inv)?)
            } else {
                io::write_json(&out, &io::label_mask_to_file(&mask, &inv))
            }
        }

        Command::Loss {
            emissions,
            mask,
            labels,
            lambda,
            epsilon,
        } => {
            let em = io::emission_from_file(&io::read_json(&emissions)?, &inv)?;
            let mask_file: io::MaskFile = io::read_json(&mask)?;
            let vocab_mask = if io::mask_file_is_vocab_space(&mask_file, &inv) {
                io::vocab_mask_from_file(&mask_file, &inv)?
            } else {
                expand_mask(&io::label_mask_from_file(&mask_file, &inv)?, &inv)?
            };
            let target = labels.resolve(&inv)?;
            let (breakdown, _) = lcs_ctc_loss(&em, &vocab_mask, &target, lambda, epsilon)?;
            println!("{}", serde_json::to_string_pretty(&breakdown).expect("serializable"));
            Ok(())
        }

        Command::GradCheck { instances, seed } => {
            if instances == 0 {
                return Err(Error::InvalidParam {
                    name: "instances",
                    msg: "must be >= 1".into(),
                });
            }
            let report = lcs_ctc::gradcheck::run_gradcheck(instances, seed)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            eprintln!("max relative error: {:.3e}", report.max_rel_err());
            Ok(())
        }

        Command::Decode { emissions, labels } => {
            let em = io::emission_from_file(&io::read_json(&emissions)?, &inv)?;
            let greedy = greedy_decode(&em);
            let mut output = serde_json::json!({
                "greedy": inv.render_sequence(&greedy),
            });
            if labels.labels.is_some() || labels.labels_file.is_some() {
                let target = labels.resolve(&inv)?;
                let seg = viterbi_align(&em, &target)?;
                output["viterbi_spans"] =
                    serde_json::to_value(io::segmentation_to_file(&seg, &inv).spans)
                        .expect("serializable");
            }
            println!("{}", serde_json::to_string_pretty(&output).expect("serializable"));
            Ok(())
        }

        Command::Eval {
            reference,
            hyp,
            frame_ms,
        } => {
            let refs: Vec<io::EvalRecord> = io::read_jsonl(&reference)?;
            let hyps: Vec<io::EvalRecord> = io::read_jsonl(&hyp)?;
            let report = eval_corpus(&inv, &sim, &refs, &hyps, frame_ms)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            Ok(())
        }

        Command::GenSynth {
            num_utts,
            vocab,
            mean_span_frames,
            feature_noise,
            cost_noise,
            dysfluency_rate,
            seed,
            out,
        } => {
            let cfg = toy::GenConfig {
                num_utts,
                vocab_subset: vocab.split_whitespace().map(str::to_string).collect(),
                mean_span_frames,
                feature_noise,
                cost_noise,
                dysfluency_rate,
                seed,
            };
            let ds = toy::gen_synthetic(&cfg, &inv, &sim)?;
            io::write_json(&out, &io::dataset_to_file(&ds, &inv))
        }

        Command::TrainToy {
            data,
            objective,
            epochs,
            lr,
            lambda,
            tol,
            cost_floor,
            epsilon,
            refresh_masks,
            out,
        } => {
            let objective: toy::Objective = objective.parse()?;
            let ds = io::dataset_from_file(&io::read_json(&data)?, &inv)?;
            let cfg = toy::TrainConfig {
                objective,
                epochs,
                learning_rate: lr,
                lambda,
                tol,
                cost_floor,
                epsilon,
                refresh_masks,
            };
            let (model, log) = toy::train(&ds, &cfg, &inv, &sim)?;
            io::write_json(
                &out,
                &io::ModelFile {
                    model,
                    objective: format!("{objective:?}"),
                    train_config: cfg,
                    log,
                },
            )
        }

        Command::EvalToy { model, data } => {
            let model_file: io::ModelFile = io::read_json(&model)?;
            let ds = io::dataset_from_file(&io::read_json(&data)?, &inv)?;
            let report = toy::evaluate(&model_file.model, &ds, &sim)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            Ok(())
        }

        Command::TolSweep {
            data,
            from,
            to,
            step,
            cost_floor,
            out,
        } => {
            if !(step > 0.0) || !step.is_finite() {
                return Err(Error::InvalidParam {
                    name: "step",
                    msg: format!("must be > 0, got {step}"),
                });
            }
            if to < from {
                return Err(Error::InvalidParam {
                    name: "to",
                    msg: format!("range is empty: from {from} to {to}"),
                });
            }
            let ds = io::dataset_from_file(&io::read_json(&data)?, &inv)?;
            let items: Vec<(CostMatrix, Segmentation)> = ds
                .utterances
                .iter()
                .map(|u| (u.cost.clone(), u.segmentation.clone()))
                .collect();
            let mut tols = Vec::new();
            let mut tol = from;
            while tol <= to + 1e-12 {
                tols.push(tol);
                tol += step;
            }
            let points = sweep_tol(&items, &sim, &tols, cost_floor)?;
            let mut csv = String::from("tol,constrained_ratio,precision\n");
            for p in &points {
                csv.push_str(&format!(
                    "{},{},{}\n",
                    p.tol, p.constrained_ratio, p.precision
                ));
            }
            emit(&out, &csv)
        }

        Command::EmissionsDump {
            emissions,
            model,
            data,
            utt,
            out,
        } => {
            let em = match (emissions, model, data) {
                (Some(path), _, _) => io::emission_from_file(&io::read_json(&path)?, &inv)?,
                (None, Some(model_path), Some(data_path)) => {
                    let model_file: io::ModelFile = io::read_json(&model_path)?;
                    let ds = io::dataset_from_file(&io::read_json(&data_path)?, &inv)?;
                    let u = ds.utterances.get(utt).ok_or_else(|| Error::InvalidParam {
                        name: "utt",
                        msg: format!(
                            "index {utt} out of range, dataset has {} utterances",
                            ds.utterances.len()
                        ),
                    })?;
                    model_file.model.emissions(&u.features, u.num_frames)?
                }
                _ => {
                    return Err(Error::InvalidParam {
                        name: "emissions",
                        msg: "provide --emissions, or --model with --data".into(),
                    })
                }
            };
            let mut csv = String::from("frame");
            for v in 0..em.vocab_size() {
                csv.push(',');
                csv.push_str(inv.symbol(PhonemeId(v)));
            }
            csv.push('\n');
            for t in 0..em.num_frames() {
                csv.push_str(&t.to_string());
                for v in 0..em.vocab_size() {
                    csv.push_str(&format!(",{}", em.prob(v, t)));
                }
                csv.push('\n');
            }
            emit(&out, &csv)
        }
    }
}

#[derive(serde::Serialize)]
struct UtteranceScore {
    id: String,
    per: f64,
    wper: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    boundary_ms: Option<f64>,
}

#[derive(serde::Serialize)]
struct CorpusReport {
    utterances: Vec<UtteranceScore>,
    corpus_per: f64,
    corpus_wper: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    corpus_boundary_ms: Option<f64>,
    total_reference_phonemes: usize,
    matched_spans: usize,
    unmatched_pred_spans: usize,
    unmatched_ref_spans: usize,
}

fn eval_corpus(
    inv: &Inventory,
    sim: &lcs_ctc::SimilarityTable,
    refs: &[io::EvalRecord],
    hyps: &[io::EvalRecord],
    frame_ms: f64,
) -> Result<CorpusReport, Error> {
    if !(frame_ms > 0.0) || !frame_ms.is_finite() {
        return Err(Error::InvalidParam {
            name: "frame_ms",
            msg: format!("must be > 0, got {frame_ms}"),
        });
    }
    struct Scored {
        score: UtteranceScore,
        unit_cost: f64,
        weighted_cost: f64,
        ref_len: usize,
        deviations: f64,
        deviation_count: usize,
        matched: usize,
        unmatched_pred: usize,
        unmatched_ref: usize,
    }

    let scored: Vec<Scored> = refs
        .par_iter()
        .map(|r| -> Result<Scored, Error> {
            let hyp = hyps
                .iter()
                .find(|h| h.id == r.id)
                .ok_or_else(|| Error::InvalidMatrix(format!("no hypothesis for id '{}'", r.id)))?;
            let ref_ids = parse_symbols(inv, &r.phonemes)?;
            let hyp_ids = parse_symbols(inv, &hyp.phonemes)?;
            let u = per(&ref_ids, &hyp_ids)?;
            let w = wper(&ref_ids, &hyp_ids, sim)?;
            let unit_cost = align_unit(&ref_ids, &hyp_ids).cost;
            let weighted_cost = align_weighted(&ref_ids, &hyp_ids, sim)?.cost;

            let mut score = UtteranceScore {
                id: r.id.clone(),
                per: u,
                wper: w,
                boundary_ms: None,
            };
            let (mut deviations, mut deviation_count) = (0.0, 0);
            let (mut matched, mut unmatched_pred, mut unmatched_ref) = (0, 0, 0);
            if let (Some(ref_spans), Some(hyp_spans)) = (&r.spans, &hyp.spans) {
                let ref_seg = io::segmentation_from_file(
                    &io::SegmentationFile {
                        spans: ref_spans.clone(),
                    },
                    inv,
                )?;
                let hyp_seg = io::segmentation_from_file(
                    &io::SegmentationFile {
                        spans: hyp_spans.clone(),
                    },
                    inv,
                )?;
                let report = boundary_loss(&hyp_seg, &ref_seg, frame_ms)?;
                score.boundary_ms = Some(report.mean_ms);
                deviations = report.mean_ms * (2 * report.matched) as f64;
                deviation_count = 2 * report.matched;
                matched = report.matched;
                unmatched_pred = report.unmatched_pred;
                unmatched_ref = report.unmatched_ref;
            }
            Ok(Scored {
                score,
                unit_cost,
                weighted_cost,
                ref_len: ref_ids.len(),
                deviations,
                deviation_count,
                matched,
                unmatched_pred,
                unmatched_ref,
            })
        })
        .collect::<Result<_, _>>()?;

    let total_ref: usize = scored.iter().map(|s| s.ref_len).sum();
    if total_ref == 0 {
        return Err(Error::EmptyReference);
    }
    let total_unit: f64 = scored.iter().map(|s| s.unit_cost).sum();
    let total_weighted: f64 = scored.iter().map(|s| s.weighted_cost).sum();
    let total_dev: f64 = scored.iter().map(|s| s.deviations).sum();
    let total_dev_count: usize = scored.iter().map(|s| s.deviation_count).sum();

    Ok(CorpusReport {
        corpus_per: total_unit / total_ref as f64,
        corpus_wper: total_weighted / total_ref as f64,
        corpus_boundary_ms: if total_dev_count == 0 {
            None
        } else {
            Some(total_dev / total_dev_count as f64)
        },
        total_reference_phonemes: total_ref,
        matched_spans: scored.iter().map(|s| s.matched).sum(),
        unmatched_pred_spans: scored.iter().map(|s| s.unmatched_pred).sum(),
        unmatched_ref_spans: scored.iter().map(|s| s.unmatched_ref).sum(),
        utterances: scored.into_iter().map(|s| s.score).collect(),
    })
}

fn parse_symbols(inv: &Inventory, symbols: &[String]) -> Result<Vec<PhonemeId>, Error> {
    symbols.iter().map(|s| inv.id(s)).collect()
}
