//! `evaluate`: RMSE of a rating checkpoint on a bundle split, and/or
//! corpus BLEU of generated captions against references.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::Serialize;
use tipmf_core::checkpoint::{load_pmf, load_tipmf};
use tipmf_core::corpus::{load_document_texts, tokenize, RatingsTable};
use tipmf_core::error::{Error, Result};
use tipmf_core::eval::{bleu_single, rmse, sentence_bleu_smoothed, EvalReport};
use tipmf_core::pmf::{predict_rating, LatentFactors};
use tipmf_core::trainer::{predict_all, TipmfModel};

use crate::bundle::{load_bundle, load_split};
use crate::config::RunConfig;
use crate::util::append_jsonl;

pub struct EvaluateArgs {
    pub checkpoint: Option<PathBuf>,
    pub split: String,
    pub clamp: bool,
    pub candidates: Option<PathBuf>,
    pub references: Option<PathBuf>,
    pub sentence_bleu: bool,
}

/// Either trained rating model behind one prediction surface.
pub enum RatingModel {
    Pmf(LatentFactors),
    Tipmf(Box<TipmfModel>),
}

impl RatingModel {
    pub fn predict(&self, user: usize, item: usize) -> Result<f64> {
        match self {
            RatingModel::Pmf(factors) => predict_rating(factors, user, item, None),
            RatingModel::Tipmf(model) => Ok(predict_all(model, &[(user, item)])?[0]),
        }
    }
}

fn checkpoint_kind(path: &Path) -> Result<String> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let value: serde_json::Value = serde_json::from_str(line.trim_end())?;
    Ok(value
        .get("kind")
        .and_then(|k| k.as_str())
        .unwrap_or("?")
        .to_string())
}

pub fn load_rating_model(path: &Path) -> Result<RatingModel> {
    match checkpoint_kind(path)?.as_str() {
        "pmf" => Ok(RatingModel::Pmf(load_pmf(path)?.factors)),
        "tipmf" => Ok(RatingModel::Tipmf(Box::new(load_tipmf(path)?.model))),
        other => Err(Error::Checkpoint(format!(
            "{}: cannot evaluate a {} checkpoint as a rating model",
            path.display(),
            other
        ))),
    }
}

/// RMSE over a split, excluding users with no training ratings (no
/// latent vector exists for them). Returns (rmse, used, excluded).
pub fn rating_rmse(
    model: &RatingModel,
    split: &RatingsTable,
    train: &RatingsTable,
    clamp: Option<(f64, f64)>,
) -> Result<(f64, usize, usize)> {
    if split.triplets().is_empty() {
        return Err(Error::EmptyInput("evaluation split has no ratings".into()));
    }
    let mut warm = vec![false; train.n_users()];
    for t in train.triplets() {
        warm[t.user] = true;
    }
    let mut predictions = Vec::new();
    let mut truths = Vec::new();
    let mut excluded = 0usize;
    for t in split.triplets() {
        if !warm[t.user] {
            excluded += 1;
            continue;
        }
        let mut p = model.predict(t.user, t.item)?;
        if let Some((lo, hi)) = clamp {
            p = p.clamp(lo, hi);
        }
        predictions.push(p);
        truths.push(t.value);
    }
    let value = rmse(&predictions, &truths)?;
    Ok((value, predictions.len(), excluded))
}

fn load_caption_file(path: &Path) -> Result<Vec<(String, Vec<String>)>> {
    Ok(load_document_texts(path)?
        .into_iter()
        .map(|(id, text)| (id, tokenize(&text)))
        .collect())
}

#[derive(Serialize)]
struct MetricsLine<'a> {
    command: &'a str,
    checkpoint: Option<String>,
    split: Option<&'a str>,
    excluded_cold_users: usize,
    report: &'a EvalReport,
}

pub fn run(config: &RunConfig, out: &Path, args: &EvaluateArgs) -> Result<()> {
    let mut report = EvalReport {
        rmse: None,
        bleu: None,
        n_test: 0,
    };
    let mut excluded = 0usize;

    if let Some(ckpt) = &args.checkpoint {
        let bundle = load_bundle(&out.join("bundle"))?;
        let split = load_split(&bundle, &args.split)?;
        let train = load_split(&bundle, "train")?;
        let model = load_rating_model(ckpt)?;
        let clamp = if args.clamp || config.eval.clamp {
            Some((config.eval.clamp_min, config.eval.clamp_max))
        } else {
            None
        };
        let (value, used, cold) = rating_rmse(&model, &split, &train, clamp)?;
        report.rmse = Some(value);
        report.n_test = used;
        excluded = cold;
        if cold > 0 {
            log::info!("excluded {} ratings from cold users", cold);
        }
    }

    match (&args.candidates, &args.references) {
        (Some(cand_path), Some(ref_path)) => {
            let candidates = load_caption_file(cand_path)?;
            let references: HashMap<String, Vec<String>> =
                load_caption_file(ref_path)?.into_iter().collect();
            let mut cands = Vec::new();
            let mut refs = Vec::new();
            for (id, tokens) in &candidates {
                let reference = references.get(id).ok_or_else(|| {
                    Error::Config(format!("no reference caption for item {:?}", id))
                })?;
                if args.sentence_bleu {
                    let s = sentence_bleu_smoothed(tokens, reference);
                    println!(
                        "{}",
                        serde_json::json!({ "item": id, "sentence_bleu": s })
                    );
                }
                cands.push(tokens.clone());
                refs.push(reference.clone());
            }
            report.bleu = Some(bleu_single(&cands, &refs)?);
            if report.rmse.is_none() {
                report.n_test = cands.len();
            }
        }
        (None, None) => {}
        _ => {
            return Err(Error::Config(
                "--candidates and --references must be given together".into(),
            ))
        }
    }

    if report.rmse.is_none() && report.bleu.is_none() {
        return Err(Error::Config(
            "nothing to evaluate: pass --checkpoint and/or --candidates/--references".into(),
        ));
    }

    println!("{}", serde_json::to_string(&report)?);
    append_jsonl(
        &out.join("metrics.jsonl"),
        &MetricsLine {
            command: "evaluate",
            checkpoint: args
                .checkpoint
                .as_ref()
                .map(|p| p.display().to_string()),
            split: args.checkpoint.as_ref().map(|_| args.split.as_str()),
            excluded_cold_users: excluded,
            report: &report,
        },
    )?;
    Ok(())
}
