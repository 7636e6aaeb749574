//! The three training subcommands. Each runs `repeats` independent
//! seeds, writes one checkpoint per seed (atomically), and a summary
//! with per-seed and mean metrics. Phase progress goes to stdout as one
//! JSON line per phase.

use std::path::{Path, PathBuf};

use serde::Serialize;
use tipmf_core::checkpoint::{save_nic, save_pmf, save_tipmf};
use tipmf_core::corpus::{
    load_document_texts, load_image_features, tokenize, Vocabulary, BOS, EOS,
};
use tipmf_core::error::{Error, Result};
use tipmf_core::nic::{train_nic, CaptionExample, NicDims, MAX_DECODE_TOKENS};
use tipmf_core::pmf::train_pmf;
use tipmf_core::trainer::{train_with_observer, TipmfModel, TrainTrace};

use crate::bundle::{load_bundle, load_split};
use crate::commands::evaluate::{rating_rmse, RatingModel};
use crate::config::RunConfig;
use crate::util::write_json;

#[derive(Serialize)]
struct TrainSummary {
    model: &'static str,
    base_seed: u64,
    seeds: Vec<u64>,
    checkpoints: Vec<String>,
    /// Per-seed test RMSE (rating models) or final mean token loss (nic).
    metric: Vec<f64>,
    mean_metric: f64,
}

fn finish_summary(
    path: &Path,
    model: &'static str,
    base_seed: u64,
    seeds: Vec<u64>,
    checkpoints: Vec<PathBuf>,
    metric: Vec<f64>,
) -> Result<()> {
    let mean = metric.iter().sum::<f64>() / metric.len() as f64;
    let summary = TrainSummary {
        model,
        base_seed,
        seeds,
        // file names only, so summaries stay relocatable and reruns in
        // different directories stay byte-identical
        checkpoints: checkpoints
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().to_string())
            .collect(),
        metric,
        mean_metric: mean,
    };
    write_json(path, &summary)?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

pub fn run_pmf(config: &RunConfig, out: &Path, seed_override: Option<u64>) -> Result<()> {
    let bundle = load_bundle(&out.join("bundle"))?;
    let train_split = load_split(&bundle, "train")?;
    let test_split = load_split(&bundle, "test")?;
    let base_seed = seed_override.unwrap_or(config.seed);
    let dir = out.join("checkpoints");

    let mut seeds = Vec::new();
    let mut paths = Vec::new();
    let mut metric = Vec::new();
    for repeat in 0..config.repeats {
        let seed = base_seed + repeat as u64;
        let (factors, trace) = train_pmf(&train_split, &config.pmf, seed)?;
        for (sweep, objective) in trace.iter().enumerate() {
            println!(
                "{}",
                serde_json::json!({ "seed": seed, "iter": sweep, "phase": "sweep", "objective": objective })
            );
        }
        let path = dir.join(format!("pmf-seed{}.ckpt", seed));
        std::fs::create_dir_all(&dir)?;
        save_pmf(&path, &factors, &config.pmf, seed)?;
        let (value, _, _) = rating_rmse(
            &RatingModel::Pmf(factors),
            &test_split,
            &train_split,
            None,
        )?;
        seeds.push(seed);
        paths.push(path);
        metric.push(value);
    }
    finish_summary(
        &dir.join("pmf-summary.json"),
        "pmf",
        base_seed,
        seeds,
        paths,
        metric,
    )
}

pub fn run_tipmf(config: &RunConfig, out: &Path, seed_override: Option<u64>) -> Result<()> {
    let bundle = load_bundle(&out.join("bundle"))?;
    let train_split = load_split(&bundle, "train")?;
    let test_split = load_split(&bundle, "test")?;
    let base_seed = seed_override.unwrap_or(config.seed);
    let dir = out.join("checkpoints");
    std::fs::create_dir_all(&dir)?;

    let mut seeds = Vec::new();
    let mut paths = Vec::new();
    let mut metric = Vec::new();
    for repeat in 0..config.repeats {
        let seed = base_seed + repeat as u64;
        let tipmf_config = config
            .tipmf
            .to_config(config.pmf, bundle.vocab.len(), seed);
        let mut trace = TrainTrace::default();
        let model: TipmfModel = train_with_observer(
            &train_split,
            &bundle.docs,
            &tipmf_config,
            &mut |record| {
                println!(
                    "{}",
                    serde_json::to_string(record).expect("phase records serialize")
                );
            },
            &mut trace,
        )?;
        let path = dir.join(format!("tipmf-seed{}.ckpt", seed));
        save_tipmf(&path, &model, &tipmf_config)?;
        let (value, _, _) = rating_rmse(
            &RatingModel::Tipmf(Box::new(model)),
            &test_split,
            &train_split,
            None,
        )?;
        seeds.push(seed);
        paths.push(path);
        metric.push(value);
    }
    finish_summary(
        &dir.join("tipmf-summary.json"),
        "tipmf",
        base_seed,
        seeds,
        paths,
        metric,
    )
}

pub fn run_nic(config: &RunConfig, out: &Path, seed_override: Option<u64>) -> Result<()> {
    let captions_path = config.data.nic_captions.as_ref().ok_or_else(|| {
        Error::Config("train-nic requires data.nic_captions in the config".into())
    })?;
    let features_path = config.data.image_features.as_ref().ok_or_else(|| {
        Error::Config("train-nic requires data.image_features in the config".into())
    })?;
    let features = load_image_features(features_path)?;
    let raw = load_document_texts(captions_path)?;
    if raw.is_empty() {
        return Err(Error::EmptyInput(captions_path.display().to_string()));
    }
    let token_docs: Vec<Vec<String>> = raw.iter().map(|(_, t)| tokenize(t)).collect();
    let vocab = Vocabulary::build(&token_docs, config.nic.min_count, config.nic.max_vocab);

    let mut dataset = Vec::with_capacity(raw.len());
    for ((image_id, _), tokens) in raw.iter().zip(&token_docs) {
        let feature = features.feature(image_id).ok_or_else(|| {
            Error::Config(format!("no feature vector for image {:?}", image_id))
        })?;
        let mut ids = vocab.encode(tokens);
        ids.truncate(MAX_DECODE_TOKENS);
        let mut sequence = vec![BOS];
        sequence.extend(ids);
        sequence.push(EOS);
        dataset.push(CaptionExample::new(feature.clone(), sequence)?);
    }

    let dims = NicDims {
        vocab_size: vocab.len(),
        hidden_dim: config.nic.hidden_dim,
        embed_dim: config.nic.embed_dim,
        feature_dim: features.dim(),
    };
    let base_seed = seed_override.unwrap_or(config.seed);
    let dir = out.join("checkpoints");
    std::fs::create_dir_all(&dir)?;

    let mut seeds = Vec::new();
    let mut paths = Vec::new();
    let mut metric = Vec::new();
    for repeat in 0..config.repeats {
        let seed = base_seed + repeat as u64;
        let (params, trace) = train_nic(&dataset, dims, &config.nic.settings, seed)?;
        for (epoch, loss) in trace.iter().enumerate() {
            println!(
                "{}",
                serde_json::json!({ "seed": seed, "iter": epoch, "phase": "epoch", "objective": loss })
            );
        }
        let path = dir.join(format!("nic-seed{}.ckpt", seed));
        save_nic(&path, &params, &config.nic.settings, seed, vocab.tokens())?;
        seeds.push(seed);
        paths.push(path);
        metric.push(*trace.last().expect("at least one epoch"));
    }
    finish_summary(
        &dir.join("nic-summary.json"),
        "nic",
        base_seed,
        seeds,
        paths,
        metric,
    )
}
