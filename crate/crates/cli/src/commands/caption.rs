//! `caption`: decode one caption per item from its frame features, in
//! the corpus document TSV format. Items without any usable frame are
//! listed in a sidecar report and emitted with an empty text, which
//! ingestion maps to the `[<unk>]` document.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::Serialize;
use tipmf_core::checkpoint::load_nic;
use tipmf_core::corpus::{load_frame_manifest, load_image_features, Vocabulary};
use tipmf_core::error::{Error, Result};
use tipmf_core::nic::caption_item;
use tipmf_core::numerics::DenseVector;

use crate::config::RunConfig;
use crate::util::{atomic_write, write_json};

pub struct CaptionArgs {
    pub checkpoint: PathBuf,
    pub manifest: Option<PathBuf>,
    pub items: Option<PathBuf>,
}

#[derive(Serialize)]
struct CaptionReport {
    items_captioned: usize,
    items_without_frames: Vec<String>,
}

pub fn run(config: &RunConfig, out: &Path, args: &CaptionArgs) -> Result<()> {
    let checkpoint = load_nic(&args.checkpoint)?;
    let vocab = Vocabulary::from_tokens(checkpoint.vocab.clone());

    let features_path = config.data.image_features.as_ref().ok_or_else(|| {
        Error::Config("caption requires data.image_features in the config".into())
    })?;
    let mut features = load_image_features(features_path)?;
    let manifest_path = args
        .manifest
        .clone()
        .or_else(|| config.data.frame_manifest.clone())
        .ok_or_else(|| {
            Error::Config("caption requires a frame manifest (--manifest or config)".into())
        })?;
    load_frame_manifest(&manifest_path, &mut features)?;

    let by_item = features.frames_by_item();
    let frame_map: HashMap<&str, &Vec<&DenseVector>> =
        by_item.iter().map(|(id, f)| (id.as_str(), f)).collect();

    // The item universe: an explicit id list when given (one id per
    // line, e.g. the bundle's items.tsv), else the manifest's items.
    let universe: Vec<String> = match &args.items {
        Some(path) => BufReader::new(fs::File::open(path)?)
            .lines()
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect(),
        None => by_item.iter().map(|(id, _)| id.clone()).collect(),
    };

    let mut lines = String::new();
    let mut missing = Vec::new();
    let mut captioned = 0usize;
    for item in &universe {
        match frame_map.get(item.as_str()) {
            Some(frames) if !frames.is_empty() => {
                let owned: Vec<DenseVector> = frames.iter().map(|f| (*f).clone()).collect();
                let ids = caption_item(&owned, &checkpoint.params, config.nic.decode)?;
                let text = vocab.decode(&ids).join(" ");
                lines.push_str(&format!("{}\t{}\n", item, text));
                captioned += 1;
            }
            _ => {
                lines.push_str(&format!("{}\t\n", item));
                missing.push(item.clone());
            }
        }
    }

    let tsv_path = out.join("captions.tsv");
    atomic_write(&tsv_path, lines.as_bytes())?;
    write_json(
        &out.join("captions.report.json"),
        &CaptionReport {
            items_captioned: captioned,
            items_without_frames: missing,
        },
    )?;
    log::info!(
        "captioned {} of {} items -> {}",
        captioned,
        universe.len(),
        tsv_path.display()
    );
    Ok(())
}
