//! `predict`: score explicit (user, item) pairs with a trained rating
//! checkpoint. External ids are resolved through the bundle's maps and
//! predictions are written unclamped, one TSV line per pair.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use tipmf_core::error::{Error, Result};

use crate::bundle::load_bundle;
use crate::commands::evaluate::load_rating_model;
use crate::config::RunConfig;
use crate::util::atomic_write;

pub fn run(_config: &RunConfig, out: &Path, checkpoint: &Path, pairs: &PathBuf) -> Result<()> {
    let bundle = load_bundle(&out.join("bundle"))?;
    let model = load_rating_model(checkpoint)?;
    let display = pairs.display().to_string();

    let mut lines = String::new();
    let mut count = 0usize;
    for (lineno, line) in BufReader::new(fs::File::open(pairs)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (user_id, item_id) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: display.clone(),
            line: lineno + 1,
            message: "expected `user TAB item`".to_string(),
        })?;
        let (user_id, item_id) = (user_id.trim(), item_id.trim());
        let user = bundle.table.user_index(user_id).ok_or_else(|| Error::Parse {
            path: display.clone(),
            line: lineno + 1,
            message: format!("unknown user {:?}", user_id),
        })?;
        let item = bundle.table.item_index(item_id).ok_or_else(|| Error::Parse {
            path: display.clone(),
            line: lineno + 1,
            message: format!("unknown item {:?}", item_id),
        })?;
        let value = model.predict(user, item)?;
        lines.push_str(&format!("{}\t{}\t{}\n", user_id, item_id, value));
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyInput(display));
    }
    let path = out.join("predictions.tsv");
    atomic_write(&path, lines.as_bytes())?;
    log::info!("{} predictions -> {}", count, path.display());
    Ok(())
}
