//! `ingest`: raw files in, reproducible bundle out.

use std::path::Path;

use tipmf_core::corpus::{load_document_texts, load_ratings, split_ratings, tokenize, Vocabulary};
use tipmf_core::error::Result;

use crate::bundle::write_bundle;
use crate::config::RunConfig;

pub fn run(config: &RunConfig, out: &Path) -> Result<()> {
    let table = load_ratings(&config.data.ratings, config.data.ratings_format)?;
    log::info!(
        "loaded {} ratings over {} users x {} items",
        table.triplets().len(),
        table.n_users(),
        table.n_items()
    );

    let doc_texts = match &config.data.documents {
        Some(path) => load_document_texts(path)?,
        None => Vec::new(),
    };
    let token_docs: Vec<Vec<String>> = doc_texts.iter().map(|(_, t)| tokenize(t)).collect();
    let vocab = Vocabulary::build(&token_docs, config.data.min_count, config.data.max_vocab);

    let (train, test, valid) = split_ratings(&table, &config.split)?;
    let manifest = write_bundle(
        &out.join("bundle"),
        &table,
        &vocab,
        &doc_texts,
        (&train, &test, &valid),
        &config.split,
    )?;
    log::info!(
        "bundle written: vocab {} tokens, splits {}/{}/{}",
        manifest.vocab_size,
        train.triplets().len(),
        test.triplets().len(),
        valid.triplets().len()
    );
    println!("{}", serde_json::to_string(&manifest)?);
    Ok(())
}
