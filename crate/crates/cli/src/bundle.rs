//! The ingested dataset bundle: reindexed ratings, id maps, vocabulary,
//! tokenized documents, the three splits, and a manifest with content
//! hashes. Everything is line-oriented TSV so reruns are diffable.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tipmf_core::corpus::{
    load_document_texts, DocumentSet, Rating, RatingsTable, SplitSpec, Vocabulary,
};
use tipmf_core::error::{Error, Result};

use crate::util::{atomic_write, sha256_hex, write_json};

pub const RATINGS_FILE: &str = "ratings.tsv";
pub const USERS_FILE: &str = "users.tsv";
pub const ITEMS_FILE: &str = "items.tsv";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const DOCS_FILE: &str = "docs.tsv";
pub const SPLIT_FILES: [&str; 3] = ["train.tsv", "test.tsv", "valid.tsv"];
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct BundleManifest {
    pub version: u32,
    pub n_users: usize,
    pub n_items: usize,
    pub n_ratings: usize,
    pub vocab_size: usize,
    pub split: SplitSpec,
    /// file name -> sha256 of its contents
    pub files: BTreeMap<String, String>,
}

pub struct Bundle {
    pub dir: PathBuf,
    pub manifest: BundleManifest,
    pub table: RatingsTable,
    pub vocab: Vocabulary,
    pub docs: DocumentSet,
}

/// Dense `user TAB item TAB rating` lines in table order.
fn render_dense(table: &RatingsTable) -> String {
    let mut out = String::new();
    for t in table.triplets() {
        out.push_str(&format!("{}\t{}\t{}\n", t.user, t.item, t.value));
    }
    out
}

fn parse_dense(path: &Path, n_users: usize, n_items: usize) -> Result<RatingsTable> {
    let reader = BufReader::new(fs::File::open(path)?);
    let display = path.display().to_string();
    let mut triplets = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = |m: &str| Error::Parse {
            path: display.clone(),
            line: lineno + 1,
            message: m.to_string(),
        };
        if fields.len() != 3 {
            return Err(bad("expected `user TAB item TAB rating`"));
        }
        let user: usize = fields[0].parse().map_err(|_| bad("bad user index"))?;
        let item: usize = fields[1].parse().map_err(|_| bad("bad item index"))?;
        let value: f64 = fields[2].parse().map_err(|_| bad("bad rating"))?;
        triplets.push(Rating { user, item, value });
    }
    RatingsTable::from_triplets(n_users, n_items, triplets)
}

pub fn write_bundle(
    dir: &Path,
    table: &RatingsTable,
    vocab: &Vocabulary,
    doc_texts: &[(String, String)],
    splits: (&RatingsTable, &RatingsTable, &RatingsTable),
    split_spec: &SplitSpec,
) -> Result<BundleManifest> {
    fs::create_dir_all(dir)?;

    atomic_write(&dir.join(RATINGS_FILE), render_dense(table).as_bytes())?;
    atomic_write(
        &dir.join(USERS_FILE),
        (table.user_ids().join("\n") + "\n").as_bytes(),
    )?;
    atomic_write(
        &dir.join(ITEMS_FILE),
        (table.item_ids().join("\n") + "\n").as_bytes(),
    )?;

    let vocab_lines: String = vocab
        .tokens()
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}\t{}\n", i, t))
        .collect();
    atomic_write(&dir.join(VOCAB_FILE), vocab_lines.as_bytes())?;

    // documents keyed by dense item index, tokenized text preserved
    let mut by_item: BTreeMap<usize, String> = BTreeMap::new();
    for (item_id, text) in doc_texts {
        if let Some(idx) = table.item_index(item_id) {
            let tokens = tipmf_core::corpus::tokenize(text);
            by_item.insert(idx, tokens.join(" "));
        }
    }
    let mut doc_lines = String::new();
    for idx in 0..table.n_items() {
        let text = by_item.get(&idx).map(|s| s.as_str()).unwrap_or("");
        doc_lines.push_str(&format!("{}\t{}\n", idx, text));
    }
    atomic_write(&dir.join(DOCS_FILE), doc_lines.as_bytes())?;

    for (name, split) in SPLIT_FILES.iter().zip([splits.0, splits.1, splits.2]) {
        atomic_write(&dir.join(name), render_dense(split).as_bytes())?;
    }

    let mut files = BTreeMap::new();
    for name in [RATINGS_FILE, USERS_FILE, ITEMS_FILE, VOCAB_FILE, DOCS_FILE]
        .iter()
        .chain(SPLIT_FILES.iter())
    {
        files.insert(name.to_string(), sha256_hex(&dir.join(name))?);
    }
    let manifest = BundleManifest {
        version: 1,
        n_users: table.n_users(),
        n_items: table.n_items(),
        n_ratings: table.triplets().len(),
        vocab_size: vocab.len(),
        split: *split_spec,
        files,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<BundleManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| {
        Error::Config(format!(
            "{}: {} (run `ingest` first)",
            path.display(),
            e
        ))
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn read_id_lines(path: &Path) -> Result<Vec<String>> {
    Ok(BufReader::new(fs::File::open(path)?)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect())
}

pub fn load_bundle(dir: &Path) -> Result<Bundle> {
    let manifest = load_manifest(dir)?;
    let dense = parse_dense(&dir.join(RATINGS_FILE), manifest.n_users, manifest.n_items)?;
    // reattach the external ids so lookups keep working after a reload
    let user_ids = read_id_lines(&dir.join(USERS_FILE))?;
    let item_ids = read_id_lines(&dir.join(ITEMS_FILE))?;
    if user_ids.len() != manifest.n_users || item_ids.len() != manifest.n_items {
        return Err(Error::Config(format!(
            "bundle id files disagree with the manifest ({} users, {} items)",
            user_ids.len(),
            item_ids.len()
        )));
    }
    let table = RatingsTable::from_parts(user_ids, item_ids, dense.triplets().to_vec())?;

    let mut tokens = Vec::new();
    for line in BufReader::new(fs::File::open(dir.join(VOCAB_FILE))?).lines() {
        let line = line?;
        if let Some((_, tok)) = line.split_once('\t') {
            tokens.push(tok.to_string());
        }
    }
    let vocab = Vocabulary::from_tokens(tokens);

    let doc_texts = load_document_texts(&dir.join(DOCS_FILE))?;
    let mut docs = vec![Vec::new(); manifest.n_items];
    for (idx_str, text) in &doc_texts {
        let idx: usize = idx_str.parse().map_err(|_| {
            Error::Config(format!("bundle docs: bad item index {:?}", idx_str))
        })?;
        if idx < manifest.n_items {
            docs[idx] = vocab.encode(&tipmf_core::corpus::tokenize(text));
        }
    }
    let docs = DocumentSet::from_token_ids(docs);

    Ok(Bundle {
        dir: dir.to_path_buf(),
        manifest,
        table,
        vocab,
        docs,
    })
}

pub fn load_split(bundle: &Bundle, name: &str) -> Result<RatingsTable> {
    let file = match name {
        "train" => SPLIT_FILES[0],
        "test" => SPLIT_FILES[1],
        "valid" => SPLIT_FILES[2],
        other => {
            return Err(Error::Config(format!(
                "unknown split {:?} (expected train, test, or valid)",
                other
            )))
        }
    };
    parse_dense(
        &bundle.dir.join(file),
        bundle.manifest.n_users,
        bundle.manifest.n_items,
    )
}
