//! Ingestion of ratings, documents, and precomputed image features, plus
//! vocabulary construction and seeded train/test/validation splits.
//!
//! All loaders reindex external ids densely in order of first appearance
//! and produce immutable tables that are safe to share across threads.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::DenseVector;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

pub const RESERVED_TOKENS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// One observed rating with dense indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

/// Sparse user-item-rating triplets with the dense index maps.
#[derive(Debug, Clone)]
pub struct RatingsTable {
    n_users: usize,
    n_items: usize,
    triplets: Vec<Rating>,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    user_map: HashMap<String, usize>,
    item_map: HashMap<String, usize>,
}

impl RatingsTable {
    /// Table over anonymous dense indices, for synthetic data and splits.
    /// External ids are the stringified indices.
    pub fn from_triplets(n_users: usize, n_items: usize, triplets: Vec<Rating>) -> Result<Self> {
        for t in &triplets {
            if t.user >= n_users || t.item >= n_items {
                return Err(Error::Shape(format!(
                    "triplet ({}, {}) out of bounds {}x{}",
                    t.user, t.item, n_users, n_items
                )));
            }
        }
        let user_ids: Vec<String> = (0..n_users).map(|u| u.to_string()).collect();
        let item_ids: Vec<String> = (0..n_items).map(|i| i.to_string()).collect();
        let index = |ids: &[String]| {
            ids.iter()
                .enumerate()
                .map(|(i, s)| (s.clone(), i))
                .collect::<HashMap<_, _>>()
        };
        Ok(RatingsTable {
            n_users,
            n_items,
            user_map: index(&user_ids),
            item_map: index(&item_ids),
            user_ids,
            item_ids,
            triplets,
        })
    }

    /// Table with explicit external-id lists; triplet indices refer to
    /// positions in those lists.
    pub fn from_parts(
        user_ids: Vec<String>,
        item_ids: Vec<String>,
        triplets: Vec<Rating>,
    ) -> Result<Self> {
        for t in &triplets {
            if t.user >= user_ids.len() || t.item >= item_ids.len() {
                return Err(Error::Shape(format!(
                    "triplet ({}, {}) out of bounds {}x{}",
                    t.user,
                    t.item,
                    user_ids.len(),
                    item_ids.len()
                )));
            }
        }
        let index = |ids: &[String]| {
            ids.iter()
                .enumerate()
                .map(|(i, s)| (s.clone(), i))
                .collect::<HashMap<_, _>>()
        };
        Ok(RatingsTable {
            n_users: user_ids.len(),
            n_items: item_ids.len(),
            user_map: index(&user_ids),
            item_map: index(&item_ids),
            user_ids,
            item_ids,
            triplets,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn triplets(&self) -> &[Rating] {
        &self.triplets
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn user_index(&self, external: &str) -> Option<usize> {
        self.user_map.get(external).copied()
    }

    pub fn item_index(&self, external: &str) -> Option<usize> {
        self.item_map.get(external).copied()
    }

    /// Observed (item, rating) pairs per user.
    pub fn by_user(&self) -> Vec<Vec<(usize, f64)>> {
        let mut out = vec![Vec::new(); self.n_users];
        for t in &self.triplets {
            out[t.user].push((t.item, t.value));
        }
        out
    }

    /// Observed (user, rating) pairs per item.
    pub fn by_item(&self) -> Vec<Vec<(usize, f64)>> {
        let mut out = vec![Vec::new(); self.n_items];
        for t in &self.triplets {
            out[t.item].push((t.user, t.value));
        }
        out
    }

    /// Same dimensions and id maps, different triplet subset.
    fn with_triplets(&self, triplets: Vec<Rating>) -> RatingsTable {
        RatingsTable {
            n_users: self.n_users,
            n_items: self.n_items,
            triplets,
            user_ids: self.user_ids.clone(),
            item_ids: self.item_ids.clone(),
            user_map: self.user_map.clone(),
            item_map: self.item_map.clone(),
        }
    }
}

/// Rating file layouts. All three carry user, item, rating and an
/// optional trailing timestamp that is ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatingsFormat {
    DoubleColon,
    Tsv,
    Csv,
}

impl RatingsFormat {
    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            RatingsFormat::DoubleColon => line.split("::").collect(),
            RatingsFormat::Tsv => line.split('\t').collect(),
            RatingsFormat::Csv => line.split(',').collect(),
        }
    }

    fn separator(&self) -> &'static str {
        match self {
            RatingsFormat::DoubleColon => "::",
            RatingsFormat::Tsv => "\t",
            RatingsFormat::Csv => ",",
        }
    }
}

/// Load `user<sep>item<sep>rating[<sep>timestamp]` lines. Dense indices
/// follow first appearance; a duplicated (user, item) pair keeps the last
/// value and logs a warning.
pub fn load_ratings(path: &Path, format: RatingsFormat) -> Result<RatingsTable> {
    let file = fs::File::open(path)?;
    let reader = BufReader::new(file);
    let display = path.display().to_string();

    let mut table = RatingsTable {
        n_users: 0,
        n_items: 0,
        triplets: Vec::new(),
        user_ids: Vec::new(),
        item_ids: Vec::new(),
        user_map: HashMap::new(),
        item_map: HashMap::new(),
    };
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields = format.split(&line);
        if fields.len() < 3 {
            return Err(Error::Parse {
                path: display,
                line: lineno + 1,
                message: format!("expected at least 3 fields, got {}", fields.len()),
            });
        }
        let value: f64 = fields[2].trim().parse().map_err(|_| Error::Parse {
            path: display.clone(),
            line: lineno + 1,
            message: format!("bad rating value {:?}", fields[2]),
        })?;
        let user = intern(fields[0].trim(), &mut table.user_map, &mut table.user_ids);
        let item = intern(fields[1].trim(), &mut table.item_map, &mut table.item_ids);
        match seen.get(&(user, item)) {
            Some(&pos) => {
                log::warn!(
                    "{}:{}: duplicate rating for ({}, {}), keeping the last value",
                    display,
                    lineno + 1,
                    fields[0].trim(),
                    fields[1].trim()
                );
                table.triplets[pos].value = value;
            }
            None => {
                seen.insert((user, item), table.triplets.len());
                table.triplets.push(Rating { user, item, value });
            }
        }
    }
    table.n_users = table.user_ids.len();
    table.n_items = table.item_ids.len();
    if table.triplets.is_empty() {
        return Err(Error::EmptyInput(display));
    }
    Ok(table)
}

fn intern(id: &str, map: &mut HashMap<String, usize>, ids: &mut Vec<String>) -> usize {
    if let Some(&idx) = map.get(id) {
        return idx;
    }
    let idx = ids.len();
    ids.push(id.to_string());
    map.insert(id.to_string(), idx);
    idx
}

/// Write triplets back out with external ids, in table order.
pub fn write_ratings(path: &Path, table: &RatingsTable, format: RatingsFormat) -> Result<()> {
    let mut f = fs::File::create(path)?;
    let sep = format.separator();
    for t in table.triplets() {
        writeln!(
            f,
            "{}{sep}{}{sep}{}",
            table.user_ids[t.user], table.item_ids[t.item], t.value
        )?;
    }
    Ok(())
}

/// Lowercase, split on Unicode whitespace, strip leading/trailing ASCII
/// punctuation per token, drop empties.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(|t| t.trim_matches(|c: char| c.is_ascii_punctuation()))
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

/// Token vocabulary with fixed reserved ids 0..=3.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    #[serde(skip)]
    token_to_id: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keep the `max_size` most frequent tokens with frequency at least
    /// `min_count`; frequency ties break lexicographically.
    pub fn build(docs: &[Vec<String>], min_count: usize, max_size: usize) -> Vocabulary {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for doc in docs {
            for tok in doc {
                *counts.entry(tok.as_str()).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(tok, n)| *n >= min_count && !RESERVED_TOKENS.contains(tok))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size);

        let mut id_to_token: Vec<String> =
            RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(ranked.into_iter().map(|(tok, _)| tok.to_string()));
        Vocabulary::from_tokens(id_to_token)
    }

    /// Rebuild from an id-ordered token list (reserved tokens included).
    pub fn from_tokens(id_to_token: Vec<String>) -> Vocabulary {
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            id_to_token,
            token_to_id,
        }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved entries are always present
    }

    /// Id for a token, `<unk>` when absent.
    pub fn id(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(|s| s.as_str())
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| {
                self.token(i)
                    .unwrap_or(RESERVED_TOKENS[UNK])
                    .to_string()
            })
            .collect()
    }
}

/// Per-item token-id documents, densely indexed by item. Items without a
/// document get the single-token document `[<unk>]`.
#[derive(Debug, Clone)]
pub struct DocumentSet {
    docs: Vec<Vec<usize>>,
}

impl DocumentSet {
    pub fn from_token_ids(docs: Vec<Vec<usize>>) -> DocumentSet {
        let docs = docs
            .into_iter()
            .map(|d| if d.is_empty() { vec![UNK] } else { d })
            .collect();
        DocumentSet { docs }
    }

    /// Map raw `(item_id, text)` records onto the table's dense item
    /// indices through the vocabulary.
    pub fn build(
        raw: &[(String, String)],
        vocab: &Vocabulary,
        table: &RatingsTable,
    ) -> DocumentSet {
        let mut docs = vec![Vec::new(); table.n_items()];
        for (item_id, text) in raw {
            if let Some(idx) = table.item_index(item_id) {
                docs[idx] = vocab.encode(&tokenize(text));
            }
        }
        DocumentSet::from_token_ids(docs)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn doc(&self, item: usize) -> &[usize] {
        &self.docs[item]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<usize>> {
        self.docs.iter()
    }
}

/// Raw document records: `item_id TAB text`, one line per item.
pub fn load_document_texts(path: &Path) -> Result<Vec<(String, String)>> {
    let file = fs::File::open(path)?;
    let reader = BufReader::new(file);
    let display = path.display().to_string();
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match line.split_once('\t') {
            Some((id, text)) => out.push((id.trim().to_string(), text.to_string())),
            None => {
                return Err(Error::Parse {
                    path: display,
                    line: lineno + 1,
                    message: "expected `item_id TAB text`".to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Precomputed image feature vectors plus per-item frame lists.
#[derive(Debug, Clone)]
pub struct ImageFeatureSet {
    dim: usize,
    image_ids: Vec<String>,
    features: HashMap<String, DenseVector>,
    /// (item_id, image_id) in manifest order.
    frames: Vec<(String, String)>,
}

impl ImageFeatureSet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn feature(&self, image_id: &str) -> Option<&DenseVector> {
        self.features.get(image_id)
    }

    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    pub fn frames(&self) -> &[(String, String)] {
        &self.frames
    }

    /// Frame features per item, in manifest order of first appearance.
    pub fn frames_by_item(&self) -> Vec<(String, Vec<&DenseVector>)> {
        let mut order: Vec<String> = Vec::new();
        let mut by_item: HashMap<&str, Vec<&DenseVector>> = HashMap::new();
        for (item, image) in &self.frames {
            if !by_item.contains_key(item.as_str()) {
                order.push(item.clone());
            }
            let entry = by_item.entry(item.as_str()).or_default();
            if let Some(f) = self.features.get(image) {
                entry.push(f);
            }
        }
        order
            .into_iter()
            .map(|item| {
                let feats = by_item.remove(item.as_str()).unwrap_or_default();
                (item, feats)
            })
            .collect()
    }
}

/// Feature file: header `F=<dim>`, then `image_id TAB f1,f2,...,fF`.
pub fn load_image_features(path: &Path) -> Result<ImageFeatureSet> {
    let file = fs::File::open(path)?;
    let reader = BufReader::new(file);
    let display = path.display().to_string();
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| Error::EmptyInput(display.clone()))?;
    let header = header?;
    let dim: usize = header
        .trim()
        .strip_prefix("F=")
        .and_then(|d| d.parse().ok())
        .ok_or_else(|| Error::Parse {
            path: display.clone(),
            line: 1,
            message: format!("expected header `F=<dim>`, got {:?}", header),
        })?;

    let mut image_ids = Vec::new();
    let mut features = HashMap::new();
    for (lineno, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, rest) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: display.clone(),
            line: lineno + 1,
            message: "expected `image_id TAB f1,...,fF`".to_string(),
        })?;
        let values: Vec<f64> = rest
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                path: display.clone(),
                line: lineno + 1,
                message: format!("bad feature value: {}", e),
            })?;
        if values.len() != dim {
            return Err(Error::Parse {
                path: display.clone(),
                line: lineno + 1,
                message: format!("expected {} features, got {}", dim, values.len()),
            });
        }
        let id = id.trim().to_string();
        if features
            .insert(id.clone(), DenseVector::from(values))
            .is_none()
        {
            image_ids.push(id);
        } else {
            log::warn!(
                "{}:{}: duplicate feature for image {:?}, keeping the last value",
                display,
                lineno + 1,
                id
            );
        }
    }
    Ok(ImageFeatureSet {
        dim,
        image_ids,
        features,
        frames: Vec::new(),
    })
}

/// Frame manifest: `item_id TAB image_id` per line. Every referenced
/// image id must be present in the feature set.
pub fn load_frame_manifest(path: &Path, features: &mut ImageFeatureSet) -> Result<()> {
    let file = fs::File::open(path)?;
    let reader = BufReader::new(file);
    let display = path.display().to_string();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (item, image) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: display.clone(),
            line: lineno + 1,
            message: "expected `item_id TAB image_id`".to_string(),
        })?;
        let image = image.trim().to_string();
        if !features.features.contains_key(&image) {
            return Err(Error::Parse {
                path: display.clone(),
                line: lineno + 1,
                message: format!("image id {:?} not present in the feature file", image),
            });
        }
        features.frames.push((item.trim().to_string(), image));
    }
    Ok(())
}

/// Seeded split fractions for (train, test, valid).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub seed: u64,
    pub fractions: (f64, f64, f64),
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            seed: 0,
            fractions: (0.8, 0.1, 0.1),
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.fractions;
        if a <= 0.0 || b <= 0.0 || c <= 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must be positive and sum to 1, got ({}, {}, {})",
                a, b, c
            )));
        }
        Ok(())
    }
}

/// Deterministic exact partition into (train, test, valid). Sizes are
/// floor(fraction * n) with the remainder assigned in field order.
pub fn split_ratings(
    table: &RatingsTable,
    spec: &SplitSpec,
) -> Result<(RatingsTable, RatingsTable, RatingsTable)> {
    spec.validate()?;
    let n = table.triplets().len();
    if n == 0 {
        return Err(Error::EmptyInput("ratings table has no triplets".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }

    let (fa, fb, fc) = spec.fractions;
    let mut sizes = [
        (fa * n as f64).floor() as usize,
        (fb * n as f64).floor() as usize,
        (fc * n as f64).floor() as usize,
    ];
    let mut rest = n - sizes.iter().sum::<usize>();
    let mut k = 0;
    while rest > 0 {
        sizes[k % 3] += 1;
        rest -= 1;
        k += 1;
    }

    let pick = |range: std::ops::Range<usize>| -> Vec<Rating> {
        order[range].iter().map(|&i| table.triplets()[i]).collect()
    };
    let train = table.with_triplets(pick(0..sizes[0]));
    let test = table.with_triplets(pick(sizes[0]..sizes[0] + sizes[1]));
    let valid = table.with_triplets(pick(sizes[0] + sizes[1]..n));
    Ok((train, test, valid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_double_colon_line() {
        let f = write_tmp("1::1193::5::978300760\n");
        let t = load_ratings(f.path(), RatingsFormat::DoubleColon).unwrap();
        assert_eq!(t.triplets(), &[Rating { user: 0, item: 0, value: 5.0 }]);
        assert_eq!(t.n_users(), 1);
        assert_eq!(t.n_items(), 1);
    }

    #[test]
    fn duplicate_keeps_last() {
        let f = write_tmp("1::7::5\n1::7::2\n");
        let t = load_ratings(f.path(), RatingsFormat::DoubleColon).unwrap();
        assert_eq!(t.triplets().len(), 1);
        assert_eq!(t.triplets()[0].value, 2.0);
    }

    #[test]
    fn full_grid_counts() {
        let mut s = String::new();
        for u in 1..=3 {
            for i in 1..=2 {
                s.push_str(&format!("{u},{i},4.0\n"));
            }
        }
        let f = write_tmp(&s);
        let t = load_ratings(f.path(), RatingsFormat::Csv).unwrap();
        assert_eq!(t.triplets().len(), 6);
        assert_eq!(t.n_users(), 3);
        assert_eq!(t.n_items(), 2);
    }

    #[test]
    fn malformed_line_reports_number() {
        let f = write_tmp("1::2::3\nbogus\n");
        match load_ratings(f.path(), RatingsFormat::DoubleColon) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {:?}", other),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = write_tmp("");
        assert!(matches!(
            load_ratings(f.path(), RatingsFormat::Tsv),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn ratings_roundtrip_multiset() {
        let f = write_tmp("9::4::1.5\n2::4::3\n9::8::5\n");
        let t = load_ratings(f.path(), RatingsFormat::DoubleColon).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_ratings(out.path(), &t, RatingsFormat::DoubleColon).unwrap();
        let t2 = load_ratings(out.path(), RatingsFormat::DoubleColon).unwrap();
        assert_eq!(t.triplets(), t2.triplets());
        assert_eq!(t.user_ids(), t2.user_ids());
    }

    #[test]
    fn tokenize_rules() {
        assert_eq!(tokenize("A man, running."), vec!["a", "man", "running"]);
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(tokenize("dog  dog"), vec!["dog", "dog"]);
        // interior punctuation survives
        assert_eq!(tokenize("don't stop!"), vec!["don't", "stop"]);
    }

    #[test]
    fn vocabulary_min_count() {
        let docs = vec![tokenize("a a b")];
        let v = Vocabulary::build(&docs, 2, 100);
        assert_eq!(v.id("a"), 4);
        assert_eq!(v.id("b"), UNK);
    }

    #[test]
    fn vocabulary_empty_docs() {
        let v = Vocabulary::build(&[], 1, 100);
        assert_eq!(v.len(), 4);
        assert_eq!(v.token(PAD), Some("<pad>"));
        assert_eq!(v.token(UNK), Some("<unk>"));
    }

    #[test]
    fn vocabulary_tie_break_lexicographic() {
        let docs = vec![vec!["b".to_string(), "a".to_string()]];
        let v = Vocabulary::build(&docs, 1, 1);
        assert_eq!(v.id("a"), 4);
        assert_eq!(v.id("b"), UNK);
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn vocabulary_ids_stable() {
        let docs = vec![tokenize("x y y z"), tokenize("z z q")];
        let a = Vocabulary::build(&docs, 1, 50);
        let b = Vocabulary::build(&docs, 1, 50);
        assert_eq!(a.tokens(), b.tokens());
    }

    #[test]
    fn document_set_defaults_to_unk() {
        let table =
            RatingsTable::from_triplets(1, 2, vec![Rating { user: 0, item: 1, value: 1.0 }])
                .unwrap();
        let vocab = Vocabulary::build(&[tokenize("hello world")], 1, 10);
        let raw = vec![("1".to_string(), "hello world".to_string())];
        let docs = DocumentSet::build(&raw, &vocab, &table);
        // item "1" is dense index 0 (first appearance == only triplet's item
        // is external id "1"); the other item has no text.
        let with_text = table.item_index("1").unwrap();
        assert_eq!(docs.doc(with_text), &[vocab.id("hello"), vocab.id("world")]);
        let without = 1 - with_text;
        assert_eq!(docs.doc(without), &[UNK]);
    }

    #[test]
    fn split_sizes_exact() {
        let t = RatingsTable::from_triplets(
            10,
            1,
            (0..10)
                .map(|u| Rating { user: u, item: 0, value: 1.0 })
                .collect(),
        )
        .unwrap();
        let spec = SplitSpec { seed: 11, fractions: (0.8, 0.1, 0.1) };
        let (tr, te, va) = split_ratings(&t, &spec).unwrap();
        assert_eq!(tr.triplets().len(), 8);
        assert_eq!(te.triplets().len(), 1);
        assert_eq!(va.triplets().len(), 1);
    }

    #[test]
    fn split_deterministic() {
        let t = RatingsTable::from_triplets(
            30,
            2,
            (0..30)
                .map(|u| Rating { user: u, item: u % 2, value: (u % 5) as f64 })
                .collect(),
        )
        .unwrap();
        let spec = SplitSpec { seed: 5, fractions: (0.8, 0.1, 0.1) };
        let (a1, b1, c1) = split_ratings(&t, &spec).unwrap();
        let (a2, b2, c2) = split_ratings(&t, &spec).unwrap();
        assert_eq!(a1.triplets(), a2.triplets());
        assert_eq!(b1.triplets(), b2.triplets());
        assert_eq!(c1.triplets(), c2.triplets());
    }

    #[test]
    fn feature_file_roundtrip() {
        let f = write_tmp("F=3\nimg1\t0.5,1.5,-2\nimg2\t0,0,1\n");
        let mut set = load_image_features(f.path()).unwrap();
        assert_eq!(set.dim(), 3);
        assert_eq!(set.feature("img1").unwrap().values(), &[0.5, 1.5, -2.0]);
        let m = write_tmp("item9\timg1\nitem9\timg2\n");
        load_frame_manifest(m.path(), &mut set).unwrap();
        let by_item = set.frames_by_item();
        assert_eq!(by_item.len(), 1);
        assert_eq!(by_item[0].0, "item9");
        assert_eq!(by_item[0].1.len(), 2);
    }

    #[test]
    fn manifest_rejects_unknown_image() {
        let f = write_tmp("F=1\nimg1\t1.0\n");
        let mut set = load_image_features(f.path()).unwrap();
        let m = write_tmp("item\tmissing\n");
        assert!(load_frame_manifest(m.path(), &mut set).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn split_is_exact_partition(
            n in 1usize..120,
            seed in 0u64..1000,
        ) {
            let triplets: Vec<Rating> = (0..n)
                .map(|k| Rating { user: k % 7, item: k % 5, value: k as f64 })
                .collect();
            let t = RatingsTable::from_triplets(7, 5, triplets.clone()).unwrap();
            let spec = SplitSpec { seed, fractions: (0.8, 0.1, 0.1) };
            let (tr, te, va) = split_ratings(&t, &spec).unwrap();

            prop_assert_eq!(tr.triplets().len() + te.triplets().len() + va.triplets().len(), n);
            let mut merged: Vec<Rating> = tr.triplets().iter()
                .chain(te.triplets())
                .chain(va.triplets())
                .cloned()
                .collect();
            merged.sort_by(|a, b| a.value.partial_cmp(&b.value).unwrap());
            let mut original = triplets;
            original.sort_by(|a, b| a.value.partial_cmp(&b.value).unwrap());
            prop_assert_eq!(merged, original);

            // determinism
            let again = split_ratings(&t, &spec).unwrap();
            prop_assert_eq!(tr.triplets(), again.0.triplets());
        }
    }
}
