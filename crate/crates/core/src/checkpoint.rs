//! Checkpoint files: a single-line JSON header followed by raw
//! little-endian 64-bit float blobs, written to a temp file and renamed
//! into place so interrupted runs never leave partial checkpoints.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nic::{LstmParams, NicDims, NicTrainSettings};
use crate::numerics::{DenseMatrix, DenseVector};
use crate::optim::ParamSet;
use crate::pmf::{LatentFactors, PmfHyperparams};
use crate::rcnn::RcnnParams;
use crate::trainer::{TipmfConfig, TipmfModel};

pub const FORMAT_VERSION: u32 = 1;

struct Writer {
    inner: BufWriter<fs::File>,
    tmp: PathBuf,
    path: PathBuf,
}

impl Writer {
    fn create(path: &Path) -> Result<Writer> {
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        let file = fs::File::create(&tmp)?;
        Ok(Writer {
            inner: BufWriter::new(file),
            tmp,
            path: path.to_path_buf(),
        })
    }

    fn header<T: Serialize>(&mut self, header: &T) -> Result<()> {
        let line = serde_json::to_string(header)?;
        self.inner.write_all(line.as_bytes())?;
        self.inner.write_all(b"\n")?;
        Ok(())
    }

    fn blob(&mut self, values: &[f64]) -> Result<()> {
        for v in values {
            self.inner.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        drop(self.inner);
        fs::rename(&self.tmp, &self.path)?;
        Ok(())
    }
}

struct Reader {
    inner: BufReader<fs::File>,
    path: String,
}

impl Reader {
    fn open(path: &Path) -> Result<Reader> {
        Ok(Reader {
            inner: BufReader::new(fs::File::open(path)?),
            path: path.display().to_string(),
        })
    }

    /// Parse the header line, verifying the checkpoint kind before the
    /// typed decode so a mismatched file reports what it actually is.
    fn header<T: DeserializeOwned>(&mut self, want_kind: &str) -> Result<T> {
        let mut line = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            let n = self.inner.read(&mut byte)?;
            if n == 0 {
                return Err(Error::Checkpoint(format!(
                    "{}: truncated header",
                    self.path
                )));
            }
            if byte[0] == b'\n' {
                break;
            }
            line.push(byte[0]);
        }
        let value: serde_json::Value = serde_json::from_slice(&line)?;
        let kind = value.get("kind").and_then(|k| k.as_str()).unwrap_or("?");
        if kind != want_kind {
            return Err(Error::Checkpoint(format!(
                "{}: expected a {} checkpoint, found {}",
                self.path, want_kind, kind
            )));
        }
        Ok(serde_json::from_value(value)?)
    }

    fn blob(&mut self, len: usize) -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; len * 8];
        self.inner.read_exact(&mut bytes).map_err(|_| {
            Error::Checkpoint(format!("{}: truncated blob of {} floats", self.path, len))
        })?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn expect_eof(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        if self.inner.read(&mut probe)? != 0 {
            return Err(Error::Checkpoint(format!(
                "{}: trailing bytes after the last blob",
                self.path
            )));
        }
        Ok(())
    }
}

fn write_param_set<P: ParamSet>(w: &mut Writer, params: &P) -> Result<()> {
    for (_, field) in params.fields() {
        w.blob(field)?;
    }
    Ok(())
}

fn read_param_set<P: ParamSet>(r: &mut Reader, params: &mut P) -> Result<()> {
    for (_, field) in params.fields_mut() {
        let values = r.blob(field.len())?;
        field.copy_from_slice(&values);
    }
    Ok(())
}

// ---------------------------------------------------------------- pmf --

#[derive(Debug, Serialize, Deserialize)]
struct PmfHeader {
    version: u32,
    kind: String,
    #[serde(rename = "D")]
    latent_dim: usize,
    #[serde(rename = "N")]
    n_users: usize,
    #[serde(rename = "M")]
    n_items: usize,
    hyperparams: PmfHyperparams,
    seed: u64,
}

#[derive(Debug)]
pub struct PmfCheckpoint {
    pub hyperparams: PmfHyperparams,
    pub seed: u64,
    pub factors: LatentFactors,
}

pub fn save_pmf(
    path: &Path,
    factors: &LatentFactors,
    hyperparams: &PmfHyperparams,
    seed: u64,
) -> Result<()> {
    let mut w = Writer::create(path)?;
    w.header(&PmfHeader {
        version: FORMAT_VERSION,
        kind: "pmf".into(),
        latent_dim: factors.latent_dim(),
        n_users: factors.n_users(),
        n_items: factors.n_items(),
        hyperparams: *hyperparams,
        seed,
    })?;
    w.blob(factors.user.values())?;
    w.blob(factors.item.values())?;
    w.finish()
}

pub fn load_pmf(path: &Path) -> Result<PmfCheckpoint> {
    let mut r = Reader::open(path)?;
    let header: PmfHeader = r.header("pmf")?;
    let user = DenseMatrix::from_values(
        header.latent_dim,
        header.n_users,
        r.blob(header.latent_dim * header.n_users)?,
    )?;
    let item = DenseMatrix::from_values(
        header.latent_dim,
        header.n_items,
        r.blob(header.latent_dim * header.n_items)?,
    )?;
    r.expect_eof()?;
    Ok(PmfCheckpoint {
        hyperparams: header.hyperparams,
        seed: header.seed,
        factors: LatentFactors { user, item },
    })
}

// -------------------------------------------------------------- tipmf --

#[derive(Debug, Serialize, Deserialize)]
struct TipmfHeader {
    version: u32,
    kind: String,
    n_users: usize,
    n_items: usize,
    config: TipmfConfig,
}

#[derive(Debug)]
pub struct TipmfCheckpoint {
    pub config: TipmfConfig,
    pub model: TipmfModel,
}

pub fn save_tipmf(path: &Path, model: &TipmfModel, config: &TipmfConfig) -> Result<()> {
    let mut w = Writer::create(path)?;
    w.header(&TipmfHeader {
        version: FORMAT_VERSION,
        kind: "tipmf".into(),
        n_users: model.factors.n_users(),
        n_items: model.factors.n_items(),
        config: config.clone(),
    })?;
    w.blob(model.factors.user.values())?;
    w.blob(model.factors.item.values())?;
    write_param_set(&mut w, &model.encoder)?;
    for mu in &model.mu_cache {
        w.blob(mu.values())?;
    }
    w.finish()
}

pub fn load_tipmf(path: &Path) -> Result<TipmfCheckpoint> {
    let mut r = Reader::open(path)?;
    let header: TipmfHeader = r.header("tipmf")?;
    let d = header.config.pmf.latent_dim;
    let user = DenseMatrix::from_values(d, header.n_users, r.blob(d * header.n_users)?)?;
    let item = DenseMatrix::from_values(d, header.n_items, r.blob(d * header.n_items)?)?;
    let mut encoder = RcnnParams::init(header.config.encoder.clone(), 0)?.zeros_like();
    read_param_set(&mut r, &mut encoder)?;
    let mut mu_cache = Vec::with_capacity(header.n_items);
    for _ in 0..header.n_items {
        mu_cache.push(DenseVector::from(r.blob(d)?));
    }
    r.expect_eof()?;
    Ok(TipmfCheckpoint {
        config: header.config,
        model: TipmfModel {
            factors: LatentFactors { user, item },
            encoder,
            mu_cache,
        },
    })
}

// ---------------------------------------------------------------- nic --

#[derive(Debug, Serialize, Deserialize)]
struct NicHeader {
    version: u32,
    kind: String,
    dims: NicDims,
    settings: NicTrainSettings,
    seed: u64,
    vocab: Vec<String>,
}

#[derive(Debug)]
pub struct NicCheckpoint {
    pub dims: NicDims,
    pub settings: NicTrainSettings,
    pub seed: u64,
    pub vocab: Vec<String>,
    pub params: LstmParams,
}

pub fn save_nic(
    path: &Path,
    params: &LstmParams,
    settings: &NicTrainSettings,
    seed: u64,
    vocab: &[String],
) -> Result<()> {
    let mut w = Writer::create(path)?;
    w.header(&NicHeader {
        version: FORMAT_VERSION,
        kind: "nic".into(),
        dims: *params.dims(),
        settings: *settings,
        seed,
        vocab: vocab.to_vec(),
    })?;
    write_param_set(&mut w, params)?;
    w.finish()
}

pub fn load_nic(path: &Path) -> Result<NicCheckpoint> {
    let mut r = Reader::open(path)?;
    let header: NicHeader = r.header("nic")?;
    let mut params = LstmParams::init(header.dims, 0)?.zeros_like();
    read_param_set(&mut r, &mut params)?;
    r.expect_eof()?;
    Ok(NicCheckpoint {
        dims: header.dims,
        settings: header.settings,
        seed: header.seed,
        vocab: header.vocab,
        params,
    })
}
