//! Run configuration: one JSON document covering data paths, split,
//! model hyperparameters, and evaluation flags. Unknown keys are
//! rejected; every referenced path must exist at validation time.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use tipmf_core::corpus::{RatingsFormat, SplitSpec};
use tipmf_core::error::{Error, Result};
use tipmf_core::nic::{DecodeMode, NicTrainSettings};
use tipmf_core::pmf::PmfHyperparams;
use tipmf_core::rcnn::RcnnConfig;
use tipmf_core::trainer::{TipmfConfig, WOptimizerConfig};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub pmf: PmfHyperparams,
    #[serde(default)]
    pub tipmf: TipmfSection,
    #[serde(default)]
    pub nic: NicSection,
    #[serde(default)]
    pub eval: EvalSection,
    /// Independent seeded repetitions per training command.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_repeats() -> usize {
    5
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub ratings: PathBuf,
    #[serde(default = "default_format")]
    pub ratings_format: RatingsFormat,
    #[serde(default)]
    pub documents: Option<PathBuf>,
    #[serde(default)]
    pub image_features: Option<PathBuf>,
    #[serde(default)]
    pub frame_manifest: Option<PathBuf>,
    /// Captioned-image training set for the decoder: image_id TAB text.
    #[serde(default)]
    pub nic_captions: Option<PathBuf>,
    #[serde(default = "default_min_count")]
    pub min_count: usize,
    #[serde(default = "default_max_vocab")]
    pub max_vocab: usize,
}

fn default_format() -> RatingsFormat {
    RatingsFormat::DoubleColon
}

fn default_min_count() -> usize {
    1
}

fn default_max_vocab() -> usize {
    8000
}

/// Encoder shape without the derived dimensions: the vocabulary size
/// comes from the ingested bundle and the output width from `pmf`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSection {
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default = "default_context_dim")]
    pub context_dim: usize,
    #[serde(default = "default_feature_maps")]
    pub feature_maps: usize,
    #[serde(default = "default_window_sizes")]
    pub window_sizes: Vec<usize>,
    #[serde(default = "default_encoder_dropout")]
    pub dropout_rate: f64,
}

fn default_embed_dim() -> usize {
    200
}

fn default_context_dim() -> usize {
    50
}

fn default_feature_maps() -> usize {
    100
}

fn default_window_sizes() -> Vec<usize> {
    vec![3, 4, 5]
}

fn default_encoder_dropout() -> f64 {
    0.4
}

impl Default for EncoderSection {
    fn default() -> Self {
        EncoderSection {
            embed_dim: default_embed_dim(),
            context_dim: default_context_dim(),
            feature_maps: default_feature_maps(),
            window_sizes: default_window_sizes(),
            dropout_rate: default_encoder_dropout(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TipmfSection {
    #[serde(default = "default_lambda_w")]
    pub lambda_w: f64,
    #[serde(default)]
    pub w_optimizer: WOptimizerConfig,
    #[serde(default = "default_outer_iterations")]
    pub outer_iterations: usize,
    #[serde(default)]
    pub encoder: EncoderSection,
}

fn default_lambda_w() -> f64 {
    0.01
}

fn default_outer_iterations() -> usize {
    15
}

impl Default for TipmfSection {
    fn default() -> Self {
        TipmfSection {
            lambda_w: default_lambda_w(),
            w_optimizer: WOptimizerConfig::default(),
            outer_iterations: default_outer_iterations(),
            encoder: EncoderSection::default(),
        }
    }
}

impl TipmfSection {
    /// Assemble the trainer configuration for a concrete vocabulary and
    /// latent dimension.
    pub fn to_config(&self, pmf: PmfHyperparams, vocab_size: usize, seed: u64) -> TipmfConfig {
        TipmfConfig {
            encoder: RcnnConfig {
                vocab_size,
                embed_dim: self.encoder.embed_dim,
                context_dim: self.encoder.context_dim,
                feature_maps: self.encoder.feature_maps,
                window_sizes: self.encoder.window_sizes.clone(),
                latent_dim: pmf.latent_dim,
                dropout_rate: self.encoder.dropout_rate,
            },
            pmf,
            lambda_w: self.lambda_w,
            w_optimizer: self.w_optimizer,
            outer_iterations: self.outer_iterations,
            seed,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NicSection {
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default)]
    pub settings: NicTrainSettings,
    #[serde(default = "default_decode")]
    pub decode: DecodeMode,
    #[serde(default = "default_min_count")]
    pub min_count: usize,
    #[serde(default = "default_max_vocab")]
    pub max_vocab: usize,
}

fn default_hidden_dim() -> usize {
    256
}

fn default_decode() -> DecodeMode {
    DecodeMode::Greedy
}

impl Default for NicSection {
    fn default() -> Self {
        NicSection {
            hidden_dim: default_hidden_dim(),
            embed_dim: default_embed_dim(),
            settings: NicTrainSettings::default(),
            decode: default_decode(),
            min_count: default_min_count(),
            max_vocab: default_max_vocab(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default)]
    pub clamp: bool,
    #[serde(default = "default_clamp_min")]
    pub clamp_min: f64,
    #[serde(default = "default_clamp_max")]
    pub clamp_max: f64,
}

fn default_clamp_min() -> f64 {
    1.0
}

fn default_clamp_max() -> f64 {
    5.0
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            clamp: false,
            clamp_min: default_clamp_min(),
            clamp_max: default_clamp_max(),
        }
    }
}

impl RunConfig {
    /// Parse, resolve relative paths against the config's directory, and
    /// validate before any work starts.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e)))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e)))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        fix(&mut self.data.ratings);
        for p in [
            &mut self.data.documents,
            &mut self.data.image_features,
            &mut self.data.frame_manifest,
            &mut self.data.nic_captions,
        ].into_iter().flatten() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        if self.pmf.latent_dim == 0 {
            return Err(Error::Config("pmf.latent_dim must be >= 1".into()));
        }
        if self.pmf.lambda_u <= 0.0 || self.pmf.lambda_v <= 0.0 {
            return Err(Error::Config("pmf lambdas must be positive".into()));
        }
        if self.tipmf.lambda_w <= 0.0 {
            return Err(Error::Config("tipmf.lambda_w must be positive".into()));
        }
        if self.tipmf.w_optimizer.batch_size == 0 || self.nic.settings.batch_size == 0 {
            return Err(Error::Config("batch sizes must be >= 1".into()));
        }
        if self.data.min_count == 0 || self.nic.min_count == 0 {
            return Err(Error::Config("min_count must be >= 1".into()));
        }
        let mut required: Vec<&PathBuf> = vec![&self.data.ratings];
        for opt in [
            &self.data.documents,
            &self.data.image_features,
            &self.data.frame_manifest,
            &self.data.nic_captions,
        ]
        .into_iter()
        .flatten()
        {
            required.push(opt);
        }
        for p in required {
            if !p.exists() {
                return Err(Error::Config(format!(
                    "referenced path does not exist: {}",
                    p.display()
                )));
            }
        }
        Ok(())
    }
}
