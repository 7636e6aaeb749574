//! Recurrent-convolutional document encoder: bidirectional recurrent
//! contexts around each word, windowed tanh feature maps, max-pooling
//! over positions, and a linear projection down to the latent dimension.
//! The backward pass returns exact analytic gradients for every
//! parameter group.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{PAD, UNK};
use crate::error::{Error, Result};
use crate::numerics::{relu, DenseMatrix, DenseVector};
use crate::optim::ParamSet;

pub const MAX_WINDOWS: usize = 8;

static WINDOW_WEIGHT_NAMES: [&str; MAX_WINDOWS] = [
    "window0.weight",
    "window1.weight",
    "window2.weight",
    "window3.weight",
    "window4.weight",
    "window5.weight",
    "window6.weight",
    "window7.weight",
];

static WINDOW_BIAS_NAMES: [&str; MAX_WINDOWS] = [
    "window0.bias",
    "window1.bias",
    "window2.bias",
    "window3.bias",
    "window4.bias",
    "window5.bias",
    "window6.bias",
    "window7.bias",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RcnnConfig {
    pub vocab_size: usize,
    /// Word embedding width d_e.
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    /// Context vector width c.
    #[serde(default = "default_context_dim")]
    pub context_dim: usize,
    /// Feature maps per window size.
    #[serde(default = "default_feature_maps")]
    pub feature_maps: usize,
    #[serde(default = "default_window_sizes")]
    pub window_sizes: Vec<usize>,
    /// Output dimension D (the factor-model latent dimension).
    pub latent_dim: usize,
    /// Dropout on the pooled vector during training.
    #[serde(default = "default_dropout")]
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

fn default_dropout() -> f64 {
    0.4
}

impl RcnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 4 {
            return Err(Error::Config(
                "vocab must include the four reserved tokens".into(),
            ));
        }
        if self.window_sizes.is_empty() || self.window_sizes.len() > MAX_WINDOWS {
            return Err(Error::Config(format!(
                "between 1 and {} window sizes required",
                MAX_WINDOWS
            )));
        }
        if self.window_sizes.contains(&0) {
            return Err(Error::Config("window sizes must be >= 1".into()));
        }
        if self.embed_dim == 0
            || self.context_dim == 0
            || self.feature_maps == 0
            || self.latent_dim == 0
        {
            return Err(Error::Config("encoder dimensions must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("dropout rate must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Width of one position's cascaded representation `[c_l; e; c_r]`.
    pub fn cascade_dim(&self) -> usize {
        2 * self.context_dim + self.embed_dim
    }

    /// Width of the pooled vector fed to the projection.
    pub fn pooled_dim(&self) -> usize {
        self.window_sizes.len() * self.feature_maps
    }
}

/// All trainable encoder weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RcnnParams {
    config: RcnnConfig,
    pub(crate) embedding: DenseMatrix, // |V| x d_e
    pub(crate) rec_left: DenseMatrix,  // c x c
    pub(crate) rec_right: DenseMatrix, // c x c
    pub(crate) input_left: DenseMatrix, // c x d_e
    pub(crate) input_right: DenseMatrix, // c x d_e
    pub(crate) window_weights: Vec<DenseMatrix>, // f x (n * cascade)
    pub(crate) window_biases: Vec<DenseVector>, // f
    pub(crate) projection: DenseMatrix, // D x pooled
    pub(crate) projection_bias: DenseVector, // D
    version: u64,
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, half_range: f64) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(rows, cols);
    for v in m.values_mut() {
        *v = rng.gen_range(-half_range..half_range);
    }
    m
}

impl RcnnParams {
    /// Seeded init: embeddings uniform in (-0.05, 0.05) and trained
    /// jointly; weight matrices uniform with half-range 1/sqrt(fan_in);
    /// biases zero.
    pub fn init(config: RcnnConfig, seed: u64) -> Result<RcnnParams> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = config.context_dim;
        let de = config.embed_dim;
        let f = config.feature_maps;
        let cascade = config.cascade_dim();

        let embedding = uniform_matrix(&mut rng, config.vocab_size, de, 0.05);
        let rec_left = uniform_matrix(&mut rng, c, c, 1.0 / (c as f64).sqrt());
        let rec_right = uniform_matrix(&mut rng, c, c, 1.0 / (c as f64).sqrt());
        let input_left = uniform_matrix(&mut rng, c, de, 1.0 / (de as f64).sqrt());
        let input_right = uniform_matrix(&mut rng, c, de, 1.0 / (de as f64).sqrt());
        let mut window_weights = Vec::new();
        let mut window_biases = Vec::new();
        for &n in &config.window_sizes {
            let width = n * cascade;
            window_weights.push(uniform_matrix(&mut rng, f, width, 1.0 / (width as f64).sqrt()));
            window_biases.push(DenseVector::zeros(f));
        }
        let pooled = config.pooled_dim();
        let projection = uniform_matrix(
            &mut rng,
            config.latent_dim,
            pooled,
            1.0 / (pooled as f64).sqrt(),
        );
        let projection_bias = DenseVector::zeros(config.latent_dim);

        Ok(RcnnParams {
            config,
            embedding,
            rec_left,
            rec_right,
            input_left,
            input_right,
            window_weights,
            window_biases,
            projection,
            projection_bias,
            version: 0,
        })
    }

    /// Same shapes, every entry zero. Used as a gradient container.
    pub fn zeros_like(&self) -> RcnnParams {
        let mut z = self.clone();
        for (_, f) in z.fields_mut() {
            for v in f.iter_mut() {
                *v = 0.0;
            }
        }
        z.version = 0;
        z
    }

    pub fn config(&self) -> &RcnnConfig {
        &self.config
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    fn check_doc(&self, doc: &[usize]) -> Result<()> {
        if doc.is_empty() {
            return Err(Error::EmptyInput("document must have length >= 1".into()));
        }
        for &t in doc {
            if t >= self.config.vocab_size {
                return Err(Error::TokenOutOfRange {
                    id: t,
                    size: self.config.vocab_size,
                });
            }
        }
        Ok(())
    }
}

impl ParamSet for RcnnParams {
    fn fields(&self) -> Vec<(&'static str, &[f64])> {
        let mut out: Vec<(&'static str, &[f64])> = vec![
            ("embedding", self.embedding.values()),
            ("rec_left", self.rec_left.values()),
            ("rec_right", self.rec_right.values()),
            ("input_left", self.input_left.values()),
            ("input_right", self.input_right.values()),
        ];
        for (w, (weight, bias)) in self
            .window_weights
            .iter()
            .zip(self.window_biases.iter())
            .enumerate()
        {
            out.push((WINDOW_WEIGHT_NAMES[w], weight.values()));
            out.push((WINDOW_BIAS_NAMES[w], bias.values()));
        }
        out.push(("projection", self.projection.values()));
        out.push(("projection_bias", self.projection_bias.values()));
        out
    }

    fn fields_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        // Mutation invalidates any forward cache taken before this call.
        self.version += 1;
        let mut out: Vec<(&'static str, &mut [f64])> = vec![
            ("embedding", self.embedding.values_mut()),
            ("rec_left", self.rec_left.values_mut()),
            ("rec_right", self.rec_right.values_mut()),
            ("input_left", self.input_left.values_mut()),
            ("input_right", self.input_right.values_mut()),
        ];
        for (w, (weight, bias)) in self
            .window_weights
            .iter_mut()
            .zip(self.window_biases.iter_mut())
            .enumerate()
        {
            out.push((WINDOW_WEIGHT_NAMES[w], weight.values_mut()));
            out.push((WINDOW_BIAS_NAMES[w], bias.values_mut()));
        }
        out.push(("projection", self.projection.values_mut()));
        out.push(("projection_bias", self.projection_bias.values_mut()));
        out
    }
}

/// Left contexts: `c_l(w_1) = 0`,
/// `c_l(w_i) = ReLU(W_l c_l(w_{i-1}) + W_sl e(w_{i-1}))`.
pub fn left_context(doc: &[usize], params: &RcnnParams) -> Result<Vec<DenseVector>> {
    params.check_doc(doc)?;
    let c = params.config.context_dim;
    let mut out = Vec::with_capacity(doc.len());
    out.push(DenseVector::zeros(c));
    for i in 1..doc.len() {
        let prev = &out[i - 1];
        let emb = params.embedding.row(doc[i - 1]);
        let mut v = vec![0.0; c];
        for (r, vr) in v.iter_mut().enumerate() {
            let mut s = 0.0;
            for (k, p) in prev.values().iter().enumerate() {
                s += params.rec_left.get(r, k) * p;
            }
            for (k, e) in emb.iter().enumerate() {
                s += params.input_left.get(r, k) * e;
            }
            *vr = relu(s);
        }
        out.push(DenseVector::from(v));
    }
    Ok(out)
}

/// Right contexts: mirror of `left_context`, scanning right to left with
/// `c_r(w_T) = 0`.
pub fn right_context(doc: &[usize], params: &RcnnParams) -> Result<Vec<DenseVector>> {
    params.check_doc(doc)?;
    let c = params.config.context_dim;
    let t = doc.len();
    let mut out = vec![DenseVector::zeros(c); t];
    for i in (0..t.saturating_sub(1)).rev() {
        let mut v = vec![0.0; c];
        let next = out[i + 1].clone();
        let emb = params.embedding.row(doc[i + 1]);
        for (r, vr) in v.iter_mut().enumerate() {
            let mut s = 0.0;
            for (k, p) in next.values().iter().enumerate() {
                s += params.rec_right.get(r, k) * p;
            }
            for (k, e) in emb.iter().enumerate() {
                s += params.input_right.get(r, k) * e;
            }
            *vr = relu(s);
        }
        out[i] = DenseVector::from(v);
    }
    Ok(out)
}

/// Forward activations kept for the backward pass.
#[derive(Debug, Clone)]
struct EncoderCache {
    params_version: u64,
    doc: Vec<usize>,
    left: Vec<DenseVector>,
    right: Vec<DenseVector>,
    x: Vec<Vec<f64>>,
    /// Per window size: positions x feature maps, post-tanh.
    window_y: Vec<Vec<Vec<f64>>>,
    /// Per window size: argmax position per map (first occurrence).
    argmax: Vec<Vec<usize>>,
    dropout_scale: Option<Vec<f64>>,
    pooled_out: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub mu: DenseVector,
    cache: EncoderCache,
}

impl EncoderOutput {
    /// Pooled feature vector after dropout (the projection input).
    pub fn pooled(&self) -> &[f64] {
        &self.cache.pooled_out
    }

    /// Smallest margin protecting the piecewise decisions taken during
    /// this forward pass: ReLU pre-activation magnitudes and max-pool
    /// runner-up gaps. Finite-difference probes stay exact only while
    /// the step is well below this margin. Must be called with the same
    /// parameters the forward pass used.
    pub fn min_decision_margin(&self, params: &RcnnParams) -> f64 {
        let cache = &self.cache;
        let cfg = &params.config;
        let t = cache.doc.len();
        let mut margin = f64::INFINITY;

        let relu_pre = |post: f64,
                        rec: &DenseMatrix,
                        input: &DenseMatrix,
                        prev: &[f64],
                        emb: &[f64],
                        r: usize| {
            if post > 0.0 {
                post
            } else {
                let mut s = 0.0;
                for (k, p) in prev.iter().enumerate() {
                    s += rec.get(r, k) * p;
                }
                for (k, e) in emb.iter().enumerate() {
                    s += input.get(r, k) * e;
                }
                s
            }
        };
        for i in 1..t {
            let emb = params.embedding.row(cache.doc[i - 1]);
            for r in 0..cfg.context_dim {
                let pre = relu_pre(
                    cache.left[i].values()[r],
                    &params.rec_left,
                    &params.input_left,
                    cache.left[i - 1].values(),
                    emb,
                    r,
                );
                margin = margin.min(pre.abs());
            }
        }
        for i in 0..t.saturating_sub(1) {
            let emb = params.embedding.row(cache.doc[i + 1]);
            for r in 0..cfg.context_dim {
                let pre = relu_pre(
                    cache.right[i].values()[r],
                    &params.rec_right,
                    &params.input_right,
                    cache.right[i + 1].values(),
                    emb,
                    r,
                );
                margin = margin.min(pre.abs());
            }
        }

        for (w, ys) in cache.window_y.iter().enumerate() {
            if ys.len() < 2 {
                continue;
            }
            for k in 0..cfg.feature_maps {
                let arg = cache.argmax[w][k];
                let best = ys[arg][k];
                let mut second = f64::NEG_INFINITY;
                for (i, y) in ys.iter().enumerate() {
                    if i != arg {
                        second = second.max(y[k]);
                    }
                }
                margin = margin.min(best - second);
            }
        }
        margin
    }
}

/// Strip trailing `<pad>` tokens; an all-pad document collapses to the
/// single-token `[<unk>]` document.
fn normalize_doc(doc: &[usize]) -> Vec<usize> {
    let mut end = doc.len();
    while end > 0 && doc[end - 1] == PAD {
        end -= 1;
    }
    if end == 0 {
        vec![UNK]
    } else {
        doc[..end].to_vec()
    }
}

/// Inverted-dropout scale vector: each unit kept with probability
/// `1 - rate` and scaled by `1/(1 - rate)`, else zeroed.
pub fn dropout_scale(rng: &mut ChaCha8Rng, len: usize, rate: f64) -> Vec<f64> {
    let keep = 1.0 - rate;
    (0..len)
        .map(|_| if rng.gen_bool(keep) { 1.0 / keep } else { 0.0 })
        .collect()
}

/// Encode a document into `mu = P * pool(tanh(W2 * windows(x))) + p_b`.
pub fn encode_document(doc: &[usize], params: &RcnnParams) -> Result<EncoderOutput> {
    encode_inner(doc, params, None)
}

/// Training-mode encoding with an inverted-dropout scale vector applied
/// to the pooled layer (length `pooled_dim`).
pub fn encode_document_with_dropout(
    doc: &[usize],
    params: &RcnnParams,
    scale: &[f64],
) -> Result<EncoderOutput> {
    if scale.len() != params.config.pooled_dim() {
        return Err(Error::Shape(format!(
            "dropout scale length {} vs pooled dim {}",
            scale.len(),
            params.config.pooled_dim()
        )));
    }
    encode_inner(doc, params, Some(scale.to_vec()))
}

fn encode_inner(
    doc: &[usize],
    params: &RcnnParams,
    dropout: Option<Vec<f64>>,
) -> Result<EncoderOutput> {
    params.check_doc(doc)?;
    let doc = normalize_doc(doc);
    let cfg = &params.config;
    let t = doc.len();
    let cascade = cfg.cascade_dim();
    let f = cfg.feature_maps;

    let left = left_context(&doc, params)?;
    let right = right_context(&doc, params)?;

    let mut x = Vec::with_capacity(t);
    for i in 0..t {
        let mut xi = Vec::with_capacity(cascade);
        xi.extend_from_slice(left[i].values());
        xi.extend_from_slice(params.embedding.row(doc[i]));
        xi.extend_from_slice(right[i].values());
        x.push(xi);
    }

    let mut window_y = Vec::with_capacity(cfg.window_sizes.len());
    let mut argmax = Vec::with_capacity(cfg.window_sizes.len());
    let mut pooled = Vec::with_capacity(cfg.pooled_dim());
    for (w, &n) in cfg.window_sizes.iter().enumerate() {
        let weight = &params.window_weights[w];
        let bias = &params.window_biases[w];
        let offset = (n - 1) / 2;
        let mut ys = Vec::with_capacity(t);
        for i in 0..t {
            let mut y = bias.values().to_vec();
            for slot in 0..n {
                let src = i as isize + slot as isize - offset as isize;
                if src < 0 || src >= t as isize {
                    continue; // zero padding contributes nothing
                }
                let xi = &x[src as usize];
                let base = slot * cascade;
                for (r, yr) in y.iter_mut().enumerate() {
                    let row = weight.row(r);
                    let mut s = 0.0;
                    for (k, xv) in xi.iter().enumerate() {
                        s += row[base + k] * xv;
                    }
                    *yr += s;
                }
            }
            for yr in y.iter_mut() {
                *yr = yr.tanh();
            }
            ys.push(y);
        }
        let mut arg = vec![0usize; f];
        for k in 0..f {
            let mut best = ys[0][k];
            let mut best_i = 0;
            for (i, y) in ys.iter().enumerate().skip(1) {
                if y[k] > best {
                    best = y[k];
                    best_i = i;
                }
            }
            arg[k] = best_i;
            pooled.push(best);
        }
        window_y.push(ys);
        argmax.push(arg);
    }

    let pooled_out: Vec<f64> = match &dropout {
        Some(scale) => pooled.iter().zip(scale.iter()).map(|(p, s)| p * s).collect(),
        None => pooled.clone(),
    };

    let mut mu = params.projection_bias.values().to_vec();
    for (r, m) in mu.iter_mut().enumerate() {
        let row = params.projection.row(r);
        let mut s = 0.0;
        for (k, p) in pooled_out.iter().enumerate() {
            s += row[k] * p;
        }
        *m += s;
    }

    Ok(EncoderOutput {
        mu: DenseVector::from(mu),
        cache: EncoderCache {
            params_version: params.version,
            doc,
            left,
            right,
            x,
            window_y,
            argmax,
            dropout_scale: dropout,
            pooled_out,
        },
    })
}

/// Backpropagate `grad_mu` through the encoder, returning gradients with
/// the same shapes as the parameters. The cache must come from a forward
/// pass under the exact same parameter values.
pub fn encoder_backward(
    output: &EncoderOutput,
    grad_mu: &DenseVector,
    params: &RcnnParams,
) -> Result<RcnnParams> {
    let cache = &output.cache;
    if cache.params_version != params.version {
        return Err(Error::Contract(
            "encoder cache is stale: parameters changed since the forward pass".into(),
        ));
    }
    let cfg = &params.config;
    if grad_mu.dim() != cfg.latent_dim {
        return Err(Error::Shape(format!(
            "grad_mu dim {} vs latent dim {}",
            grad_mu.dim(),
            cfg.latent_dim
        )));
    }
    let t = cache.doc.len();
    let c = cfg.context_dim;
    let de = cfg.embed_dim;
    let cascade = cfg.cascade_dim();
    let f = cfg.feature_maps;

    let mut grads = params.zeros_like();

    // Projection layer: mu = P * pooled_out + p_b.
    for (r, g) in grad_mu.values().iter().enumerate() {
        grads.projection_bias.values_mut()[r] += g;
        let row = grads.projection.row_mut(r);
        for (k, p) in cache.pooled_out.iter().enumerate() {
            row[k] += g * p;
        }
    }
    let mut g_pooled = vec![0.0; cfg.pooled_dim()];
    for (k, gp) in g_pooled.iter_mut().enumerate() {
        let mut s = 0.0;
        for (r, g) in grad_mu.values().iter().enumerate() {
            s += params.projection.get(r, k) * g;
        }
        *gp = s;
    }
    if let Some(scale) = &cache.dropout_scale {
        for (gp, sc) in g_pooled.iter_mut().zip(scale.iter()) {
            *gp *= sc;
        }
    }

    // Route pooled gradients to the argmax positions, then back through
    // tanh and the window weights into the cascaded representations.
    let mut g_x = vec![vec![0.0; cascade]; t];
    for (w, &n) in cfg.window_sizes.iter().enumerate() {
        let weight = &params.window_weights[w];
        let offset = (n - 1) / 2;
        // group map gradients by their argmax position
        let mut by_pos: Vec<Vec<(usize, f64)>> = vec![Vec::new(); t];
        for k in 0..f {
            let g = g_pooled[w * f + k];
            if g != 0.0 {
                by_pos[cache.argmax[w][k]].push((k, g));
            }
        }
        for (i, entries) in by_pos.iter().enumerate() {
            if entries.is_empty() {
                continue;
            }
            for &(k, g) in entries {
                let y = cache.window_y[w][i][k];
                let da = g * (1.0 - y * y);
                grads.window_biases[w].values_mut()[k] += da;
                let wrow = grads.window_weights[w].row_mut(k);
                let prow = weight.row(k);
                for slot in 0..n {
                    let src = i as isize + slot as isize - offset as isize;
                    if src < 0 || src >= t as isize {
                        continue;
                    }
                    let xi = &cache.x[src as usize];
                    let gx = &mut g_x[src as usize];
                    let base = slot * cascade;
                    for (q, xv) in xi.iter().enumerate() {
                        wrow[base + q] += da * xv;
                        gx[q] += da * prow[base + q];
                    }
                }
            }
        }
    }

    // Split cascade gradients into context and embedding parts.
    let mut g_left: Vec<Vec<f64>> = Vec::with_capacity(t);
    let mut g_right: Vec<Vec<f64>> = Vec::with_capacity(t);
    for (i, gx) in g_x.iter().enumerate() {
        g_left.push(gx[0..c].to_vec());
        let emb_row = grads.embedding.row_mut(cache.doc[i]);
        for (k, g) in gx[c..c + de].iter().enumerate() {
            emb_row[k] += g;
        }
        g_right.push(gx[c + de..].to_vec());
    }

    // Left recurrence, consumers before producers (descending i).
    for i in (1..t).rev() {
        let post = cache.left[i].values();
        let da: Vec<f64> = g_left[i]
            .iter()
            .zip(post.iter())
            .map(|(g, p)| if *p > 0.0 { *g } else { 0.0 })
            .collect();
        let prev = cache.left[i - 1].values();
        let emb = params.embedding.row(cache.doc[i - 1]);
        for (r, d) in da.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            let rl = grads.rec_left.row_mut(r);
            for (k, p) in prev.iter().enumerate() {
                rl[k] += d * p;
            }
            let il = grads.input_left.row_mut(r);
            for (k, e) in emb.iter().enumerate() {
                il[k] += d * e;
            }
        }
        for (k, g) in g_left[i - 1].iter_mut().enumerate().take(c) {
            let mut s = 0.0;
            for (r, d) in da.iter().enumerate() {
                s += params.rec_left.get(r, k) * d;
            }
            *g += s;
        }
        let emb_grad = grads.embedding.row_mut(cache.doc[i - 1]);
        for (k, eg) in emb_grad.iter_mut().enumerate().take(de) {
            let mut s = 0.0;
            for (r, d) in da.iter().enumerate() {
                s += params.input_left.get(r, k) * d;
            }
            *eg += s;
        }
    }

    // Right recurrence, ascending i.
    for i in 0..t.saturating_sub(1) {
        let post = cache.right[i].values();
        let da: Vec<f64> = g_right[i]
            .iter()
            .zip(post.iter())
            .map(|(g, p)| if *p > 0.0 { *g } else { 0.0 })
            .collect();
        let next = cache.right[i + 1].values();
        let emb = params.embedding.row(cache.doc[i + 1]);
        for (r, d) in da.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            let rr = grads.rec_right.row_mut(r);
            for (k, p) in next.iter().enumerate() {
                rr[k] += d * p;
            }
            let ir = grads.input_right.row_mut(r);
            for (k, e) in emb.iter().enumerate() {
                ir[k] += d * e;
            }
        }
        for (k, g) in g_right[i + 1].iter_mut().enumerate().take(c) {
            let mut s = 0.0;
            for (r, d) in da.iter().enumerate() {
                s += params.rec_right.get(r, k) * d;
            }
            *g += s;
        }
        let emb_grad = grads.embedding.row_mut(cache.doc[i + 1]);
        for (k, eg) in emb_grad.iter_mut().enumerate().take(de) {
            let mut s = 0.0;
            for (r, d) in da.iter().enumerate() {
                s += params.input_right.get(r, k) * d;
            }
            *eg += s;
        }
    }

    grads.version = params.version;
    Ok(grads)
}
