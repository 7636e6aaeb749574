//! Toy-scale neural caption decoder: an LSTM language model over word
//! embeddings, seeded once by an adapted image feature vector, trained
//! by teacher forcing with full backpropagation through time, and
//! decoded greedily or with beam search.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{BOS, EOS};
use crate::error::{Error, Result};
use crate::numerics::{sigmoid, softmax, DenseMatrix, DenseVector};
use crate::optim::{ParamSet, RmsProp, RmsPropSettings};

/// Hard cap on a caption token sequence, `<bos>`/`<eos>` included.
pub const MAX_SEQUENCE_LEN: usize = 30;
/// Longest decodable caption body: the markers use two of the slots.
pub const MAX_DECODE_TOKENS: usize = MAX_SEQUENCE_LEN - 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NicDims {
    pub vocab_size: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub feature_dim: usize,
}

impl NicDims {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0
            || self.hidden_dim == 0
            || self.embed_dim == 0
            || self.feature_dim == 0
        {
            return Err(Error::Config("decoder dimensions must be >= 1".into()));
        }
        Ok(())
    }
}

/// The eight gate matrices, the word embedding, the image-feature
/// adapter, and the output map. No bias vectors anywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    dims: NicDims,
    pub(crate) w_ix: DenseMatrix, // h x d
    pub(crate) w_fx: DenseMatrix,
    pub(crate) w_ox: DenseMatrix,
    pub(crate) w_cx: DenseMatrix,
    pub(crate) w_im: DenseMatrix, // h x h
    pub(crate) w_fm: DenseMatrix,
    pub(crate) w_om: DenseMatrix,
    pub(crate) w_cm: DenseMatrix,
    pub(crate) w_embed: DenseMatrix, // d x |V|
    pub(crate) w_image: DenseMatrix, // d x F
    pub(crate) w_out: DenseMatrix,   // |V| x h
    version: u64,
}

impl LstmParams {
    pub fn init(dims: NicDims, seed: u64) -> Result<LstmParams> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = dims.hidden_dim;
        let d = dims.embed_dim;
        let v = dims.vocab_size;
        let fdim = dims.feature_dim;
        let mut mat = |rows: usize, cols: usize| {
            let half = 1.0 / (cols as f64).sqrt();
            let mut m = DenseMatrix::zeros(rows, cols);
            for val in m.values_mut() {
                *val = rng.gen_range(-half..half);
            }
            m
        };
        Ok(LstmParams {
            dims,
            w_ix: mat(h, d),
            w_fx: mat(h, d),
            w_ox: mat(h, d),
            w_cx: mat(h, d),
            w_im: mat(h, h),
            w_fm: mat(h, h),
            w_om: mat(h, h),
            w_cm: mat(h, h),
            w_embed: mat(d, v),
            w_image: mat(d, fdim),
            w_out: mat(v, h),
            version: 0,
        })
    }

    pub fn zeros_like(&self) -> LstmParams {
        let mut z = self.clone();
        for (_, f) in z.fields_mut() {
            for v in f.iter_mut() {
                *v = 0.0;
            }
        }
        z.version = 0;
        z
    }

    pub fn dims(&self) -> &NicDims {
        &self.dims
    }

    fn embed_token(&self, token: usize) -> Vec<f64> {
        let d = self.dims.embed_dim;
        let mut x = vec![0.0; d];
        for (k, xv) in x.iter_mut().enumerate() {
            *xv = self.w_embed.get(k, token);
        }
        x
    }

    fn adapt_image(&self, feature: &DenseVector) -> Result<Vec<f64>> {
        if feature.dim() != self.dims.feature_dim {
            return Err(Error::Shape(format!(
                "image feature dim {} vs adapter dim {}",
                feature.dim(),
                self.dims.feature_dim
            )));
        }
        let d = self.dims.embed_dim;
        let mut x = vec![0.0; d];
        for (k, xv) in x.iter_mut().enumerate() {
            let row = self.w_image.row(k);
            let mut s = 0.0;
            for (j, f) in feature.values().iter().enumerate() {
                s += row[j] * f;
            }
            *xv = s;
        }
        Ok(x)
    }

    fn check_token(&self, token: usize) -> Result<()> {
        if token >= self.dims.vocab_size {
            return Err(Error::TokenOutOfRange {
                id: token,
                size: self.dims.vocab_size,
            });
        }
        Ok(())
    }
}

impl ParamSet for LstmParams {
    fn fields(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("w_ix", self.w_ix.values()),
            ("w_fx", self.w_fx.values()),
            ("w_ox", self.w_ox.values()),
            ("w_cx", self.w_cx.values()),
            ("w_im", self.w_im.values()),
            ("w_fm", self.w_fm.values()),
            ("w_om", self.w_om.values()),
            ("w_cm", self.w_cm.values()),
            ("w_embed", self.w_embed.values()),
            ("w_image", self.w_image.values()),
            ("w_out", self.w_out.values()),
        ]
    }

    fn fields_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        self.version += 1;
        vec![
            ("w_ix", self.w_ix.values_mut()),
            ("w_fx", self.w_fx.values_mut()),
            ("w_ox", self.w_ox.values_mut()),
            ("w_cx", self.w_cx.values_mut()),
            ("w_im", self.w_im.values_mut()),
            ("w_fm", self.w_fm.values_mut()),
            ("w_om", self.w_om.values_mut()),
            ("w_cm", self.w_cm.values_mut()),
            ("w_embed", self.w_embed.values_mut()),
            ("w_image", self.w_image.values_mut()),
            ("w_out", self.w_out.values_mut()),
        ]
    }
}

/// One training pair: a precomputed image feature and the caption token
/// sequence `S_0..S_N`, beginning `<bos>` and ending `<eos>`.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionExample {
    feature: DenseVector,
    tokens: Vec<usize>,
}

impl CaptionExample {
    pub fn new(feature: DenseVector, tokens: Vec<usize>) -> Result<CaptionExample> {
        if tokens.len() < 2 || tokens[0] != BOS || *tokens.last().unwrap() != EOS {
            return Err(Error::Contract(
                "caption must begin with <bos> and end with <eos>".into(),
            ));
        }
        if tokens.len() > MAX_SEQUENCE_LEN {
            return Err(Error::Contract(format!(
                "caption length {} exceeds the {} cap",
                tokens.len(),
                MAX_SEQUENCE_LEN
            )));
        }
        Ok(CaptionExample { feature, tokens })
    }

    pub fn feature(&self) -> &DenseVector {
        &self.feature
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    /// Number of scored prediction positions.
    pub fn scored_len(&self) -> usize {
        self.tokens.len() - 1
    }
}

fn matvec_into(m: &DenseMatrix, x: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        let row = m.row(r);
        let mut s = 0.0;
        for (k, xv) in x.iter().enumerate() {
            s += row[k] * xv;
        }
        *o += s;
    }
}

/// One LSTM step:
/// gates from `x_t` and `m_{t-1}`, cell `c_t = f . c_{t-1} + i . g`,
/// output `m_t = o . c_t`, and `p = softmax(W_out m_t)`.
pub fn lstm_step(
    x: &DenseVector,
    m_prev: &DenseVector,
    c_prev: &DenseVector,
    params: &LstmParams,
) -> Result<(DenseVector, DenseVector, DenseVector)> {
    let h = params.dims.hidden_dim;
    if x.dim() != params.dims.embed_dim || m_prev.dim() != h || c_prev.dim() != h {
        return Err(Error::Shape(format!(
            "lstm_step: x {} m {} c {}",
            x.dim(),
            m_prev.dim(),
            c_prev.dim()
        )));
    }
    let step = raw_step(params, x.values(), m_prev.values(), c_prev.values());
    let mut logits = vec![0.0; params.dims.vocab_size];
    matvec_into(&params.w_out, &step.m, &mut logits);
    let p = softmax(&DenseVector::from(logits));
    Ok((
        DenseVector::from(step.m),
        DenseVector::from(step.c),
        p,
    ))
}

struct RawStep {
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    c: Vec<f64>,
    m: Vec<f64>,
}

fn raw_step(params: &LstmParams, x: &[f64], m_prev: &[f64], c_prev: &[f64]) -> RawStep {
    let h = params.dims.hidden_dim;
    let mut a_i = vec![0.0; h];
    let mut a_f = vec![0.0; h];
    let mut a_o = vec![0.0; h];
    let mut a_g = vec![0.0; h];
    matvec_into(&params.w_ix, x, &mut a_i);
    matvec_into(&params.w_im, m_prev, &mut a_i);
    matvec_into(&params.w_fx, x, &mut a_f);
    matvec_into(&params.w_fm, m_prev, &mut a_f);
    matvec_into(&params.w_ox, x, &mut a_o);
    matvec_into(&params.w_om, m_prev, &mut a_o);
    matvec_into(&params.w_cx, x, &mut a_g);
    matvec_into(&params.w_cm, m_prev, &mut a_g);

    let i: Vec<f64> = a_i.iter().map(|v| sigmoid(*v)).collect();
    let f: Vec<f64> = a_f.iter().map(|v| sigmoid(*v)).collect();
    let o: Vec<f64> = a_o.iter().map(|v| sigmoid(*v)).collect();
    let g: Vec<f64> = a_g.iter().map(|v| v.tanh()).collect();
    let mut c = vec![0.0; h];
    for k in 0..h {
        c[k] = f[k] * c_prev[k] + i[k] * g[k];
    }
    let mut m = vec![0.0; h];
    for k in 0..h {
        m[k] = o[k] * c[k];
    }
    RawStep { i, f, o, g, c, m }
}

enum StepInput {
    Image,
    Word(usize),
}

struct StepCache {
    input: StepInput,
    x: Vec<f64>,
    m_prev: Vec<f64>,
    c_prev: Vec<f64>,
    raw: RawStep,
    /// Hidden state fed to the output map (dropout applied if any).
    m_masked: Vec<f64>,
    /// Probabilities and scored target; absent on the image step.
    scored: Option<(Vec<f64>, usize)>,
}

/// Teacher-forced forward pass: the image feature initializes the
/// recurrence at step -1 (unscored), then each ground-truth token is fed
/// and the next one scored. `masks`, when present, holds one dropout
/// scale vector per scored step, applied to `m_t` before the output map.
fn forward_example(
    example: &CaptionExample,
    params: &LstmParams,
    masks: Option<&[Vec<f64>]>,
) -> Result<(f64, Vec<StepCache>)> {
    for &t in example.tokens() {
        params.check_token(t)?;
    }
    if let Some(masks) = masks {
        if masks.len() != example.scored_len() {
            return Err(Error::Shape(format!(
                "{} dropout masks for {} scored steps",
                masks.len(),
                example.scored_len()
            )));
        }
    }
    let h = params.dims.hidden_dim;
    let mut caches = Vec::with_capacity(example.tokens().len());
    let mut m = vec![0.0; h];
    let mut c = vec![0.0; h];
    let mut log_lik = 0.0;

    let x_image = params.adapt_image(example.feature())?;
    let raw = raw_step(params, &x_image, &m, &c);
    let (m_next, c_next) = (raw.m.clone(), raw.c.clone());
    caches.push(StepCache {
        input: StepInput::Image,
        x: x_image,
        m_prev: m,
        c_prev: c,
        m_masked: raw.m.clone(),
        raw,
        scored: None,
    });
    m = m_next;
    c = c_next;

    for (k, window) in example.tokens().windows(2).enumerate() {
        let (token, target) = (window[0], window[1]);
        let x = params.embed_token(token);
        let raw = raw_step(params, &x, &m, &c);
        let m_masked: Vec<f64> = match masks {
            Some(masks) => raw
                .m
                .iter()
                .zip(masks[k].iter())
                .map(|(v, s)| v * s)
                .collect(),
            None => raw.m.clone(),
        };
        let mut logits = vec![0.0; params.dims.vocab_size];
        matvec_into(&params.w_out, &m_masked, &mut logits);
        let p = softmax(&DenseVector::from(logits));
        log_lik += p.values()[target].ln();
        let (m_next, c_next) = (raw.m.clone(), raw.c.clone());
        caches.push(StepCache {
            input: StepInput::Word(token),
            x,
            m_prev: m,
            c_prev: c,
            raw,
            m_masked,
            scored: Some((p.values().to_vec(), target)),
        });
        m = m_next;
        c = c_next;
    }
    Ok((log_lik, caches))
}

/// Gradients of the negative log-likelihood of one example.
fn backward_example(
    example: &CaptionExample,
    params: &LstmParams,
    caches: &[StepCache],
    masks: Option<&[Vec<f64>]>,
    grads: &mut LstmParams,
) {
    let h = params.dims.hidden_dim;
    let mut dm_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];

    let mut scored_idx = caches.iter().filter(|s| s.scored.is_some()).count();
    for step in caches.iter().rev() {
        let mut dm = dm_next.clone();
        if let Some((p, target)) = &step.scored {
            scored_idx -= 1;
            // d(-log p[target])/dlogits = p - onehot(target)
            let mut dlogits = p.clone();
            dlogits[*target] -= 1.0;
            for (r, dl) in dlogits.iter().enumerate() {
                if *dl == 0.0 {
                    continue;
                }
                let row = grads.w_out.row_mut(r);
                for (k, mv) in step.m_masked.iter().enumerate() {
                    row[k] += dl * mv;
                }
            }
            let mut dm_masked = vec![0.0; h];
            for (k, dmv) in dm_masked.iter_mut().enumerate() {
                let mut s = 0.0;
                for (r, dl) in dlogits.iter().enumerate() {
                    s += params.w_out.get(r, k) * dl;
                }
                *dmv = s;
            }
            match masks {
                Some(masks) => {
                    for k in 0..h {
                        dm[k] += dm_masked[k] * masks[scored_idx][k];
                    }
                }
                None => {
                    for k in 0..h {
                        dm[k] += dm_masked[k];
                    }
                }
            }
        }

        let raw = &step.raw;
        let mut dc = dc_next.clone();
        let mut da_i = vec![0.0; h];
        let mut da_f = vec![0.0; h];
        let mut da_o = vec![0.0; h];
        let mut da_g = vec![0.0; h];
        for k in 0..h {
            let do_k = dm[k] * raw.c[k];
            dc[k] += dm[k] * raw.o[k];
            let di = dc[k] * raw.g[k];
            let dg = dc[k] * raw.i[k];
            let df = dc[k] * step.c_prev[k];
            da_i[k] = di * raw.i[k] * (1.0 - raw.i[k]);
            da_f[k] = df * raw.f[k] * (1.0 - raw.f[k]);
            da_o[k] = do_k * raw.o[k] * (1.0 - raw.o[k]);
            da_g[k] = dg * (1.0 - raw.g[k] * raw.g[k]);
        }

        let accumulate = |gx: &mut DenseMatrix, gm: &mut DenseMatrix, da: &[f64], step: &StepCache| {
            for (r, d) in da.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let rx = gx.row_mut(r);
                for (k, xv) in step.x.iter().enumerate() {
                    rx[k] += d * xv;
                }
                let rm = gm.row_mut(r);
                for (k, mv) in step.m_prev.iter().enumerate() {
                    rm[k] += d * mv;
                }
            }
        };
        accumulate(&mut grads.w_ix, &mut grads.w_im, &da_i, step);
        accumulate(&mut grads.w_fx, &mut grads.w_fm, &da_f, step);
        accumulate(&mut grads.w_ox, &mut grads.w_om, &da_o, step);
        accumulate(&mut grads.w_cx, &mut grads.w_cm, &da_g, step);

        let d = params.dims.embed_dim;
        let mut dx = vec![0.0; d];
        let mut dm_prev = vec![0.0; h];
        for (k, dv) in dx.iter_mut().enumerate() {
            let mut s = 0.0;
            for (r, v) in da_i.iter().enumerate() {
                s += params.w_ix.get(r, k) * v;
            }
            for (r, v) in da_f.iter().enumerate() {
                s += params.w_fx.get(r, k) * v;
            }
            for (r, v) in da_o.iter().enumerate() {
                s += params.w_ox.get(r, k) * v;
            }
            for (r, v) in da_g.iter().enumerate() {
                s += params.w_cx.get(r, k) * v;
            }
            *dv = s;
        }
        for (k, dv) in dm_prev.iter_mut().enumerate() {
            let mut s = 0.0;
            for (r, v) in da_i.iter().enumerate() {
                s += params.w_im.get(r, k) * v;
            }
            for (r, v) in da_f.iter().enumerate() {
                s += params.w_fm.get(r, k) * v;
            }
            for (r, v) in da_o.iter().enumerate() {
                s += params.w_om.get(r, k) * v;
            }
            for (r, v) in da_g.iter().enumerate() {
                s += params.w_cm.get(r, k) * v;
            }
            *dv = s;
        }

        match step.input {
            StepInput::Image => {
                for (k, dv) in dx.iter().enumerate() {
                    let row = grads.w_image.row_mut(k);
                    for (j, f) in example.feature().values().iter().enumerate() {
                        row[j] += dv * f;
                    }
                }
            }
            StepInput::Word(token) => {
                for (k, dv) in dx.iter().enumerate() {
                    let v = grads.w_embed.get(k, token);
                    grads.w_embed.set(k, token, v + dv);
                }
            }
        }

        for k in 0..h {
            dc_next[k] = dc[k] * raw.f[k];
        }
        dm_next = dm_prev;
    }
}

/// Teacher-forced log-likelihood `sum_t log p_t(S_t)` over positions
/// `1..N`; the image step initializes the recurrence but scores nothing.
pub fn caption_log_likelihood(example: &CaptionExample, params: &LstmParams) -> Result<f64> {
    let (ll, _) = forward_example(example, params, None)?;
    Ok(ll)
}

/// Mean over the batch of the negative caption log-likelihood, with
/// analytic gradients for every parameter matrix.
pub fn nic_loss(batch: &[CaptionExample], params: &LstmParams) -> Result<(f64, LstmParams)> {
    nic_loss_with_masks(batch, params, None)
}

fn nic_loss_with_masks(
    batch: &[CaptionExample],
    params: &LstmParams,
    masks: Option<&[Vec<Vec<f64>>]>,
) -> Result<(f64, LstmParams)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("caption batch".into()));
    }
    let per_example: Vec<Result<(f64, LstmParams)>> = batch
        .par_iter()
        .enumerate()
        .map(|(idx, example)| {
            let m = masks.map(|mm| mm[idx].as_slice());
            let (ll, caches) = forward_example(example, params, m)?;
            let mut grads = params.zeros_like();
            backward_example(example, params, &caches, m, &mut grads);
            Ok((-ll, grads))
        })
        .collect();

    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut total = params.zeros_like();
    for r in per_example {
        let (l, g) = r?;
        loss += l * scale;
        total.add_scaled(&g, scale);
    }
    Ok((loss, total))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NicTrainSettings {
    #[serde(default)]
    pub optimizer: RmsPropSettings,
    #[serde(default = "default_nic_dropout")]
    pub dropout_rate: f64,
    #[serde(default = "default_nic_batch")]
    pub batch_size: usize,
    #[serde(default = "default_nic_epochs")]
    pub epochs: usize,
}

fn default_nic_dropout() -> f64 {
    0.2
}

fn default_nic_batch() -> usize {
    64
}

fn default_nic_epochs() -> usize {
    50
}

impl Default for NicTrainSettings {
    fn default() -> Self {
        NicTrainSettings {
            optimizer: RmsPropSettings::default(),
            dropout_rate: default_nic_dropout(),
            batch_size: default_nic_batch(),
            epochs: default_nic_epochs(),
        }
    }
}

/// Seeded mini-batch RMSProp with dropout on `m_t` before the output
/// map. Returns the trained parameters and the deterministic
/// (dropout-free) mean per-token loss evaluated after every epoch.
pub fn train_nic(
    dataset: &[CaptionExample],
    dims: NicDims,
    settings: &NicTrainSettings,
    seed: u64,
) -> Result<(LstmParams, Vec<f64>)> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("caption dataset".into()));
    }
    if settings.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let mut params = LstmParams::init(dims, seed)?;
    let mut opt = RmsProp::new(settings.optimizer, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e1c_0de5);
    let keep = 1.0 - settings.dropout_rate;
    let h = dims.hidden_dim;

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut trace = Vec::with_capacity(settings.epochs);
    for _ in 0..settings.epochs {
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(settings.batch_size) {
            let batch: Vec<CaptionExample> =
                chunk.iter().map(|&i| dataset[i].clone()).collect();
            let masks: Option<Vec<Vec<Vec<f64>>>> = if settings.dropout_rate > 0.0 {
                Some(
                    batch
                        .iter()
                        .map(|ex| {
                            (0..ex.scored_len())
                                .map(|_| {
                                    (0..h)
                                        .map(|_| {
                                            if rng.gen_bool(keep) {
                                                1.0 / keep
                                            } else {
                                                0.0
                                            }
                                        })
                                        .collect()
                                })
                                .collect()
                        })
                        .collect(),
                )
            } else {
                None
            };
            let (_, grads) = nic_loss_with_masks(&batch, &params, masks.as_deref())?;
            opt.step(&mut params, &grads);
        }
        trace.push(mean_token_loss(dataset, &params)?);
    }
    Ok((params, trace))
}

/// Dropout-free mean negative log-likelihood per scored token.
pub fn mean_token_loss(dataset: &[CaptionExample], params: &LstmParams) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("caption dataset".into()));
    }
    let mut total = 0.0;
    let mut tokens = 0usize;
    for ex in dataset {
        total -= caption_log_likelihood(ex, params)?;
        tokens += ex.scored_len();
    }
    Ok(total / tokens as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Greedy,
    Beam(usize),
}

/// Decode a caption for one image feature. Greedy takes the argmax at
/// every step (ties to the lowest token id); beam search keeps the k
/// best partial sequences by total log-probability. Decoding stops at
/// `<eos>` or the sequence cap. The returned tokens exclude the markers.
pub fn decode(
    feature: &DenseVector,
    params: &LstmParams,
    mode: DecodeMode,
) -> Result<Vec<usize>> {
    match mode {
        DecodeMode::Greedy => decode_greedy(feature, params),
        DecodeMode::Beam(k) => {
            if k == 0 {
                return Err(Error::Config("beam width must be >= 1".into()));
            }
            decode_beam(feature, params, k)
        }
    }
}

fn start_state(
    feature: &DenseVector,
    params: &LstmParams,
) -> Result<(DenseVector, DenseVector, DenseVector)> {
    let h = params.dims.hidden_dim;
    let x_image = DenseVector::from(params.adapt_image(feature)?);
    let (m, c, _) = lstm_step(&x_image, &DenseVector::zeros(h), &DenseVector::zeros(h), params)?;
    let bos = DenseVector::from(params.embed_token(BOS));
    lstm_step(&bos, &m, &c, params)
}

fn argmax_lowest(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate().skip(1) {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

fn decode_greedy(feature: &DenseVector, params: &LstmParams) -> Result<Vec<usize>> {
    let (mut m, mut c, mut p) = start_state(feature, params)?;
    let mut out = Vec::new();
    while out.len() < MAX_DECODE_TOKENS {
        let token = argmax_lowest(p.values());
        if token == EOS {
            break;
        }
        out.push(token);
        let x = DenseVector::from(params.embed_token(token));
        let next = lstm_step(&x, &m, &c, params)?;
        m = next.0;
        c = next.1;
        p = next.2;
    }
    Ok(out)
}

#[derive(Clone)]
struct Beam {
    tokens: Vec<usize>,
    log_prob: f64,
    m: DenseVector,
    c: DenseVector,
    p: DenseVector,
    finished: bool,
}

fn decode_beam(feature: &DenseVector, params: &LstmParams, width: usize) -> Result<Vec<usize>> {
    let (m, c, p) = start_state(feature, params)?;
    let mut beams = vec![Beam {
        tokens: Vec::new(),
        log_prob: 0.0,
        m,
        c,
        p,
        finished: false,
    }];

    for _ in 0..MAX_DECODE_TOKENS {
        if beams.iter().all(|b| b.finished) {
            break;
        }
        // (log_prob, source beam, token) — carried finished beams keep
        // their terminal <eos> as the tie-break token
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (bi, beam) in beams.iter().enumerate() {
            if beam.finished {
                candidates.push((beam.log_prob, bi, EOS));
                continue;
            }
            for (token, prob) in beam.p.values().iter().enumerate() {
                candidates.push((beam.log_prob + prob.ln(), bi, token));
            }
        }
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        candidates.truncate(width);

        let mut next = Vec::with_capacity(candidates.len());
        for (log_prob, bi, token) in candidates {
            let src = &beams[bi];
            if src.finished {
                next.push(src.clone());
                continue;
            }
            if token == EOS {
                let mut done = src.clone();
                done.log_prob = log_prob;
                done.finished = true;
                next.push(done);
                continue;
            }
            let x = DenseVector::from(params.embed_token(token));
            let (m, c, p) = lstm_step(&x, &src.m, &src.c, params)?;
            let mut tokens = src.tokens.clone();
            tokens.push(token);
            next.push(Beam {
                tokens,
                log_prob,
                m,
                c,
                p,
                finished: false,
            });
        }
        beams = next;
    }
    Ok(beams.into_iter().next().map(|b| b.tokens).unwrap_or_default())
}

/// Caption an item from its frame features: decode each frame, score
/// every candidate caption by its mean per-token log-probability under
/// the model, and keep the best (ties go to the first frame).
pub fn caption_item(
    frames: &[DenseVector],
    params: &LstmParams,
    mode: DecodeMode,
) -> Result<Vec<usize>> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("item has no frame features".into()));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for frame in frames {
        let tokens = decode(frame, params, mode)?;
        let mut sequence = Vec::with_capacity(tokens.len() + 2);
        sequence.push(BOS);
        sequence.extend_from_slice(&tokens);
        sequence.push(EOS);
        let example = CaptionExample::new(frame.clone(), sequence)?;
        let score = caption_log_likelihood(&example, params)? / example.scored_len() as f64;
        match &best {
            Some((current, _)) if score <= *current => {}
            _ => best = Some((score, tokens)),
        }
    }
    Ok(best.expect("at least one frame").1)
}
