//! Pre-layer-norm transformer encoder over a single question/choice pair.
//!
//! ```text
//! x0      = tok_emb[ids] + pos_emb[0..T]
//! x'      = x + MHA(LN1(x))          (PAD keys get -inf before softmax)
//! x''     = x' + W2 gelu(W1 LN2(x') + b1) + b2
//! feature = LNf(x_L[0])              (CLS state, no pooler)
//! logit   = w . feature + b
//! ```
//!
//! The backward pass is written out by hand and checked against central
//! finite differences in the tests.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::encode::PairSequence;
use super::MiniMcqError;

const LN_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub seed: u64,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), MiniMcqError> {
        let dims = [
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_layers", self.n_layers),
            ("d_ff", self.d_ff),
            ("max_len", self.max_len),
            ("vocab_size", self.vocab_size),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(MiniMcqError::InvalidConfig(format!("{name} must be at least 1")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(MiniMcqError::InvalidConfig(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Lists every tensor of a layer as `(name, slice)` in a fixed order.
macro_rules! layer_tensors {
    ($layer:expr, $as_slice:ident) => {
        [
            ("ln1_gain", $layer.ln1_gain.$as_slice()),
            ("ln1_bias", $layer.ln1_bias.$as_slice()),
            ("wq", $layer.wq.$as_slice()),
            ("bq", $layer.bq.$as_slice()),
            ("wk", $layer.wk.$as_slice()),
            ("bk", $layer.bk.$as_slice()),
            ("wv", $layer.wv.$as_slice()),
            ("bv", $layer.bv.$as_slice()),
            ("wo", $layer.wo.$as_slice()),
            ("bo", $layer.bo.$as_slice()),
            ("ln2_gain", $layer.ln2_gain.$as_slice()),
            ("ln2_bias", $layer.ln2_bias.$as_slice()),
            ("w1", $layer.w1.$as_slice()),
            ("b1", $layer.b1.$as_slice()),
            ("w2", $layer.w2.$as_slice()),
            ("b2", $layer.b2.$as_slice()),
        ]
    };
}

impl LayerParams {
    fn zeros(d: usize, f: usize) -> Self {
        LayerParams {
            ln1_gain: Array1::zeros(d),
            ln1_bias: Array1::zeros(d),
            wq: Array2::zeros((d, d)),
            bq: Array1::zeros(d),
            wk: Array2::zeros((d, d)),
            bk: Array1::zeros(d),
            wv: Array2::zeros((d, d)),
            bv: Array1::zeros(d),
            wo: Array2::zeros((d, d)),
            bo: Array1::zeros(d),
            ln2_gain: Array1::zeros(d),
            ln2_bias: Array1::zeros(d),
            w1: Array2::zeros((d, f)),
            b1: Array1::zeros(f),
            w2: Array2::zeros((f, d)),
            b2: Array1::zeros(d),
        }
    }
}

/// All weights of the encoder and the scalar scoring head. Also used as the
/// container for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: EncoderConfig,
    pub token_embedding: Array2<f64>,
    pub position_embedding: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub final_ln_gain: Array1<f64>,
    pub final_ln_bias: Array1<f64>,
    pub head_weight: Array1<f64>,
    pub head_bias: f64,
}

impl ModelParams {
    /// Every tensor zero, including layer-norm gains.
    pub fn zeros(config: EncoderConfig) -> Self {
        let d = config.d_model;
        ModelParams {
            config,
            token_embedding: Array2::zeros((config.vocab_size, d)),
            position_embedding: Array2::zeros((config.max_len, d)),
            layers: (0..config.n_layers).map(|_| LayerParams::zeros(d, config.d_ff)).collect(),
            final_ln_gain: Array1::zeros(d),
            final_ln_bias: Array1::zeros(d),
            head_weight: Array1::zeros(d),
            head_bias: 0.0,
        }
    }

    /// Weight matrices and embeddings ~ N(0, 0.02); layer-norm gains 1;
    /// biases and the scoring head 0, so the untrained model is exactly uniform.
    pub fn init(config: EncoderConfig) -> Result<Self, MiniMcqError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut fill = |a: &mut [f64]| a.iter_mut().for_each(|x| *x = normal.sample(&mut rng));

        let mut params = ModelParams::zeros(config);
        fill(params.token_embedding.as_slice_mut().unwrap());
        fill(params.position_embedding.as_slice_mut().unwrap());
        for layer in &mut params.layers {
            layer.ln1_gain.fill(1.0);
            layer.ln2_gain.fill(1.0);
            for w in [&mut layer.wq, &mut layer.wk, &mut layer.wv, &mut layer.wo, &mut layer.w1, &mut layer.w2] {
                fill(w.as_slice_mut().unwrap());
            }
        }
        params.final_ln_gain.fill(1.0);
        Ok(params)
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams::zeros(self.config)
    }

    /// Named views of every tensor in a fixed order; the head bias is last.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = vec![
            ("token_embedding".to_string(), self.token_embedding.as_slice().unwrap()),
            ("position_embedding".to_string(), self.position_embedding.as_slice().unwrap()),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, slice) in layer_tensors!(layer, as_slice) {
                out.push((format!("layers.{i}.{name}"), slice.unwrap()));
            }
        }
        out.push(("final_ln_gain".into(), self.final_ln_gain.as_slice().unwrap()));
        out.push(("final_ln_bias".into(), self.final_ln_bias.as_slice().unwrap()));
        out.push(("head_weight".into(), self.head_weight.as_slice().unwrap()));
        out.push(("head_bias".into(), std::slice::from_ref(&self.head_bias)));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![
            self.token_embedding.as_slice_mut().unwrap(),
            self.position_embedding.as_slice_mut().unwrap(),
        ];
        for layer in &mut self.layers {
            for (_, slice) in layer_tensors!(layer, as_slice_mut) {
                out.push(slice.unwrap());
            }
        }
        out.push(self.final_ln_gain.as_slice_mut().unwrap());
        out.push(self.final_ln_bias.as_slice_mut().unwrap());
        out.push(self.head_weight.as_slice_mut().unwrap());
        out.push(std::slice::from_mut(&mut self.head_bias));
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|(_, t)| t.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<(), MiniMcqError> {
        if values.len() != self.num_params() {
            return Err(MiniMcqError::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                values.len()
            )));
        }
        let mut rest = values;
        for tensor in self.tensors_mut() {
            let (head, tail) = rest.split_at(tensor.len());
            tensor.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    /// Adds `scale * other` element-wise.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for (dst, (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += scale * s);
        }
    }

    /// Checks tensor shapes against the stored config.
    pub fn check_shapes(&self) -> Result<(), MiniMcqError> {
        let c = &self.config;
        c.validate()?;
        let (d, f) = (c.d_model, c.d_ff);
        let mismatch = |what: &str| Err(MiniMcqError::ShapeMismatch(what.to_string()));
        if self.token_embedding.dim() != (c.vocab_size, d) {
            return mismatch("token_embedding");
        }
        if self.position_embedding.dim() != (c.max_len, d) {
            return mismatch("position_embedding");
        }
        if self.layers.len() != c.n_layers {
            return mismatch("layer count");
        }
        for layer in &self.layers {
            let square = [&layer.wq, &layer.wk, &layer.wv, &layer.wo];
            if square.iter().any(|w| w.dim() != (d, d)) || layer.w1.dim() != (d, f) || layer.w2.dim() != (f, d) {
                return mismatch("layer weight");
            }
            let vecs = [
                &layer.ln1_gain,
                &layer.ln1_bias,
                &layer.bq,
                &layer.bk,
                &layer.bv,
                &layer.bo,
                &layer.ln2_gain,
                &layer.ln2_bias,
                &layer.b2,
            ];
            if vecs.iter().any(|v| v.len() != d) || layer.b1.len() != f {
                return mismatch("layer bias");
            }
        }
        if self.final_ln_gain.len() != d || self.final_ln_bias.len() != d || self.head_weight.len() != d {
            return mismatch("final layer");
        }
        Ok(())
    }
}

struct LnCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> (Array2<f64>, LnCache) {
    let (rows, d) = x.dim();
    let mut xhat = Array2::zeros((rows, d));
    let mut rstd = Array1::zeros(rows);
    for r in 0..rows {
        let row = x.row(r);
        let mean = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = inv;
        xhat.row_mut(r).assign(&row.mapv(|v| (v - mean) * inv));
    }
    let out = &xhat * gain + bias;
    (out, LnCache { xhat, rstd })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    gain: &Array1<f64>,
    dgain: &mut Array1<f64>,
    dbias: &mut Array1<f64>,
) -> Array2<f64> {
    *dgain += &(dy * &cache.xhat).sum_axis(Axis(0));
    *dbias += &dy.sum_axis(Axis(0));
    let dxhat = dy * gain;
    let d = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.dim());
    for r in 0..dy.nrows() {
        let g = dxhat.row(r);
        let xh = cache.xhat.row(r);
        let mean_g = g.sum() / d;
        let mean_gx = g.dot(&xh) / d;
        let row = (&g - mean_g - &(&xh * mean_gx)) * cache.rstd[r];
        dx.row_mut(r).assign(&row);
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_A * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + GELU_A * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * u * u)
}

/// `x · w` computed one row at a time, so a row's result never depends on
/// how many other rows (PAD included) are present.
fn rowwise_dot(x: &Array2<f64>, w: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), w.ncols()));
    for (i, row) in x.rows().into_iter().enumerate() {
        out.row_mut(i).assign(&row.dot(w));
    }
    out
}

fn softmax_rows_masked(scores: &mut Array2<f64>, key_mask: &[bool]) {
    for mut row in scores.rows_mut() {
        for (j, keep) in key_mask.iter().enumerate() {
            if !keep {
                row[j] = f64::NEG_INFINITY;
            }
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        // sequential sum: masked zeros must not change the rounding
        let sum: f64 = row.iter().sum();
        row /= sum;
    }
}

struct LayerCache {
    ln1: LnCache,
    h1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    attn_concat: Array2<f64>,
    ln2: LnCache,
    h2: Array2<f64>,
    pre_act: Array2<f64>,
    act: Array2<f64>,
}

/// Intermediate values of one forward pass, kept for the backward pass.
pub struct ForwardCache {
    token_ids: Vec<u32>,
    layers: Vec<LayerCache>,
    final_ln: LnCache,
    pub feature: Array1<f64>,
}

fn check_pair(params: &ModelParams, pair: &PairSequence) -> Result<Vec<bool>, MiniMcqError> {
    let c = &params.config;
    if pair.token_ids.len() != pair.attention_mask.len() {
        return Err(MiniMcqError::ShapeMismatch("token_ids and attention_mask differ in length".into()));
    }
    if pair.is_empty() || pair.len() > c.max_len {
        return Err(MiniMcqError::ShapeMismatch(format!(
            "sequence length {} outside 1..={}",
            pair.len(),
            c.max_len
        )));
    }
    if pair.attention_mask[0] != 1 {
        return Err(MiniMcqError::ShapeMismatch("position 0 must be a real token".into()));
    }
    if let Some(id) = pair.token_ids.iter().find(|id| **id as usize >= c.vocab_size) {
        return Err(MiniMcqError::ShapeMismatch(format!("token id {id} >= vocab size {}", c.vocab_size)));
    }
    Ok(pair.attention_mask.iter().map(|m| *m == 1).collect())
}

fn head_cols(head: usize, dh: usize) -> ndarray::Slice {
    ndarray::Slice::from(head * dh..(head + 1) * dh)
}

pub fn forward_cached(params: &ModelParams, pair: &PairSequence) -> Result<ForwardCache, MiniMcqError> {
    let key_mask = check_pair(params, pair)?;
    let c = &params.config;
    let t = pair.len();
    let dh = c.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    let mut x = Array2::zeros((t, c.d_model));
    for (pos, id) in pair.token_ids.iter().enumerate() {
        let row = &params.token_embedding.row(*id as usize) + &params.position_embedding.row(pos);
        x.row_mut(pos).assign(&row);
    }

    let mut layers = Vec::with_capacity(c.n_layers);
    for lp in &params.layers {
        let (h1, ln1) = layer_norm(&x, &lp.ln1_gain, &lp.ln1_bias);
        let q = rowwise_dot(&h1, &lp.wq) + &lp.bq;
        let k = rowwise_dot(&h1, &lp.wk) + &lp.bk;
        let v = rowwise_dot(&h1, &lp.wv) + &lp.bv;
        let mut attn_concat = Array2::zeros((t, c.d_model));
        let mut probs = Vec::with_capacity(c.n_heads);
        for head in 0..c.n_heads {
            let cols = head_cols(head, dh);
            let qh = q.slice_axis(Axis(1), cols);
            let kh = k.slice_axis(Axis(1), cols);
            let vh = v.slice_axis(Axis(1), cols);
            let mut scores = Array2::from_shape_fn((t, t), |(i, j)| qh.row(i).dot(&kh.row(j)) * scale);
            softmax_rows_masked(&mut scores, &key_mask);
            let mut out = attn_concat.slice_axis_mut(Axis(1), cols);
            for i in 0..t {
                let mut acc = out.row_mut(i);
                for j in (0..t).filter(|j| key_mask[*j]) {
                    acc.scaled_add(scores[[i, j]], &vh.row(j));
                }
            }
            probs.push(scores);
        }
        x = x + rowwise_dot(&attn_concat, &lp.wo) + &lp.bo;

        let (h2, ln2) = layer_norm(&x, &lp.ln2_gain, &lp.ln2_bias);
        let pre_act = rowwise_dot(&h2, &lp.w1) + &lp.b1;
        let act = pre_act.mapv(gelu);
        x = x + rowwise_dot(&act, &lp.w2) + &lp.b2;

        layers.push(LayerCache {
            ln1,
            h1,
            q,
            k,
            v,
            probs,
            attn_concat,
            ln2,
            h2,
            pre_act,
            act,
        });
    }

    let cls = x.slice(s![0..1, ..]).to_owned();
    let (feature, final_ln) = layer_norm(&cls, &params.final_ln_gain, &params.final_ln_bias);
    Ok(ForwardCache {
        token_ids: pair.token_ids.clone(),
        layers,
        final_ln,
        feature: feature.row(0).to_owned(),
    })
}

/// Final-layer CLS state of the pair (the pair's feature vector).
pub fn forward(params: &ModelParams, pair: &PairSequence) -> Result<Array1<f64>, MiniMcqError> {
    Ok(forward_cached(params, pair)?.feature)
}

/// Scalar score of a feature vector under the dense head.
pub fn head_logit(params: &ModelParams, feature: ArrayView1<f64>) -> f64 {
    params.head_weight.dot(&feature) + params.head_bias
}

/// Accumulates into `grads` the gradient of `dlogit * logit(pair)`.
pub fn backward(params: &ModelParams, cache: &ForwardCache, dlogit: f64, grads: &mut ModelParams) {
    let c = &params.config;
    let t = cache.token_ids.len();
    let dh = c.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    grads.head_weight.scaled_add(dlogit, &cache.feature);
    grads.head_bias += dlogit;

    let dfeature = (&params.head_weight * dlogit).insert_axis(Axis(0));
    let dcls = layer_norm_backward(
        &dfeature,
        &cache.final_ln,
        &params.final_ln_gain,
        &mut grads.final_ln_gain,
        &mut grads.final_ln_bias,
    );
    let mut dx = Array2::zeros((t, c.d_model));
    dx.row_mut(0).assign(&dcls.row(0));

    for (l, lc) in cache.layers.iter().enumerate().rev() {
        let lp = &params.layers[l];
        let gl = &mut grads.layers[l];

        // feed-forward sublayer
        gl.w2 += &lc.act.t().dot(&dx);
        gl.b2 += &dx.sum_axis(Axis(0));
        let dact = dx.dot(&lp.w2.t());
        let dpre = &dact * &lc.pre_act.mapv(gelu_grad);
        gl.w1 += &lc.h2.t().dot(&dpre);
        gl.b1 += &dpre.sum_axis(Axis(0));
        let dh2 = dpre.dot(&lp.w1.t());
        dx += &layer_norm_backward(&dh2, &lc.ln2, &lp.ln2_gain, &mut gl.ln2_gain, &mut gl.ln2_bias);

        // attention sublayer
        gl.wo += &lc.attn_concat.t().dot(&dx);
        gl.bo += &dx.sum_axis(Axis(0));
        let dconcat = dx.dot(&lp.wo.t());
        let mut dq = Array2::zeros((t, c.d_model));
        let mut dk = Array2::zeros((t, c.d_model));
        let mut dv = Array2::zeros((t, c.d_model));
        for (head, probs) in lc.probs.iter().enumerate() {
            let cols = head_cols(head, dh);
            let dout = dconcat.slice_axis(Axis(1), cols);
            let vh = lc.v.slice_axis(Axis(1), cols);
            let dprobs = dout.dot(&vh.t());
            dv.slice_axis_mut(Axis(1), cols).assign(&probs.t().dot(&dout));
            let row_dot = (&dprobs * probs).sum_axis(Axis(1)).insert_axis(Axis(1));
            let dscores = probs * &(&dprobs - &row_dot) * scale;
            let qh = lc.q.slice_axis(Axis(1), cols);
            let kh = lc.k.slice_axis(Axis(1), cols);
            dq.slice_axis_mut(Axis(1), cols).assign(&dscores.dot(&kh));
            dk.slice_axis_mut(Axis(1), cols).assign(&dscores.t().dot(&qh));
        }
        gl.wq += &lc.h1.t().dot(&dq);
        gl.bq += &dq.sum_axis(Axis(0));
        gl.wk += &lc.h1.t().dot(&dk);
        gl.bk += &dk.sum_axis(Axis(0));
        gl.wv += &lc.h1.t().dot(&dv);
        gl.bv += &dv.sum_axis(Axis(0));
        let dh1 = dq.dot(&lp.wq.t()) + dk.dot(&lp.wk.t()) + dv.dot(&lp.wv.t());
        dx += &layer_norm_backward(&dh1, &lc.ln1, &lp.ln1_gain, &mut gl.ln1_gain, &mut gl.ln1_bias);
    }

    for (pos, id) in cache.token_ids.iter().enumerate() {
        let mut tok = grads.token_embedding.row_mut(*id as usize);
        tok += &dx.row(pos);
        let mut p = grads.position_embedding.row_mut(pos);
        p += &dx.row(pos);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minimcq::vocab::{CLS, PAD, SEP};

    fn config() -> EncoderConfig {
        EncoderConfig {
            d_model: 8,
            n_heads: 2,
            n_layers: 2,
            d_ff: 16,
            max_len: 12,
            vocab_size: 20,
            seed: 7,
        }
    }

    fn pair(ids: &[u32], pad: usize) -> PairSequence {
        PairSequence {
            token_ids: ids.to_vec(),
            attention_mask: vec![1; ids.len()],
        }
        .padded(pad)
    }

    #[test]
    fn config_validation() {
        let mut c = config();
        assert!(c.validate().is_ok());
        c.n_heads = 3;
        assert!(matches!(c.validate(), Err(MiniMcqError::InvalidConfig(_))));
        c.n_heads = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_weights_return_final_bias() {
        let mut params = ModelParams::zeros(config());
        params.final_ln_bias = Array1::from_iter((0..8).map(|i| i as f64 * 0.5 - 1.0));
        let feature = forward(&params, &pair(&[CLS, 5, SEP, 6, SEP], 3)).unwrap();
        assert_eq!(feature, params.final_ln_bias);
    }

    #[test]
    fn init_is_seeded_and_head_is_zero() {
        let a = ModelParams::init(config()).unwrap();
        let b = ModelParams::init(config()).unwrap();
        assert_eq!(a, b);
        assert!(a.head_weight.iter().all(|w| *w == 0.0));
        assert_eq!(a.head_bias, 0.0);
        let mut other = config();
        other.seed = 8;
        assert_ne!(ModelParams::init(other).unwrap().token_embedding, a.token_embedding);
    }

    #[test]
    fn flat_round_trip() {
        let params = ModelParams::init(config()).unwrap();
        let flat = params.to_flat();
        assert_eq!(flat.len(), params.num_params());
        let mut copy = params.zeros_like();
        copy.set_flat(&flat).unwrap();
        assert_eq!(copy, params);
        assert!(copy.set_flat(&flat[1..]).is_err());
    }

    #[test]
    fn padding_does_not_change_features() {
        let params = ModelParams::init(config()).unwrap();
        let base = forward(&params, &pair(&[CLS, 4, 9, SEP, 7, SEP], 0)).unwrap();
        for extra in 1..=6 {
            assert_eq!(forward(&params, &pair(&[CLS, 4, 9, SEP, 7, SEP], extra)).unwrap(), base);
        }
    }

    #[test]
    fn shape_errors() {
        let params = ModelParams::init(config()).unwrap();
        assert!(matches!(forward(&params, &pair(&[CLS, 99, SEP], 0)), Err(MiniMcqError::ShapeMismatch(_))));
        assert!(forward(&params, &pair(&[CLS, 4, SEP], 20)).is_err());
        let bad = PairSequence {
            token_ids: vec![CLS, SEP],
            attention_mask: vec![1],
        };
        assert!(forward(&params, &bad).is_err());
        let leading_pad = PairSequence {
            token_ids: vec![PAD, SEP],
            attention_mask: vec![0, 1],
        };
        assert!(forward(&params, &leading_pad).is_err());
    }

    #[test]
    fn gelu_derivative_matches_difference() {
        for u in [-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let numeric = (gelu(u + h) - gelu(u - h)) / (2.0 * h);
            assert!((numeric - gelu_grad(u)).abs() < 1e-8, "u={u}");
        }
    }
}
