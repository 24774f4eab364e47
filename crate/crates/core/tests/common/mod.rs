//! Test-only oracles and generators shared by the integration tests.
//!
//! Nothing here calls into the library's forward, backward or softmax code;
//! the oracles are independent re-derivations.

#![allow(dead_code)]

pub mod fixtures;
pub mod oracle;
pub mod props;

use lateral_bench::dataset::{PuzzleInstance, Subtask, Variant};
use lateral_bench::minimcq::{batch_loss, build_vocab, grad, EncoderConfig, ModelParams, Vocabulary};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// 46 words plus the 4 special tokens.
pub fn small_vocab() -> Vocabulary {
    let words: Vec<String> = (0..46).map(|i| format!("w{i}")).collect();
    build_vocab(&[words.join(" ")], 1).unwrap()
}

/// Every parameter drawn away from the trained-from-scratch regime so that
/// all gradient paths carry signal.
pub fn random_params(config: EncoderConfig, rng: &mut ChaCha8Rng) -> ModelParams {
    let mut params = ModelParams::zeros(config);
    let weight = Normal::new(0.0, 0.35).unwrap();
    let gain = Normal::new(1.0, 0.2).unwrap();
    let bias = Normal::new(0.0, 0.1).unwrap();
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    for (name, tensor) in names.iter().zip(params.tensors_mut()) {
        let dist = if name.ends_with("gain") {
            gain
        } else if name.contains("bias") || name.rsplit('.').next().is_some_and(|n| n.starts_with('b')) {
            bias
        } else {
            weight
        };
        tensor.iter_mut().for_each(|x| *x = dist.sample(rng));
    }
    params
}

pub fn random_instance(vocab: &Vocabulary, rng: &mut ChaCha8Rng, n_choices: usize) -> PuzzleInstance {
    let words: Vec<&str> = vocab.tokens()[4..].iter().map(String::as_str).collect();
    let mut phrase = |len: usize| -> String {
        (0..len).map(|_| *words.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
    };
    let question = phrase(4);
    let choices = (0..n_choices).map(|_| phrase(2)).collect();
    PuzzleInstance {
        id: "rand".into(),
        group_id: "rand".into(),
        variant: Variant::Original,
        subtask: Subtask::Word,
        question,
        choices,
        gold_index: rng.random_range(0..n_choices),
    }
}

pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: String,
    pub coordinates: usize,
}

/// Denominator floor for [`relative_error`]. The attention key bias has an
/// exactly zero gradient (softmax is shift invariant), where central
/// differences only return rounding noise around 1e-12.
pub const REL_ERROR_FLOOR: f64 = 1e-7;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Central finite differences over every parameter coordinate.
pub fn gradient_check(params: &ModelParams, batch: &[PuzzleInstance], vocab: &Vocabulary, h: f64) -> GradCheckReport {
    let analytic = grad(params, batch, vocab).unwrap().to_flat();
    let names: Vec<(String, usize)> = params.tensors().iter().map(|(n, t)| (n.clone(), t.len())).collect();
    let base = params.to_flat();
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        coordinates: base.len(),
    };
    let mut flat = base.clone();
    let mut index = 0;
    for (name, len) in names {
        for k in 0..len {
            flat[index] = base[index] + h;
            probe.set_flat(&flat).unwrap();
            let plus = batch_loss(&probe, batch, vocab).unwrap();
            flat[index] = base[index] - h;
            probe.set_flat(&flat).unwrap();
            let minus = batch_loss(&probe, batch, vocab).unwrap();
            flat[index] = base[index];

            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(analytic[index], numeric);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = format!("{name}[{k}] analytic {:e} numeric {:e}", analytic[index], numeric);
            }
            index += 1;
        }
    }
    report
}

fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let denom = (var + 1e-5).sqrt();
    x.iter().zip(gain).zip(bias).map(|((v, g), b)| (v - mean) / denom * g + b).collect()
}

fn vec_mat(x: &[f64], w: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for (k, xv) in x.iter().enumerate() {
        for j in 0..cols {
            out[j] += xv * w[k * cols + j];
        }
    }
    out
}

fn gelu(u: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * u * (1.0 + (c * (u + 0.044715 * u.powi(3))).tanh())
}

/// Straight-line forward pass over unpadded tokens, written against the raw
/// parameter slices.
pub fn reference_forward(params: &ModelParams, ids: &[u32]) -> Vec<f64> {
    let c = params.config;
    let d = c.d_model;
    let dh = d / c.n_heads;
    let tensors = params.tensors();
    let get = |name: &str| -> &[f64] { tensors.iter().find(|(n, _)| n == name).unwrap().1 };
    let tok = get("token_embedding");
    let pos = get("position_embedding");

    let mut x: Vec<Vec<f64>> = ids
        .iter()
        .enumerate()
        .map(|(p, id)| (0..d).map(|j| tok[*id as usize * d + j] + pos[p * d + j]).collect())
        .collect();

    for l in 0..c.n_layers {
        let t = |n: &str| get(&format!("layers.{l}.{n}"));
        let add = |a: Vec<f64>, b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<f64>>();

        let h1: Vec<Vec<f64>> = x.iter().map(|r| layer_norm(r, t("ln1_gain"), t("ln1_bias"))).collect();
        let q: Vec<Vec<f64>> = h1.iter().map(|r| add(vec_mat(r, t("wq"), d), t("bq"))).collect();
        let k: Vec<Vec<f64>> = h1.iter().map(|r| add(vec_mat(r, t("wk"), d), t("bk"))).collect();
        let v: Vec<Vec<f64>> = h1.iter().map(|r| add(vec_mat(r, t("wv"), d), t("bv"))).collect();
        let n = ids.len();
        let mut concat = vec![vec![0.0; d]; n];
        for head in 0..c.n_heads {
            let cols = head * dh..(head + 1) * dh;
            for i in 0..n {
                let scores: Vec<f64> = (0..n)
                    .map(|j| cols.clone().map(|m| q[i][m] * k[j][m]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let max = scores.iter().cloned().fold(f64::MIN, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let z: f64 = e.iter().sum();
                for m in cols.clone() {
                    concat[i][m] = (0..n).map(|j| e[j] / z * v[j][m]).sum();
                }
            }
        }
        for i in 0..n {
            let attn = add(vec_mat(&concat[i], t("wo"), d), t("bo"));
            x[i] = add(attn, &x[i]);
            let h2 = layer_norm(&x[i], t("ln2_gain"), t("ln2_bias"));
            let pre = add(vec_mat(&h2, t("w1"), c.d_ff), t("b1"));
            let act: Vec<f64> = pre.into_iter().map(gelu).collect();
            let ffn = add(vec_mat(&act, t("w2"), d), t("b2"));
            x[i] = add(ffn, &x[i]);
        }
    }
    layer_norm(&x[0], get("final_ln_gain"), get("final_ln_bias"))
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn softmax_extended(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::MIN, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z = compensated_sum(exps.iter().copied());
    exps.iter().map(|e| e / z).collect()
}

pub fn log_softmax_extended(logits: &[f64], index: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::MIN, f64::max);
    let z = compensated_sum(logits.iter().map(|l| (l - max).exp()));
    (logits[index] - max) - z.ln()
}

/// Deterministic stand-in for a temperature-sensitive model: the answer is a
/// pure function of (prompt, temperature), gold for most pairs and shifted
/// by one otherwise, more often at higher temperature.
pub fn temperature_responder(
    instances: &[PuzzleInstance],
) -> impl Fn(&lateral_bench::llm::mock::MockRequest) -> lateral_bench::llm::mock::MockReply + Send + Sync + 'static {
    use std::hash::{Hash, Hasher};
    let key = lateral_bench::llm::mock::AnswerKey::new(instances, &lateral_bench::llm::PromptTemplate::default());
    move |request| {
        let inst = key.instance_for(request).expect("prompt from the dataset");
        let t = request.temperature().unwrap_or(0.0);
        let mut h = std::collections::hash_map::DefaultHasher::new();
        inst.id.hash(&mut h);
        ((t * 10.0).round() as i64).hash(&mut h);
        let miss = (h.finish() % 10) < (2 + (t * 5.0).round() as u64);
        let answer = if miss { (inst.gold_index + 1) % inst.choices.len() } else { inst.gold_index };
        lateral_bench::llm::mock::MockReply::Content(format!("{{\"answer\": {}}}", answer + 1))
    }
}
