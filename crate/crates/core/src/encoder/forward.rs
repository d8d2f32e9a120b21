use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::EncoderConfig;
use super::weights::{EncoderVars, EncoderWeights, LayerVars};
use crate::error::{Error, Result};
use crate::numerics::{c, Axis, Scalar, Tape, Tensor, Var};
use crate::seed::Rng as SeedRng;
use crate::tokenizers::TokenSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Smiles,
    Iupac,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Smiles => "smiles",
            Branch::Iupac => "iupac",
        }
    }
}

impl std::str::FromStr for Branch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smiles" => Ok(Branch::Smiles),
            "iupac" => Ok(Branch::Iupac),
            other => Err(Error::invalid(format!("unknown branch {other:?} (expected smiles or iupac)"))),
        }
    }
}

/// Projected embedding of one molecule string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub id: String,
    pub branch: Branch,
    pub values: Vec<f32>,
}

/// Values recorded by one forward pass.
#[derive(Debug, Clone)]
pub struct EncoderTrace {
    /// Post-layernorm output of every layer (`len × d_model`).
    pub layer_outputs: Vec<Var>,
    /// Masked mean of the last layer (`1 × d_model`).
    pub pooled: Var,
    /// Projected fingerprint (`1 × d_proj`).
    pub z: Var,
}

fn check_sequence(cfg: &EncoderConfig, seq: &TokenSequence) -> Result<()> {
    if seq.ids.len() != seq.mask.len() {
        return Err(Error::invalid("token sequence ids and mask differ in length"));
    }
    if seq.ids.len() > cfg.max_len {
        return Err(Error::Length { len: seq.ids.len(), max: cfg.max_len });
    }
    if let Some(&id) = seq.ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(Error::Vocab { id: id as usize, vocab_size: cfg.vocab_size });
    }
    Ok(())
}

/// Additive attention mask: 0 for real keys, −∞ for padded keys.
fn key_mask<T: Scalar>(mask: &[u8]) -> Tensor<T> {
    let n = mask.len();
    let mut data = Vec::with_capacity(n * n);
    for _ in 0..n {
        data.extend(mask.iter().map(|&m| if m != 0 { T::zero() } else { T::neg_infinity() }));
    }
    Tensor::matrix(n, n, data).expect("square mask")
}

fn dropout<T: Scalar>(tape: &mut Tape<T>, x: Var, p: f64, rng: Option<&mut SeedRng>) -> Result<Var> {
    let Some(rng) = rng else { return Ok(x) };
    if p <= 0.0 {
        return Ok(x);
    }
    let keep = c::<T>(1.0 / (1.0 - p));
    let shape = tape.shape(x).to_vec();
    let n = shape.iter().product();
    let data = (0..n).map(|_| if rng.random::<f64>() < p { T::zero() } else { keep }).collect();
    let m = tape.constant(Tensor::new(shape, data)?);
    tape.mul(x, m)
}

/// Scaled dot-product attention over `num_heads` heads, output projection,
/// residual connection and layer normalization.
pub fn multi_head_attention<T: Scalar>(
    tape: &mut Tape<T>,
    layer: &LayerVars,
    cfg: &EncoderConfig,
    hidden: Var,
    mask: &[u8],
) -> Result<Var> {
    let (n, d) = match tape.shape(hidden) {
        [n, d] => (*n, *d),
        s => return Err(Error::shape("multi-head-attention", format!("hidden must be rank 2, got {s:?}"))),
    };
    if d != cfg.d_model || mask.len() != n {
        return Err(Error::shape(
            "multi-head-attention",
            format!("hidden {n}x{d}, mask {}, d_model {}", mask.len(), cfg.d_model),
        ));
    }
    attention_block(tape, layer, cfg, hidden, mask, None)
}

fn attention_block<T: Scalar>(
    tape: &mut Tape<T>,
    layer: &LayerVars,
    cfg: &EncoderConfig,
    hidden: Var,
    mask: &[u8],
    rng: Option<&mut SeedRng>,
) -> Result<Var> {
    let q = tape.matmul(hidden, layer.wq)?;
    let q = tape.add_row(q, layer.bq)?;
    let k = tape.matmul(hidden, layer.wk)?;
    let k = tape.add_row(k, layer.bk)?;
    let v = tape.matmul(hidden, layer.wv)?;
    let v = tape.add_row(v, layer.bv)?;
    let dh = cfg.head_dim();
    let scale = c::<T>(1.0 / (dh as f64).sqrt());
    let masked = mask.contains(&0);
    let mask_var = masked.then(|| tape.constant(key_mask(mask)));
    let mut heads = Vec::with_capacity(cfg.num_heads);
    for h in 0..cfg.num_heads {
        let qh = tape.slice_cols(q, h * dh, dh)?;
        let kh = tape.slice_cols(k, h * dh, dh)?;
        let vh = tape.slice_cols(v, h * dh, dh)?;
        let kt = tape.transpose(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let mut scores = tape.scale(scores, scale);
        if let Some(m) = mask_var {
            scores = tape.add(scores, m)?;
        }
        let attn = tape.softmax_rows(scores)?;
        heads.push(tape.matmul(attn, vh)?);
    }
    let cat = if heads.len() == 1 { heads[0] } else { tape.concat(&heads, Axis::Cols)? };
    let out = tape.matmul(cat, layer.wo)?;
    let out = tape.add_row(out, layer.bo)?;
    let out = dropout(tape, out, cfg.dropout, rng)?;
    let res = tape.add(hidden, out)?;
    tape.layernorm_rows(res, layer.ln1_gamma, layer.ln1_beta)
}

fn feed_forward<T: Scalar>(
    tape: &mut Tape<T>,
    layer: &LayerVars,
    cfg: &EncoderConfig,
    hidden: Var,
    rng: Option<&mut SeedRng>,
) -> Result<Var> {
    let h = tape.matmul(hidden, layer.w_ff1)?;
    let h = tape.add_row(h, layer.b_ff1)?;
    let h = tape.gelu(h);
    let h = tape.matmul(h, layer.w_ff2)?;
    let h = tape.add_row(h, layer.b_ff2)?;
    let h = dropout(tape, h, cfg.dropout, rng)?;
    let res = tape.add(hidden, h)?;
    tape.layernorm_rows(res, layer.ln2_gamma, layer.ln2_beta)
}

/// Arithmetic mean of the unmasked rows of `hidden`.
pub fn masked_mean_pool<T: Scalar>(tape: &mut Tape<T>, hidden: Var, mask: &[u8]) -> Result<Var> {
    tape.masked_mean_rows(hidden, mask)
}

/// Token + position embedding, Transformer layers, masked mean pooling and
/// projection, recorded on `tape`. `dropout_rng` enables dropout (training).
pub fn forward<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &EncoderVars,
    cfg: &EncoderConfig,
    seq: &TokenSequence,
    mut dropout_rng: Option<&mut SeedRng>,
) -> Result<EncoderTrace> {
    check_sequence(cfg, seq)?;
    let positions: Vec<u32> = (0..seq.ids.len() as u32).collect();
    let tok = tape.embedding(vars.token_emb, &seq.ids)?;
    let pos = tape.embedding(vars.pos_emb, &positions)?;
    let mut h = tape.add(tok, pos)?;
    let mut layer_outputs = Vec::with_capacity(vars.layers.len());
    for layer in &vars.layers {
        h = attention_block(tape, layer, cfg, h, &seq.mask, dropout_rng.as_deref_mut())?;
        h = feed_forward(tape, layer, cfg, h, dropout_rng.as_deref_mut())?;
        layer_outputs.push(h);
    }
    let pooled = masked_mean_pool(tape, h, &seq.mask)?;
    let z = tape.matmul(pooled, vars.proj_w)?;
    let z = tape.add_row(z, vars.proj_b)?;
    Ok(EncoderTrace { layer_outputs, pooled, z })
}

/// One language branch: configuration plus weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<T> {
    pub config: EncoderConfig,
    pub weights: EncoderWeights<T>,
}

/// Pooled activations of every layer plus the fingerprint, for one sequence.
#[derive(Debug, Clone)]
pub struct LayerActivations<T> {
    pub layers: Vec<Vec<T>>,
    pub z: Vec<T>,
}

const INFERENCE_CHUNK: usize = 64;

impl<T: Scalar> Encoder<T> {
    pub fn new<R: Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        Ok(Encoder { config, weights: EncoderWeights::init(&config, rng) })
    }

    pub fn from_weights(config: EncoderConfig, weights: EncoderWeights<T>) -> Result<Self> {
        config.validate()?;
        let w = EncoderWeights::from_tensors(&config, weights.tensors().into_iter().cloned().collect())?;
        Ok(Encoder { config, weights: w })
    }

    /// Fingerprint values for one sequence.
    pub fn encode(&self, seq: &TokenSequence) -> Result<Vec<T>> {
        Ok(self.encode_batch(std::slice::from_ref(seq))?.pop().expect("one output"))
    }

    pub fn encode_batch(&self, seqs: &[TokenSequence]) -> Result<Vec<Vec<T>>> {
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(INFERENCE_CHUNK) {
            let mut tape = Tape::new();
            let vars = self.weights.register(&mut tape, false);
            for seq in chunk {
                let trace = forward(&mut tape, &vars, &self.config, seq, None)?;
                out.push(tape.value(trace.z).data().to_vec());
            }
        }
        Ok(out)
    }

    /// Masked-mean pooled output of each layer, plus the projection output.
    pub fn layer_activations(&self, seqs: &[TokenSequence]) -> Result<Vec<LayerActivations<T>>> {
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(INFERENCE_CHUNK) {
            let mut tape = Tape::new();
            let vars = self.weights.register(&mut tape, false);
            for seq in chunk {
                let trace = forward(&mut tape, &vars, &self.config, seq, None)?;
                let mut layers = Vec::with_capacity(trace.layer_outputs.len());
                for &h in &trace.layer_outputs {
                    let p = tape.masked_mean_rows(h, &seq.mask)?;
                    layers.push(tape.value(p).data().to_vec());
                }
                out.push(LayerActivations { layers, z: tape.value(trace.z).data().to_vec() });
            }
        }
        Ok(out)
    }

    pub fn cast<U: Scalar>(&self) -> Encoder<U> {
        Encoder { config: self.config, weights: self.weights.cast() }
    }
}

impl Encoder<f32> {
    pub fn fingerprint(&self, id: &str, branch: Branch, seq: &TokenSequence) -> Result<Fingerprint> {
        Ok(Fingerprint { id: id.to_owned(), branch, values: self.encode(seq)? })
    }
}
