use rand::Rng;

use super::config::EncoderConfig;
use crate::numerics::{c, Scalar, Tape, Tensor, Var};

const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T> {
    pub wq: Tensor<T>,
    pub bq: Tensor<T>,
    pub wk: Tensor<T>,
    pub bk: Tensor<T>,
    pub wv: Tensor<T>,
    pub bv: Tensor<T>,
    pub wo: Tensor<T>,
    pub bo: Tensor<T>,
    pub ln1_gamma: Tensor<T>,
    pub ln1_beta: Tensor<T>,
    pub w_ff1: Tensor<T>,
    pub b_ff1: Tensor<T>,
    pub w_ff2: Tensor<T>,
    pub b_ff2: Tensor<T>,
    pub ln2_gamma: Tensor<T>,
    pub ln2_beta: Tensor<T>,
}

const LAYER_FIELDS: [&str; 16] = [
    "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln1_gamma", "ln1_beta", "w_ff1", "b_ff1", "w_ff2", "b_ff2",
    "ln2_gamma", "ln2_beta",
];

impl<T: Scalar> LayerWeights<T> {
    fn init<R: Rng + ?Sized>(cfg: &EncoderConfig, rng: &mut R) -> Self {
        let d = cfg.d_model;
        let f = cfg.d_ff;
        let m = |r, cols, rng: &mut R| Tensor::randn(&[r, cols], INIT_STD, rng);
        let z = |n| Tensor::zeros(&[1, n]);
        LayerWeights {
            wq: m(d, d, rng),
            bq: z(d),
            wk: m(d, d, rng),
            bk: z(d),
            wv: m(d, d, rng),
            bv: z(d),
            wo: m(d, d, rng),
            bo: z(d),
            ln1_gamma: Tensor::full(&[1, d], T::one()),
            ln1_beta: z(d),
            w_ff1: m(d, f, rng),
            b_ff1: z(f),
            w_ff2: m(f, d, rng),
            b_ff2: z(d),
            ln2_gamma: Tensor::full(&[1, d], T::one()),
            ln2_beta: z(d),
        }
    }

    fn tensors(&self) -> [&Tensor<T>; 16] {
        [
            &self.wq, &self.bq, &self.wk, &self.bk, &self.wv, &self.bv, &self.wo, &self.bo, &self.ln1_gamma,
            &self.ln1_beta, &self.w_ff1, &self.b_ff1, &self.w_ff2, &self.b_ff2, &self.ln2_gamma, &self.ln2_beta,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor<T>; 16] {
        [
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln1_gamma,
            &mut self.ln1_beta,
            &mut self.w_ff1,
            &mut self.b_ff1,
            &mut self.w_ff2,
            &mut self.b_ff2,
            &mut self.ln2_gamma,
            &mut self.ln2_beta,
        ]
    }
}

/// All learnable parameters of one branch: token and positional tables, the
/// Transformer layers, and the final projection.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights<T> {
    pub token_emb: Tensor<T>,
    pub pos_emb: Tensor<T>,
    pub layers: Vec<LayerWeights<T>>,
    pub proj_w: Tensor<T>,
    pub proj_b: Tensor<T>,
}

impl<T: Scalar> EncoderWeights<T> {
    /// Normal(0, 0.02) matrices, zero biases, unit layernorm gains.
    pub fn init<R: Rng + ?Sized>(cfg: &EncoderConfig, rng: &mut R) -> Self {
        let token_emb = Tensor::randn(&[cfg.vocab_size, cfg.d_model], INIT_STD, rng);
        let pos_emb = Tensor::randn(&[cfg.max_len, cfg.d_model], INIT_STD, rng);
        let layers = (0..cfg.num_layers).map(|_| LayerWeights::init(cfg, rng)).collect();
        let proj_w = Tensor::randn(&[cfg.d_model, cfg.d_proj], INIT_STD, rng);
        let proj_b = Tensor::zeros(&[1, cfg.d_proj]);
        EncoderWeights { token_emb, pos_emb, layers, proj_w, proj_b }
    }

    /// Parameter names in canonical order.
    pub fn names(num_layers: usize) -> Vec<String> {
        let mut names = vec!["token_emb".to_string(), "pos_emb".to_string()];
        for l in 0..num_layers {
            names.extend(LAYER_FIELDS.iter().map(|f| format!("layers.{l}.{f}")));
        }
        names.push("proj_w".into());
        names.push("proj_b".into());
        names
    }

    /// Expected shape of every parameter, in canonical order.
    pub fn shapes(cfg: &EncoderConfig) -> Vec<Vec<usize>> {
        let (d, f) = (cfg.d_model, cfg.d_ff);
        let mut shapes = vec![vec![cfg.vocab_size, d], vec![cfg.max_len, d]];
        for _ in 0..cfg.num_layers {
            shapes.extend([
                vec![d, d],
                vec![1, d],
                vec![d, d],
                vec![1, d],
                vec![d, d],
                vec![1, d],
                vec![d, d],
                vec![1, d],
                vec![1, d],
                vec![1, d],
                vec![d, f],
                vec![1, f],
                vec![f, d],
                vec![1, d],
                vec![1, d],
                vec![1, d],
            ]);
        }
        shapes.push(vec![d, cfg.d_proj]);
        shapes.push(vec![1, cfg.d_proj]);
        shapes
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = vec![&self.token_emb, &self.pos_emb];
        for l in &self.layers {
            out.extend(l.tensors());
        }
        out.push(&self.proj_w);
        out.push(&self.proj_b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![&mut self.token_emb, &mut self.pos_emb];
        for l in &mut self.layers {
            out.extend(l.tensors_mut());
        }
        out.push(&mut self.proj_w);
        out.push(&mut self.proj_b);
        out
    }

    /// Rebuilds from tensors in canonical order.
    pub fn from_tensors(cfg: &EncoderConfig, tensors: Vec<Tensor<T>>) -> crate::Result<Self> {
        let shapes = Self::shapes(cfg);
        if tensors.len() != shapes.len() {
            return Err(crate::Error::shape("encoder-weights", format!("{} tensors for {} slots", tensors.len(), shapes.len())));
        }
        for ((t, s), name) in tensors.iter().zip(&shapes).zip(Self::names(cfg.num_layers)) {
            if t.shape() != s.as_slice() {
                return Err(crate::Error::shape("encoder-weights", format!("{name}: shape {:?}, expected {s:?}", t.shape())));
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().unwrap();
        let token_emb = next();
        let pos_emb = next();
        let mut layers = Vec::with_capacity(cfg.num_layers);
        for _ in 0..cfg.num_layers {
            layers.push(LayerWeights {
                wq: next(),
                bq: next(),
                wk: next(),
                bk: next(),
                wv: next(),
                bv: next(),
                wo: next(),
                bo: next(),
                ln1_gamma: next(),
                ln1_beta: next(),
                w_ff1: next(),
                b_ff1: next(),
                w_ff2: next(),
                b_ff2: next(),
                ln2_gamma: next(),
                ln2_beta: next(),
            });
        }
        let proj_w = next();
        let proj_b = next();
        Ok(EncoderWeights { token_emb, pos_emb, layers, proj_w, proj_b })
    }

    pub fn cast<U: Scalar>(&self) -> EncoderWeights<U> {
        EncoderWeights {
            token_emb: self.token_emb.cast(),
            pos_emb: self.pos_emb.cast(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerWeights {
                    wq: l.wq.cast(),
                    bq: l.bq.cast(),
                    wk: l.wk.cast(),
                    bk: l.bk.cast(),
                    wv: l.wv.cast(),
                    bv: l.bv.cast(),
                    wo: l.wo.cast(),
                    bo: l.bo.cast(),
                    ln1_gamma: l.ln1_gamma.cast(),
                    ln1_beta: l.ln1_beta.cast(),
                    w_ff1: l.w_ff1.cast(),
                    b_ff1: l.b_ff1.cast(),
                    w_ff2: l.w_ff2.cast(),
                    b_ff2: l.b_ff2.cast(),
                    ln2_gamma: l.ln2_gamma.cast(),
                    ln2_beta: l.ln2_beta.cast(),
                })
                .collect(),
            proj_w: self.proj_w.cast(),
            proj_b: self.proj_b.cast(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Puts every parameter on `tape`, differentiable when `trainable`.
    pub fn register(&self, tape: &mut Tape<T>, trainable: bool) -> EncoderVars {
        let vars: Vec<Var> = self
            .tensors()
            .into_iter()
            .map(|t| if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) })
            .collect();
        EncoderVars::from_flat(vars, self.layers.len())
    }

    /// Largest absolute parameter value (diagnostics).
    pub fn max_abs(&self) -> T {
        self.tensors().iter().flat_map(|t| t.data().iter()).fold(c::<T>(0.0), |m, &x| m.max(x.abs()))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
    pub ln1_gamma: Var,
    pub ln1_beta: Var,
    pub w_ff1: Var,
    pub b_ff1: Var,
    pub w_ff2: Var,
    pub b_ff2: Var,
    pub ln2_gamma: Var,
    pub ln2_beta: Var,
}

/// Tape handles for an [`EncoderWeights`], same layout.
#[derive(Debug, Clone)]
pub struct EncoderVars {
    pub token_emb: Var,
    pub pos_emb: Var,
    pub layers: Vec<LayerVars>,
    pub proj_w: Var,
    pub proj_b: Var,
    flat: Vec<Var>,
}

impl EncoderVars {
    /// Rebuilds the layout from handles in canonical order.
    pub fn from_flat(flat: Vec<Var>, num_layers: usize) -> Self {
        let mut i = 2;
        let layers = (0..num_layers)
            .map(|_| {
                let v = &flat[i..i + 16];
                i += 16;
                LayerVars {
                    wq: v[0],
                    bq: v[1],
                    wk: v[2],
                    bk: v[3],
                    wv: v[4],
                    bv: v[5],
                    wo: v[6],
                    bo: v[7],
                    ln1_gamma: v[8],
                    ln1_beta: v[9],
                    w_ff1: v[10],
                    b_ff1: v[11],
                    w_ff2: v[12],
                    b_ff2: v[13],
                    ln2_gamma: v[14],
                    ln2_beta: v[15],
                }
            })
            .collect();
        EncoderVars { token_emb: flat[0], pos_emb: flat[1], layers, proj_w: flat[i], proj_b: flat[i + 1], flat }
    }

    /// Handles in canonical parameter order.
    pub fn all(&self) -> &[Var] {
        &self.flat
    }
}
