use dualmol_core::encoder::{masked_mean_pool, multi_head_attention, Encoder, EncoderConfig, EncoderWeights, LayerWeights};
use dualmol_core::numerics::{Tape, Tensor};
use dualmol_core::seed::substream;
use dualmol_core::tokenizers::TokenSequence;
use rand::Rng;

type Mat = Vec<Vec<f64>>;

fn mat(t: &Tensor<f64>) -> Mat {
    let cols = t.shape()[1];
    t.data().chunks(cols).map(<[f64]>::to_vec).collect()
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i][p] * b[p][j];
            }
            out[i][j] = s;
        }
    }
    out
}

fn add_bias(a: &Mat, b: &Tensor<f64>) -> Mat {
    a.iter().map(|r| r.iter().zip(b.data()).map(|(x, y)| x + y).collect()).collect()
}

fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect()).collect()
}

fn layernorm(a: &Mat, g: &Tensor<f64>, b: &Tensor<f64>) -> Mat {
    a.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let sd = (var + 1e-5).sqrt();
            r.iter().enumerate().map(|(j, x)| (x - mean) / sd * g.data()[j] + b.data()[j]).collect()
        })
        .collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

fn attention(h: &Mat, l: &LayerWeights<f64>, heads: usize, mask: &[u8]) -> Mat {
    let q = add_bias(&matmul(h, &mat(&l.wq)), &l.bq);
    let k = add_bias(&matmul(h, &mat(&l.wk)), &l.bk);
    let v = add_bias(&matmul(h, &mat(&l.wv)), &l.bv);
    let n = h.len();
    let d = h[0].len();
    let dh = d / heads;
    let mut cat = vec![vec![0.0; d]; n];
    for head in 0..heads {
        let off = head * dh;
        for i in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|j| {
                    if mask[j] == 0 {
                        return f64::NEG_INFINITY;
                    }
                    (0..dh).map(|c| q[i][off + c] * k[j][off + c]).sum::<f64>() / (dh as f64).sqrt()
                })
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in 0..dh {
                cat[i][off + c] = (0..n).map(|j| e[j] / z * v[j][off + c]).sum();
            }
        }
    }
    let out = add_bias(&matmul(&cat, &mat(&l.wo)), &l.bo);
    layernorm(&add(h, &out), &l.ln1_gamma, &l.ln1_beta)
}

fn feed_forward(h: &Mat, l: &LayerWeights<f64>) -> Mat {
    let a = add_bias(&matmul(h, &mat(&l.w_ff1)), &l.b_ff1);
    let a: Mat = a.iter().map(|r| r.iter().map(|&x| gelu(x)).collect()).collect();
    let b = add_bias(&matmul(&a, &mat(&l.w_ff2)), &l.b_ff2);
    layernorm(&add(h, &b), &l.ln2_gamma, &l.ln2_beta)
}

fn masked_mean(h: &Mat, mask: &[u8]) -> Vec<f64> {
    let d = h[0].len();
    let real: Vec<&Vec<f64>> = h.iter().zip(mask).filter(|(_, &m)| m != 0).map(|(r, _)| r).collect();
    (0..d).map(|c| real.iter().map(|r| r[c]).sum::<f64>() / real.len() as f64).collect()
}

fn oracle_forward(w: &EncoderWeights<f64>, cfg: &EncoderConfig, seq: &TokenSequence) -> Vec<f64> {
    let tok = mat(&w.token_emb);
    let pos = mat(&w.pos_emb);
    let mut h: Mat =
        seq.ids.iter().enumerate().map(|(i, &id)| tok[id as usize].iter().zip(&pos[i]).map(|(a, b)| a + b).collect()).collect();
    for l in &w.layers {
        h = attention(&h, l, cfg.num_heads, &seq.mask);
        h = feed_forward(&h, l);
    }
    let pooled = masked_mean(&h, &seq.mask);
    add_bias(&matmul(&vec![pooled], &mat(&w.proj_w)), &w.proj_b).remove(0)
}

/// Init weights, then jitter every tensor so biases and layernorm affines
/// are non-trivial.
fn jittered(cfg: &EncoderConfig, seed: u64) -> EncoderWeights<f64> {
    let mut rng = substream(seed, "oracle/weights");
    let mut w = EncoderWeights::<f64>::init(cfg, &mut rng);
    for t in w.tensors_mut() {
        for x in t.data_mut() {
            *x = *x * 10.0 + rng.random_range(-0.3..0.3);
        }
    }
    w
}

fn seq(ids: &[u32], real: usize) -> TokenSequence {
    TokenSequence { ids: ids.to_vec(), mask: (0..ids.len()).map(|i| u8::from(i < real)).collect() }
}

#[test]
fn full_forward_matches_straight_line_oracle() {
    let cfg = EncoderConfig { num_layers: 2, num_heads: 4, d_model: 16, d_ff: 32, max_len: 10, d_proj: 8, vocab_size: 12, dropout: 0.0 };
    for seed in 0..4 {
        let w = jittered(&cfg, seed);
        let enc = Encoder::from_weights(cfg, w.clone()).unwrap();
        for s in [seq(&[2, 5, 7, 3], 4), seq(&[2, 11, 4, 4, 9, 3, 0, 0, 0], 6), seq(&[2, 3], 2)] {
            let got = enc.encode(&s).unwrap();
            let want = oracle_forward(&w, &cfg, &s);
            assert_eq!(got.len(), cfg.d_proj);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-10, "seed {seed}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn single_head_attention_on_three_tokens() {
    let cfg = EncoderConfig { num_layers: 1, num_heads: 1, d_model: 4, d_ff: 4, max_len: 3, d_proj: 2, vocab_size: 4, dropout: 0.0 };
    let w = jittered(&cfg, 11);
    let mut rng = substream(11, "oracle/hidden");
    let h = Tensor::randn(&[3, 4], 1.0, &mut rng);
    for mask in [[1u8, 1, 1], [1, 1, 0]] {
        let mut tape = Tape::new();
        let vars = w.register(&mut tape, false);
        let hv = tape.constant(h.clone());
        let out = multi_head_attention(&mut tape, &vars.layers[0], &cfg, hv, &mask).unwrap();
        let want = attention(&mat(&h), &w.layers[0], 1, &mask);
        for (a, b) in tape.value(out).data().iter().zip(want.iter().flatten()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}

#[test]
fn masked_mean_ignores_padding_rows() {
    let mut rng = substream(3, "oracle/pool");
    let h = Tensor::randn(&[5, 3], 1.0, &mut rng);
    let mask = [1u8, 0, 1, 1, 0];
    let mut tape = Tape::new();
    let hv = tape.constant(h.clone());
    let p = masked_mean_pool(&mut tape, hv, &mask).unwrap();
    let want = masked_mean(&mat(&h), &mask);
    for (a, b) in tape.value(p).data().iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn padding_does_not_change_fingerprint() {
    let cfg = EncoderConfig { num_layers: 2, num_heads: 2, d_model: 8, d_ff: 16, max_len: 12, d_proj: 4, vocab_size: 10, dropout: 0.0 };
    let enc = Encoder::from_weights(cfg, jittered(&cfg, 2)).unwrap();
    let short = enc.encode(&seq(&[2, 5, 6, 3], 4)).unwrap();
    let padded = enc.encode(&seq(&[2, 5, 6, 3, 0, 0, 0, 0], 4)).unwrap();
    let garbage = enc.encode(&seq(&[2, 5, 6, 3, 9, 1, 7], 4)).unwrap();
    for ((a, b), c) in short.iter().zip(&padded).zip(&garbage) {
        assert!((a - b).abs() < 1e-12);
        assert!((a - c).abs() < 1e-12);
    }
}

#[test]
fn length_and_vocab_errors() {
    let cfg = EncoderConfig { num_layers: 1, num_heads: 1, d_model: 4, d_ff: 4, max_len: 4, d_proj: 2, vocab_size: 5, dropout: 0.0 };
    let enc = Encoder::from_weights(cfg, jittered(&cfg, 0)).unwrap();
    assert!(enc.encode(&seq(&[2, 1, 1, 1, 3], 5)).is_err());
    assert!(enc.encode(&seq(&[2, 7, 3], 3)).is_err());
}

#[test]
fn permuting_tokens_changes_fingerprint() {
    let cfg = EncoderConfig { num_layers: 1, num_heads: 2, d_model: 8, d_ff: 16, max_len: 8, d_proj: 4, vocab_size: 10, dropout: 0.0 };
    let enc = Encoder::from_weights(cfg, jittered(&cfg, 4)).unwrap();
    let a = enc.encode(&seq(&[2, 5, 6, 7, 3], 5)).unwrap();
    let b = enc.encode(&seq(&[2, 7, 6, 5, 3], 5)).unwrap();
    assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-6));
    let again = enc.encode_batch(&[seq(&[2, 5, 6, 7, 3], 5), seq(&[2, 5, 6, 7, 3], 5)]).unwrap();
    assert_eq!(again[0], a);
    assert_eq!(again[1], a);
}

#[test]
fn identical_rows_attend_identically_and_empty_pool_errors() {
    let cfg = EncoderConfig { num_layers: 1, num_heads: 2, d_model: 4, d_ff: 4, max_len: 4, d_proj: 2, vocab_size: 4, dropout: 0.0 };
    let w = jittered(&cfg, 6);
    let row = [0.3, -1.2, 0.7, 2.0];
    let h = Tensor::matrix(3, 4, row.iter().cycle().take(12).copied().collect()).unwrap();
    let mut tape = Tape::new();
    let vars = w.register(&mut tape, false);
    let hv = tape.constant(h);
    let out = multi_head_attention(&mut tape, &vars.layers[0], &cfg, hv, &[1, 1, 1]).unwrap();
    let v = tape.value(out);
    for r in 1..3 {
        for c in 0..4 {
            assert!((v.get(r, c) - v.get(0, c)).abs() < 1e-12);
        }
    }
    assert!(masked_mean_pool(&mut tape, hv, &[0, 0, 0]).is_err());
}
