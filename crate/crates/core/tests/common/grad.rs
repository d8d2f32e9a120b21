
use dualmol_core::contrastive::infonce_on_tape;
use dualmol_core::encoder::{forward, EncoderConfig, EncoderVars, EncoderWeights};
use dualmol_core::numerics::{grad_check, Axis, GradCheckReport, Tape, Tensor, Var};
use dualmol_core::seed::substream;
use dualmol_core::tokenizers::TokenSequence;
use dualmol_core::Result;
use rand::Rng;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

pub fn randn(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::randn(shape, 1.0, rng)
}

/// `Σ x ⊙ w` for a fixed random `w`, so every output component matters.
fn weighted_sum(tape: &mut Tape<f64>, x: Var, w: &Tensor<f64>) -> Result<Var> {
    let w = tape.constant(w.clone());
    let m = tape.mul(x, w)?;
    Ok(tape.sum_all(m))
}

fn run(params: &[Tensor<f64>], f: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var>) -> GradCheckReport {
    grad_check(params, f, H, TOL).expect("gradient check evaluates")
}

/// Checks every differentiable primitive on shapes drawn from `trial`.
pub fn primitive_reports(trial: u64) -> Vec<(&'static str, GradCheckReport)> {
    let mut rng = substream(trial, "gradcheck/primitives");
    let r = rng.random_range(1..6);
    let k = rng.random_range(1..6);
    let c = rng.random_range(2..7);
    let a = randn(&mut rng, &[r, k]);
    let a2 = randn(&mut rng, &[r, k]);
    let b = randn(&mut rng, &[k, c]);
    let bias = randn(&mut rng, &[1, k]);
    let w_rk = randn(&mut rng, &[r, k]);
    let w_rc = randn(&mut rng, &[r, c]);
    let w_kr = randn(&mut rng, &[k, r]);
    let s: f64 = rng.random_range(-2.0..2.0);
    let x = randn(&mut rng, &[r, c]);
    let gamma = randn(&mut rng, &[1, c]);
    let beta = randn(&mut rng, &[1, c]);
    let table = randn(&mut rng, &[k + 1, c]);
    let ids: Vec<u32> = (0..r + 1).map(|_| rng.random_range(0..=k as u32)).collect();
    let w_emb = randn(&mut rng, &[ids.len(), c]);
    let mut mask: Vec<u8> = (0..r).map(|_| rng.random_range(0..2)).collect();
    mask[rng.random_range(0..r)] = 1;
    let w_row = randn(&mut rng, &[1, c]);
    let z = randn(&mut rng, &[k, c]);
    let w_cols = randn(&mut rng, &[r, c + k]);
    let w_rows = randn(&mut rng, &[r + k, c]);
    let start = rng.random_range(0..c);
    let len = rng.random_range(1..=c - start);
    let w_slice = randn(&mut rng, &[r, len]);
    let targets: Vec<usize> = (0..r).map(|_| rng.random_range(0..c)).collect();
    let probs: Vec<f64> = (0..r * c).map(|_| rng.random_range(0.0..1.0)).collect();
    let reals: Vec<f64> = (0..r * c).map(|_| rng.random_range(-2.0..2.0)).collect();
    let zb = randn(&mut rng, &[r, c]);
    let tau: f64 = rng.random_range(0.05..2.0);

    vec![
        ("matmul", run(&[a.clone(), b.clone()], |t, v| {
            let m = t.matmul(v[0], v[1])?;
            weighted_sum(t, m, &w_rc)
        })),
        ("add", run(&[a.clone(), a2.clone()], |t, v| {
            let m = t.add(v[0], v[1])?;
            weighted_sum(t, m, &w_rk)
        })),
        ("add_row", run(&[a.clone(), bias.clone()], |t, v| {
            let m = t.add_row(v[0], v[1])?;
            weighted_sum(t, m, &w_rk)
        })),
        ("mul", run(&[a.clone(), a2.clone()], |t, v| {
            let m = t.mul(v[0], v[1])?;
            weighted_sum(t, m, &w_rk)
        })),
        ("scale", run(&[a.clone()], |t, v| {
            let m = t.scale(v[0], s);
            weighted_sum(t, m, &w_rk)
        })),
        ("transpose", run(&[a.clone()], |t, v| {
            let m = t.transpose(v[0])?;
            weighted_sum(t, m, &w_kr)
        })),
        ("gelu", run(&[a.clone()], |t, v| {
            let m = t.gelu(v[0]);
            weighted_sum(t, m, &w_rk)
        })),
        ("relu", run(&[a.clone()], |t, v| {
            let m = t.relu(v[0]);
            weighted_sum(t, m, &w_rk)
        })),
        ("sum_all", run(&[a.clone()], |t, v| {
            let m = t.mul(v[0], v[0])?;
            Ok(t.sum_all(m))
        })),
        ("softmax_rows", run(&[x.clone()], |t, v| {
            let m = t.softmax_rows(v[0])?;
            weighted_sum(t, m, &w_rc)
        })),
        ("layernorm_rows", run(&[x.clone(), gamma.clone(), beta.clone()], |t, v| {
            let m = t.layernorm_rows(v[0], v[1], v[2])?;
            weighted_sum(t, m, &w_rc)
        })),
        ("l2_normalize_rows", run(&[x.clone()], |t, v| {
            let m = t.l2_normalize_rows(v[0])?;
            weighted_sum(t, m, &w_rc)
        })),
        ("embedding", run(&[table.clone()], |t, v| {
            let m = t.embedding(v[0], &ids)?;
            weighted_sum(t, m, &w_emb)
        })),
        ("masked_mean_rows", run(&[x.clone()], |t, v| {
            let m = t.masked_mean_rows(v[0], &mask)?;
            weighted_sum(t, m, &w_row)
        })),
        ("concat_cols", run(&[x.clone(), a.clone()], |t, v| {
            let m = t.concat(&[v[0], v[1]], Axis::Cols)?;
            weighted_sum(t, m, &w_cols)
        })),
        ("concat_rows", run(&[x.clone(), z.clone()], |t, v| {
            let m = t.concat(&[v[0], v[1]], Axis::Rows)?;
            weighted_sum(t, m, &w_rows)
        })),
        ("slice_cols", run(&[x.clone()], |t, v| {
            let m = t.slice_cols(v[0], start, len)?;
            weighted_sum(t, m, &w_slice)
        })),
        ("cross_entropy_rows", run(&[x.clone()], |t, v| t.cross_entropy_rows(v[0], &targets))),
        ("sigmoid_bce", run(&[x.clone()], |t, v| t.sigmoid_bce(v[0], &probs))),
        ("mse", run(&[x.clone()], |t, v| t.mse(v[0], &reals))),
        ("infonce", run(&[x.clone(), zb.clone()], |t, v| Ok(infonce_on_tape(t, v[0], v[1], tau)?.loss))),
    ]
}

fn tiny_config(vocab_size: usize) -> EncoderConfig {
    EncoderConfig { num_layers: 2, num_heads: 2, d_model: 4, d_ff: 6, max_len: 6, d_proj: 3, vocab_size, dropout: 0.0 }
}

fn seq(ids: &[u32], real: usize) -> TokenSequence {
    TokenSequence { ids: ids.to_vec(), mask: (0..ids.len()).map(|i| u8::from(i < real)).collect() }
}

/// Both branches plus the symmetric loss on a three-pair batch, at τ = 0.07.
pub fn encoder_infonce_report(seed: u64) -> GradCheckReport {
    let mut rng = substream(seed, "gradcheck/encoder");
    let s_cfg = tiny_config(7);
    let i_cfg = tiny_config(9);
    // Weights well above the init scale, so attention and layernorm are
    // exercised away from their near-linear regime.
    let mut params: Vec<Tensor<f64>> = EncoderWeights::init(&s_cfg, &mut rng).tensors().into_iter().cloned().collect();
    let n_s = params.len();
    params.extend(EncoderWeights::<f64>::init(&i_cfg, &mut rng).tensors().into_iter().cloned());
    for p in params.iter_mut() {
        for x in p.data_mut() {
            *x = *x * 4.0 + rng.random_range(-0.3..0.3);
        }
    }
    let smiles = [seq(&[2, 4, 5, 3, 0], 4), seq(&[2, 6, 3], 3), seq(&[2, 5, 5, 4, 3, 0], 5)];
    let iupac = [seq(&[2, 7, 8, 3], 4), seq(&[2, 4, 3, 0, 0], 3), seq(&[2, 8, 6, 5, 3], 5)];
    run(&params, |t, v| {
        let sv = EncoderVars::from_flat(v[..n_s].to_vec(), s_cfg.num_layers);
        let iv = EncoderVars::from_flat(v[n_s..].to_vec(), i_cfg.num_layers);
        let zs: Vec<Var> = smiles.iter().map(|s| forward(t, &sv, &s_cfg, s, None).map(|tr| tr.z)).collect::<Result<_>>()?;
        let zi: Vec<Var> = iupac.iter().map(|s| forward(t, &iv, &i_cfg, s, None).map(|tr| tr.z)).collect::<Result<_>>()?;
        let a = t.concat(&zs, Axis::Rows)?;
        let b = t.concat(&zi, Axis::Rows)?;
        Ok(infonce_on_tape(t, a, b, 0.07)?.loss)
    })
}
