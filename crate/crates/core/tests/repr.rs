mod common;

use dualmol_core::contrastive::{DualEncoder, TrainConfig};
use dualmol_core::encoder::Branch;
use dualmol_core::io::{synth_corpus, SYNTH_FRAGMENTS};
use dualmol_core::pipeline::{pretrain, EncoderShape, TokenizerConfig, Tokenizers};
use dualmol_core::repr::{cka, hsic, kernel_matrix, layer_cka_report, token_alignment, CkaConfig, Kernel};
use dualmol_core::seed::substream;
use dualmol_core::Error;
use common::oracles::{oracle_cka, random_rows};
use rand::Rng;

fn rbf() -> CkaConfig {
    CkaConfig::default()
}

#[test]
fn five_by_two_matches_transcription() {
    let mut rng = substream(0, "cka/oracle");
    for _ in 0..50 {
        let x = random_rows(&mut rng, 5, 2);
        let y = random_rows(&mut rng, 5, 2);
        assert!((cka(&x, &y, &rbf()).unwrap() - oracle_cka(&x, &y)).abs() < 1e-10);
    }
}

#[test]
fn self_similarity_symmetry_and_range() {
    let mut rng = substream(1, "cka/basic");
    for _ in 0..30 {
        let n = rng.random_range(3..30);
        let (dx, dy) = (rng.random_range(1..8), rng.random_range(1..8));
        let x = random_rows(&mut rng, n, dx);
        let y = random_rows(&mut rng, n, dy);
        for kernel in [Kernel::Rbf, Kernel::Linear] {
            let cfg = CkaConfig { kernel, ..rbf() };
            assert!((cka(&x, &x, &cfg).unwrap() - 1.0).abs() < 1e-6);
            let xy = cka(&x, &y, &cfg).unwrap();
            assert!((xy - cka(&y, &x, &cfg).unwrap()).abs() < 1e-10);
            assert!((-1e-8..=1.0 + 1e-8).contains(&xy));
        }
    }
}

#[test]
fn invariant_to_rotation_translation_and_scale() {
    let mut rng = substream(2, "cka/invariance");
    for _ in 0..30 {
        let n = rng.random_range(4..25);
        let x = random_rows(&mut rng, n, 3);
        let y = random_rows(&mut rng, n, 2);
        let base = cka(&x, &y, &rbf()).unwrap();
        let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (s, c) = th.sin_cos();
        let shift = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let rotated: Vec<Vec<f64>> = y.iter().map(|r| vec![c * r[0] - s * r[1] + shift[0], s * r[0] + c * r[1] + shift[1]]).collect();
        assert!((cka(&x, &rotated, &rbf()).unwrap() - base).abs() < 1e-8);
        let k: f64 = rng.random_range(0.01..100.0);
        let scaled: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|v| v * k).collect()).collect();
        assert!((cka(&scaled, &y, &rbf()).unwrap() - base).abs() < 1e-8);
    }
}

#[test]
fn hsic_of_linear_kernel_matches_centered_frobenius() {
    let mut rng = substream(3, "cka/hsic");
    let x = random_rows(&mut rng, 6, 3);
    let k = kernel_matrix(&x, Kernel::Linear, 0.5).unwrap();
    let n = 6;
    let mean: Vec<f64> = (0..3).map(|c| x.iter().map(|r| r[c]).sum::<f64>() / n as f64).collect();
    let xc: Vec<Vec<f64>> = x.iter().map(|r| r.iter().zip(&mean).map(|(a, m)| a - m).collect()).collect();
    let mut fro = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v: f64 = xc[i].iter().zip(&xc[j]).map(|(a, b)| a * b).sum();
            fro += v * v;
        }
    }
    assert!((hsic(&k, &k, n) - fro / 25.0).abs() < 1e-10);
}

#[test]
fn degenerate_and_small_inputs_error() {
    let same = vec![vec![1.0, 2.0]; 4];
    let other = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
    assert!(matches!(cka(&same, &other, &rbf()), Err(Error::Degenerate(_))));
    assert!(matches!(cka(&other[..2], &other[..2], &rbf()), Err(Error::InvalidInput(_))));
    assert!(cka(&other, &other[..3], &rbf()).is_err());
    assert!(cka(&other, &other, &CkaConfig { bandwidth_factor: 0.0, ..rbf() }).is_err());
}

fn setup() -> (Tokenizers, DualEncoder<f32>, dualmol_core::io::PairCorpus) {
    let corpus = synth_corpus(5, 120).corpus;
    let tok = Tokenizers::fit(&corpus, &TokenizerConfig { bpe_vocab_size: 30, max_len: 48, iupac_rules: None }).unwrap();
    let shape = EncoderShape { num_layers: 2, num_heads: 2, d_model: 16, d_ff: 32, d_proj: 8, dropout: 0.0 };
    let (s, i) = tok.encoder_configs(&shape);
    (tok, DualEncoder::new(s, i, 5).unwrap(), corpus)
}

#[test]
fn same_model_same_inputs_gives_unit_diagonal() {
    let (tok, model, corpus) = setup();
    let seqs = tok.encode_column(&corpus, Branch::Smiles);
    let cfg = CkaConfig { sample_size: 60, ..rbf() };
    let report = layer_cka_report(&model.smiles, &seqs, &model.smiles, &seqs, &cfg).unwrap();
    assert_eq!(report.rows, ["layer1", "layer2", "projection"]);
    assert_eq!(report.samples, 60);
    for (_, v) in report.diagonal() {
        assert!((v - 1.0).abs() < 1e-6);
    }
    assert_eq!(report.to_csv().lines().count(), 1 + 9);
    assert!(layer_cka_report(&model.smiles, &seqs[..2], &model.smiles, &seqs[..2], &cfg).is_err());
    assert!(layer_cka_report(&model.smiles, &seqs[..5], &model.smiles, &seqs[..4], &cfg).is_err());
}

#[test]
fn alignment_diagonal_bounds_and_unknown_tokens() {
    let (tok, model, _) = setup();
    let names: Vec<String> = SYNTH_FRAGMENTS.iter().map(|(i, _)| i.to_string()).collect();
    let v = tok.iupac.vocab();
    let m = token_alignment(&model.iupac, v, &names, &model.iupac, v, &names).unwrap();
    for i in 0..names.len() {
        assert!((m.row(i)[i] - 1.0).abs() < 1e-6);
    }
    let codes: Vec<String> = SYNTH_FRAGMENTS.iter().map(|(_, s)| s.to_string()).collect();
    let cross = token_alignment(&model.iupac, v, &names, &model.smiles, tok.smiles.vocab(), &codes).unwrap();
    assert!(cross.values.iter().all(|x| (-1.0..=1.0).contains(x)));
    assert_eq!(cross.to_csv().lines().count(), 1 + names.len());
    assert!(cross.to_svg().starts_with("<svg"));
    let err = token_alignment(&model.iupac, v, &["zzzunknown".to_string()], &model.iupac, v, &names).unwrap_err();
    assert!(err.to_string().contains("zzzunknown"), "{err}");
}

#[test]
fn training_moves_deep_layers_more_than_shallow_ones() {
    let corpus = synth_corpus(6, 600).corpus;
    let tok_cfg = TokenizerConfig { bpe_vocab_size: 40, max_len: 48, iupac_rules: None };
    let shape = EncoderShape { num_layers: 2, num_heads: 2, d_model: 32, d_ff: 64, d_proj: 16, dropout: 0.0 };
    let train = TrainConfig { lr: 1e-3, epochs: 3, batch_size: 16, seed: 6, ..TrainConfig::default() };
    let trained = pretrain(&corpus, &tok_cfg, &shape, &train, None, |_| {}).unwrap();
    let (s, i) = trained.tokenizers.encoder_configs(&shape);
    let untrained = DualEncoder::new(s, i, 6).unwrap();
    let probe = synth_corpus(60, 200).corpus;
    let seqs = trained.tokenizers.encode_column(&probe, Branch::Smiles);
    let cfg = CkaConfig { sample_size: 200, ..rbf() };
    let r = layer_cka_report(&untrained.smiles, &seqs, &trained.trainer.model.smiles, &seqs, &cfg).unwrap();
    let first = r.get("layer1", "layer1").unwrap();
    let last = r.get("projection", "projection").unwrap();
    assert!(last + 0.05 < first, "layer1 {first}, projection {last}");
}
