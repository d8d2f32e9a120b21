use dualmol_core::numerics::container::{read_container, write_container};
use dualmol_core::numerics::{AdamW, AdamWConfig, Tape, Tensor};
use dualmol_core::seed::substream;
use proptest::prelude::*;
use rand::Rng;

fn random(seed: u64, r: usize, c: usize) -> Tensor<f64> {
    Tensor::randn(&[r, c], 3.0, &mut substream(seed, "numerics/prop"))
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(seed in 0u64..5000, r in 1usize..6, c in 1usize..9) {
        let mut t = Tape::new();
        let x = t.constant(random(seed, r, c));
        let s = t.softmax_rows(x).unwrap();
        for row in t.value(s).data().chunks(c) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn cross_entropy_is_nonnegative(seed in 0u64..5000, r in 1usize..6, c in 1usize..9) {
        let mut t = Tape::new();
        let x = t.constant(random(seed, r, c));
        let targets: Vec<usize> = (0..r).map(|i| (i * 7 + seed as usize) % c).collect();
        let l = t.cross_entropy_rows(x, &targets).unwrap();
        prop_assert!(t.value(l).item() >= 0.0);
    }

    #[test]
    fn l2_normalized_rows_have_unit_norm(seed in 0u64..5000, r in 1usize..6, c in 1usize..9) {
        let mut t = Tape::new();
        let x = t.constant(random(seed, r, c));
        let n = t.l2_normalize_rows(x).unwrap();
        for row in t.value(n).data().chunks(c) {
            prop_assert!((row.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn masked_rows_receive_no_gradient(seed in 0u64..5000, r in 2usize..8, c in 1usize..5) {
        let mut rng = substream(seed, "numerics/mask");
        let mut mask: Vec<u8> = (0..r).map(|_| rng.random_range(0..2)).collect();
        mask[0] = 1;
        let mut t = Tape::new();
        let x = t.param(random(seed, r, c));
        let w = t.constant(random(seed + 1, 1, c));
        let m = t.masked_mean_rows(x, &mask).unwrap();
        let p = t.mul(m, w).unwrap();
        let out = t.sum_all(p);
        let g = t.backward(out).unwrap();
        let gx = g.get(x).unwrap();
        for (i, row) in gx.data().chunks(c).enumerate() {
            if mask[i] == 0 {
                prop_assert!(row.iter().all(|&v| v == 0.0));
            }
        }
    }
}

#[test]
fn sum_of_squares_gradient_is_twice_input() {
    let x = random(3, 4, 5);
    let mut t = Tape::new();
    let v = t.param(x.clone());
    let sq = t.mul(v, v).unwrap();
    let out = t.sum_all(sq);
    let g = t.backward(out).unwrap();
    for (a, b) in g.get(v).unwrap().data().iter().zip(x.data()) {
        assert_eq!(*a, 2.0 * b);
    }
}

#[test]
fn adamw_decay_and_first_step() {
    let mut p = Tensor::<f64>::row_vector(vec![3.0, -1.5]);
    let cfg = AdamWConfig { lr: 0.01, weight_decay: 0.1, ..AdamWConfig::default() };
    let mut opt = AdamW::new(cfg, [&p]);
    opt.step(&mut [&mut p], &[Tensor::zeros(&[1, 2])]).unwrap();
    assert!((p.data()[0] - 3.0 * (1.0 - 0.001)).abs() < 1e-15);
    assert!((p.data()[1] + 1.5 * (1.0 - 0.001)).abs() < 1e-15);

    let mut q = Tensor::<f64>::scalar(1.0);
    let mut opt = AdamW::new(AdamWConfig { weight_decay: 0.0, ..AdamWConfig::with_lr(0.1) }, [&q]);
    opt.step(&mut [&mut q], &[Tensor::scalar(1.0)]).unwrap();
    assert!((q.item() - 0.9).abs() < 1e-8);
    assert_eq!(opt.t, 1);
}

#[test]
fn forward_is_bit_deterministic() {
    let run = || {
        let mut t = Tape::<f32>::new();
        let a = t.constant(Tensor::randn(&[8, 16], 1.0, &mut substream(4, "det")));
        let b = t.constant(Tensor::randn(&[16, 8], 1.0, &mut substream(5, "det")));
        let m = t.matmul(a, b).unwrap();
        let s = t.softmax_rows(m).unwrap();
        t.value(s).data().to_vec()
    };
    assert_eq!(run(), run());
}

#[test]
fn container_round_trip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c");
    let a = Tensor::<f32>::randn(&[3, 4], 1.0, &mut substream(0, "c"));
    let b = Tensor::<f32>::row_vector(vec![f32::MIN_POSITIVE, -0.0, 7.5]);
    write_container(&path, serde_json::json!({"k": 1}), &[("a".into(), &a), ("b".into(), &b)]).unwrap();
    let c = read_container(&path).unwrap();
    assert_eq!(c.tensor::<f32>("a", Some(&[3, 4])).unwrap(), a);
    let b2 = c.tensor::<f32>("b", None).unwrap();
    assert_eq!(b2.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    assert!(c.tensor::<f32>("a", Some(&[4, 3])).is_err());
    assert!(c.tensor::<f32>("zzz", None).is_err());
    assert_eq!(c.manifest.meta["k"], 1);

    let blob = path.join("tensors.bin");
    let bytes = std::fs::read(&blob).unwrap();
    std::fs::write(&blob, &bytes[..bytes.len() - 1]).unwrap();
    assert!(read_container(&path).is_err());
}
