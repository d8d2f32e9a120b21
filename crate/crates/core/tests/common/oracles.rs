//! Independent reference implementations used as test oracles.

use dualmol_core::encoder::Branch;
use dualmol_core::index::EmbeddingStore;
use rand::Rng;

/// Full scan: score every row, stable-sort by score descending so equal
/// scores keep ascending row order, take the first k.
pub fn brute_force(store: &EmbeddingStore, q: &[f32], k: usize) -> Vec<(String, f64)> {
    let dim = store.dim();
    let norm = |v: &[f32]| v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    let qn = norm(q);
    let mut scored: Vec<(usize, f64)> = store
        .data()
        .chunks(dim)
        .enumerate()
        .map(|(i, row)| {
            let dot: f64 = q.iter().zip(row).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
            (i, dot / (qn * norm(row)))
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    scored.into_iter().take(k).map(|(i, s)| (store.ids()[i].clone(), s)).collect()
}

pub fn random_store(rng: &mut impl Rng, n: usize, dim: usize, branch: Branch) -> EmbeddingStore {
    let mut data: Vec<f32> = (0..n * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    // Duplicate some rows (possibly rescaled) to force exact score ties.
    for _ in 0..n / 4 {
        let src = rng.random_range(0..n);
        let dst = rng.random_range(0..n);
        let c = if rng.random_bool(0.5) { 1.0 } else { 2.0 };
        for j in 0..dim {
            data[dst * dim + j] = data[src * dim + j] * c;
        }
    }
    let ids = (0..n).map(|i| format!("m{i}")).collect();
    EmbeddingStore::from_rows(branch, dim, ids, data).unwrap()
}

/// Fraction of (positive, negative) pairs ranked correctly, ties ½.
pub fn oracle_auc(s: &[f64], y: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] == 1.0 && y[j] == 0.0 {
                den += 1.0;
                num += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

/// Step integration of precision over recall: sweep thresholds from the
/// highest distinct score down, adding precision × recall increment.
pub fn oracle_ap(s: &[f64], y: &[f64]) -> f64 {
    let p = y.iter().filter(|&&v| v == 1.0).count() as f64;
    let mut thresholds: Vec<f64> = s.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let (mut ap, mut prev_recall) = (0.0, 0.0);
    for t in thresholds {
        let tp = (0..s.len()).filter(|&i| s[i] >= t && y[i] == 1.0).count() as f64;
        let fp = (0..s.len()).filter(|&i| s[i] >= t && y[i] == 0.0).count() as f64;
        let recall = tp / p;
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    ap
}

pub fn random_score_set(rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(2..60);
    let levels = rng.random_range(2..12);
    let mut y: Vec<f64> = (0..n).map(|_| f64::from(rng.random_bool(0.3) as u8)).collect();
    y[0] = 1.0;
    y[1] = 0.0;
    // Scores on a coarse grid so ties are common.
    let s = (0..n).map(|_| f64::from(rng.random_range(0..levels)) / levels as f64).collect();
    (s, y)
}

pub fn random_rows(rng: &mut impl Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

/// Literal transcription: σ = 0.5 · median pairwise distance,
/// K = exp(−d²/2σ²), H = I − 11ᵀ/n, HSIC = tr(KHLH)/(n−1)².
pub fn oracle_cka(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let n = x.len();
    let gram = |a: &[Vec<f64>]| {
        let mut d = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                d.push(a[i].iter().zip(&a[j]).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt());
            }
        }
        d.sort_by(|p, q| p.partial_cmp(q).unwrap());
        let m = d.len();
        let med = if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) };
        let sigma = 0.5 * med;
        let mut k = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let d2: f64 = a[i].iter().zip(&a[j]).map(|(p, q)| (p - q) * (p - q)).sum();
                k[i][j] = (-d2 / (2.0 * sigma * sigma)).exp();
            }
        }
        k
    };
    let h = |i: usize, j: usize| if i == j { 1.0 - 1.0 / n as f64 } else { -1.0 / n as f64 };
    let mul = |a: &Vec<Vec<f64>>, b: &dyn Fn(usize, usize) -> f64| {
        let mut o = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                o[i][j] = (0..n).map(|t| a[i][t] * b(t, j)).sum();
            }
        }
        o
    };
    let hsic = |k: &Vec<Vec<f64>>, l: &Vec<Vec<f64>>| {
        let kh = mul(k, &h);
        let lh = mul(l, &h);
        let mut tr = 0.0;
        for i in 0..n {
            for j in 0..n {
                tr += kh[i][j] * lh[j][i];
            }
        }
        tr / ((n - 1) * (n - 1)) as f64
    };
    let (k, l) = (gram(x), gram(y));
    hsic(&k, &l) / (hsic(&k, &k) * hsic(&l, &l)).sqrt()
}
