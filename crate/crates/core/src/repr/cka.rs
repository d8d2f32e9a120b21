use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Rbf,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CkaConfig {
    pub kernel: Kernel,
    /// RBF bandwidth as a multiple of the median pairwise distance.
    pub bandwidth_factor: f64,
    /// Probe rows drawn (without replacement) when more are available.
    pub sample_size: usize,
    pub seed: u64,
}

impl Default for CkaConfig {
    fn default() -> Self {
        CkaConfig { kernel: Kernel::Rbf, bandwidth_factor: 0.5, sample_size: 200, seed: 0 }
    }
}

impl CkaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_factor > 0.0) || !self.bandwidth_factor.is_finite() {
            return Err(Error::invalid(format!("bandwidth_factor must be positive, got {}", self.bandwidth_factor)));
        }
        if self.sample_size < 3 {
            return Err(Error::invalid(format!("CKA sample size must be at least 3, got {}", self.sample_size)));
        }
        Ok(())
    }
}

fn check_rows(x: &[Vec<f64>], name: &str) -> Result<usize> {
    let p = x.first().map_or(0, Vec::len);
    if p == 0 {
        return Err(Error::invalid(format!("CKA input {name} is empty")));
    }
    for (i, row) in x.iter().enumerate() {
        if row.len() != p {
            return Err(Error::shape("cka", format!("{name} row {i} has {} columns, expected {p}", row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("CKA input {name} row {i} is not finite")));
        }
    }
    Ok(p)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Gram matrix (row-major `n × n`).
pub fn kernel_matrix(x: &[Vec<f64>], kernel: Kernel, bandwidth_factor: f64) -> Result<Vec<f64>> {
    let n = x.len();
    let mut k = vec![0.0; n * n];
    match kernel {
        Kernel::Linear => {
            for i in 0..n {
                for j in 0..=i {
                    let v: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum();
                    k[i * n + j] = v;
                    k[j * n + i] = v;
                }
            }
        }
        Kernel::Rbf => {
            let mut d2 = vec![0.0; n * n];
            let mut dists = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in 0..i {
                    let v = sq_dist(&x[i], &x[j]);
                    d2[i * n + j] = v;
                    d2[j * n + i] = v;
                    dists.push(v.sqrt());
                }
            }
            let med = median(dists);
            if med == 0.0 {
                return Err(Error::degenerate("median pairwise distance is zero; rows are (mostly) identical"));
            }
            let sigma = bandwidth_factor * med;
            let denom = 2.0 * sigma * sigma;
            for (kv, dv) in k.iter_mut().zip(&d2) {
                *kv = (-dv / denom).exp();
            }
        }
    }
    Ok(k)
}

/// `H K H` with `H = I − 11ᵀ/n`.
pub fn double_center(k: &[f64], n: usize) -> Vec<f64> {
    let row_means: Vec<f64> = (0..n).map(|i| k[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64).collect();
    let col_means: Vec<f64> = (0..n).map(|j| (0..n).map(|i| k[i * n + j]).sum::<f64>() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = k[i * n + j] - row_means[i] - col_means[j] + grand;
        }
    }
    out
}

/// Biased HSIC estimate `tr(K H L H) / (n − 1)²`.
pub fn hsic(k: &[f64], l: &[f64], n: usize) -> f64 {
    let kc = double_center(k, n);
    let lc = double_center(l, n);
    kc.iter().zip(&lc).map(|(a, b)| a * b).sum::<f64>() / ((n - 1) * (n - 1)) as f64
}

/// Centered kernel alignment between two representations of the same `n`
/// samples. The RBF bandwidth is derived separately for each input.
pub fn cka(x: &[Vec<f64>], y: &[Vec<f64>], cfg: &CkaConfig) -> Result<f64> {
    if !(cfg.bandwidth_factor > 0.0) {
        return Err(Error::invalid(format!("bandwidth_factor must be positive, got {}", cfg.bandwidth_factor)));
    }
    let n = x.len();
    if n != y.len() {
        return Err(Error::shape("cka", format!("{n} samples vs {}", y.len())));
    }
    if n < 3 {
        return Err(Error::invalid(format!("CKA needs at least 3 samples, got {n}")));
    }
    check_rows(x, "X")?;
    check_rows(y, "Y")?;
    let k = kernel_matrix(x, cfg.kernel, cfg.bandwidth_factor)?;
    let l = kernel_matrix(y, cfg.kernel, cfg.bandwidth_factor)?;
    let kc = double_center(&k, n);
    let lc = double_center(&l, n);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let kk = dot(&kc, &kc);
    let ll = dot(&lc, &lc);
    if kk <= 0.0 || ll <= 0.0 {
        return Err(Error::degenerate("a centered kernel matrix is zero"));
    }
    Ok(dot(&kc, &lc) / (kk * ll).sqrt())
}
