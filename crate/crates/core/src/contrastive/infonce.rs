use serde::Serialize;

use crate::encoder::Fingerprint;
use crate::error::{Error, Result};
use crate::numerics::{c, log_sum_exp, Scalar, Tape, Var};
#[cfg(test)]
use crate::numerics::Tensor;

/// Loss handles recorded on a tape by [`infonce_on_tape`].
#[derive(Debug, Clone, Copy)]
pub struct InfoNceVars {
    pub loss: Var,
    pub l_sl: Var,
    pub l_ip: Var,
    /// `N × N` matrix `cos(z_sl_i, z_ip_j) / τ`.
    pub logits: Var,
}

/// Symmetric InfoNCE over in-batch negatives.
///
/// Row `i` of the logit matrix scores SMILES `i` against every IUPAC
/// fingerprint; column `i` scores IUPAC `i` against every SMILES fingerprint.
/// The diagonal holds the positives. The result is the average of the two
/// directional cross-entropies, i.e. `(1/2N) Σ_i (L^sl_i + L^ip_i)`.
pub fn infonce_on_tape<T: Scalar>(tape: &mut Tape<T>, z_sl: Var, z_ip: Var, tau: f64) -> Result<InfoNceVars> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
    }
    let (n, d) = match tape.shape(z_sl) {
        [n, d] => (*n, *d),
        s => return Err(Error::shape("infonce", format!("expected N x d fingerprints, got {s:?}"))),
    };
    if n == 0 {
        return Err(Error::invalid("InfoNCE batch is empty"));
    }
    if tape.shape(z_ip) != [n, d] {
        return Err(Error::shape("infonce", format!("SMILES {n}x{d} vs IUPAC {:?}", tape.shape(z_ip))));
    }
    let a = tape.l2_normalize_rows(z_sl)?;
    let b = tape.l2_normalize_rows(z_ip)?;
    let bt = tape.transpose(b)?;
    let sim = tape.matmul(a, bt)?;
    let logits = tape.scale(sim, c::<T>(1.0 / tau));
    let targets: Vec<usize> = (0..n).collect();
    let l_sl = tape.cross_entropy_rows(logits, &targets)?;
    let logits_t = tape.transpose(logits)?;
    let l_ip = tape.cross_entropy_rows(logits_t, &targets)?;
    let sum = tape.add(l_sl, l_ip)?;
    let loss = tape.scale(sum, c::<T>(0.5));
    Ok(InfoNceVars { loss, l_sl, l_ip, logits })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfoNceOutput {
    pub loss: f64,
    /// Mean SMILES→IUPAC loss.
    pub l_sl: f64,
    /// Mean IUPAC→SMILES loss.
    pub l_ip: f64,
    /// Per-molecule terms.
    pub l_sl_terms: Vec<f64>,
    pub l_ip_terms: Vec<f64>,
    /// Row-major `N × N` logits `cos / τ`.
    pub logits: Vec<f64>,
    pub n: usize,
    pub tau: f64,
}

/// Cosine similarity matrix (row-major `N × M`) between two fingerprint lists.
pub fn cosine_matrix(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Vec<f64>> {
    let norm = |v: &Vec<f64>, side: &str, i: usize| -> Result<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::degenerate(format!("{side} fingerprint {i} has norm {n}")));
        }
        Ok(n)
    };
    let na: Vec<f64> = a.iter().enumerate().map(|(i, v)| norm(v, "first", i)).collect::<Result<_>>()?;
    let nb: Vec<f64> = b.iter().enumerate().map(|(i, v)| norm(v, "second", i)).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(a.len() * b.len());
    for (x, nx) in a.iter().zip(&na) {
        for (y, ny) in b.iter().zip(&nb) {
            out.push(x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>() / (nx * ny));
        }
    }
    Ok(out)
}

/// Evaluates the loss on fixed fingerprints (no gradients), in f64.
pub fn infonce_batch(z_sl: &[Fingerprint], z_ip: &[Fingerprint], tau: f64) -> Result<InfoNceOutput> {
    let a: Vec<Vec<f64>> = z_sl.iter().map(|f| f.values.iter().map(|&x| f64::from(x)).collect()).collect();
    let b: Vec<Vec<f64>> = z_ip.iter().map(|f| f.values.iter().map(|&x| f64::from(x)).collect()).collect();
    infonce_values(&a, &b, tau)
}

pub fn infonce_values(a: &[Vec<f64>], b: &[Vec<f64>], tau: f64) -> Result<InfoNceOutput> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
    }
    let n = a.len();
    if n == 0 {
        return Err(Error::invalid("InfoNCE batch is empty"));
    }
    if b.len() != n {
        return Err(Error::shape("infonce", format!("{n} SMILES vs {} IUPAC fingerprints", b.len())));
    }
    let d = a[0].len();
    if a.iter().chain(b).any(|v| v.len() != d) {
        return Err(Error::shape("infonce", "fingerprints differ in dimension"));
    }
    let logits: Vec<f64> = cosine_matrix(a, b)?.into_iter().map(|s| s / tau).collect();
    let mut l_sl_terms = Vec::with_capacity(n);
    let mut l_ip_terms = Vec::with_capacity(n);
    for i in 0..n {
        let row = &logits[i * n..(i + 1) * n];
        l_sl_terms.push(log_sum_exp(row) - row[i]);
        let col: Vec<f64> = (0..n).map(|j| logits[j * n + i]).collect();
        l_ip_terms.push(log_sum_exp(&col) - col[i]);
    }
    let l_sl = l_sl_terms.iter().sum::<f64>() / n as f64;
    let l_ip = l_ip_terms.iter().sum::<f64>() / n as f64;
    let loss = (l_sl_terms.iter().sum::<f64>() + l_ip_terms.iter().sum::<f64>()) / (2 * n) as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("InfoNCE loss is {loss}")));
    }
    Ok(InfoNceOutput { loss, l_sl, l_ip, l_sl_terms, l_ip_terms, logits, n, tau })
}
