use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::cka::{cka, CkaConfig};
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::seed::substream;
use crate::tokenizers::TokenSequence;

/// Masked-mean pooled activations per layer (post-layernorm), then the
/// projection output: `out[layer][sample]`.
pub fn layer_representations(encoder: &Encoder<f32>, seqs: &[TokenSequence]) -> Result<Vec<Vec<Vec<f64>>>> {
    let acts = encoder.layer_activations(seqs)?;
    let widen = |v: &Vec<f32>| v.iter().map(|&x| f64::from(x)).collect::<Vec<f64>>();
    let mut out = vec![Vec::with_capacity(seqs.len()); encoder.config.num_layers + 1];
    for a in &acts {
        for (l, layer) in a.layers.iter().enumerate() {
            out[l].push(widen(layer));
        }
        out[encoder.config.num_layers].push(widen(&a.z));
    }
    Ok(out)
}

pub fn layer_labels(num_layers: usize) -> Vec<String> {
    (1..=num_layers).map(|l| format!("layer{l}")).chain(["projection".to_string()]).collect()
}

/// CKA between every representation of model A (rows) and of model B
/// (columns) on aligned probe inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCkaReport {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub samples: usize,
    pub values: Vec<Vec<f64>>,
}

impl LayerCkaReport {
    pub fn get(&self, row: &str, col: &str) -> Option<f64> {
        let i = self.rows.iter().position(|r| r == row)?;
        let j = self.cols.iter().position(|c| c == col)?;
        Some(self.values[i][j])
    }

    /// Entries `(k, k)` for the labels both axes share.
    pub fn diagonal(&self) -> Vec<(String, f64)> {
        self.rows.iter().filter_map(|r| self.get(r, r).map(|v| (r.clone(), v))).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,cka\n");
        for (i, r) in self.rows.iter().enumerate() {
            for (j, c) in self.cols.iter().enumerate() {
                out.push_str(&format!("{r},{c},{}\n", self.values[i][j]));
            }
        }
        out
    }
}

/// `a` sees `a_seqs`, `b` sees `b_seqs`; both lists describe the same
/// molecules in the same order. Use the two branches of one model for the
/// cross-branch grid, or two models on the same sequences.
pub fn layer_cka_report(
    a: &Encoder<f32>,
    a_seqs: &[TokenSequence],
    b: &Encoder<f32>,
    b_seqs: &[TokenSequence],
    cfg: &CkaConfig,
) -> Result<LayerCkaReport> {
    cfg.validate()?;
    if a_seqs.len() != b_seqs.len() {
        return Err(Error::invalid(format!("probe sets differ in size ({} vs {})", a_seqs.len(), b_seqs.len())));
    }
    if a_seqs.len() < 3 {
        return Err(Error::invalid(format!("probe set of {} is smaller than 3", a_seqs.len())));
    }
    let rows: Vec<usize> = if a_seqs.len() > cfg.sample_size {
        let mut r = sample(&mut substream(cfg.seed, "cka/probe"), a_seqs.len(), cfg.sample_size).into_vec();
        r.sort_unstable();
        r
    } else {
        (0..a_seqs.len()).collect()
    };
    let pick = |s: &[TokenSequence]| rows.iter().map(|&r| s[r].clone()).collect::<Vec<_>>();
    let ra = layer_representations(a, &pick(a_seqs))?;
    let rb = layer_representations(b, &pick(b_seqs))?;
    let row_labels = layer_labels(a.config.num_layers);
    let col_labels = layer_labels(b.config.num_layers);
    let mut values = Vec::with_capacity(ra.len());
    for (i, x) in ra.iter().enumerate() {
        let mut line = Vec::with_capacity(rb.len());
        for (j, y) in rb.iter().enumerate() {
            let at = |e: Error| {
                let loc = format!("CKA at ({}, {})", row_labels[i], col_labels[j]);
                match e {
                    Error::Degenerate(m) => Error::Degenerate(format!("{loc}: {m}")),
                    Error::InvalidInput(m) => Error::InvalidInput(format!("{loc}: {m}")),
                    Error::Numeric(m) => Error::Numeric(format!("{loc}: {m}")),
                    other => other,
                }
            };
            line.push(cka(x, y, cfg).map_err(at)?);
        }
        values.push(line);
    }
    Ok(LayerCkaReport { rows: row_labels, cols: col_labels, samples: rows.len(), values })
}
