use serde::{Deserialize, Serialize};

use crate::contrastive::cosine_matrix;
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::tokenizers::{TokenSequence, Vocabulary, BOS, EOS};

/// Cosines between single-token fingerprints: rows are IUPAC tokens,
/// columns SMILES tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMatrix {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    /// Row-major `rows × cols`.
    pub values: Vec<f64>,
}

impl AlignmentMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols.len()..(i + 1) * self.cols.len()]
    }

    /// Column token with the highest cosine in each row (first on ties).
    pub fn argmax(&self) -> Vec<&str> {
        (0..self.rows.len())
            .map(|i| {
                let row = self.row(i);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                self.cols[best].as_str()
            })
            .collect()
    }

    /// Share of `(row token, column token)` pairs whose row argmax is the
    /// given column token.
    pub fn argmax_accuracy(&self, expected: &[(String, String)]) -> Result<f64> {
        if expected.is_empty() {
            return Err(Error::invalid("no expected correspondences"));
        }
        let argmax = self.argmax();
        let mut hits = 0;
        for (r, c) in expected {
            let i = self.rows.iter().position(|x| x == r).ok_or_else(|| Error::invalid(format!("token {r:?} is not a row")))?;
            if argmax[i] == c {
                hits += 1;
            }
        }
        Ok(hits as f64 / expected.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let header: Vec<&str> = std::iter::once("iupac_token").chain(self.cols.iter().map(String::as_str)).collect();
        w.write_record(&header).expect("in-memory write");
        for (i, r) in self.rows.iter().enumerate() {
            let line: Vec<String> = std::iter::once(r.clone()).chain(self.row(i).iter().map(f64::to_string)).collect();
            w.write_record(&line).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    /// Heat map with a blue (−1) to white (0) to red (+1) scale.
    pub fn to_svg(&self) -> String {
        let cell = 18;
        let left = 12 + 7 * self.rows.iter().map(String::len).max().unwrap_or(1);
        let top = 12 + 7 * self.cols.iter().map(String::len).max().unwrap_or(1);
        let width = left + cell * self.cols.len() + 8;
        let height = top + cell * self.rows.len() + 8;
        let esc = |s: &str| s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
        let mut out = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"monospace\" font-size=\"11\">\n"
        );
        for (j, c) in self.cols.iter().enumerate() {
            let x = left + j * cell + cell / 2;
            out.push_str(&format!(
                "<text x=\"{x}\" y=\"{}\" transform=\"rotate(-90 {x} {})\">{}</text>\n",
                top - 4,
                top - 4,
                esc(c)
            ));
        }
        for (i, r) in self.rows.iter().enumerate() {
            let y = top + i * cell;
            out.push_str(&format!("<text x=\"4\" y=\"{}\">{}</text>\n", y + cell - 5, esc(r)));
            for (j, &v) in self.row(i).iter().enumerate() {
                let t = v.clamp(-1.0, 1.0);
                let (rr, gg, bb) = if t >= 0.0 {
                    (255.0, 255.0 * (1.0 - t), 255.0 * (1.0 - t))
                } else {
                    (255.0 * (1.0 + t), 255.0 * (1.0 + t), 255.0)
                };
                out.push_str(&format!(
                    "<rect x=\"{}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({},{},{})\"><title>{} / {}: {v:.3}</title></rect>\n",
                    left + j * cell,
                    rr as u8,
                    gg as u8,
                    bb as u8,
                    esc(r),
                    esc(&self.cols[j])
                ));
            }
        }
        out.push_str("</svg>\n");
        out
    }
}

fn single_token_fingerprints(encoder: &Encoder<f32>, vocab: &Vocabulary, tokens: &[String], side: &str) -> Result<Vec<Vec<f64>>> {
    let seqs = tokens
        .iter()
        .map(|t| {
            let id = vocab.id(t).ok_or_else(|| Error::invalid(format!("{side} token {t:?} is not in the vocabulary")))?;
            Ok(TokenSequence { ids: vec![BOS, id, EOS], mask: vec![1, 1, 1] })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(encoder.encode_batch(&seqs)?.into_iter().map(|z| z.into_iter().map(f64::from).collect()).collect())
}

/// Embeds each token as the sequence `[BOS, token, EOS]` through its branch
/// and returns the cosine matrix between the two token lists.
pub fn token_alignment(
    iupac: &Encoder<f32>,
    iupac_vocab: &Vocabulary,
    iupac_tokens: &[String],
    smiles: &Encoder<f32>,
    smiles_vocab: &Vocabulary,
    smiles_tokens: &[String],
) -> Result<AlignmentMatrix> {
    if iupac_tokens.is_empty() || smiles_tokens.is_empty() {
        return Err(Error::invalid("token alignment needs at least one token per axis"));
    }
    let a = single_token_fingerprints(iupac, iupac_vocab, iupac_tokens, "IUPAC")?;
    let b = single_token_fingerprints(smiles, smiles_vocab, smiles_tokens, "SMILES")?;
    Ok(AlignmentMatrix { rows: iupac_tokens.to_vec(), cols: smiles_tokens.to_vec(), values: cosine_matrix(&a, &b)? })
}
