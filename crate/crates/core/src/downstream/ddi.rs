use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, summarize, MetricReport, MetricSummary, TaskKind};
use super::mlp::{Dataset, MlpClassifier, MlpConfig};
use super::split::CvSplit;
use crate::encoder::{Branch, Fingerprint};
use crate::error::{Error, Result};
use crate::index::EmbeddingStore;
use crate::io::DrugPair;
use crate::numerics::Tensor;
use crate::seed::substream;

/// Which fingerprints describe a drug.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FingerprintSource {
    Smiles,
    Iupac,
    /// SMILES fingerprint followed by IUPAC fingerprint.
    Concat,
}

impl std::str::FromStr for FingerprintSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smiles" => Ok(FingerprintSource::Smiles),
            "iupac" => Ok(FingerprintSource::Iupac),
            "concat" => Ok(FingerprintSource::Concat),
            other => Err(Error::invalid(format!("unknown fingerprint source {other:?} (smiles, iupac or concat)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DdiConfig {
    pub folds: usize,
    pub seed: u64,
    pub mlp: MlpConfig,
    /// Share of each training fold (per class) held out for early stopping.
    pub val_fraction: f64,
    pub top_false_positives: usize,
}

impl Default for DdiConfig {
    fn default() -> Self {
        DdiConfig { folds: 5, seed: 0, mlp: MlpConfig::default(), val_fraction: 0.1, top_false_positives: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub epochs_run: usize,
    pub metrics: MetricReport,
}

/// A negative pair ranked by predicted interaction probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPair {
    pub id_a: String,
    pub id_b: String,
    pub score: f64,
    pub fold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdiReport {
    pub source: FingerprintSource,
    pub input_dim: usize,
    pub pairs: usize,
    pub prevalence: f64,
    pub folds: Vec<FoldReport>,
    pub summary: MetricSummary,
    pub false_positives: Vec<RankedPair>,
}

impl DdiReport {
    /// Per-fold rows followed by `mean` and `std` rows.
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let row = |name: String, m: &MetricReport| {
            let [a, b, c, d, _] = m.values();
            format!("{name},{},{},{},{}\n", fmt(a), fmt(b), fmt(c), fmt(d))
        };
        let mut out = String::from("fold,roc_auc,aupr,precision,recall\n");
        for f in &self.folds {
            out.push_str(&row(f.fold.to_string(), &f.metrics));
        }
        out.push_str(&row("mean".into(), &self.summary.mean));
        out.push_str(&row("std".into(), &self.summary.std));
        out
    }
}

/// Per-drug feature vectors for a source.
pub fn drug_features(
    smiles: Option<&EmbeddingStore>,
    iupac: Option<&EmbeddingStore>,
    source: FingerprintSource,
) -> Result<HashMap<String, Vec<f32>>> {
    fn need<'a>(s: Option<&'a EmbeddingStore>, name: &str) -> Result<&'a EmbeddingStore> {
        s.ok_or_else(|| Error::invalid(format!("fingerprint source needs a {name} store")))
    }
    let table = |s: &EmbeddingStore| -> HashMap<String, Vec<f32>> {
        s.ids().iter().enumerate().map(|(i, id)| (id.clone(), s.row(i).to_vec())).collect()
    };
    match source {
        FingerprintSource::Smiles => Ok(table(need(smiles, "SMILES")?)),
        FingerprintSource::Iupac => Ok(table(need(iupac, "IUPAC")?)),
        FingerprintSource::Concat => {
            let (s, i) = (need(smiles, "SMILES")?, need(iupac, "IUPAC")?);
            let it = table(i);
            let mut out = HashMap::with_capacity(s.len());
            for (r, id) in s.ids().iter().enumerate() {
                let other = it.get(id).ok_or_else(|| Error::invalid(format!("drug {id:?} has no IUPAC fingerprint")))?;
                let mut v = s.row(r).to_vec();
                v.extend_from_slice(other);
                out.insert(id.clone(), v);
            }
            Ok(out)
        }
    }
}

fn pair_dataset(pairs: &[DrugPair], features: &HashMap<String, Vec<f32>>) -> Result<Dataset> {
    let lookup = |id: &str| {
        features.get(id).ok_or_else(|| Error::invalid(format!("drug {id:?} has no fingerprint")))
    };
    let dim = 2 * features.values().next().map_or(0, Vec::len);
    let mut x = Vec::with_capacity(pairs.len() * dim);
    let mut y = Vec::with_capacity(pairs.len());
    for p in pairs {
        x.extend_from_slice(lookup(&p.id_a)?);
        x.extend_from_slice(lookup(&p.id_b)?);
        y.push(f32::from(p.label));
    }
    Ok(Dataset { dim, x, y })
}

fn check_pairs(pairs: &[DrugPair]) -> Result<()> {
    let mut seen = HashSet::with_capacity(pairs.len());
    for p in pairs {
        if p.label > 1 {
            return Err(Error::invalid(format!("pair ({}, {}) has label {}, expected 0 or 1", p.id_a, p.id_b, p.label)));
        }
        let key = if p.id_a <= p.id_b { (&p.id_a, &p.id_b) } else { (&p.id_b, &p.id_a) };
        if !seen.insert(key) {
            return Err(Error::invalid(format!("pair ({}, {}) is listed more than once", p.id_a, p.id_b)));
        }
    }
    Ok(())
}

/// Splits `rows` per class into (train, validation).
fn inner_split(rows: &[usize], labels: &[u8], frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = substream(seed, "ddi/inner");
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = rows.iter().copied().filter(|&r| labels[r] == class).collect();
        idx.shuffle(&mut rng);
        let nv = ((idx.len() as f64 * frac).round() as usize).clamp(usize::from(idx.len() > 1), idx.len().saturating_sub(1));
        val.extend_from_slice(&idx[..nv]);
        train.extend_from_slice(&idx[nv..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Stratified k-fold evaluation of the pair MLP. Folds run in parallel.
pub fn ddi_train_eval(
    smiles: Option<&EmbeddingStore>,
    iupac: Option<&EmbeddingStore>,
    source: FingerprintSource,
    pairs: &[DrugPair],
    cfg: &DdiConfig,
) -> Result<DdiReport> {
    cfg.mlp.validate()?;
    if !(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0) {
        return Err(Error::invalid(format!("val_fraction must be in (0, 1), got {}", cfg.val_fraction)));
    }
    check_pairs(pairs)?;
    let features = drug_features(smiles, iupac, source)?;
    let data = pair_dataset(pairs, &features)?;
    let labels: Vec<u8> = pairs.iter().map(|p| p.label).collect();
    let split = CvSplit::stratified(&labels, cfg.folds, cfg.seed)?;
    let results: Vec<(FoldReport, Vec<RankedPair>)> = (0..cfg.folds)
        .into_par_iter()
        .map(|f| -> Result<(FoldReport, Vec<RankedPair>)> {
            let (train_rows, test_rows) = split.fold(f);
            let fold_seed = cfg.seed.wrapping_add(f as u64);
            let (fit_rows, val_rows) = inner_split(&train_rows, &labels, cfg.val_fraction, fold_seed);
            let mut mlp = MlpClassifier::new(data.dim, cfg.mlp.hidden, fold_seed);
            let trace = mlp.fit(&data.select(&fit_rows), &data.select(&val_rows), &cfg.mlp, fold_seed)?;
            let test = data.select(&test_rows);
            let scores = mlp.predict_proba(&test.x)?;
            let y: Vec<f64> = test.y.iter().map(|&v| f64::from(v)).collect();
            let metrics = compute_metrics(&scores, &y, TaskKind::Classification)
                .map_err(|e| Error::invalid(format!("fold {f}: {e}")))?;
            let negatives = test_rows
                .iter()
                .zip(&scores)
                .filter(|(&r, _)| labels[r] == 0)
                .map(|(&r, &score)| RankedPair { id_a: pairs[r].id_a.clone(), id_b: pairs[r].id_b.clone(), score, fold: f })
                .collect();
            let report = FoldReport {
                fold: f,
                train_pairs: train_rows.len(),
                test_pairs: test_rows.len(),
                epochs_run: trace.epochs_run,
                metrics,
            };
            Ok((report, negatives))
        })
        .collect::<Result<_>>()?;
    let (folds, negatives): (Vec<FoldReport>, Vec<Vec<RankedPair>>) = results.into_iter().unzip();
    let mut false_positives: Vec<RankedPair> = negatives.into_iter().flatten().collect();
    false_positives.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| (&a.id_a, &a.id_b).cmp(&(&b.id_a, &b.id_b))));
    false_positives.truncate(cfg.top_false_positives);
    let summary = summarize(&folds.iter().map(|f| f.metrics).collect::<Vec<_>>())?;
    let positives = labels.iter().filter(|&&y| y == 1).count();
    Ok(DdiReport {
        source,
        input_dim: data.dim,
        pairs: pairs.len(),
        prevalence: positives as f64 / pairs.len() as f64,
        folds,
        summary,
        false_positives,
    })
}

/// Synthetic drug set: Gaussian fingerprints for `n_drugs` drugs and
/// `n_pairs` distinct unordered pairs. With `planted`, a pair interacts iff
/// the cosine of its two fingerprints lies in the top `prevalence` share of
/// the sampled pairs; otherwise the same labels are shuffled across pairs,
/// so they carry no information about the fingerprints.
pub fn synth_ddi(
    n_drugs: usize,
    n_pairs: usize,
    dim: usize,
    prevalence: f64,
    planted: bool,
    seed: u64,
) -> Result<(Vec<Fingerprint>, Vec<DrugPair>)> {
    let max_pairs = n_drugs * n_drugs.saturating_sub(1) / 2;
    if dim == 0 || n_pairs == 0 || n_pairs > max_pairs {
        return Err(Error::invalid(format!("cannot draw {n_pairs} distinct pairs of dim {dim} from {n_drugs} drugs")));
    }
    if !(prevalence > 0.0 && prevalence < 1.0) {
        return Err(Error::invalid(format!("prevalence must be in (0, 1), got {prevalence}")));
    }
    let mut rng = substream(seed, "synth-ddi/drugs");
    let drugs: Vec<Fingerprint> = (0..n_drugs)
        .map(|i| Fingerprint {
            id: format!("drug{i:04}"),
            branch: Branch::Smiles,
            values: Tensor::<f32>::randn(&[dim], 1.0, &mut rng).into_data(),
        })
        .collect();
    let mut all: Vec<(usize, usize)> = (0..n_drugs).flat_map(|a| (a + 1..n_drugs).map(move |b| (a, b))).collect();
    all.shuffle(&mut substream(seed, "synth-ddi/pairs"));
    all.truncate(n_pairs);
    let cos = |a: &[f32], b: &[f32]| {
        let dot: f64 = a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
        let n = |v: &[f32]| v.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
        dot / (n(a) * n(b))
    };
    let sims: Vec<f64> = all.iter().map(|&(a, b)| cos(&drugs[a].values, &drugs[b].values)).collect();
    let mut order: Vec<usize> = (0..sims.len()).collect();
    order.sort_by(|&i, &j| sims[j].total_cmp(&sims[i]));
    let positives = ((n_pairs as f64 * prevalence).round() as usize).clamp(1, n_pairs - 1);
    let mut labels = vec![0u8; n_pairs];
    for &i in &order[..positives] {
        labels[i] = 1;
    }
    if !planted {
        labels.shuffle(&mut substream(seed, "synth-ddi/shuffle"));
    }
    let pairs = all
        .iter()
        .zip(labels)
        .map(|(&(a, b), label)| DrugPair { id_a: drugs[a].id.clone(), id_b: drugs[b].id.clone(), label })
        .collect();
    Ok((drugs, pairs))
}
