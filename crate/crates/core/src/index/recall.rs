use std::collections::HashMap;
use std::fmt;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::query::topk_query;
use super::store::EmbeddingStore;
use crate::encoder::Branch;
use crate::error::{Error, Result};
use crate::seed::substream;

pub const DEFAULT_KS: [usize; 2] = [1, 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    SmilesToIupac,
    IupacToSmiles,
    Unilingual,
}

impl Direction {
    pub fn between(query: Branch, candidates: Branch) -> Self {
        match (query, candidates) {
            (Branch::Smiles, Branch::Iupac) => Direction::SmilesToIupac,
            (Branch::Iupac, Branch::Smiles) => Direction::IupacToSmiles,
            _ => Direction::Unilingual,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::SmilesToIupac => "smiles-to-iupac",
            Direction::IupacToSmiles => "iupac-to-smiles",
            Direction::Unilingual => "unilingual",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub direction: Direction,
    pub queries: usize,
    pub ks: Vec<usize>,
    pub recall: Vec<f64>,
}

impl RecallReport {
    pub fn at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.recall[i])
    }
}

pub fn recall_csv(reports: &[RecallReport]) -> String {
    let mut out = String::from("direction,k,recall,queries\n");
    for r in reports {
        for (k, v) in r.ks.iter().zip(&r.recall) {
            out.push_str(&format!("{},{k},{v},{}\n", r.direction, r.queries));
        }
    }
    out
}

/// Fraction of queries whose ground-truth candidate is among the top K, for
/// each K in `ks`. Every query row is evaluated.
pub fn recall_eval(
    queries: &EmbeddingStore,
    candidates: &EmbeddingStore,
    ground_truth: &HashMap<String, String>,
    ks: &[usize],
) -> Result<RecallReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::invalid(format!("recall K values must be positive, got {ks:?}")));
    }
    if queries.dim() != candidates.dim() {
        return Err(Error::shape("recall-eval", format!("query dim {} vs candidate dim {}", queries.dim(), candidates.dim())));
    }
    let index: HashMap<&str, usize> = candidates.ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut targets = Vec::with_capacity(queries.len());
    for qid in queries.ids() {
        let truth = ground_truth.get(qid).ok_or_else(|| Error::invalid(format!("no ground truth for query {qid:?}")))?;
        let row = index
            .get(truth.as_str())
            .ok_or_else(|| Error::invalid(format!("ground truth {truth:?} of query {qid:?} is not a candidate")))?;
        targets.push(*row);
    }
    let kmax = *ks.iter().max().expect("non-empty");
    let mut hits = vec![0usize; ks.len()];
    for (i, &target) in targets.iter().enumerate() {
        let res = topk_query(candidates, &queries.ids()[i], queries.row(i), kmax)?;
        if let Some(rank) = res.hits.iter().position(|h| h.row == target) {
            for (h, &k) in hits.iter_mut().zip(ks) {
                if rank < k {
                    *h += 1;
                }
            }
        }
    }
    let n = queries.len() as f64;
    Ok(RecallReport {
        direction: Direction::between(queries.branch(), candidates.branch()),
        queries: queries.len(),
        ks: ks.to_vec(),
        recall: hits.into_iter().map(|h| h as f64 / n).collect(),
    })
}

/// Both cross-lingual directions, pairing rows that share an id.
pub fn cross_lingual_recall(smiles: &EmbeddingStore, iupac: &EmbeddingStore, ks: &[usize]) -> Result<[RecallReport; 2]> {
    let truth: HashMap<String, String> = smiles.ids().iter().map(|id| (id.clone(), id.clone())).collect();
    let forward = recall_eval(smiles, iupac, &truth, ks)?;
    let truth: HashMap<String, String> = iupac.ids().iter().map(|id| (id.clone(), id.clone())).collect();
    let backward = recall_eval(iupac, smiles, &truth, ks)?;
    Ok([forward, backward])
}

/// Seeded uniform sample (without replacement) of `size` ids shared by both
/// stores, returned as aligned sub-stores.
pub fn sample_group(
    smiles: &EmbeddingStore,
    iupac: &EmbeddingStore,
    size: usize,
    seed: u64,
) -> Result<(EmbeddingStore, EmbeddingStore)> {
    let iupac_rows: HashMap<&str, usize> = iupac.ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let shared: Vec<(usize, usize)> = smiles
        .ids()
        .iter()
        .enumerate()
        .filter_map(|(i, id)| iupac_rows.get(id.as_str()).map(|&j| (i, j)))
        .collect();
    if size == 0 || size > shared.len() {
        return Err(Error::invalid(format!("group size {size} not in 1..={} shared ids", shared.len())));
    }
    let mut picked = sample(&mut substream(seed, "retrieval/group"), shared.len(), size).into_vec();
    picked.sort_unstable();
    let (a, b): (Vec<usize>, Vec<usize>) = picked.iter().map(|&p| shared[p]).unzip();
    Ok((smiles.subset(&a)?, iupac.subset(&b)?))
}
