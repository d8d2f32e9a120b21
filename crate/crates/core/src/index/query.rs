use rayon::prelude::*;
use serde::Serialize;

use super::store::EmbeddingStore;
use crate::error::{Error, Result};

const SCAN_CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hit {
    pub id: String,
    pub row: usize,
    pub score: f64,
}

/// Ranked candidates for one query: scores non-increasing, ties in store row
/// order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalResult {
    pub query_id: String,
    pub hits: Vec<Hit>,
}

/// `dot(q, r) / (‖q‖ ‖r‖)` accumulated in f64 in index order.
pub fn cosine(q: &[f32], q_norm: f64, row: &[f32], row_norm: f64) -> f64 {
    let dot: f64 = q.iter().zip(row).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
    dot / (q_norm * row_norm)
}

/// Better-first ordering on (score, row).
fn better(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

fn top_of(scores: impl Iterator<Item = (f64, usize)>, k: usize) -> Vec<(f64, usize)> {
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for s in scores {
        if best.len() == k && !better(s, best[k - 1]) {
            continue;
        }
        let pos = best.partition_point(|&b| better(b, s));
        best.insert(pos, s);
        best.truncate(k);
    }
    best
}

/// Exact top-`k` rows of `store` by cosine similarity to `query`. `k` is
/// clamped to the store size.
pub fn topk_query(store: &EmbeddingStore, query_id: &str, query: &[f32], k: usize) -> Result<RetrievalResult> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if query.len() != store.dim() {
        return Err(Error::shape("topk-query", format!("query dim {} vs store dim {}", query.len(), store.dim())));
    }
    if query.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!("query {query_id:?} has non-finite values")));
    }
    let qn = query.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if qn == 0.0 {
        return Err(Error::degenerate(format!("query {query_id:?} has zero norm")));
    }
    let k = k.min(store.len());
    let row_ids: Vec<usize> = (0..store.len()).collect();
    let partial: Vec<Vec<(f64, usize)>> = row_ids
        .par_chunks(SCAN_CHUNK)
        .map(|rows| top_of(rows.iter().map(|&r| (cosine(query, qn, store.row(r), store.norm(r)), r)), k))
        .collect();
    let best = top_of(partial.into_iter().flatten(), k);
    Ok(RetrievalResult {
        query_id: query_id.to_owned(),
        hits: best.into_iter().map(|(score, row)| Hit { id: store.ids()[row].clone(), row, score }).collect(),
    })
}
