use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::substream;

/// Fold assignment for stratified k-fold cross-validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvSplit {
    pub k: usize,
    pub seed: u64,
    /// Fold index of every item.
    pub fold_of: Vec<usize>,
}

impl CvSplit {
    /// Positives are dealt round-robin over the folds after a seeded shuffle;
    /// negatives continue the same rotation, so fold sizes differ by at most
    /// one and each fold's positive count by at most one.
    pub fn stratified(labels: &[u8], k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("k-fold needs k >= 2, got {k}")));
        }
        if labels.len() < k {
            return Err(Error::invalid(format!("{} items cannot fill {k} folds", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::invalid(format!("stratified split needs binary labels, got {bad}")));
        }
        let mut rng = substream(seed, "cv/stratified");
        let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
        let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        let mut fold_of = vec![0; labels.len()];
        for (slot, &i) in pos.iter().chain(&neg).enumerate() {
            fold_of[i] = slot % k;
        }
        Ok(CvSplit { k, seed, fold_of })
    }

    /// (train, test) item indices for fold `f`.
    pub fn fold(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..self.fold_of.len()).partition(|&i| self.fold_of[i] == f);
        (train, test)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainValTest {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

fn holdout_size(n: usize, frac: f64) -> usize {
    ((n as f64 * frac).round() as usize).max(1)
}

/// Seeded random 0.8/0.1/0.1 split (validation and test get at least one
/// item each).
pub fn random_split(n: usize, seed: u64) -> Result<TrainValTest> {
    if n < 3 {
        return Err(Error::invalid(format!("train/val/test split needs at least 3 items, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(seed, "split/random"));
    let nt = holdout_size(n, 0.1);
    let nv = holdout_size(n, 0.1);
    let test = order[..nt].to_vec();
    let val = order[nt..nt + nv].to_vec();
    let train = order[nt + nv..].to_vec();
    Ok(TrainValTest { train, val, test })
}

/// 0.8/0.1/0.1 split applied within each class, so validation and test both
/// contain positives and negatives.
pub fn stratified_split(labels: &[u8], seed: u64) -> Result<TrainValTest> {
    let mut out = TrainValTest { train: Vec::new(), val: Vec::new(), test: Vec::new() };
    for class in [0u8, 1] {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < 3 {
            return Err(Error::invalid(format!("class {class} has {} items; a stratified split needs 3", idx.len())));
        }
        let part = random_split(idx.len(), seed ^ u64::from(class))?;
        out.train.extend(part.train.iter().map(|&i| idx[i]));
        out.val.extend(part.val.iter().map(|&i| idx[i]));
        out.test.extend(part.test.iter().map(|&i| idx[i]));
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}
