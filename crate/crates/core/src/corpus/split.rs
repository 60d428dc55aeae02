use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::tensor::Rng;

/// Index sets for one cross-validation fold.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded k-fold split. Test sets partition `0..n`; within each fold
/// `floor(val_fraction * (n - |test|))` of the remaining items go to
/// validation.
pub fn kfold_split(n: usize, k: usize, val_fraction: f64, seed: u64) -> Result<Vec<Fold>, CorpusError> {
    if k < 2 || n < k {
        return Err(CorpusError::CorpusTooSmall { size: n, k });
    }
    let mut rng = Rng::new(seed);
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);

    let base = n / k;
    let extra = n % k;
    let mut chunks = Vec::with_capacity(k);
    let mut at = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        chunks.push(order[at..at + size].to_vec());
        at += size;
    }

    let folds = (0..k)
        .map(|i| {
            let mut rest: Vec<usize> = chunks
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .flat_map(|(_, c)| c.iter().copied())
                .collect();
            let mut fold_rng = rng.fork(i as u64 + 1);
            fold_rng.shuffle(&mut rest);
            let n_val = (val_fraction * rest.len() as f64).floor() as usize;
            let val = rest[..n_val].to_vec();
            let train = rest[n_val..].to_vec();
            Fold {
                train,
                val,
                test: chunks[i].clone(),
            }
        })
        .collect();
    Ok(folds)
}
