use rand::distributions::WeightedIndex;
use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingMatrix, Vocabulary};
use crate::tensor::{sigmoid_scalar, Rng, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Share of sentences held out for the per-epoch loss.
    pub holdout: f64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
            holdout: 0.05,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SkipGramReport {
    pub embeddings: EmbeddingMatrix,
    /// Mean negative-sampling loss on the held-out sentences; entry 0 is the
    /// initialization, entry `e` the state after epoch `e`.
    pub heldout_loss: Vec<f64>,
}

struct Pair {
    center: usize,
    context: usize,
    negatives: Vec<usize>,
}

fn pair_loss(input: &[f64], output: &[f64], dim: usize, p: &Pair) -> f64 {
    let dot = |a: usize, b: usize| -> f64 {
        input[a * dim..(a + 1) * dim]
            .iter()
            .zip(&output[b * dim..(b + 1) * dim])
            .map(|(x, y)| x * y)
            .sum()
    };
    let mut loss = -sigmoid_scalar(dot(p.center, p.context)).max(1e-300).ln();
    for &n in &p.negatives {
        loss -= sigmoid_scalar(-dot(p.center, n)).max(1e-300).ln();
    }
    loss
}

fn pairs_of(sentence: &[usize], window: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    (0..sentence.len()).flat_map(move |i| {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(sentence.len());
        (lo..hi)
            .filter(move |&j| j != i)
            .map(move |j| (sentence[i], sentence[j]))
    })
}

/// Skip-gram with negative sampling from the unigram distribution raised to
/// 0.75. Single-threaded and fully determined by `rng`.
pub fn train_skipgram<S: AsRef<str>>(
    corpus: &[Vec<S>],
    vocab: &Vocabulary,
    config: &SkipGramConfig,
    rng: &mut Rng,
) -> Result<SkipGramReport, EmbeddingError> {
    let encoded: Vec<Vec<usize>> = corpus
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| vocab.encode(s))
        .collect();
    let total: usize = encoded.iter().map(Vec::len).sum();
    if total < config.window + 1 {
        return Err(EmbeddingError::CorpusTooSmall {
            tokens: total,
            needed: config.window + 1,
        });
    }
    let dim = config.dim;
    let v = vocab.len();

    let mut order: Vec<usize> = (0..encoded.len()).collect();
    rng.shuffle(&mut order);
    let n_held = if encoded.len() > 1 {
        ((config.holdout * encoded.len() as f64).ceil() as usize).clamp(1, encoded.len() - 1)
    } else {
        0
    };
    let (held_idx, train_idx) = order.split_at(n_held);
    let held_idx = if held_idx.is_empty() { train_idx } else { held_idx };

    let mut counts = vec![0.0f64; v];
    for &i in train_idx {
        for &t in &encoded[i] {
            counts[t] += 1.0;
        }
    }
    let weights: Vec<f64> = counts.iter().map(|c| c.powf(0.75)).collect();
    let noise = WeightedIndex::new(&weights).expect("training slice has tokens");

    let half = 0.5 / dim as f64;
    let mut input: Vec<f64> = (0..v * dim).map(|_| rng.uniform_range(-half, half)).collect();
    let mut output = vec![0.0f64; v * dim];

    let mut held_rng = rng.fork(0x5eed);
    let held: Vec<Pair> = held_idx
        .iter()
        .flat_map(|&i| pairs_of(&encoded[i], config.window).collect::<Vec<_>>())
        .map(|(center, context)| Pair {
            center,
            context,
            negatives: (0..config.negatives).map(|_| held_rng.sample(&noise)).collect(),
        })
        .collect();
    let heldout = |input: &[f64], output: &[f64]| -> f64 {
        if held.is_empty() {
            return 0.0;
        }
        held.iter().map(|p| pair_loss(input, output, dim, p)).sum::<f64>() / held.len() as f64
    };

    let mut losses = vec![heldout(&input, &output)];
    let pairs_per_epoch: usize = train_idx
        .iter()
        .map(|&i| pairs_of(&encoded[i], config.window).count())
        .sum();
    let total_steps = (pairs_per_epoch * config.epochs).max(1);
    let mut step = 0usize;
    let mut grad = vec![0.0f64; dim];
    let mut train_order = train_idx.to_vec();

    for _ in 0..config.epochs {
        rng.shuffle(&mut train_order);
        for &si in &train_order {
            let sentence = &encoded[si];
            for (center, context) in pairs_of(sentence, config.window) {
                let lr = config.lr * (1.0 - step as f64 / total_steps as f64).max(1e-4);
                step += 1;
                grad.iter_mut().for_each(|g| *g = 0.0);
                let targets =
                    std::iter::once((context, 1.0)).chain((0..config.negatives).map(|_| (rng.sample(&noise), 0.0)));
                for (target, label) in targets {
                    let vin = &input[center * dim..(center + 1) * dim];
                    let vout = &mut output[target * dim..(target + 1) * dim];
                    let dot: f64 = vin.iter().zip(vout.iter()).map(|(a, b)| a * b).sum();
                    let g = lr * (label - sigmoid_scalar(dot));
                    for k in 0..dim {
                        grad[k] += g * vout[k];
                        vout[k] += g * vin[k];
                    }
                }
                for (x, g) in input[center * dim..(center + 1) * dim].iter_mut().zip(&grad) {
                    *x += g;
                }
            }
        }
        losses.push(heldout(&input, &output));
    }

    Ok(SkipGramReport {
        embeddings: EmbeddingMatrix::new(Tensor::new(vec![v, dim], input)?)?,
        heldout_loss: losses,
    })
}
