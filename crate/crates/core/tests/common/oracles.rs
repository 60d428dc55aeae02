//! Brute-force reference implementations of the evaluation metrics.

use vagueness::corpus::VaguenessClass;
use vagueness::evaluation::{confusion, pearson, roc_auc, weighted_prf};
use vagueness::tensor::Rng;

/// `(precision, recall, f1)` in percent: each example contributes the
/// metrics of its own true class, then the sum is divided by `n`.
pub fn weighted_prf_oracle(truth: &[usize], pred: &[usize]) -> (f64, f64, f64) {
    let n = truth.len();
    let per_class = |c: usize| -> (f64, f64, f64) {
        let tp = (0..n).filter(|&i| truth[i] == c && pred[i] == c).count() as f64;
        let pp = (0..n).filter(|&i| pred[i] == c).count() as f64;
        let ap = (0..n).filter(|&i| truth[i] == c).count() as f64;
        let p = if pp > 0.0 { tp / pp } else { 0.0 };
        let r = if ap > 0.0 { tp / ap } else { 0.0 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        (p, r, f)
    };
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    for &t in truth {
        let m = per_class(t);
        p += m.0;
        r += m.1;
        f += m.2;
    }
    let k = 100.0 / n as f64;
    (p * k, r * k, f * k)
}

pub fn confusion_oracle(truth: &[usize], pred: &[usize]) -> [[usize; 4]; 4] {
    let mut m = [[0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = truth.iter().zip(pred).filter(|(&t, &p)| t == i && p == j).count();
        }
    }
    m
}

/// Mann-Whitney U over all positive/negative pairs, ties counting one half.
pub fn auc_oracle(labels: &[bool], scores: &[f64]) -> f64 {
    let mut u = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    u += 1.0;
                } else if scores[i] == scores[j] {
                    u += 0.5;
                }
            }
        }
    }
    u / pairs
}

/// Raw-moment form `(nΣxy − ΣxΣy) / sqrt((nΣx² − (Σx)²)(nΣy² − (Σy)²))`.
pub fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt()
}

/// Largest absolute disagreement per metric over `instances` random small
/// problems: `[prf, confusion, auc, pearson]`.
pub fn compare(instances: u64) -> [f64; 4] {
    let mut worst = [0.0f64; 4];
    for seed in 0..instances {
        let mut rng = Rng::new(seed);
        let n = 2 + rng.below(29);
        let truth: Vec<usize> = (0..n).map(|_| rng.below(4)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.below(4)).collect();
        let tc: Vec<VaguenessClass> = truth.iter().map(|&i| VaguenessClass::ALL[i]).collect();
        let pc: Vec<VaguenessClass> = pred.iter().map(|&i| VaguenessClass::ALL[i]).collect();

        let r = weighted_prf(&tc, &pc).unwrap();
        let o = weighted_prf_oracle(&truth, &pred);
        let d = (r.precision - o.0)
            .abs()
            .max((r.recall - o.1).abs())
            .max((r.f1 - o.2).abs());
        worst[0] = worst[0].max(d);

        let m = confusion(&tc, &pc).unwrap();
        if m.counts != confusion_oracle(&truth, &pred) {
            worst[1] = f64::INFINITY;
        }

        let mut labels: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        let grid = 1 + rng.below(10);
        let scores: Vec<f64> = (0..n).map(|_| rng.below(grid + 1) as f64 / grid as f64).collect();
        let auc = roc_auc(&labels, &scores).unwrap().auc;
        worst[2] = worst[2].max((auc - auc_oracle(&labels, &scores)).abs());

        let x: Vec<f64> = (0..n).map(|_| rng.uniform_range(-5.0, 5.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| rng.uniform_range(-1.0, 1.0) * v + rng.uniform_range(-3.0, 3.0))
            .collect();
        worst[3] = worst[3].max((pearson(&x, &y).unwrap() - pearson_oracle(&x, &y)).abs());
    }
    worst
}
