//! Classification metrics: support-weighted precision/recall/F1, confusion
//! matrices, one-vs-rest ROC curves, Pearson correlation and fold
//! aggregation. Precision, recall and F1 are reported in percent.

use serde::{Deserialize, Serialize};

use crate::corpus::VaguenessClass;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("ROC needs at least one positive and one negative label")]
    DegenerateLabels,
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("correlation undefined: zero variance")]
    ZeroVariance,
}

fn check_lengths(a: usize, b: usize) -> Result<(), EvalError> {
    if a != b {
        return Err(EvalError::LengthMismatch { left: a, right: b });
    }
    if a == 0 {
        return Err(EvalError::EmptyInput);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassPrf {
    pub class: VaguenessClass,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    pub per_class: Vec<ClassPrf>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub n: usize,
}

fn f1_of(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class metrics averaged with weights equal to each class's share of
/// the true labels. A class never predicted has precision 0.
pub fn weighted_prf(truth: &[VaguenessClass], pred: &[VaguenessClass]) -> Result<PrfReport, EvalError> {
    check_lengths(truth.len(), pred.len())?;
    let n = truth.len();
    let mut tp = [0usize; 4];
    let mut predicted = [0usize; 4];
    let mut support = [0usize; 4];
    for (&t, &p) in truth.iter().zip(pred) {
        support[t.index()] += 1;
        predicted[p.index()] += 1;
        if t == p {
            tp[t.index()] += 1;
        }
    }
    let mut report = PrfReport {
        per_class: Vec::with_capacity(4),
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        accuracy: 100.0 * ratio(tp.iter().sum(), n),
        n,
    };
    for c in VaguenessClass::ALL {
        let i = c.index();
        let p = ratio(tp[i], predicted[i]);
        let r = ratio(tp[i], support[i]);
        let f = f1_of(p, r);
        let w = ratio(support[i], n);
        report.precision += 100.0 * w * p;
        report.recall += 100.0 * w * r;
        report.f1 += 100.0 * w * f;
        report.per_class.push(ClassPrf {
            class: c,
            precision: 100.0 * p,
            recall: 100.0 * r,
            f1: 100.0 * f,
            support: support[i],
        });
    }
    Ok(report)
}

/// Precision, recall and F1 (percent) of the positive label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn binary_prf(truth: &[u8], pred: &[u8]) -> Result<BinaryPrf, EvalError> {
    check_lengths(truth.len(), pred.len())?;
    let tp = truth.iter().zip(pred).filter(|(&t, &p)| t == 1 && p == 1).count();
    let pp = pred.iter().filter(|&&p| p == 1).count();
    let ap = truth.iter().filter(|&&t| t == 1).count();
    let p = ratio(tp, pp);
    let r = ratio(tp, ap);
    Ok(BinaryPrf {
        precision: 100.0 * p,
        recall: 100.0 * r,
        f1: 100.0 * f1_of(p, r),
    })
}

/// `counts[true][pred]` with both normalizations in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 4]; 4],
    /// Each true-class row sums to 100 (rows with no support stay 0).
    pub by_true: [[f64; 4]; 4],
    /// Each predicted-class column sums to 100.
    pub by_pred: [[f64; 4]; 4],
}

pub fn confusion(truth: &[VaguenessClass], pred: &[VaguenessClass]) -> Result<ConfusionMatrix, EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            left: truth.len(),
            right: pred.len(),
        });
    }
    let mut counts = [[0usize; 4]; 4];
    for (&t, &p) in truth.iter().zip(pred) {
        counts[t.index()][p.index()] += 1;
    }
    let mut by_true = [[0.0; 4]; 4];
    let mut by_pred = [[0.0; 4]; 4];
    for i in 0..4 {
        let row: usize = counts[i].iter().sum();
        let col: usize = (0..4).map(|r| counts[r][i]).sum();
        for j in 0..4 {
            by_true[i][j] = 100.0 * ratio(counts[i][j], row);
            by_pred[j][i] = 100.0 * ratio(counts[j][i], col);
        }
    }
    Ok(ConfusionMatrix {
        counts,
        by_true,
        by_pred,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from the strictest threshold down, starting at `(0, 0)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Threshold sweep over the distinct scores; area by the trapezoid rule.
pub fn roc_auc(labels: &[bool], scores: &[f64]) -> Result<RocCurve, EvalError> {
    check_lengths(labels.len(), scores.len())?;
    if let Some(&s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(EvalError::ScoreOutOfRange(s));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (x0, y0) = *points.last().expect("non-empty");
        let (x1, y1) = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        auc += (x1 - x0) * (y0 + y1) / 2.0;
        points.push((x1, y1));
    }
    Ok(RocCurve { points, auc })
}

/// One-vs-rest ROC of `P(class | x)` for each class that has both positive
/// and negative examples.
pub fn roc_per_class(
    truth: &[VaguenessClass],
    probs: &[[f64; 4]],
) -> Result<Vec<(VaguenessClass, RocCurve)>, EvalError> {
    check_lengths(truth.len(), probs.len())?;
    let mut out = Vec::new();
    for c in VaguenessClass::ALL {
        let labels: Vec<bool> = truth.iter().map(|&t| t == c).collect();
        let scores: Vec<f64> = probs.iter().map(|p| p[c.index()]).collect();
        match roc_auc(&labels, &scores) {
            Ok(curve) => out.push((c, curve)),
            Err(EvalError::DegenerateLabels) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    check_lengths(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(EvalError::EmptyInput);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// How fold results are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FoldAggregation {
    #[default]
    Mean,
    Pooled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub aggregation: FoldAggregation,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub folds: Vec<PrfReport>,
}

/// Combines per-fold `(truth, pred)` pairs by averaging fold metrics or by
/// scoring the pooled predictions.
pub fn aggregate_folds(
    folds: &[(Vec<VaguenessClass>, Vec<VaguenessClass>)],
    aggregation: FoldAggregation,
) -> Result<FoldSummary, EvalError> {
    if folds.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let reports = folds
        .iter()
        .map(|(t, p)| weighted_prf(t, p))
        .collect::<Result<Vec<_>, _>>()?;
    let (precision, recall, f1, accuracy) = match aggregation {
        FoldAggregation::Mean => {
            let k = reports.len() as f64;
            (
                reports.iter().map(|r| r.precision).sum::<f64>() / k,
                reports.iter().map(|r| r.recall).sum::<f64>() / k,
                reports.iter().map(|r| r.f1).sum::<f64>() / k,
                reports.iter().map(|r| r.accuracy).sum::<f64>() / k,
            )
        }
        FoldAggregation::Pooled => {
            let truth: Vec<VaguenessClass> = folds.iter().flat_map(|f| f.0.iter().copied()).collect();
            let pred: Vec<VaguenessClass> = folds.iter().flat_map(|f| f.1.iter().copied()).collect();
            let r = weighted_prf(&truth, &pred)?;
            (r.precision, r.recall, r.f1, r.accuracy)
        }
    };
    Ok(FoldSummary {
        aggregation,
        precision,
        recall,
        f1,
        accuracy,
        folds: reports,
    })
}

/// Labels with the given per-class counts, in class order.
pub fn labels_from_counts(counts: [usize; 4]) -> Vec<VaguenessClass> {
    VaguenessClass::ALL
        .iter()
        .zip(counts)
        .flat_map(|(&c, n)| std::iter::repeat_n(c, n))
        .collect()
}
