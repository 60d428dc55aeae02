//! Metric oracles and invariants.

mod common;

use common::oracles::{self, auc_oracle};
use proptest::prelude::*;
use vagueness::corpus::VaguenessClass;
use vagueness::evaluation::{confusion, roc_auc, weighted_prf};

fn class_vec(n: usize) -> impl Strategy<Value = Vec<VaguenessClass>> {
    prop::collection::vec(0usize..4, n).prop_map(|v| v.into_iter().map(|i| VaguenessClass::ALL[i]).collect())
}

fn pair() -> impl Strategy<Value = (Vec<VaguenessClass>, Vec<VaguenessClass>)> {
    (1usize..40).prop_flat_map(|n| (class_vec(n), class_vec(n)))
}

fn scored() -> impl Strategy<Value = (Vec<bool>, Vec<f64>)> {
    (2usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(any::<bool>(), n).prop_map(|mut l| {
                l[0] = true;
                l[1] = false;
                l
            }),
            prop::collection::vec(0u32..=20, n).prop_map(|s| s.into_iter().map(|v| v as f64 / 20.0).collect()),
        )
    })
}

#[test]
fn brute_force_oracles_agree_on_200_instances() {
    let worst = oracles::compare(200);
    assert!(worst[0] <= 1e-9, "weighted prf {}", worst[0]);
    assert_eq!(worst[1], 0.0, "confusion");
    assert!(worst[2] <= 1e-9, "auc {}", worst[2]);
    assert!(worst[3] <= 1e-9, "pearson {}", worst[3]);
}

proptest! {
    #[test]
    fn constant_predictor_identity(truth in class_vec(50), c in 0usize..4) {
        let c = VaguenessClass::ALL[c];
        let pred = vec![c; truth.len()];
        let r = weighted_prf(&truth, &pred).unwrap();
        let prior = truth.iter().filter(|&&t| t == c).count() as f64 / truth.len() as f64;
        prop_assert!((r.recall - 100.0 * prior).abs() < 1e-9);
        prop_assert!((r.precision - 100.0 * prior * prior).abs() < 1e-9);
    }

    #[test]
    fn confusion_marginals((truth, pred) in pair()) {
        let m = confusion(&truth, &pred).unwrap();
        for c in VaguenessClass::ALL {
            let i = c.index();
            prop_assert_eq!(m.counts[i].iter().sum::<usize>(), truth.iter().filter(|&&t| t == c).count());
            prop_assert_eq!((0..4).map(|r| m.counts[r][i]).sum::<usize>(), pred.iter().filter(|&&p| p == c).count());
        }
    }

    #[test]
    fn metrics_ignore_example_order((truth, pred) in pair(), rot in 0usize..40) {
        let k = rot % truth.len();
        let mut t2 = truth.clone();
        let mut p2 = pred.clone();
        t2.rotate_left(k);
        p2.rotate_left(k);
        t2.reverse();
        p2.reverse();
        let a = weighted_prf(&truth, &pred).unwrap();
        let b = weighted_prf(&t2, &p2).unwrap();
        prop_assert!((a.f1 - b.f1).abs() < 1e-9 && (a.precision - b.precision).abs() < 1e-9);
        prop_assert_eq!(confusion(&truth, &pred).unwrap().counts, confusion(&t2, &p2).unwrap().counts);
    }

    #[test]
    fn auc_invariant_under_monotone_transform((labels, scores) in scored()) {
        let a = roc_auc(&labels, &scores).unwrap().auc;
        let squashed: Vec<f64> = scores.iter().map(|s| s * s * s).collect();
        let b = roc_auc(&labels, &squashed).unwrap().auc;
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((a - auc_oracle(&labels, &scores)).abs() < 1e-9);
    }
}
