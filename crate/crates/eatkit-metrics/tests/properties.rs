//! Metric invariants, with the binary closed form as the MCC oracle.

use eatkit_metrics::ConfusionMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Direct binary formula: (TP*TN - FP*FN) / sqrt((TP+FP)(TP+FN)(TN+FP)(TN+FN)).
fn binary_mcc(tn: u64, fp: u64, fn_: u64, tp: u64) -> f64 {
    let (tp, tn, fp, fn_) = (tp as f64, tn as f64, fp as f64, fn_ as f64);
    let denom = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / denom
    }
}

#[test]
fn rk_matches_binary_closed_form_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let cells: Vec<u64> = (0..4).map(|_| rng.gen_range(0..50)).collect();
        let (tn, fp, fn_, tp) = (cells[0], cells[1], cells[2], cells[3]);
        if tn + fp + fn_ + tp == 0 {
            continue;
        }
        let cm = ConfusionMatrix::from_counts(
            vec!["neg".into(), "pos".into()],
            vec![tn, fp, fn_, tp],
        )
        .unwrap();
        let expected = binary_mcc(tn, fp, fn_, tp);
        assert!(
            (cm.mcc() - expected).abs() < 1e-12,
            "cm {:?} rk {} binary {}",
            (tn, fp, fn_, tp),
            cm.mcc(),
            expected
        );
    }
}

fn arbitrary_cm(k: usize) -> impl Strategy<Value = ConfusionMatrix> {
    prop::collection::vec(0u64..30, k * k).prop_map(move |counts| {
        ConfusionMatrix::from_counts(
            (0..k).map(|i| format!("c{}", i)).collect(),
            counts,
        )
        .unwrap()
    })
}

proptest! {
    #[test]
    fn metrics_stay_in_range(cm in arbitrary_cm(4)) {
        let report = cm.report();
        prop_assert!((0.0..=1.0).contains(&report.accuracy));
        prop_assert!((0.0..=1.0).contains(&report.macro_precision));
        prop_assert!((0.0..=1.0).contains(&report.macro_recall));
        prop_assert!((0.0..=1.0).contains(&report.macro_f1));
        prop_assert!((-1.0..=1.0).contains(&report.mcc) || (report.mcc.abs() - 1.0) < 1e-12);
    }

    #[test]
    fn accuracy_is_trace_over_total(cm in arbitrary_cm(3)) {
        let k = cm.num_classes();
        let trace: u64 = (0..k).map(|i| cm.count(i, i)).sum();
        let total = cm.total();
        let expected = if total == 0 { 0.0 } else { trace as f64 / total as f64 };
        prop_assert_eq!(cm.accuracy(), expected);
    }

    // relabeling classes (same permutation of rows and columns) leaves all
    // aggregate metrics unchanged
    #[test]
    fn metrics_invariant_under_class_relabeling(cm in arbitrary_cm(4), swap in 0usize..3) {
        let k = cm.num_classes();
        let mut perm: Vec<usize> = (0..k).collect();
        perm.swap(swap, swap + 1);
        let mut counts = vec![0u64; k * k];
        for r in 0..k {
            for c in 0..k {
                counts[perm[r] * k + perm[c]] = cm.count(r, c);
            }
        }
        let names = (0..k).map(|i| format!("c{}", i)).collect();
        let permuted = ConfusionMatrix::from_counts(names, counts).unwrap();
        let (a, b) = (cm.report(), permuted.report());
        prop_assert!((a.accuracy - b.accuracy).abs() < 1e-12);
        prop_assert!((a.macro_precision - b.macro_precision).abs() < 1e-12);
        prop_assert!((a.macro_recall - b.macro_recall).abs() < 1e-12);
        prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
        prop_assert!((a.mcc - b.mcc).abs() < 1e-12);
    }
}

#[test]
fn replayed_prediction_log_matches_independent_tally() {
    // brute-force oracle: tally each (true, pred) pair by scanning the log
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let log: Vec<(usize, usize)> = (0..500)
        .map(|_| (rng.gen_range(0..5), rng.gen_range(0..5)))
        .collect();

    let mut cm = ConfusionMatrix::with_unnamed_classes(5);
    for &(t, p) in &log {
        cm.accumulate(t, p).unwrap();
    }
    for t in 0..5 {
        for p in 0..5 {
            let tally = log.iter().filter(|&&(a, b)| a == t && b == p).count() as u64;
            assert_eq!(cm.count(t, p), tally);
        }
    }
}
