use iada_core::metrics::{auc_roc, confusion_metrics, seed_aggregate};
use proptest::prelude::*;

fn pairwise_auc(scores: &[f64], pos: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if pos[i] && !pos[j] {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..500).prop_flat_map(|n| {
        // few distinct levels so ties are common
        let scores = prop::collection::vec((0u8..12).prop_map(|k| k as f64 / 11.0), n);
        let labels = prop::collection::vec(any::<bool>(), n).prop_map(|mut l| {
            l[0] = true;
            l[1] = false;
            l
        });
        (scores, labels)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn rank_auc_matches_pairwise((scores, pos) in scored()) {
        let a = auc_roc(&scores, &pos).unwrap();
        prop_assert!((a - pairwise_auc(&scores, &pos)).abs() <= 1e-12);
    }

    #[test]
    fn auc_invariant_under_increasing_maps((scores, pos) in scored()) {
        let a = auc_roc(&scores, &pos).unwrap();
        let mapped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        prop_assert_eq!(a, auc_roc(&mapped, &pos).unwrap());
    }

    #[test]
    fn confusion_matches_tally(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..200), positive in 0usize..3) {
        let pred: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let truth: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let mut m = [[0usize; 3]; 3];
        for &(p, t) in &pairs {
            m[t][p] += 1;
        }
        let tp = m[positive][positive];
        let fp: usize = (0..3).filter(|&t| t != positive).map(|t| m[t][positive]).sum();
        let fn_: usize = (0..3).filter(|&p| p != positive).map(|p| m[positive][p]).sum();
        let diag: usize = (0..3).map(|k| m[k][k]).sum();
        let c = confusion_metrics(&pred, &truth, positive).unwrap();
        prop_assert_eq!((c.tp, c.fp, c.fn_), (tp, fp, fn_));
        prop_assert_eq!(c.tn, pairs.len() - tp - fp - fn_);
        prop_assert_eq!(c.accuracy, diag as f64 / pairs.len() as f64);
        if c.precision + c.recall > 0.0 {
            prop_assert_eq!(c.f1, 2.0 * c.precision * c.recall / (c.precision + c.recall));
        } else {
            prop_assert_eq!(c.f1, 0.0);
        }
    }

    #[test]
    fn aggregate_matches_streaming(values in prop::collection::vec(0.01f64..1.0, 1..20)) {
        // Welford accumulation as an independent route
        let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
        for &v in &values {
            n += 1.0;
            let d = v - mean;
            mean += d / n;
            m2 += d * (v - mean);
        }
        let cv = 100.0 * (m2 / n).sqrt() / mean;
        let a = seed_aggregate(&values).unwrap();
        prop_assert!((a.mean - mean).abs() <= 1e-10);
        prop_assert!((a.cv_percent.unwrap() - cv).abs() <= 1e-10);
    }
}
