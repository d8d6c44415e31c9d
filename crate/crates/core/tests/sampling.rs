use iada_core::sampling::{allocate_batches, sample_balanced_batch, BatchAllocation, ClassIndex};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn simplex(c: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, c).prop_map(|w| {
        let s: f64 = w.iter().sum();
        let mut p: Vec<f64> = w.iter().map(|x| x / s).collect();
        let tail: f64 = p[1..].iter().sum();
        p[0] = 1.0 - tail;
        p
    })
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, usize)> {
    (1usize..6).prop_flat_map(|c| (simplex(c), simplex(c), c..200))
}

proptest! {
    #[test]
    fn normalized_sizes_sum_to_budget((ps, pt, b) in pair()) {
        let a = allocate_batches(&ps, &pt, b, true).unwrap();
        prop_assert_eq!(a.total(), b);
        prop_assert!(a.counts.iter().all(|&x| x >= 1));
    }

    #[test]
    fn raw_sizes_are_positive((ps, pt, b) in pair()) {
        let a = allocate_batches(&ps, &pt, b, false).unwrap();
        prop_assert!(a.counts.iter().all(|&x| x >= 1));
        for (f, c) in a.formula.iter().zip(&a.counts) {
            prop_assert!((*c as f64 - f).abs() <= 0.5 + 1e-9 || *c == 1);
        }
    }

    #[test]
    fn allocation_follows_smaller_share((ps, pt, b) in pair()) {
        let a = allocate_batches(&ps, &pt, b, false).unwrap();
        for i in 0..ps.len() {
            for j in 0..ps.len() {
                if ps[i].min(pt[i]) > ps[j].min(pt[j]) {
                    prop_assert!(a.formula[i] > a.formula[j]);
                }
            }
        }
    }

    #[test]
    fn batches_draw_only_from_their_class(labels in prop::collection::vec(0usize..3, 3..60), seed in any::<u64>()) {
        let mut labels = labels;
        labels[0] = 0;
        labels[1] = 1;
        labels[2] = 2;
        let idx = ClassIndex::new(&labels, 3);
        let alloc = BatchAllocation { formula: vec![3.0; 3], counts: vec![3, 2, 4], budget: 9, normalized: true };
        let batch = sample_balanced_batch(&idx, &alloc, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(batch.len(), 9);
        let mut per = [0usize; 3];
        for &p in &batch {
            per[labels[p]] += 1;
        }
        prop_assert_eq!(per, [3, 2, 4]);
    }
}

#[test]
fn members_of_a_small_class_are_equally_likely() {
    // class 0 has three members; draw one per batch
    let labels = [1, 0, 1, 0, 1, 1, 0];
    let idx = ClassIndex::new(&labels, 2);
    let alloc = BatchAllocation {
        formula: vec![1.0, 1.0],
        counts: vec![1, 1],
        budget: 2,
        normalized: true,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let trials = 10_000;
    let mut hits = std::collections::BTreeMap::new();
    for _ in 0..trials {
        let b = sample_balanced_batch(&idx, &alloc, &mut rng).unwrap();
        *hits.entry(b[0]).or_insert(0usize) += 1;
    }
    assert_eq!(hits.keys().copied().collect::<Vec<_>>(), vec![1, 3, 6]);
    let expected = trials as f64 / 3.0;
    let mut chi2 = 0.0;
    for &h in hits.values() {
        let rel = (h as f64 - expected).abs() / expected;
        assert!(rel < 0.05, "frequency {h} is {rel:.3} off");
        chi2 += (h as f64 - expected).powi(2) / expected;
    }
    // two degrees of freedom: the upper quantile is -2 ln(alpha)
    let critical = -2.0 * 0.01f64.ln();
    assert!(chi2 < critical, "chi-square {chi2} exceeds {critical}");
}

#[test]
fn pairs_within_a_batch_are_uniform() {
    // drawing two of four without replacement: all six pairs equally likely
    let idx = ClassIndex::new(&[0, 0, 0, 0], 1);
    let alloc = BatchAllocation {
        formula: vec![2.0],
        counts: vec![2],
        budget: 2,
        normalized: true,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut hits = std::collections::BTreeMap::new();
    let trials = 12_000;
    for _ in 0..trials {
        let mut b = sample_balanced_batch(&idx, &alloc, &mut rng).unwrap();
        assert_ne!(b[0], b[1]);
        b.sort_unstable();
        *hits.entry((b[0], b[1])).or_insert(0usize) += 1;
    }
    assert_eq!(hits.len(), 6);
    let e = trials as f64 / 6.0;
    let chi2: f64 = hits.values().map(|&h| (h as f64 - e).powi(2) / e).sum();
    // chi-square with 5 degrees of freedom at 0.01
    assert!(chi2 < 15.086, "chi-square {chi2}");
}
