//! Class-balanced batch construction.
//!
//! Per-class positions live in an order-statistic structure (a Fenwick tree
//! over the sorted member list), so membership tests, rank selection and
//! removal are all logarithmic in the class size.

use std::collections::BTreeSet;

use rand::Rng;

use crate::error::{Error, Result};
use crate::proportions::{self, largest_remainder_at_least_one};

/// Ordered set of sample positions belonging to one class.
#[derive(Clone, Debug)]
pub struct ClassSet {
    members: Vec<usize>,
    tree: Vec<usize>,
    live: usize,
}

impl ClassSet {
    fn new(mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        let n = members.len();
        // Fenwick tree with every slot present: node i covers i & -i slots
        let tree = (0..=n).map(|i| i & i.wrapping_neg()).collect();
        Self {
            members,
            tree,
            live: n,
        }
    }

    pub fn len(&self) -> usize {
        self.live
    }

    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    fn slot(&self, pos: usize) -> Option<usize> {
        self.members.binary_search(&pos).ok()
    }

    fn present(&self, slot: usize) -> bool {
        // prefix(slot + 1) - prefix(slot)
        self.prefix(slot + 1) - self.prefix(slot) == 1
    }

    fn prefix(&self, mut i: usize) -> usize {
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i &= i - 1;
        }
        s
    }

    fn update(&mut self, slot: usize, add: bool) {
        let mut i = slot + 1;
        while i < self.tree.len() {
            if add {
                self.tree[i] += 1;
            } else {
                self.tree[i] -= 1;
            }
            i += i & i.wrapping_neg();
        }
        if add {
            self.live += 1;
        } else {
            self.live -= 1;
        }
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.slot(pos).is_some_and(|s| self.present(s))
    }

    /// Removes `pos`; returns whether it was present.
    pub fn remove(&mut self, pos: usize) -> bool {
        match self.slot(pos) {
            Some(s) if self.present(s) => {
                self.update(s, false);
                true
            }
            _ => false,
        }
    }

    /// Re-inserts a position that was part of the set at construction.
    pub fn restore(&mut self, pos: usize) -> bool {
        match self.slot(pos) {
            Some(s) if !self.present(s) => {
                self.update(s, true);
                true
            }
            _ => false,
        }
    }

    /// The `k`-th smallest live position (0-based).
    pub fn select(&self, k: usize) -> Option<usize> {
        if k >= self.live {
            return None;
        }
        let n = self.tree.len() - 1;
        let mut idx = 0;
        let mut rem = k + 1;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = idx + step;
            if next <= n && self.tree[next] < rem {
                idx = next;
                rem -= self.tree[next];
            }
            step >>= 1;
        }
        Some(self.members[idx])
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.live).filter_map(|k| self.select(k))
    }
}

#[derive(Clone, Debug)]
pub struct ClassIndex {
    sets: Vec<ClassSet>,
}

impl ClassIndex {
    pub fn new(labels: &[usize], classes: usize) -> Self {
        let mut groups = vec![Vec::new(); classes];
        for (i, &c) in labels.iter().enumerate() {
            groups[c].push(i);
        }
        Self {
            sets: groups.into_iter().map(ClassSet::new).collect(),
        }
    }

    pub fn classes(&self) -> usize {
        self.sets.len()
    }

    pub fn class(&self, c: usize) -> &ClassSet {
        &self.sets[c]
    }

    pub fn class_mut(&mut self, c: usize) -> &mut ClassSet {
        &mut self.sets[c]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.sets.iter().map(ClassSet::len).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchAllocation {
    /// `B * sqrt(w_i / sum_j w_j)` with `w_i = min(pi_s_i, pi_t_i)`.
    pub formula: Vec<f64>,
    /// Realized per-class batch sizes, each at least one.
    pub counts: Vec<usize>,
    pub budget: usize,
    pub normalized: bool,
}

impl BatchAllocation {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Class frequencies a batch drawn from this allocation exhibits.
    pub fn frequencies(&self) -> Vec<f64> {
        let t = self.total() as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }
}

/// Per-class batch sizes from the square-root trade-off rule.
///
/// The raw rule does not sum to `budget` in general. With `normalized` the
/// sizes are rescaled to the budget and rounded by largest remainder with a
/// floor of one per class; otherwise each size is rounded independently.
pub fn allocate_batches(
    pi_s: &[f64],
    pi_t: &[f64],
    budget: usize,
    normalized: bool,
) -> Result<BatchAllocation> {
    proportions::validate_pair(pi_s, pi_t)?;
    let c = pi_s.len();
    if budget < c {
        return Err(Error::InvalidArgument(format!(
            "batch budget {budget} is below the class count {c}"
        )));
    }
    let w: Vec<f64> = pi_s.iter().zip(pi_t).map(|(a, b)| a.min(*b)).collect();
    let total: f64 = w.iter().sum();
    let formula: Vec<f64> = w
        .iter()
        .map(|wi| budget as f64 * (wi / total).sqrt())
        .collect();
    let counts = if normalized {
        largest_remainder_at_least_one(&formula, budget)
    } else {
        formula
            .iter()
            .map(|b| (b.round() as usize).max(1))
            .collect()
    };
    Ok(BatchAllocation {
        formula,
        counts,
        budget,
        normalized,
    })
}

/// `k` distinct ranks from `0..n`, uniformly (Floyd's algorithm), in draw order.
fn distinct_ranks<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut chosen = BTreeSet::new();
    let mut order = Vec::with_capacity(k);
    for j in n - k..n {
        let r = rng.random_range(0..=j);
        let pick = if chosen.contains(&r) { j } else { r };
        chosen.insert(pick);
        order.push(pick);
    }
    order
}

/// Draws `counts[c]` positions from every class `c`: without replacement
/// inside the batch when the class is large enough, with replacement otherwise.
pub fn sample_balanced_batch<R: Rng + ?Sized>(
    index: &ClassIndex,
    alloc: &BatchAllocation,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if alloc.counts.len() != index.classes() {
        return Err(Error::DimensionMismatch(format!(
            "allocation has {} classes, index has {}",
            alloc.counts.len(),
            index.classes()
        )));
    }
    let mut batch = Vec::with_capacity(alloc.total());
    for (c, &b) in alloc.counts.iter().enumerate() {
        if b == 0 {
            continue;
        }
        let set = index.class(c);
        let n = set.len();
        if n == 0 {
            return Err(Error::EmptyClass { class: c + 1 });
        }
        if b <= n {
            for r in distinct_ranks(n, b, rng) {
                batch.push(set.select(r).expect("rank in range"));
            }
        } else {
            for _ in 0..b {
                batch.push(set.select(rng.random_range(0..n)).expect("rank in range"));
            }
        }
    }
    Ok(batch)
}

/// Uniform batch over `0..n` for the unlabeled side.
pub fn sample_uniform_batch<R: Rng + ?Sized>(n: usize, b: usize, rng: &mut R) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    if b <= n {
        distinct_ranks(n, b, rng)
    } else {
        (0..b).map(|_| rng.random_range(0..n)).collect()
    }
}
