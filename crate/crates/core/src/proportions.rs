//! Class-proportion vectors and largest-remainder integerization.

use crate::error::{Error, Result};

pub const SUM_TOLERANCE: f64 = 1e-9;

/// Entries must lie in `(0, 1]` and sum to one.
pub fn validate(pi: &[f64]) -> Result<()> {
    if pi.is_empty() {
        return Err(Error::InvalidProportions("empty vector".into()));
    }
    if let Some((i, p)) = pi.iter().enumerate().find(|(_, &p)| !(p > 0.0 && p <= 1.0)) {
        return Err(Error::InvalidProportions(format!(
            "entry {} is {p}, expected a value in (0, 1]",
            i + 1
        )));
    }
    let s: f64 = pi.iter().sum();
    if (s - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidProportions(format!("entries sum to {s}")));
    }
    Ok(())
}

pub fn validate_pair(pi_s: &[f64], pi_t: &[f64]) -> Result<()> {
    validate(pi_s)?;
    validate(pi_t)?;
    if pi_s.len() != pi_t.len() {
        return Err(Error::InvalidProportions(format!(
            "source has {} classes, target has {}",
            pi_s.len(),
            pi_t.len()
        )));
    }
    Ok(())
}

/// Rounds nonnegative `weights` scaled to `total` into integers summing to
/// `total`: floors first, then one extra unit to the largest remainders
/// (ties to the lower index).
pub fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let s: f64 = weights.iter().sum();
    if weights.is_empty() || s <= 0.0 {
        return vec![0; weights.len()];
    }
    let ideal: Vec<f64> = weights.iter().map(|w| w / s * total as f64).collect();
    let mut out: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        out[i] += 1;
    }
    out
}

/// Same as [`largest_remainder`] but every entry receives at least one unit;
/// requires `total >= weights.len()`.
pub fn largest_remainder_at_least_one(weights: &[f64], total: usize) -> Vec<usize> {
    let k = weights.len();
    assert!(total >= k, "total {total} below one unit per entry ({k})");
    let mut out = largest_remainder(weights, total);
    // move units from the largest entries onto empty ones
    while let Some(z) = out.iter().position(|&c| c == 0) {
        let donor = (0..k)
            .max_by(|&a, &b| out[a].cmp(&out[b]).then(b.cmp(&a)))
            .expect("nonempty");
        out[donor] -= 1;
        out[z] += 1;
    }
    out
}

/// Sum over classes of `|a_i - b_i|`.
pub fn l1_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_counts_from_proportions() {
        assert_eq!(largest_remainder(&[0.289, 0.711], 1698), vec![491, 1207]);
    }

    #[test]
    fn remainder_ties_go_to_lower_index() {
        assert_eq!(largest_remainder(&[1.0, 1.0], 3), vec![2, 1]);
        assert_eq!(largest_remainder(&[1.0, 1.0, 1.0], 4), vec![2, 1, 1]);
    }

    #[test]
    fn at_least_one_floor() {
        assert_eq!(
            largest_remainder_at_least_one(&[0.001, 0.999], 5),
            vec![1, 4]
        );
        assert_eq!(
            largest_remainder_at_least_one(&[0.6, 0.2, 0.2], 3),
            vec![1, 1, 1]
        );
    }

    #[test]
    fn validation() {
        assert!(validate(&[0.289, 0.711]).is_ok());
        assert!(validate(&[1.0]).is_ok());
        assert!(validate(&[0.0, 1.0]).is_err());
        assert!(validate(&[0.5, 0.6]).is_err());
        assert!(validate(&[]).is_err());
        assert!(validate_pair(&[0.5, 0.5], &[1.0]).is_err());
    }

    #[test]
    fn proportion_gap_of_reported_domains() {
        assert!((l1_gap(&[0.289, 0.711], &[0.453, 0.547]) - 0.328).abs() < 1e-12);
    }
}
