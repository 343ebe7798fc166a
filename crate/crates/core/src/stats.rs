//! Small descriptive-statistics helpers shared across modules.

use crate::scalar::Real;

pub fn mean<T: Real>(values: &[T]) -> T {
    values.iter().copied().sum::<T>() / T::from_count(values.len())
}

/// Pearson correlation, or `None` when either side has zero variance.
pub fn pearson<T: Real>(x: &[T], y: &[T]) -> Option<T> {
    assert_eq!(x.len(), y.len(), "pearson: length mismatch");
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= T::zero() || syy <= T::zero() {
        return None;
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Some(r.clamp(-T::one(), T::one()))
}

/// Ranks starting at 1, ties receiving the mean of the ranks they span.
pub fn average_ranks<T: Real>(values: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .expect("ranking requires comparable values")
    });
    let mut ranks = vec![T::zero(); values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // ranks start..end (0-based) share the average of (start+1..=end)
        let avg = T::from_count(start + end + 1) / T::lit(2.0);
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

pub fn spearman<T: Real>(x: &[T], y: &[T]) -> Option<T> {
    pearson(&average_ranks(x), &average_ranks(y))
}
