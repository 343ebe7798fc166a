use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{DriftError, Result};

/// Per-class sample counts for a subset of `size`, proportional to `counts`.
///
/// Largest-remainder rounding; equal remainders favor the lower class index
/// (class indices follow lexicographic label order). Every class gets at
/// least one sample, taken from the largest allocation.
pub fn proportional_allocation(counts: &[usize], size: usize) -> Result<Vec<usize>> {
    let total: usize = counts.iter().sum();
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(DriftError::Invalid(format!("class {empty} has no samples")));
    }
    if size < counts.len() {
        return Err(DriftError::Invalid(format!(
            "subset size {size} smaller than the {} classes",
            counts.len()
        )));
    }
    if size > total {
        return Err(DriftError::Invalid(format!(
            "subset size {size} exceeds the {total} available samples"
        )));
    }
    let mut alloc: Vec<usize> = counts.iter().map(|&c| size * c / total).collect();
    let remainders: Vec<usize> = counts.iter().map(|&c| size * c % total).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]).then(a.cmp(&b)));
    let short = size - alloc.iter().sum::<usize>();
    for &class in order.iter().take(short) {
        alloc[class] += 1;
    }
    for class in 0..alloc.len() {
        if alloc[class] == 0 {
            let donor = (0..alloc.len())
                .max_by(|&a, &b| alloc[a].cmp(&alloc[b]).then(b.cmp(&a)))
                .expect("non-empty");
            alloc[donor] -= 1;
            alloc[class] = 1;
        }
    }
    Ok(alloc)
}

/// Seeded stratified subset of row indices, returned in ascending order.
pub fn stratified_subset(
    classes: &[usize],
    n_classes: usize,
    size: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (row, &c) in classes.iter().enumerate() {
        if c >= n_classes {
            return Err(DriftError::Invalid(format!(
                "row {row} has class {c} outside 0..{n_classes}"
            )));
        }
        members[c].push(row);
    }
    let counts: Vec<usize> = members.iter().map(Vec::len).collect();
    let alloc = proportional_allocation(&counts, size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(size);
    for (rows, take) in members.iter_mut().zip(alloc) {
        rows.shuffle(&mut rng);
        picked.extend_from_slice(&rows[..take]);
    }
    picked.sort_unstable();
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_halves() {
        let classes: Vec<usize> = (0..1000).map(|i| i % 2).collect();
        let subset = stratified_subset(&classes, 2, 250, 4).unwrap();
        let ones = subset.iter().filter(|&&i| classes[i] == 1).count();
        assert_eq!((subset.len() - ones, ones), (125, 125));
    }

    #[test]
    fn seventy_twenty_ten() {
        assert_eq!(proportional_allocation(&[70, 20, 10], 10).unwrap(), vec![7, 2, 1]);
    }

    #[test]
    fn remainder_ties_go_to_lower_class() {
        // quotas 1.5 / 1.5 / 0 ... -> each class present, tie goes to class 0
        assert_eq!(proportional_allocation(&[3, 3], 3).unwrap(), vec![2, 1]);
    }

    #[test]
    fn rare_class_still_sampled() {
        let alloc = proportional_allocation(&[98, 1, 1], 5).unwrap();
        assert_eq!(alloc.iter().sum::<usize>(), 5);
        assert!(alloc.iter().all(|&a| a >= 1));
    }

    #[test]
    fn errors() {
        assert!(proportional_allocation(&[5, 5, 5], 2).is_err());
        assert!(proportional_allocation(&[5, 0], 3).is_err());
        assert!(proportional_allocation(&[5, 5], 11).is_err());
    }

    #[test]
    fn seeded() {
        let classes: Vec<usize> = (0..300).map(|i| i % 3).collect();
        let a = stratified_subset(&classes, 3, 50, 9).unwrap();
        assert_eq!(a, stratified_subset(&classes, 3, 50, 9).unwrap());
        assert_ne!(a, stratified_subset(&classes, 3, 50, 10).unwrap());
    }
}
